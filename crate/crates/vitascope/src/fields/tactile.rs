//! The tactile module: per-sensor implicit shear fields over the
//! normalized grid, conditioned on the in-hand pose and that sensor's
//! trial code through a hypernetwork.

use ndiff::hyper::{hypernet_forward_tape, GeneratedMlp, HyperNetNodes};
use ndiff::nn::mlp_forward_tape;
use ndiff::{DenseArray, HyperNetParams, HyperNetSpec, MlpParams, MlpSpec, NodeId, Real, Tape};

use crate::error::{Result, VitaError};
use crate::sensor::SensorId;

/// Pose-code length (x, z, θ).
pub const POSE_CODE_LEN: usize = 3;
/// Per-sensor trial-code length.
pub const TRIAL_CODE_PER_SENSOR: usize = 6;
/// Concatenated trial-code length (left ⊕ right).
pub const TRIAL_CODE_LEN: usize = 2 * TRIAL_CODE_PER_SENSOR;

#[derive(Debug, Clone, Copy)]
pub struct TactileConfig {
    pub hidden: usize,
    pub trunk_width: usize,
    pub omega0: f64,
}

impl Default for TactileConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            trunk_width: 128,
            omega0: 30.0,
        }
    }
}

impl TactileConfig {
    pub fn mlp_spec(&self) -> MlpSpec {
        MlpSpec {
            input: 2,
            hidden: self.hidden,
            output: 2,
            omega0: self.omega0,
        }
    }

    /// Conditioning is ξ ⊕ ψ_sensor (3 + 6).
    pub fn hyper_spec(&self) -> HyperNetSpec {
        HyperNetSpec {
            code_len: POSE_CODE_LEN + TRIAL_CODE_PER_SENSOR,
            trunk_width: self.trunk_width,
            target: self.mlp_spec(),
        }
    }
}

/// Two per-sensor hypernetworks sharing an architecture but not
/// parameters.
#[derive(Debug, Clone)]
pub struct TactileModel<T> {
    pub config: TactileConfig,
    pub nets: [HyperNetParams<T>; 2],
}

impl<T: Real> TactileModel<T> {
    pub fn init(config: TactileConfig, seed: u64) -> Self {
        let mut left_rng = ndiff::rng::stream(seed, &[0x70, 0]);
        let mut right_rng = ndiff::rng::stream(seed, &[0x70, 1]);
        TactileModel {
            config,
            nets: [
                HyperNetParams::init(config.hyper_spec(), &mut left_rng),
                HyperNetParams::init(config.hyper_spec(), &mut right_rng),
            ],
        }
    }

    pub fn net(&self, sensor: SensorId) -> &HyperNetParams<T> {
        &self.nets[sensor.index()]
    }

    fn condition(&self, xi: &[f64; 3], psi_s: &DenseArray<T>) -> Result<DenseArray<T>> {
        if psi_s.len() != TRIAL_CODE_PER_SENSOR {
            return Err(VitaError::Contract {
                op: "tactile_forward",
                detail: format!("per-sensor trial code must be 6 long, got {}", psi_s.len()),
            });
        }
        let mut data = Vec::with_capacity(9);
        for v in xi {
            data.push(T::from_f64(*v));
        }
        data.extend_from_slice(psi_s.data());
        Ok(DenseArray::from_vec(data))
    }

    /// Generates the concrete shear MLP for one sensor and conditioning.
    pub fn generated(
        &self,
        sensor: SensorId,
        xi: &[f64; 3],
        psi_s: &DenseArray<T>,
    ) -> Result<MlpParams<T>> {
        let code = self.condition(xi, psi_s)?;
        Ok(self.net(sensor).forward(&code)?)
    }

    /// Predicted shear vectors at normalized grid points `[N,2]`.
    pub fn forward(
        &self,
        sensor: SensorId,
        xi: &[f64; 3],
        psi_s: &DenseArray<T>,
        grid: &DenseArray<T>,
    ) -> Result<DenseArray<T>> {
        let params = self.generated(sensor, xi, psi_s)?;
        Ok(params.forward(grid)?.0)
    }

    pub fn cast<U: Real>(&self) -> TactileModel<U> {
        TactileModel {
            config: self.config,
            nets: [self.nets[0].cast(), self.nets[1].cast()],
        }
    }
}

/// Mean L1 shear loss: per grid point the absolute differences of both
/// components are summed; the mean divides by the point count only.
pub fn shear_loss<T: Real>(pred: &DenseArray<T>, observed: &DenseArray<T>) -> Result<f64> {
    if pred.shape() != observed.shape() || pred.cols() != 2 {
        return Err(VitaError::Contract {
            op: "shear_loss",
            detail: format!("{:?} vs {:?}", pred.shape(), observed.shape()),
        });
    }
    let mut acc = 0.0f64;
    for (p, o) in pred.data().iter().zip(observed.data()) {
        acc += (p.to_f64() - o.to_f64()).abs();
    }
    Ok(acc / pred.rows() as f64)
}

/// Tape builder: shear prediction for one sensor from tape-resident
/// conditioning, differentiable w.r.t. ξ, ψ, hypernet parameters, and the
/// grid. Returns the prediction `[N,2]` and the generated parameters.
pub fn predict_on_tape<T: Real>(
    tape: &mut Tape<T>,
    config: &TactileConfig,
    hyper_nodes: &HyperNetNodes,
    xi: NodeId,
    psi_s: NodeId,
    grid: NodeId,
) -> Result<(NodeId, GeneratedMlp)> {
    let xi_row = tape.reshape(xi, vec![1, POSE_CODE_LEN])?;
    let psi_row = tape.reshape(psi_s, vec![1, TRIAL_CODE_PER_SENSOR])?;
    let code = tape.concat_cols(&[xi_row, psi_row])?;
    let generated = hypernet_forward_tape(tape, &config.hyper_spec(), hyper_nodes, code)?;
    let (pred, _) = mlp_forward_tape(tape, &config.mlp_spec(), &generated.mlp, grid)?;
    Ok((pred, generated))
}

/// Tape builder for the shear loss given a prediction node.
pub fn shear_loss_on_tape<T: Real>(
    tape: &mut Tape<T>,
    pred: NodeId,
    observed: NodeId,
) -> Result<NodeId> {
    let n = tape.value(pred).rows();
    let diff = tape.sub(pred, observed)?;
    let a = tape.abs(diff);
    let s = tape.sum_all(a);
    Ok(tape.affine(s, 1.0 / n as f64, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::SensorGrid;

    fn model(seed: u64) -> TactileModel<f64> {
        TactileModel::init(
            TactileConfig {
                hidden: 16,
                trunk_width: 8,
                omega0: 30.0,
            },
            seed,
        )
    }

    #[test]
    fn sensors_have_independent_parameters() {
        let m = model(1);
        let l = &m.nets[0].head_w[0];
        let r = &m.nets[1].head_w[0];
        assert_ne!(l.data(), r.data());
    }

    #[test]
    fn forward_is_deterministic_and_conditioning_matters() {
        let m = model(2);
        let grid: DenseArray<f64> = SensorGrid::normalized_queries();
        let xi = [0.001, -0.002, 0.1];
        let psi_a = DenseArray::from_vec(vec![0.1; 6]);
        let psi_b = DenseArray::from_vec(vec![-0.1; 6]);
        let p1 = m.forward(SensorId::Left, &xi, &psi_a, &grid).unwrap();
        let p2 = m.forward(SensorId::Left, &xi, &psi_a, &grid).unwrap();
        assert_eq!(p1.data(), p2.data());
        let p3 = m.forward(SensorId::Left, &xi, &psi_b, &grid).unwrap();
        let gap = shear_loss(&p1, &p3).unwrap();
        assert!(gap > 0.0);
    }

    #[test]
    fn loss_closed_forms() {
        let pred = DenseArray::<f64>::new(vec![4, 2], vec![[0.1, 0.0]; 4].concat()).unwrap();
        let obs = DenseArray::<f64>::zeros(vec![4, 2]);
        // Constant (0.1, 0) offset: summed-components convention gives 0.1.
        assert!((shear_loss(&pred, &obs).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(shear_loss(&obs, &obs).unwrap(), 0.0);
    }

    #[test]
    fn loss_matches_double_loop_and_is_permutation_invariant() {
        let mut rng = ndiff::rng::stream(5, &[3]);
        let n = 37;
        let mut p = Vec::new();
        let mut o = Vec::new();
        for _ in 0..n * 2 {
            p.push(ndiff::rng::normal(&mut rng));
            o.push(ndiff::rng::normal(&mut rng));
        }
        let pred = DenseArray::<f64>::new(vec![n, 2], p.clone()).unwrap();
        let obs = DenseArray::<f64>::new(vec![n, 2], o.clone()).unwrap();
        let got = shear_loss(&pred, &obs).unwrap();
        let mut want = 0.0;
        for i in 0..n {
            want += (p[2 * i] - o[2 * i]).abs() + (p[2 * i + 1] - o[2 * i + 1]).abs();
        }
        want /= n as f64;
        assert!((got - want).abs() < 1e-12);

        // Permuting grid points leaves the loss unchanged.
        let perm: Vec<usize> = (0..n).rev().collect();
        let gather = |src: &[f64]| -> Vec<f64> {
            perm.iter()
                .flat_map(|&i| [src[2 * i], src[2 * i + 1]])
                .collect()
        };
        let pred_p = DenseArray::<f64>::new(vec![n, 2], gather(&p)).unwrap();
        let obs_p = DenseArray::<f64>::new(vec![n, 2], gather(&o)).unwrap();
        assert!((shear_loss(&pred_p, &obs_p).unwrap() - got).abs() < 1e-12);
    }

    #[test]
    fn count_mismatch_is_a_contract_error() {
        let a = DenseArray::<f64>::zeros(vec![4, 2]);
        let b = DenseArray::<f64>::zeros(vec![5, 2]);
        assert!(shear_loss(&a, &b).is_err());
    }

    #[test]
    fn tape_prediction_matches_plain_forward() {
        let m = model(7);
        let grid: DenseArray<f64> = SensorGrid::normalized_queries();
        let xi = [0.002, 0.001, -0.05];
        let psi = DenseArray::from_vec(vec![0.05, -0.02, 0.0, 0.1, 0.03, -0.07]);
        let plain = m.forward(SensorId::Right, &xi, &psi, &grid).unwrap();

        let mut tape = Tape::<f64>::new();
        let hn = m.nets[1].nodes(&mut tape);
        let xi_node = tape.constant_owned(DenseArray::from_vec(xi.to_vec()));
        let psi_node = tape.param_owned(psi.clone());
        let grid_node = tape.constant_owned(grid.clone());
        let (pred, _) =
            predict_on_tape(&mut tape, &m.config, &hn, xi_node, psi_node, grid_node).unwrap();
        assert_eq!(tape.value(pred).data(), plain.data());

        // Gradients flow into psi but never into the other sensor's net.
        let obs = tape.constant_owned(DenseArray::zeros(vec![SensorGrid::POINTS, 2]));
        let loss = shear_loss_on_tape(&mut tape, pred, obs).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(psi_node).is_some());
    }
}
