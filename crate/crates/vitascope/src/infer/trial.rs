//! Trial-code inference: optimize ψ so the tactile module matches the
//! observed shear fields on both sensors.

use std::sync::Arc;

use ndiff::{Adam, DenseArray, Real, Tape};

use crate::error::{Result, VitaError};
use crate::fields::tactile::{self, TactileModel, TRIAL_CODE_LEN, TRIAL_CODE_PER_SENSOR};
use crate::pose::InHandPose;
use crate::sensor::{SensorGrid, SensorId, ShearField};

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            steps: 60,
            lr: 3e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialEstimate {
    pub psi: DenseArray<f64>,
    /// Mean L1 residual before each step (length `steps`), then the final
    /// residual at the returned code as the last entry.
    pub residuals: Vec<f64>,
    pub steps: usize,
}

impl TrialEstimate {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }

    pub fn initial_residual(&self) -> f64 {
        self.residuals[0]
    }
}

/// Jointly optimizes the concatenated trial code against both sensors'
/// observed fields; each sensor's term uses its half of ψ. The code is
/// initialized at zero.
pub fn infer_trial_code<T: Real>(
    tactile_model: &TactileModel<T>,
    xi: InHandPose,
    observed: &[ShearField; 2],
    cfg: &TrialConfig,
) -> Result<TrialEstimate> {
    for field in observed {
        if field.vectors.len() != SensorGrid::POINTS {
            return Err(VitaError::Contract {
                op: "infer_trial_code",
                detail: format!("observed field has {} points", field.vectors.len()),
            });
        }
    }
    let grid: Arc<DenseArray<T>> = Arc::new(SensorGrid::normalized_queries());
    let obs: [Arc<DenseArray<T>>; 2] = [
        Arc::new(observed[0].as_array()),
        Arc::new(observed[1].as_array()),
    ];
    let xi_arr = DenseArray::from_vec(
        xi.to_array().iter().map(|&v| T::from_f64(v)).collect(),
    );

    let mut psi = Arc::new(DenseArray::<T>::zeros(vec![TRIAL_CODE_LEN]));
    let mut adam = Adam::<T>::new();
    let mut residuals = Vec::with_capacity(cfg.steps + 1);

    let build = |tape: &mut Tape<T>, psi: &Arc<DenseArray<T>>| -> Result<(ndiff::NodeId, ndiff::NodeId)> {
        let psi_node = tape.param(psi.clone());
        let xi_node = tape.constant_owned(xi_arr.clone());
        let grid_node = tape.constant(grid.clone());
        let mut losses = Vec::with_capacity(2);
        for sensor in SensorId::BOTH {
            let hyper_nodes = tactile_model.net(sensor).nodes_const(tape);
            let psi_row = tape.reshape(psi_node, vec![1, TRIAL_CODE_LEN])?;
            let half = tape.slice_cols(
                psi_row,
                sensor.index() * TRIAL_CODE_PER_SENSOR,
                TRIAL_CODE_PER_SENSOR,
            )?;
            let (pred, _) = tactile::predict_on_tape(
                tape,
                &tactile_model.config,
                &hyper_nodes,
                xi_node,
                half,
                grid_node,
            )?;
            let obs_node = tape.constant(obs[sensor.index()].clone());
            losses.push(tactile::shear_loss_on_tape(tape, pred, obs_node)?);
        }
        let sum = tape.add(losses[0], losses[1])?;
        let loss = tape.affine(sum, 0.5, 0.0);
        Ok((loss, psi_node))
    };

    for step in 0..cfg.steps {
        let mut tape = Tape::<T>::new();
        let (loss, psi_node) = build(&mut tape, &psi)?;
        let val = tape.value(loss).scalar_value().to_f64();
        if !val.is_finite() {
            return Err(VitaError::Inference {
                detail: format!("non-finite trial-code loss at step {}", step),
            });
        }
        residuals.push(val);
        let grads = tape.backward(loss)?;
        let g = grads.get(psi_node).cloned();
        drop(tape);
        let mut slots = vec![("trial.psi".to_string(), &mut psi)];
        adam.step(&mut slots, &[g.as_ref()], cfg.lr)?;
    }

    let mut tape = Tape::<T>::new();
    let (loss, _) = build(&mut tape, &psi)?;
    residuals.push(tape.value(loss).scalar_value().to_f64());

    Ok(TrialEstimate {
        psi: DenseArray::from_vec(psi.data().iter().map(|v| v.to_f64()).collect()),
        residuals,
        steps: cfg.steps,
    })
}

/// Residual of a given ψ against observed fields (no optimization).
pub fn trial_residual_at<T: Real>(
    tactile_model: &TactileModel<T>,
    xi: InHandPose,
    observed: &[ShearField; 2],
    psi: &DenseArray<f64>,
) -> Result<f64> {
    let grid: DenseArray<T> = SensorGrid::normalized_queries();
    let xi_a = xi.to_array();
    let mut total = 0.0;
    for sensor in SensorId::BOTH {
        let half: Vec<T> = psi.data()
            [sensor.index() * TRIAL_CODE_PER_SENSOR..(sensor.index() + 1) * TRIAL_CODE_PER_SENSOR]
            .iter()
            .map(|&v| T::from_f64(v))
            .collect();
        let pred = tactile_model.forward(
            sensor,
            &xi_a,
            &DenseArray::from_vec(half),
            &grid,
        )?;
        let obs: DenseArray<T> = observed[sensor.index()].as_array();
        total += tactile::shear_loss(&pred, &obs)?;
    }
    Ok(total / 2.0)
}
