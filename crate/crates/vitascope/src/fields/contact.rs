//! The contact module: a contact-probability field over canonical surface
//! points, consuming object activations and pooled shear features, with
//! weights generated from ξ ⊕ ψ.

use ndiff::hyper::{hypernet_forward_tape, GeneratedMlp, HyperNetNodes};
use ndiff::{DenseArray, HyperNetParams, HyperNetSpec, MlpSpec, NodeId, Real, Tape};

use crate::error::{Result, VitaError};
use crate::fields::hcat;
use crate::fields::tactile::{POSE_CODE_LEN, TRIAL_CODE_LEN};

/// Probability clamp inside the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;
/// Default width of the object-activation block (two 256-wide hidden
/// layers concatenated).
pub const ACTIVATION_LEN: usize = 512;
/// Pooled shear features: mean [u,v] per sensor.
pub const POOLED_LEN: usize = 4;

/// How predicted shear enters the contact input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactInputMode {
    /// Mean-pooled predicted shear per sensor is appended to the query.
    Pooled,
    /// Shear information flows only through the (ξ, ψ) conditioning.
    Conditioned,
}

impl ContactInputMode {
    pub fn name(self) -> &'static str {
        match self {
            ContactInputMode::Pooled => "pooled",
            ContactInputMode::Conditioned => "conditioned",
        }
    }
}

impl std::str::FromStr for ContactInputMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(ContactInputMode::Pooled),
            "conditioned" => Ok(ContactInputMode::Conditioned),
            other => Err(format!("unknown contact input mode `{}`", other)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContactConfig {
    pub hidden: usize,
    pub trunk_width: usize,
    pub omega0: f64,
    pub mode: ContactInputMode,
    /// Width of the object-activation block: twice the object module's
    /// hidden width.
    pub activation_len: usize,
    /// Ablation: zero the object-activation block of every query.
    pub zero_activations: bool,
    /// Ablation: zero ξ inside the hypernetwork conditioning.
    pub zero_pose: bool,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            trunk_width: 128,
            omega0: 30.0,
            mode: ContactInputMode::Pooled,
            activation_len: ACTIVATION_LEN,
            zero_activations: false,
            zero_pose: false,
        }
    }
}

impl ContactConfig {
    pub fn input_len(&self) -> usize {
        3 + self.activation_len
            + match self.mode {
                ContactInputMode::Pooled => POOLED_LEN,
                ContactInputMode::Conditioned => 0,
            }
    }

    pub fn mlp_spec(&self) -> MlpSpec {
        MlpSpec {
            input: self.input_len(),
            hidden: self.hidden,
            output: 1,
            omega0: self.omega0,
        }
    }

    pub fn hyper_spec(&self) -> HyperNetSpec {
        HyperNetSpec {
            code_len: POSE_CODE_LEN + TRIAL_CODE_LEN,
            trunk_width: self.trunk_width,
            target: self.mlp_spec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContactModel<T> {
    pub config: ContactConfig,
    pub net: HyperNetParams<T>,
}

impl<T: Real> ContactModel<T> {
    pub fn init(config: ContactConfig, seed: u64) -> Self {
        let mut rng = ndiff::rng::stream(seed, &[0x71]);
        ContactModel {
            config,
            net: HyperNetParams::init(config.hyper_spec(), &mut rng),
        }
    }

    fn condition(&self, xi: &[f64; 3], psi: &DenseArray<T>) -> Result<DenseArray<T>> {
        if psi.len() != TRIAL_CODE_LEN {
            return Err(VitaError::Contract {
                op: "contact_forward",
                detail: format!("trial code must be 12 long, got {}", psi.len()),
            });
        }
        let mut data = Vec::with_capacity(15);
        for v in xi {
            let v = if self.config.zero_pose { 0.0 } else { *v };
            data.push(T::from_f64(v));
        }
        data.extend_from_slice(psi.data());
        Ok(DenseArray::from_vec(data))
    }

    /// Builds the `[N, input_len]` query matrix from canonical points,
    /// object activations, and pooled shear.
    pub fn assemble_input(
        &self,
        q: &DenseArray<T>,
        z_o: &DenseArray<T>,
        pooled: &[f64; POOLED_LEN],
    ) -> Result<DenseArray<T>> {
        if q.cols() != 3 || z_o.cols() != self.config.activation_len || q.rows() != z_o.rows() {
            return Err(VitaError::Contract {
                op: "contact_forward",
                detail: format!("bad input shapes {:?} / {:?}", q.shape(), z_o.shape()),
            });
        }
        let z_block = if self.config.zero_activations {
            DenseArray::zeros(vec![z_o.rows(), self.config.activation_len])
        } else {
            z_o.clone()
        };
        let base = hcat(q, &z_block);
        Ok(match self.config.mode {
            ContactInputMode::Pooled => {
                let n = q.rows();
                let mut pool_rows = Vec::with_capacity(n * POOLED_LEN);
                for _ in 0..n {
                    for v in pooled {
                        pool_rows.push(T::from_f64(*v));
                    }
                }
                let pool = DenseArray::new(vec![n, POOLED_LEN], pool_rows)?;
                hcat(&base, &pool)
            }
            ContactInputMode::Conditioned => base,
        })
    }

    /// Contact probabilities `[N,1]` for an assembled input.
    pub fn forward(
        &self,
        xi: &[f64; 3],
        psi: &DenseArray<T>,
        input: &DenseArray<T>,
    ) -> Result<DenseArray<T>> {
        if input.cols() != self.config.input_len() {
            return Err(VitaError::Contract {
                op: "contact_forward",
                detail: format!(
                    "input width {} does not match configured {}",
                    input.cols(),
                    self.config.input_len()
                ),
            });
        }
        let code = self.condition(xi, psi)?;
        let params = self.net.forward(&code)?;
        let (logits, _) = params.forward(input)?;
        let mut probs = logits;
        for v in probs.data_mut() {
            *v = T::ONE / (T::ONE + (-*v).exp());
        }
        Ok(probs)
    }

    pub fn cast<U: Real>(&self) -> ContactModel<U> {
        ContactModel {
            config: self.config,
            net: self.net.cast(),
        }
    }
}

/// Mean binary cross-entropy between probabilities and {0,1} labels,
/// probabilities clamped at [`BCE_EPS`].
pub fn contact_loss<T: Real>(probs: &DenseArray<T>, labels: &DenseArray<T>) -> Result<f64> {
    if probs.shape() != labels.shape() {
        return Err(VitaError::Contract {
            op: "contact_loss",
            detail: format!("{:?} vs {:?}", probs.shape(), labels.shape()),
        });
    }
    let mut acc = 0.0f64;
    for (p, y) in probs.data().iter().zip(labels.data()) {
        let p = p.to_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
        let y = y.to_f64();
        acc += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(acc / probs.len() as f64)
}

/// Tape builder: contact probabilities for one interaction.
///
/// The first generated layer is split into a block for the constant
/// `[q ⊕ z_O]` columns and a block for the pooled-shear columns, so the
/// backward pass never differentiates the large constant input. In
/// `Conditioned` mode `pooled` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn predict_on_tape<T: Real>(
    tape: &mut Tape<T>,
    config: &ContactConfig,
    hyper_nodes: &HyperNetNodes,
    xi: NodeId,
    psi: NodeId,
    base_input: NodeId,
    pooled: Option<NodeId>,
) -> Result<(NodeId, GeneratedMlp)> {
    let xi_row = tape.reshape(xi, vec![1, POSE_CODE_LEN])?;
    let xi_row = if config.zero_pose {
        tape.affine(xi_row, 0.0, 0.0)
    } else {
        xi_row
    };
    let psi_row = tape.reshape(psi, vec![1, TRIAL_CODE_LEN])?;
    let code = tape.concat_cols(&[xi_row, psi_row])?;
    let generated = hypernet_forward_tape(tape, &config.hyper_spec(), hyper_nodes, code)?;

    let n = tape.value(base_input).rows();
    let base_cols = 3 + config.activation_len;
    if tape.value(base_input).cols() != base_cols {
        return Err(VitaError::Contract {
            op: "contact_predict_on_tape",
            detail: format!(
                "base input must have {} columns, got {}",
                base_cols,
                tape.value(base_input).cols()
            ),
        });
    }

    let w1 = generated.mlp.weights[0];
    let z1 = match (config.mode, pooled) {
        (ContactInputMode::Pooled, Some(pooled)) => {
            let w1_base = tape.slice_rows(w1, 0, base_cols)?;
            let w1_pool = tape.slice_rows(w1, base_cols, POOLED_LEN)?;
            let z_base = tape.matmul(base_input, w1_base)?;
            let pooled_row = tape.reshape(pooled, vec![1, POOLED_LEN])?;
            let z_pool = tape.matmul(pooled_row, w1_pool)?;
            let z_pool_row = tape.reshape(z_pool, vec![config.hidden])?;
            let z = tape.add_row(z_base, z_pool_row)?;
            tape.add_row(z, generated.mlp.biases[0])?
        }
        (ContactInputMode::Conditioned, _) => {
            let z = tape.matmul(base_input, w1)?;
            tape.add_row(z, generated.mlp.biases[0])?
        }
        (ContactInputMode::Pooled, None) => {
            return Err(VitaError::Contract {
                op: "contact_predict_on_tape",
                detail: "pooled mode requires pooled features".into(),
            })
        }
    };

    let z1s = tape.affine(z1, config.omega0, 0.0);
    let a1 = tape.sin(z1s);
    let z2 = tape.matmul(a1, generated.mlp.weights[1])?;
    let z2 = tape.add_row(z2, generated.mlp.biases[1])?;
    let z2s = tape.affine(z2, config.omega0, 0.0);
    let a2 = tape.sin(z2s);
    let logits = tape.matmul(a2, generated.mlp.weights[2])?;
    let logits = tape.add_row(logits, generated.mlp.biases[2])?;
    let probs = tape.sigmoid(logits);
    let _ = n;
    Ok((probs, generated))
}
