//! Hypernetworks: conditioning networks that emit the weights of a target
//! MLP from a latent code.
//!
//! The trunk is a two-layer ReLU network; one linear head per target layer
//! produces that layer's flattened `[weights ⊕ bias]` block. Head weights
//! start near zero and head biases carry the sine-init of the target, so a
//! freshly initialized hypernetwork generates a sensibly initialized MLP
//! for every code.

use std::sync::Arc;

use rand_chacha::ChaCha12Rng;

use crate::array::DenseArray;
use crate::error::{NdiffError, Result};
use crate::kernels;
use crate::nn::{siren_layer_init, MlpNodes, MlpParams, MlpSpec};
use crate::real::Real;
use crate::rng;
use crate::tape::{NodeId, Tape};

/// Architecture of a hypernetwork.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperNetSpec {
    /// Width of the conditioning code.
    pub code_len: usize,
    /// Width of the two ReLU trunk layers.
    pub trunk_width: usize,
    /// Architecture of the generated MLP.
    pub target: MlpSpec,
}

impl HyperNetSpec {
    pub fn new(code_len: usize, target: MlpSpec) -> Self {
        Self {
            code_len,
            trunk_width: 128,
            target,
        }
    }

    /// Total length of the generated flattened parameter vector.
    pub fn generated_len(&self) -> usize {
        self.target.param_count()
    }
}

/// Parameters of a hypernetwork.
#[derive(Debug, Clone)]
pub struct HyperNetParams<T> {
    pub spec: HyperNetSpec,
    pub trunk_w: [Arc<DenseArray<T>>; 2],
    pub trunk_b: [Arc<DenseArray<T>>; 2],
    /// One head per target layer: `[trunk_width, in*out + out]`.
    pub head_w: [Arc<DenseArray<T>>; 3],
    pub head_b: [Arc<DenseArray<T>>; 3],
}

/// Tape-resident handles for hypernetwork parameters.
#[derive(Debug, Clone, Copy)]
pub struct HyperNetNodes {
    pub trunk_w: [NodeId; 2],
    pub trunk_b: [NodeId; 2],
    pub head_w: [NodeId; 3],
    pub head_b: [NodeId; 3],
}

/// Generated MLP on a tape: shaped parameter nodes plus the raw flattened
/// per-layer blocks (the regularizer wants the flat view).
#[derive(Debug, Clone, Copy)]
pub struct MlpNodes3 {
    pub mlp: MlpNodes,
    pub flat: [NodeId; 3],
}

pub use MlpNodes3 as GeneratedMlp;

/// Scale of the near-zero head weight initialization.
const HEAD_WEIGHT_SCALE: f64 = 1e-2;

impl<T: Real> HyperNetParams<T> {
    pub fn init(spec: HyperNetSpec, rng: &mut ChaCha12Rng) -> Self {
        let w = spec.trunk_width;
        let dims = [(spec.code_len, w), (w, w)];
        let mut trunk_w = Vec::new();
        let mut trunk_b = Vec::new();
        for (fan_in, fan_out) in dims {
            let limit = (6.0 / fan_in as f64).sqrt();
            let data: Vec<T> = (0..fan_in * fan_out)
                .map(|_| T::from_f64(rng::uniform(rng, -limit, limit)))
                .collect();
            trunk_w.push(Arc::new(
                DenseArray::new(vec![fan_in, fan_out], data).expect("trunk shape"),
            ));
            trunk_b.push(Arc::new(DenseArray::zeros(vec![fan_out])));
        }

        let mut head_w = Vec::new();
        let mut head_b = Vec::new();
        for layer in 0..3 {
            let p = spec.target.layer_param_count(layer);
            let limit = HEAD_WEIGHT_SCALE / (w as f64).sqrt();
            let data: Vec<T> = (0..w * p)
                .map(|_| T::from_f64(rng::uniform(rng, -limit, limit)))
                .collect();
            head_w.push(Arc::new(
                DenseArray::new(vec![w, p], data).expect("head shape"),
            ));
            // Head bias carries the target's own initialization, flattened
            // as [weights ⊕ bias].
            let (tw, tb) = siren_layer_init::<T>(&spec.target, layer, rng);
            let mut flat = Vec::with_capacity(p);
            flat.extend_from_slice(tw.data());
            flat.extend_from_slice(tb.data());
            head_b.push(Arc::new(DenseArray::from_vec(flat)));
        }

        Self {
            spec,
            trunk_w: [trunk_w[0].clone(), trunk_w[1].clone()],
            trunk_b: [trunk_b[0].clone(), trunk_b[1].clone()],
            head_w: [head_w[0].clone(), head_w[1].clone(), head_w[2].clone()],
            head_b: [head_b[0].clone(), head_b[1].clone(), head_b[2].clone()],
        }
    }

    fn check_code(&self, len: usize) -> Result<()> {
        if len != self.spec.code_len {
            return Err(NdiffError::Contract {
                op: "hypernet_forward",
                detail: format!(
                    "code length {} does not match configured width {}",
                    len, self.spec.code_len
                ),
            });
        }
        Ok(())
    }

    /// Generates target parameters for a code, over plain arrays.
    pub fn forward(&self, code: &DenseArray<T>) -> Result<MlpParams<T>> {
        self.check_code(code.len())?;
        let w = self.spec.trunk_width;

        let mut h = code.data().to_vec();
        for layer in 0..2 {
            let (fan_in, fan_out) = (h.len(), w);
            let mut z = vec![T::ZERO; fan_out];
            kernels::matmul(&h, self.trunk_w[layer].data(), &mut z, 1, fan_in, fan_out);
            for (v, &b) in z.iter_mut().zip(self.trunk_b[layer].data()) {
                *v = (*v + b).max(T::ZERO);
            }
            h = z;
        }

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in 0..3 {
            let p = self.spec.target.layer_param_count(layer);
            let mut flat = vec![T::ZERO; p];
            kernels::matmul(&h, self.head_w[layer].data(), &mut flat, 1, w, p);
            for (v, &b) in flat.iter_mut().zip(self.head_b[layer].data()) {
                *v += b;
            }
            let (fan_in, fan_out) = self.spec.target.layer_dims()[layer];
            let wdata = flat[..fan_in * fan_out].to_vec();
            let bdata = flat[fan_in * fan_out..].to_vec();
            weights.push(Arc::new(
                DenseArray::new(vec![fan_in, fan_out], wdata).expect("gen shape"),
            ));
            biases.push(Arc::new(DenseArray::from_vec(bdata)));
        }
        Ok(MlpParams {
            spec: self.spec.target,
            weights: [weights[0].clone(), weights[1].clone(), weights[2].clone()],
            biases: [biases[0].clone(), biases[1].clone(), biases[2].clone()],
        })
    }

    /// Registers hypernetwork parameters on a tape as differentiable leaves.
    pub fn nodes(&self, tape: &mut Tape<T>) -> HyperNetNodes {
        HyperNetNodes {
            trunk_w: [
                tape.param(self.trunk_w[0].clone()),
                tape.param(self.trunk_w[1].clone()),
            ],
            trunk_b: [
                tape.param(self.trunk_b[0].clone()),
                tape.param(self.trunk_b[1].clone()),
            ],
            head_w: [
                tape.param(self.head_w[0].clone()),
                tape.param(self.head_w[1].clone()),
                tape.param(self.head_w[2].clone()),
            ],
            head_b: [
                tape.param(self.head_b[0].clone()),
                tape.param(self.head_b[1].clone()),
                tape.param(self.head_b[2].clone()),
            ],
        }
    }

    /// Registers hypernetwork parameters on a tape as constants.
    pub fn nodes_const(&self, tape: &mut Tape<T>) -> HyperNetNodes {
        HyperNetNodes {
            trunk_w: [
                tape.constant(self.trunk_w[0].clone()),
                tape.constant(self.trunk_w[1].clone()),
            ],
            trunk_b: [
                tape.constant(self.trunk_b[0].clone()),
                tape.constant(self.trunk_b[1].clone()),
            ],
            head_w: [
                tape.constant(self.head_w[0].clone()),
                tape.constant(self.head_w[1].clone()),
                tape.constant(self.head_w[2].clone()),
            ],
            head_b: [
                tape.constant(self.head_b[0].clone()),
                tape.constant(self.head_b[1].clone()),
                tape.constant(self.head_b[2].clone()),
            ],
        }
    }

    /// Enumerates `(suffix, param)` pairs for optimizers and serialization.
    pub fn named(&self) -> Vec<(String, Arc<DenseArray<T>>)> {
        let mut out = Vec::new();
        for i in 0..2 {
            out.push((format!("trunk_w{}", i), self.trunk_w[i].clone()));
            out.push((format!("trunk_b{}", i), self.trunk_b[i].clone()));
        }
        for i in 0..3 {
            out.push((format!("head_w{}", i), self.head_w[i].clone()));
            out.push((format!("head_b{}", i), self.head_b[i].clone()));
        }
        out
    }

    /// Mutable access in the same order as [`HyperNetParams::named`].
    pub fn named_mut(&mut self) -> Vec<(String, &mut Arc<DenseArray<T>>)> {
        let mut out: Vec<(String, &mut Arc<DenseArray<T>>)> = Vec::new();
        let [tw0, tw1] = &mut self.trunk_w;
        let [tb0, tb1] = &mut self.trunk_b;
        let [hw0, hw1, hw2] = &mut self.head_w;
        let [hb0, hb1, hb2] = &mut self.head_b;
        out.push(("trunk_w0".into(), tw0));
        out.push(("trunk_b0".into(), tb0));
        out.push(("trunk_w1".into(), tw1));
        out.push(("trunk_b1".into(), tb1));
        out.push(("head_w0".into(), hw0));
        out.push(("head_b0".into(), hb0));
        out.push(("head_w1".into(), hw1));
        out.push(("head_b1".into(), hb1));
        out.push(("head_w2".into(), hw2));
        out.push(("head_b2".into(), hb2));
        out
    }

    pub fn cast<U: Real>(&self) -> HyperNetParams<U> {
        HyperNetParams {
            spec: self.spec,
            trunk_w: [
                Arc::new(self.trunk_w[0].cast()),
                Arc::new(self.trunk_w[1].cast()),
            ],
            trunk_b: [
                Arc::new(self.trunk_b[0].cast()),
                Arc::new(self.trunk_b[1].cast()),
            ],
            head_w: [
                Arc::new(self.head_w[0].cast()),
                Arc::new(self.head_w[1].cast()),
                Arc::new(self.head_w[2].cast()),
            ],
            head_b: [
                Arc::new(self.head_b[0].cast()),
                Arc::new(self.head_b[1].cast()),
                Arc::new(self.head_b[2].cast()),
            ],
        }
    }
}

/// Tape version of [`HyperNetParams::forward`]: differentiable w.r.t. both
/// the hypernetwork parameters and the code.
pub fn hypernet_forward_tape<T: Real>(
    tape: &mut Tape<T>,
    spec: &HyperNetSpec,
    nodes: &HyperNetNodes,
    code: NodeId,
) -> Result<GeneratedMlp> {
    let code_len = tape.value(code).len();
    if code_len != spec.code_len {
        return Err(NdiffError::Contract {
            op: "hypernet_forward_tape",
            detail: format!(
                "code length {} does not match configured width {}",
                code_len, spec.code_len
            ),
        });
    }
    let code_row = tape.reshape(code, vec![1, spec.code_len])?;

    let mut h = code_row;
    for layer in 0..2 {
        let z = tape.matmul(h, nodes.trunk_w[layer])?;
        let z = tape.add_row(z, nodes.trunk_b[layer])?;
        h = tape.relu(z);
    }

    let mut weights = [code; 3];
    let mut biases = [code; 3];
    let mut flat_blocks = [code; 3];
    for layer in 0..3 {
        let flat = tape.matmul(h, nodes.head_w[layer])?;
        let flat = tape.add_row(flat, nodes.head_b[layer])?;
        flat_blocks[layer] = flat;
        let (fan_in, fan_out) = spec.target.layer_dims()[layer];
        let wpart = tape.slice_cols(flat, 0, fan_in * fan_out)?;
        weights[layer] = tape.reshape(wpart, vec![fan_in, fan_out])?;
        let bpart = tape.slice_cols(flat, fan_in * fan_out, fan_out)?;
        biases[layer] = tape.reshape(bpart, vec![fan_out])?;
    }

    Ok(GeneratedMlp {
        mlp: MlpNodes { weights, biases },
        flat: flat_blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp_forward_tape;
    use crate::rng::stream;

    #[test]
    fn generated_length_matches_parameter_count_arithmetic() {
        // 9→256→256→2 with per-layer biases.
        let spec = HyperNetSpec::new(
            9,
            MlpSpec {
                input: 9,
                hidden: 256,
                output: 2,
                omega0: 30.0,
            },
        );
        let by_hand = 9 * 256 + 256 + 256 * 256 + 256 + 256 * 2 + 2;
        assert_eq!(spec.generated_len(), by_hand);
        assert_eq!(by_hand, 68866);
    }

    #[test]
    fn zero_weight_heads_generate_the_bias_mlp_for_any_code() {
        let target = MlpSpec {
            input: 2,
            hidden: 6,
            output: 1,
            omega0: 30.0,
        };
        let mut rng = stream(3, &[1]);
        let mut hp = HyperNetParams::<f64>::init(HyperNetSpec::new(4, target), &mut rng);
        for hw in &mut hp.head_w {
            *hw = Arc::new(DenseArray::zeros(hw.shape().to_vec()));
        }
        let c1 = DenseArray::from_vec(vec![0.4, -0.2, 0.9, 0.0]);
        let c2 = DenseArray::from_vec(vec![-1.0, 2.0, 0.3, 0.7]);
        let m1 = hp.forward(&c1).unwrap();
        let m2 = hp.forward(&c2).unwrap();
        for layer in 0..3 {
            assert_eq!(m1.weights[layer].data(), m2.weights[layer].data());
            assert_eq!(m1.biases[layer].data(), m2.biases[layer].data());
            // And they equal the head-bias initialization exactly.
            let p = hp.spec.target.layer_dims()[layer];
            let flat = hp.head_b[layer].data();
            assert_eq!(&flat[..p.0 * p.1], m1.weights[layer].data());
            assert_eq!(&flat[p.0 * p.1..], m1.biases[layer].data());
        }
    }

    #[test]
    fn distinct_codes_generate_distinct_parameters() {
        let target = MlpSpec {
            input: 2,
            hidden: 6,
            output: 2,
            omega0: 30.0,
        };
        let mut rng = stream(5, &[2]);
        let hp = HyperNetParams::<f64>::init(HyperNetSpec::new(3, target), &mut rng);
        let m1 = hp.forward(&DenseArray::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let m2 = hp.forward(&DenseArray::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        let mut gap = 0.0;
        for layer in 0..3 {
            for (a, b) in m1.weights[layer].data().iter().zip(m2.weights[layer].data()) {
                gap += (a - b) * (a - b);
            }
        }
        assert!(gap > 0.0);
    }

    #[test]
    fn code_width_mismatch_is_a_contract_error() {
        let target = MlpSpec {
            input: 2,
            hidden: 4,
            output: 1,
            omega0: 30.0,
        };
        let mut rng = stream(9, &[3]);
        let hp = HyperNetParams::<f64>::init(HyperNetSpec::new(5, target), &mut rng);
        assert!(hp.forward(&DenseArray::from_vec(vec![0.0; 4])).is_err());
    }

    #[test]
    fn tape_generation_matches_plain_generation() {
        let target = MlpSpec {
            input: 3,
            hidden: 8,
            output: 1,
            omega0: 30.0,
        };
        let spec = HyperNetSpec {
            code_len: 4,
            trunk_width: 16,
            target,
        };
        let mut rng = stream(17, &[0]);
        let hp = HyperNetParams::<f64>::init(spec, &mut rng);
        let code = DenseArray::from_vec(vec![0.3, -0.5, 0.2, 0.8]);
        let plain = hp.forward(&code).unwrap();

        let mut tape = Tape::new();
        let hn = hp.nodes(&mut tape);
        let c = tape.param_owned(code.clone());
        let generated = hypernet_forward_tape(&mut tape, &spec, &hn, c).unwrap();
        for layer in 0..3 {
            assert_eq!(
                tape.value(generated.mlp.weights[layer]).data(),
                plain.weights[layer].data()
            );
        }

        // And the generated MLP is differentiable w.r.t. the code.
        let x = tape.constant_owned(DenseArray::from_rows(1, 3, vec![0.1, 0.2, 0.3]).unwrap());
        let (y, _) = mlp_forward_tape(&mut tape, &target, &generated.mlp, x).unwrap();
        let loss = tape.mean_all(y);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(c).is_some());
        assert!(grads.get(c).unwrap().data().iter().any(|&g| g != 0.0));
    }
}
