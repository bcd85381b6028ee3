//! Sine-activated MLPs with two hidden layers.
//!
//! The same forward definition exists twice: a fast path over plain arrays
//! (marching-cube grids, activation capture, evaluation) and a tape path
//! whose weights may be tape nodes, so hypernetwork-generated parameters
//! remain differentiable end to end. The input gradient ∂out/∂x is built
//! as an explicit expression from the chain rule, which keeps reverse-mode
//! first-order while still letting losses contain the spatial gradient.

use std::sync::Arc;

use rand_chacha::ChaCha12Rng;

use crate::array::DenseArray;
use crate::error::{NdiffError, Result};
use crate::kernels;
use crate::real::Real;
use crate::rng;
use crate::tape::{NodeId, Tape};

/// Architecture of an input→hidden→hidden→output network with sine
/// activations on the two hidden layers and a linear output layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    /// Sine frequency scale applied to both hidden pre-activations.
    pub omega0: f64,
}

impl MlpSpec {
    pub fn new(input: usize, output: usize) -> Self {
        Self {
            input,
            hidden: 256,
            output,
            omega0: 30.0,
        }
    }

    /// `(fan_in, fan_out)` for each of the three layers.
    pub fn layer_dims(&self) -> [(usize, usize); 3] {
        [
            (self.input, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, self.output),
        ]
    }

    /// Total number of scalar parameters (weights plus biases).
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }

    /// Per-layer flattened parameter count (`in*out + out`).
    pub fn layer_param_count(&self, layer: usize) -> usize {
        let (i, o) = self.layer_dims()[layer];
        i * o + o
    }
}

/// Concrete weights and biases for an [`MlpSpec`].
#[derive(Debug, Clone)]
pub struct MlpParams<T> {
    pub spec: MlpSpec,
    pub weights: [Arc<DenseArray<T>>; 3],
    pub biases: [Arc<DenseArray<T>>; 3],
}

/// Tape-resident parameter handles for one MLP.
#[derive(Debug, Clone, Copy)]
pub struct MlpNodes {
    pub weights: [NodeId; 3],
    pub biases: [NodeId; 3],
}

/// Draws layer initializations in the sine-network convention: first layer
/// uniform ±1/fan_in, later layers uniform ±sqrt(6/fan_in)/omega0, biases
/// zero.
pub fn siren_layer_init<T: Real>(
    spec: &MlpSpec,
    layer: usize,
    rng: &mut ChaCha12Rng,
) -> (DenseArray<T>, DenseArray<T>) {
    let (fan_in, fan_out) = spec.layer_dims()[layer];
    let limit = if layer == 0 {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt() / spec.omega0
    };
    let w: Vec<T> = (0..fan_in * fan_out)
        .map(|_| T::from_f64(rng::uniform(rng, -limit, limit)))
        .collect();
    let weights = DenseArray::new(vec![fan_in, fan_out], w).expect("init shape");
    let biases = DenseArray::zeros(vec![fan_out]);
    (weights, biases)
}

impl<T: Real> MlpParams<T> {
    pub fn init(spec: MlpSpec, rng: &mut ChaCha12Rng) -> Self {
        let mut weights = Vec::with_capacity(3);
        let mut biases = Vec::with_capacity(3);
        for layer in 0..3 {
            let (w, b) = siren_layer_init::<T>(&spec, layer, rng);
            weights.push(Arc::new(w));
            biases.push(Arc::new(b));
        }
        Self {
            spec,
            weights: [
                weights[0].clone(),
                weights[1].clone(),
                weights[2].clone(),
            ],
            biases: [biases[0].clone(), biases[1].clone(), biases[2].clone()],
        }
    }

    fn check_input(&self, input: &DenseArray<T>) -> Result<()> {
        if input.cols() != self.spec.input {
            return Err(NdiffError::Shape {
                op: "mlp_forward",
                detail: format!(
                    "layer 0 expects {} input columns, got {:?}",
                    self.spec.input,
                    input.shape()
                ),
            });
        }
        Ok(())
    }

    /// Forward pass over plain arrays. Returns the output and the two
    /// hidden activation matrices (after the sine nonlinearity).
    pub fn forward(&self, input: &DenseArray<T>) -> Result<(DenseArray<T>, [DenseArray<T>; 2])> {
        self.check_input(input)?;
        let n = input.rows();
        let omega = T::from_f64(self.spec.omega0);

        let mut layer_in = input.clone();
        let mut hidden: Vec<DenseArray<T>> = Vec::with_capacity(2);
        for layer in 0..3 {
            let w = &self.weights[layer];
            let b = &self.biases[layer];
            let (k, m) = (w.rows(), w.cols());
            if layer_in.cols() != k {
                return Err(NdiffError::Shape {
                    op: "mlp_forward",
                    detail: format!("layer {} expects {} columns, got {}", layer, k, layer_in.cols()),
                });
            }
            let mut z = DenseArray::zeros(vec![n, m]);
            kernels::matmul(layer_in.data(), w.data(), z.data_mut(), n, k, m);
            for i in 0..n {
                let row = &mut z.data_mut()[i * m..(i + 1) * m];
                for (v, &bias) in row.iter_mut().zip(b.data()) {
                    *v += bias;
                }
            }
            if layer < 2 {
                kernels::map(&z.data().to_vec(), z.data_mut(), |x| (omega * x).sin());
                hidden.push(z.clone());
                layer_in = z;
            } else {
                layer_in = z;
            }
        }
        let h2 = hidden.pop().unwrap();
        let h1 = hidden.pop().unwrap();
        Ok((layer_in, [h1, h2]))
    }

    /// ∂output/∂input for a scalar-output network, evaluated row-wise over
    /// plain arrays: returns `[n, input]`.
    pub fn input_gradient(&self, input: &DenseArray<T>) -> Result<DenseArray<T>> {
        self.check_input(input)?;
        if self.spec.output != 1 {
            return Err(NdiffError::Contract {
                op: "mlp_input_gradient",
                detail: format!("scalar output required, got {}", self.spec.output),
            });
        }
        let n = input.rows();
        let h = self.spec.hidden;
        let omega = T::from_f64(self.spec.omega0);

        // Pre-activations z1, z2 (scaled by omega before the sine).
        let w1 = &self.weights[0];
        let mut z1 = DenseArray::zeros(vec![n, h]);
        kernels::matmul(input.data(), w1.data(), z1.data_mut(), n, self.spec.input, h);
        for i in 0..n {
            for (v, &b) in z1.data_mut()[i * h..(i + 1) * h]
                .iter_mut()
                .zip(self.biases[0].data())
            {
                *v += b;
            }
        }
        let mut a1 = DenseArray::zeros(vec![n, h]);
        kernels::map(z1.data(), a1.data_mut(), |x| (omega * x).sin());

        let w2 = &self.weights[1];
        let mut z2 = DenseArray::zeros(vec![n, h]);
        kernels::matmul(a1.data(), w2.data(), z2.data_mut(), n, h, h);
        for i in 0..n {
            for (v, &b) in z2.data_mut()[i * h..(i + 1) * h]
                .iter_mut()
                .zip(self.biases[1].data())
            {
                *v += b;
            }
        }

        // u2 = cos(omega z2) ⊙ w3ᵀ (row-broadcast), v = omega · u2 · W2ᵀ
        let w3 = &self.weights[2]; // [h,1]
        let mut u2 = DenseArray::zeros(vec![n, h]);
        for i in 0..n {
            let zrow = &z2.data()[i * h..(i + 1) * h];
            let urow = &mut u2.data_mut()[i * h..(i + 1) * h];
            for ((u, &z), &w) in urow.iter_mut().zip(zrow).zip(w3.data()) {
                *u = (omega * z).cos() * w;
            }
        }
        let mut v = DenseArray::zeros(vec![n, h]);
        kernels::matmul_bt_acc(u2.data(), w2.data(), v.data_mut(), n, h, h);

        // u1 = cos(omega z1) ⊙ v, g = omega² · u1 · W1ᵀ
        let mut u1 = DenseArray::zeros(vec![n, h]);
        kernels::zip_acc(z1.data(), v.data(), u1.data_mut(), |z, vv| {
            (omega * z).cos() * vv
        });
        let mut g = DenseArray::zeros(vec![n, self.spec.input]);
        kernels::matmul_bt_acc(u1.data(), w1.data(), g.data_mut(), n, h, self.spec.input);
        let scale = omega * omega;
        for x in g.data_mut() {
            *x *= scale;
        }
        Ok(g)
    }

    /// Registers all parameters on a tape as differentiable leaves.
    pub fn nodes(&self, tape: &mut Tape<T>) -> MlpNodes {
        MlpNodes {
            weights: [
                tape.param(self.weights[0].clone()),
                tape.param(self.weights[1].clone()),
                tape.param(self.weights[2].clone()),
            ],
            biases: [
                tape.param(self.biases[0].clone()),
                tape.param(self.biases[1].clone()),
                tape.param(self.biases[2].clone()),
            ],
        }
    }

    /// Registers all parameters on a tape as constants (frozen model).
    pub fn nodes_const(&self, tape: &mut Tape<T>) -> MlpNodes {
        MlpNodes {
            weights: [
                tape.constant(self.weights[0].clone()),
                tape.constant(self.weights[1].clone()),
                tape.constant(self.weights[2].clone()),
            ],
            biases: [
                tape.constant(self.biases[0].clone()),
                tape.constant(self.biases[1].clone()),
                tape.constant(self.biases[2].clone()),
            ],
        }
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            spec: self.spec,
            weights: [
                Arc::new(self.weights[0].cast()),
                Arc::new(self.weights[1].cast()),
                Arc::new(self.weights[2].cast()),
            ],
            biases: [
                Arc::new(self.biases[0].cast()),
                Arc::new(self.biases[1].cast()),
                Arc::new(self.biases[2].cast()),
            ],
        }
    }
}

/// Tape forward pass; weights may be parameters, constants, or generated
/// nodes. Returns `(output, [hidden1, hidden2])`.
pub fn mlp_forward_tape<T: Real>(
    tape: &mut Tape<T>,
    spec: &MlpSpec,
    nodes: &MlpNodes,
    input: NodeId,
) -> Result<(NodeId, [NodeId; 2])> {
    if tape.value(input).cols() != spec.input {
        return Err(NdiffError::Shape {
            op: "mlp_forward_tape",
            detail: format!(
                "layer 0 expects {} input columns, got {:?}",
                spec.input,
                tape.shape(input)
            ),
        });
    }
    let mut x = input;
    let mut hidden = [input; 2];
    for layer in 0..3 {
        let z = tape.matmul(x, nodes.weights[layer])?;
        let z = tape.add_row(z, nodes.biases[layer])?;
        if layer < 2 {
            let scaled = tape.affine(z, spec.omega0, 0.0);
            let a = tape.sin(scaled);
            hidden[layer] = a;
            x = a;
        } else {
            x = z;
        }
    }
    Ok((x, hidden))
}

/// Tape expression for ∂output/∂input of a scalar-output sine MLP.
///
/// The expression is an ordinary first-order graph (cosines and matmuls),
/// so reverse-mode through it yields the mixed derivatives needed when a
/// loss contains the spatial gradient.
pub fn mlp_input_gradient_tape<T: Real>(
    tape: &mut Tape<T>,
    spec: &MlpSpec,
    nodes: &MlpNodes,
    input: NodeId,
) -> Result<NodeId> {
    if spec.output != 1 {
        return Err(NdiffError::Contract {
            op: "mlp_input_gradient_tape",
            detail: format!("scalar output required, got {}", spec.output),
        });
    }
    let n = tape.value(input).rows();

    let z1 = tape.matmul(input, nodes.weights[0])?;
    let z1 = tape.add_row(z1, nodes.biases[0])?;
    let z1s = tape.affine(z1, spec.omega0, 0.0);
    let a1 = tape.sin(z1s);

    let z2 = tape.matmul(a1, nodes.weights[1])?;
    let z2 = tape.add_row(z2, nodes.biases[1])?;
    let z2s = tape.affine(z2, spec.omega0, 0.0);

    let c2 = tape.cos(z2s);
    let w3_row = tape.reshape(nodes.weights[2], vec![1, spec.hidden])?;
    let w3_b = tape.broadcast_row(w3_row, n)?;
    let u2 = tape.mul(c2, w3_b)?;
    let v = tape.matmul_bt(u2, nodes.weights[1])?;

    let c1 = tape.cos(z1s);
    let u1 = tape.mul(c1, v)?;
    let g = tape.matmul_bt(u1, nodes.weights[0])?;
    Ok(tape.affine(g, spec.omega0 * spec.omega0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small_spec() -> MlpSpec {
        MlpSpec {
            input: 3,
            hidden: 8,
            output: 1,
            omega0: 30.0,
        }
    }

    #[test]
    fn zero_weights_pass_bias_through() {
        let spec = MlpSpec {
            input: 2,
            hidden: 4,
            output: 3,
            omega0: 30.0,
        };
        let mut rng = stream(0, &[0]);
        let mut params = MlpParams::<f64>::init(spec, &mut rng);
        for w in &mut params.weights {
            *w = Arc::new(DenseArray::zeros(w.shape().to_vec()));
        }
        params.biases[2] = Arc::new(DenseArray::from_vec(vec![0.5, -1.0, 2.0]));
        let input = DenseArray::from_rows(1, 2, vec![7.0, -3.0]).unwrap();
        let (out, hidden) = params.forward(&input).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 2.0]);
        // sin(0) = 0 hidden activations
        assert!(hidden[0].data().iter().all(|&x| x == 0.0));
        assert!(hidden[1].data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_single_linear_chain() {
        // A network arranged so the full chain reproduces the input: use
        // zero hidden weights and carry the check on the bias path instead,
        // then separately check a 3x3 identity output layer acting on a
        // fixed hidden vector.
        let spec = MlpSpec {
            input: 3,
            hidden: 3,
            output: 3,
            omega0: 1.0,
        };
        let mut rng = stream(1, &[0]);
        let mut params = MlpParams::<f64>::init(spec, &mut rng);
        params.weights[0] = Arc::new(DenseArray::zeros(vec![3, 3]));
        params.weights[1] = Arc::new(DenseArray::zeros(vec![3, 3]));
        params.biases[1] = Arc::new(DenseArray::from_vec(vec![1.0, 2.0, 3.0]));
        params.weights[2] = Arc::new(
            DenseArray::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap(),
        );
        let input = DenseArray::from_rows(1, 3, vec![9.0, 9.0, 9.0]).unwrap();
        let (out, hidden) = params.forward(&input).unwrap();
        // hidden2 = sin([1,2,3]); output = identity · hidden2
        assert_eq!(out.data(), hidden[1].data());
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        let spec = small_spec();
        let mut rng = stream(7, &[1]);
        let params = MlpParams::<f64>::init(spec, &mut rng);
        let input = DenseArray::from_rows(2, 3, vec![0.1, -0.4, 0.9, -0.2, 0.8, 0.3]).unwrap();
        let (out, _) = params.forward(&input).unwrap();

        // Independent straight-line re-evaluation of the same matrix chain.
        for row in 0..2 {
            let x = input.row(row);
            let mut a: Vec<f64> = x.to_vec();
            for layer in 0..3 {
                let w = &params.weights[layer];
                let b = &params.biases[layer];
                let (fan_in, fan_out) = spec.layer_dims()[layer];
                let mut z = vec![0.0f64; fan_out];
                for o in 0..fan_out {
                    let mut acc = b.data()[o];
                    for i in 0..fan_in {
                        acc += a[i] * w.data()[i * fan_out + o];
                    }
                    z[o] = acc;
                }
                a = if layer < 2 {
                    z.iter().map(|v| (spec.omega0 * v).sin()).collect()
                } else {
                    z
                };
            }
            let rel = (out.at(row, 0) - a[0]).abs() / a[0].abs().max(1e-12);
            assert!(rel < 1e-6, "row {}: {} vs {}", row, out.at(row, 0), a[0]);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let spec = small_spec();
        let mut rng = stream(3, &[2]);
        let params = MlpParams::<f64>::init(spec, &mut rng);
        let input = DenseArray::from_rows(1, 2, vec![0.0, 1.0]).unwrap();
        let err = params.forward(&input).unwrap_err();
        assert!(err.to_string().contains("layer 0"));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let spec = small_spec();
        let mut rng = stream(11, &[4]);
        let params = MlpParams::<f64>::init(spec, &mut rng);
        let q = [0.21, -0.34, 0.55];
        let input = DenseArray::from_rows(1, 3, q.to_vec()).unwrap();
        let g = params.input_gradient(&input).unwrap();

        let h = 1e-6;
        for d in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[d] += h;
            qm[d] -= h;
            let fp = params
                .forward(&DenseArray::from_rows(1, 3, qp.to_vec()).unwrap())
                .unwrap()
                .0
                .scalar_value();
            let fm = params
                .forward(&DenseArray::from_rows(1, 3, qm.to_vec()).unwrap())
                .unwrap()
                .0
                .scalar_value();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (g.data()[d] - fd).abs() / fd.abs().max(1e-9);
            assert!(rel < 1e-6, "dim {}: {} vs {}", d, g.data()[d], fd);
        }
    }

    #[test]
    fn tape_forward_agrees_with_plain_forward() {
        let spec = small_spec();
        let mut rng = stream(5, &[9]);
        let params = MlpParams::<f64>::init(spec, &mut rng);
        let input = DenseArray::from_rows(4, 3, (0..12).map(|i| 0.05 * i as f64).collect()).unwrap();
        let (plain, _) = params.forward(&input).unwrap();

        let mut tape = Tape::new();
        let nodes = params.nodes(&mut tape);
        let x = tape.constant_owned(input);
        let (y, _) = mlp_forward_tape(&mut tape, &spec, &nodes, x).unwrap();
        assert_eq!(tape.value(y).data(), plain.data());
    }

    #[test]
    fn tape_input_gradient_agrees_with_plain_input_gradient() {
        let spec = small_spec();
        let mut rng = stream(6, &[9]);
        let params = MlpParams::<f64>::init(spec, &mut rng);
        let input = DenseArray::from_rows(3, 3, (0..9).map(|i| 0.07 * i as f64 - 0.3).collect())
            .unwrap();
        let plain = params.input_gradient(&input).unwrap();

        let mut tape = Tape::new();
        let nodes = params.nodes(&mut tape);
        let x = tape.constant_owned(input);
        let g = mlp_input_gradient_tape(&mut tape, &spec, &nodes, x).unwrap();
        for (a, b) in tape.value(g).data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
