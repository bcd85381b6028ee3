//! Adam optimizer over named parameter lists.

use std::sync::Arc;

use crate::array::DenseArray;
use crate::error::{NdiffError, Result};
use crate::real::Real;

/// Adam state for a fixed, ordered set of parameters.
///
/// Moment buffers are allocated lazily on the first step and must keep the
/// same shapes afterwards. Gradients may be `None` (treated as zero: the
/// moments decay, and a parameter with zero moments stays put).
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<DenseArray<T>>,
    v: Vec<DenseArray<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new() -> Self {
        Self::with_betas(0.9, 0.999, 1e-8)
    }

    pub fn with_betas(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update.
    ///
    /// `params` and `grads` are parallel slices; a `None` gradient is a
    /// zero gradient. Errors on non-finite gradients, naming the parameter.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Arc<DenseArray<T>>)],
        grads: &[Option<&DenseArray<T>>],
        lr: f64,
    ) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "param/grad count mismatch");
        if self.m.is_empty() {
            for (_, p) in params.iter() {
                self.m.push(DenseArray::zeros(p.shape().to_vec()));
                self.v.push(DenseArray::zeros(p.shape().to_vec()));
            }
        }
        assert_eq!(self.m.len(), params.len(), "optimizer bound to a different parameter set");

        // Validate before mutating anything.
        for ((name, _), g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(NdiffError::NonFiniteGradient {
                        param: name.clone(),
                    });
                }
            }
        }

        self.step += 1;
        let t = self.step;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let corr1 = T::from_f64(1.0 / (1.0 - self.beta1.powi(t as i32)));
        let corr2 = T::from_f64(1.0 / (1.0 - self.beta2.powi(t as i32)));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(self.eps);

        for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pdata = Arc::make_mut(p).data_mut();
            match g {
                Some(g) => {
                    for (((pj, mj), vj), &gj) in
                        pdata.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data())
                    {
                        *mj = b1 * *mj + one_m_b1 * gj;
                        *vj = b2 * *vj + one_m_b2 * gj * gj;
                        let mhat = *mj * corr1;
                        let vhat = *vj * corr2;
                        *pj -= lr_t * mhat / (vhat.sqrt() + eps);
                    }
                }
                None => {
                    for ((pj, mj), vj) in pdata.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mj = b1 * *mj;
                        *vj = b2 * *vj;
                        let mhat = *mj * corr1;
                        let vhat = *vj * corr2;
                        *pj -= lr_t * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> Default for Adam<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(vals: Vec<f64>) -> Arc<DenseArray<f64>> {
        Arc::new(DenseArray::from_vec(vals))
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_fixed_point() {
        let mut p = one_param(vec![1.0, -2.0, 3.0]);
        let before = p.data().to_vec();
        let mut adam = Adam::new();
        let mut params = vec![("x".to_string(), &mut p)];
        adam.step(&mut params, &[None], 0.1).unwrap();
        adam.step(&mut params, &[None], 0.1).unwrap();
        assert_eq!(p.data(), &before[..]);
    }

    #[test]
    fn first_step_magnitude_matches_closed_form() {
        // First step: m̂ = g, v̂ = g², so Δp = lr·g/(|g|+ε) ≈ lr·sign(g).
        let mut p = one_param(vec![0.5, -0.5, 2.0]);
        let g = DenseArray::from_vec(vec![0.3, -0.7, 0.001]);
        let lr = 1e-2;
        let mut adam = Adam::new();
        let mut params = vec![("x".to_string(), &mut p)];
        adam.step(&mut params, &[Some(&g)], lr).unwrap();
        let expected = [
            0.5 - lr * 0.3 / (0.3 + 1e-8),
            -0.5 + lr * 0.7 / (0.7 + 1e-8),
            2.0 - lr * 0.001 / (0.001 + 1e-8),
        ];
        for (got, want) in p.data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
        }
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // Minimize ‖x − c‖² from x = 0 with lr 0.1; 100 steps.
        let c = [0.7, -0.3, 0.45];
        let mut p = one_param(vec![0.0; 3]);
        let mut adam = Adam::new();
        for _ in 0..100 {
            let g = DenseArray::from_vec(
                p.data().iter().zip(&c).map(|(x, cc)| 2.0 * (x - cc)).collect(),
            );
            let mut params = vec![("x".to_string(), &mut p)];
            adam.step(&mut params, &[Some(&g)], 0.1).unwrap();
        }
        let dist: f64 = p
            .data()
            .iter()
            .zip(&c)
            .map(|(x, cc)| (x - cc) * (x - cc))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 1e-2, "distance {}", dist);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = one_param(vec![1.0]);
        let g = DenseArray::from_vec(vec![f64::NAN]);
        let mut adam = Adam::new();
        let mut params = vec![("codes/psi_3".to_string(), &mut p)];
        let err = adam.step(&mut params, &[Some(&g)], 0.1).unwrap_err();
        assert!(err.to_string().contains("codes/psi_3"));
    }
}
