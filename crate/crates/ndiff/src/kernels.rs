//! Hot numeric kernels shared by the tape's forward and backward passes.
//!
//! All kernels are deterministic regardless of thread count: parallelism
//! only ever splits disjoint output ranges, and the per-element reduction
//! order is fixed.

use crate::real::Real;
use rayon::prelude::*;

/// Work threshold below which kernels stay single-threaded.
const PAR_FLOP_THRESHOLD: usize = 1 << 20;

/// c[n×m] = a[n×k] · b[k×m], row-major.
pub fn matmul<T: Real>(a: &[T], b: &[T], c: &mut [T], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(c.len(), n * m);
    let body = |i: usize, crow: &mut [T]| {
        let arow = &a[i * k..(i + 1) * k];
        crow.fill(T::ZERO);
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * m..kk * m + m];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj += aik * bj;
            }
        }
    };
    if n * k * m >= PAR_FLOP_THRESHOLD && n > 1 {
        c.par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, crow)| body(i, crow));
    } else if n == 1 && k * m >= PAR_FLOP_THRESHOLD {
        // Row-vector times wide matrix: split the output columns.
        let chunk = 8192;
        c.par_chunks_mut(chunk).enumerate().for_each(|(ci, cpart)| {
            let j0 = ci * chunk;
            cpart.fill(T::ZERO);
            for (kk, &aik) in a.iter().enumerate() {
                let brow = &b[kk * m + j0..kk * m + j0 + cpart.len()];
                for (cj, &bj) in cpart.iter_mut().zip(brow) {
                    *cj += aik * bj;
                }
            }
        });
    } else {
        for i in 0..n {
            body(i, &mut c[i * m..(i + 1) * m]);
        }
    }
}

/// c[n×m] += a[n×k] · b[k×m]. Used by gradient accumulation.
pub fn matmul_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(c.len(), n * m);
    let body = |i: usize, crow: &mut [T]| {
        let arow = &a[i * k..(i + 1) * k];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * m..kk * m + m];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj += aik * bj;
            }
        }
    };
    if n * k * m >= PAR_FLOP_THRESHOLD && n > 1 {
        c.par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, crow)| body(i, crow));
    } else {
        for i in 0..n {
            body(i, &mut c[i * m..(i + 1) * m]);
        }
    }
}

/// c[n×m] += a[n×k] · b[m×k]ᵀ  (i.e. a · bᵀ without materializing bᵀ).
pub fn matmul_bt_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), m * k);
    debug_assert_eq!(c.len(), n * m);
    let body = |i: usize, crow: &mut [T]| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, cj) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..j * k + k];
            let mut acc = T::ZERO;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cj += acc;
        }
    };
    if n * k * m >= PAR_FLOP_THRESHOLD && n > 1 {
        c.par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, crow)| body(i, crow));
    } else if n == 1 && k * m >= PAR_FLOP_THRESHOLD {
        c.par_chunks_mut(1024).enumerate().for_each(|(ci, cpart)| {
            let j0 = ci * 1024;
            for (dj, cj) in cpart.iter_mut().enumerate() {
                let j = j0 + dj;
                let brow = &b[j * k..j * k + k];
                let mut acc = T::ZERO;
                for (&av, &bv) in a.iter().zip(brow) {
                    acc += av * bv;
                }
                *cj += acc;
            }
        });
    } else {
        for i in 0..n {
            body(i, &mut c[i * m..(i + 1) * m]);
        }
    }
}

/// c[k×m] += a[n×k]ᵀ · b[n×m]  (i.e. aᵀ · b without materializing aᵀ).
pub fn matmul_ta_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), n * m);
    debug_assert_eq!(c.len(), k * m);
    if n * k * m >= PAR_FLOP_THRESHOLD && k > 1 {
        // Partition output rows (columns of a); each thread streams a and b.
        c.par_chunks_mut(m).enumerate().for_each(|(kk, crow)| {
            for i in 0..n {
                let aik = a[i * k + kk];
                let brow = &b[i * m..i * m + m];
                for (cj, &bj) in crow.iter_mut().zip(brow) {
                    *cj += aik * bj;
                }
            }
        });
    } else {
        for i in 0..n {
            let arow = &a[i * k..(i + 1) * k];
            let brow = &b[i * m..(i + 1) * m];
            for (kk, &aik) in arow.iter().enumerate() {
                let crow = &mut c[kk * m..kk * m + m];
                for (cj, &bj) in crow.iter_mut().zip(brow) {
                    *cj += aik * bj;
                }
            }
        }
    }
}

/// Elementwise map, parallel for large arrays.
pub fn map<T: Real>(src: &[T], dst: &mut [T], f: impl Fn(T) -> T + Sync) {
    debug_assert_eq!(src.len(), dst.len());
    if src.len() >= 1 << 16 {
        dst.par_chunks_mut(1 << 14)
            .zip(src.par_chunks(1 << 14))
            .for_each(|(d, s)| {
                for (dv, &sv) in d.iter_mut().zip(s) {
                    *dv = f(sv);
                }
            });
    } else {
        for (dv, &sv) in dst.iter_mut().zip(src) {
            *dv = f(sv);
        }
    }
}

/// dst += f(a, b) elementwise over three equal-length slices.
pub fn zip_acc<T: Real>(a: &[T], b: &[T], dst: &mut [T], f: impl Fn(T, T) -> T + Sync) {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), dst.len());
    if a.len() >= 1 << 16 {
        dst.par_chunks_mut(1 << 14)
            .zip(a.par_chunks(1 << 14).zip(b.par_chunks(1 << 14)))
            .for_each(|(d, (sa, sb))| {
                for ((dv, &av), &bv) in d.iter_mut().zip(sa).zip(sb) {
                    *dv += f(av, bv);
                }
            });
    } else {
        for ((dv, &av), &bv) in dst.iter_mut().zip(a).zip(b) {
            *dv += f(av, bv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
        let mut c = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                for kk in 0..k {
                    c[i * m + j] += a[i * k + kk] * b[kk * m + j];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let (n, k, m) = (7, 5, 9);
        let a: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * m).map(|i| (i as f64 * 0.21).cos()).collect();
        let mut c = vec![0.0; n * m];
        matmul(&a, &b, &mut c, n, k, m);
        let want = naive(&a, &b, n, k, m);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_variants_match_explicit_transpose() {
        let (n, k, m) = (6, 4, 5);
        let a: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.711).sin()).collect();
        let b: Vec<f64> = (0..k * m).map(|i| (i as f64 * 0.13).cos()).collect();

        // a · bᵀ with b stored as [m×k]
        let mut bt = vec![0.0; m * k];
        for kk in 0..k {
            for j in 0..m {
                bt[j * k + kk] = b[kk * m + j];
            }
        }
        let mut c1 = vec![0.0; n * m];
        matmul_bt_acc(&a, &bt, &mut c1, n, k, m);
        let want = naive(&a, &b, n, k, m);
        for (x, y) in c1.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // aᵀ · c with a stored as [n×k]
        let c2: Vec<f64> = (0..n * m).map(|i| (i as f64 * 0.09).sin()).collect();
        let mut got = vec![0.0; k * m];
        matmul_ta_acc(&a, &c2, &mut got, n, k, m);
        let mut at = vec![0.0; k * n];
        for i in 0..n {
            for kk in 0..k {
                at[kk * n + i] = a[i * k + kk];
            }
        }
        let want2 = naive(&at, &c2, k, n, m);
        for (x, y) in got.iter().zip(&want2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_path_is_bitwise_equal_to_sequential() {
        // Above the threshold the row partition must not change results.
        let (n, k, m) = (64, 128, 256);
        let a: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.017).sin()).collect();
        let b: Vec<f64> = (0..k * m).map(|i| (i as f64 * 0.029).cos()).collect();
        let mut c_par = vec![0.0; n * m];
        matmul(&a, &b, &mut c_par, n, k, m);
        let mut c_seq = vec![0.0; n * m];
        for i in 0..n {
            let arow = &a[i * k..(i + 1) * k];
            let crow = &mut c_seq[i * m..(i + 1) * m];
            for (kk, aik) in arow.iter().enumerate() {
                let brow = &b[kk * m..kk * m + m];
                for (cj, bj) in crow.iter_mut().zip(brow) {
                    *cj += *aik * *bj;
                }
            }
        }
        assert_eq!(c_par, c_seq);
    }
}
