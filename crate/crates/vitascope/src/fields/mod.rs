//! The three hypernetwork-conditioned neural fields.

pub mod contact;
pub mod model;
pub mod object;
pub mod tactile;

use ndiff::{DenseArray, Real};

/// Concatenates two equal-row matrices column-wise (plain arrays).
pub(crate) fn hcat<T: Real>(a: &DenseArray<T>, b: &DenseArray<T>) -> DenseArray<T> {
    let (n, ma, mb) = (a.rows(), a.cols(), b.cols());
    assert_eq!(n, b.rows());
    let mut data = Vec::with_capacity(n * (ma + mb));
    for i in 0..n {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    DenseArray::new(vec![n, ma + mb], data).expect("hcat shape")
}
