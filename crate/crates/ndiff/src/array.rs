//! Dense row-major arrays of real scalars.

use crate::error::{NdiffError, Result};
use crate::real::Real;

/// A dense, row-major array with an explicit shape.
///
/// Rank is arbitrary but the tape ops below only ever produce rank-1 and
/// rank-2 arrays; scalars are represented as shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> DenseArray<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NdiffError::Shape {
                op: "DenseArray::new",
                detail: format!("shape {:?} implies {} values, got {}", shape, n, data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![T::ZERO; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds an `[n, m]` matrix from `n * m` row-major values.
    pub fn from_rows(n: usize, m: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![n, m], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Number of rows when viewed as a matrix ( `[n, m]` → n, `[m]` → 1 ).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    /// Number of columns when viewed as a matrix ( `[n, m]` → m, `[m]` → m ).
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> T {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        let m = self.cols();
        &self.data[row * m..(row + 1) * m]
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Casts every element through `f64`.
    pub fn cast<U: Real>(&self) -> DenseArray<U> {
        DenseArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Sum of all elements, accumulated in f64.
    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64()).sum()
    }

    /// Squared L2 norm, accumulated in f64.
    pub fn norm_sq_f64(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64() * v.to_f64()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_data_len() {
        assert!(DenseArray::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(DenseArray::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn rows_cols_views() {
        let a = DenseArray::<f32>::from_rows(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(a.rows(), 2);
        assert_eq!(a.cols(), 3);
        assert_eq!(a.at(1, 2), 6.0);
        assert_eq!(a.row(0), &[1., 2., 3.]);
        let v = DenseArray::<f32>::from_vec(vec![1., 2.]);
        assert_eq!(v.rows(), 1);
        assert_eq!(v.cols(), 2);
    }

    #[test]
    fn f64_accumulation_is_exact_for_integers() {
        let a = DenseArray::<f32>::filled(vec![1000], 1.0);
        assert_eq!(a.sum_f64(), 1000.0);
    }
}
