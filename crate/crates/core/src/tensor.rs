//! Dense d-way tensors.
//!
//! Data is stored flat in first-index-fastest (column-major) order: the entry
//! at multi-index `(i_1, .., i_d)` lives at `i_1 + I_1 * (i_2 + I_2 * (i_3 + ..))`.
//! Every unfolding, file format and TT core in this crate derives from this
//! single ordering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::arg(format!(
                "data length {} does not match dims {:?} (expected {})",
                data.len(),
                dims,
                len
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        let len = dims.iter().product();
        Ok(Self {
            dims,
            data: vec![0.0; len],
        })
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for (k, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < dims[k] {
                    break;
                }
                *i = 0;
            }
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Linear position of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (i, d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    /// Same data under new dimensions with an equal total size.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data.clone())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Dense inner product `<self, other>`.
    pub fn dot(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::arg(format!(
                "inner product of tensors with dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::arg("tensor must have at least one mode"));
    }
    if dims.contains(&0) {
        return Err(Error::arg(format!("zero dimension in {dims:?}")));
    }
    Ok(())
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Matricize `t` with modes `1..=k` as rows and `k+1..=d` as columns.
///
/// Under first-index-fastest storage this is a reinterpretation of the flat
/// array as a column-major `(I_1..I_k) x (I_{k+1}..I_d)` matrix.
pub fn unfold(t: &DenseTensor, k: usize) -> Result<DMatrix<f64>> {
    let d = t.order();
    if k == 0 || k >= d {
        return Err(Error::arg(format!(
            "unfolding split {k} out of range 1..={} for order-{d} tensor",
            d.saturating_sub(1)
        )));
    }
    let rows: usize = t.dims[..k].iter().product();
    let cols: usize = t.dims[k..].iter().product();
    Ok(DMatrix::from_column_slice(rows, cols, &t.data))
}

/// Inverse of [`unfold`]: reinterpret a matrix as a tensor with `dims`.
pub fn fold(m: &DMatrix<f64>, dims: Vec<usize>) -> Result<DenseTensor> {
    DenseTensor::new(dims, m.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_shapes() {
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn matrix_unfold_is_identity() {
        // [[1,2],[3,4]] stored column-major.
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let m = unfold(&t, 1).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn unfold_refold_round_trip() {
        let t = DenseTensor::from_fn(vec![2, 3, 4], |i| (i[0] + 10 * i[1] + 100 * i[2]) as f64)
            .unwrap();
        let m = unfold(&t, 2).unwrap();
        assert_eq!(m.shape(), (6, 4));
        let back = fold(&m, vec![2, 3, 4]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn unfold_matches_index_arithmetic() {
        let t = DenseTensor::from_fn(vec![3, 3, 3], |i| {
            ((i[0] * 7 + i[1] * 13 + i[2] * 29) % 17) as f64 - 8.0
        })
        .unwrap();
        let m1 = unfold(&t, 1).unwrap();
        let refold = fold(&m1, vec![3, 3, 3]).unwrap();
        let m2 = unfold(&refold, 2).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let v = t.get(&[a, b, c]);
                    assert_eq!(m1[(a, b + 3 * c)], v);
                    assert_eq!(m2[(a + 3 * b, c)], v);
                }
            }
        }
    }

    #[test]
    fn unfold_rejects_bad_split() {
        let t = DenseTensor::zeros(vec![2, 2, 2]).unwrap();
        assert!(unfold(&t, 0).is_err());
        assert!(unfold(&t, 3).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(DenseTensor::zeros(vec![3, 2]).unwrap().frobenius_norm(), 0.0);
        let ones = DenseTensor::new(vec![2, 3, 4], vec![1.0; 24]).unwrap();
        assert!((ones.frobenius_norm() - 24f64.sqrt()).abs() < 1e-15);
    }
}
