//! Dense column-major matrices and the vectorization operator.
//!
//! `vectorize` stacks columns top to bottom, so for `a` in R^p and `b` in R^q
//! the Kronecker product `b ⊗ a` equals `vectorize(a bᵀ)`. The whole crate
//! relies on that layout.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be nonzero");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be nonzero (got {rows}x{cols})"
            )));
        }
        Error::check_len("matrix element count", rows * cols, data.len())?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite matrix entry at ({}, {})",
                pos % rows,
                pos / rows
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            Error::check_len("column length", rows, c.as_ref().len())?;
            data.extend_from_slice(c.as_ref());
        }
        Self::from_col_major(rows, cols, data)
    }

    /// Row-major convenience constructor, mostly for tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = vec![0.0; nrows * ncols];
        for (i, r) in rows.iter().enumerate() {
            Error::check_len("row length", ncols, r.as_ref().len())?;
            for (j, &v) in r.as_ref().iter().enumerate() {
                data[j * nrows + i] = v;
            }
        }
        Self::from_col_major(nrows, ncols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut t = RealMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &RealMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn vectorize(m: &RealMatrix) -> Vec<f64> {
    m.data.clone()
}

pub fn unvectorize(v: &[f64], rows: usize, cols: usize) -> Result<RealMatrix> {
    RealMatrix::from_col_major(rows, cols, v.to_vec())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `b ⊗ a`, laid out as `vectorize(a bᵀ)`.
pub fn kron(b: &[f64], a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &bj in b {
        out.extend(a.iter().map(|&ai| ai * bj));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorize_stacks_columns() {
        let m = RealMatrix::from_columns(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(vectorize(&m), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vectorize(&RealMatrix::identity(2)), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn unvectorize_inverts() {
        let m = unvectorize(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(m.col(0), &[1.0, 2.0]);
        assert_eq!(m.col(1), &[3.0, 4.0]);
        let s = unvectorize(&[5.0], 1, 1).unwrap();
        assert_eq!(s.get(0, 0), 5.0);
    }

    #[test]
    fn unvectorize_rejects_bad_shape() {
        let err = unvectorize(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 4).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 8, got: 6, .. }));
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(RealMatrix::from_col_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(RealMatrix::from_col_major(0, 2, vec![]).is_err());
    }

    #[test]
    fn kron_matches_outer_product_vectorization() {
        assert_eq!(kron(&[3.0, 4.0], &[1.0, 2.0]), vec![3.0, 6.0, 4.0, 8.0]);
        assert_eq!(kron(&[1.0, 0.0], &[1.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn from_rows_is_row_major() {
        let m = RealMatrix::from_rows(&[[1.0, 3.0], [2.0, 4.0]]).unwrap();
        assert_eq!(vectorize(&m), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.transpose().col(0), &[1.0, 3.0]);
    }
}
