//! Kronecker kernels.
//!
//! For `x_i = b_i ⊗ a_i` and `w = vec(M)` with `M` p×q:
//!
//! * `x_iᵀw = a_iᵀ M b_i`, so scores for all samples are the diagonal of
//!   `Aᵀ M B` and never need a materialized `x_i`;
//! * `x_jᵀx_i = (a_jᵀa_i)(b_iᵀb_j)`, so once the factor Grams `AᵀA` and `BᵀB`
//!   are cached every data inner product is one multiply.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::dataset::KroneckerDataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, RealMatrix};

/// `x_iᵀw` for every sample, evaluated as the diagonal of `Aᵀ·vec⁻¹(w)·B`.
pub fn scores_for_weight(ds: &KroneckerDataset, w: &[f64]) -> Result<Vec<f64>> {
    Error::check_len("weight length", ds.dim(), w.len())?;
    let mut out = vec![0.0; ds.n()];
    scores_into(ds.factor_a(), ds.factor_b(), w, &mut out);
    Ok(out)
}

/// Blocked diagonal of `Aᵀ M B`, `M` given column-major in `w`.
///
/// Columns are processed in tiles of `max(p, q)`; each tile forms the small
/// product `A_tileᵀ M` and reads its diagonal against `B_tile`.
pub(crate) fn scores_into(a: &RealMatrix, b: &RealMatrix, w: &[f64], out: &mut [f64]) {
    let (p, q, n) = (a.rows(), b.rows(), a.cols());
    debug_assert_eq!(w.len(), p * q);
    debug_assert_eq!(out.len(), n);
    let tile = p.max(q);
    let mut am = vec![0.0; tile * q];
    for start in (0..n).step_by(tile) {
        let end = (start + tile).min(n);
        for (k, i) in (start..end).enumerate() {
            let ai = a.col(i);
            for c in 0..q {
                am[k * q + c] = dot(ai, &w[c * p..(c + 1) * p]);
            }
        }
        for (k, i) in (start..end).enumerate() {
            out[i] = dot(&am[k * q..(k + 1) * q], b.col(i));
        }
    }
}

/// Cached factor Grams `GA = AᵀA` and `GB = BᵀB`.
#[derive(Debug)]
pub struct GramCache {
    ga: RealMatrix,
    gb: RealMatrix,
    lookups: AtomicU64,
}

impl Clone for GramCache {
    fn clone(&self) -> Self {
        Self {
            ga: self.ga.clone(),
            gb: self.gb.clone(),
            lookups: AtomicU64::new(self.lookups()),
        }
    }
}

impl GramCache {
    /// O(n²·max(p, q)). Upper triangles are computed once and mirrored.
    pub fn new(ds: &KroneckerDataset) -> Self {
        Self {
            ga: factor_gram(ds.factor_a()),
            gb: factor_gram(ds.factor_b()),
            lookups: AtomicU64::new(0),
        }
    }

    pub fn n(&self) -> usize {
        self.ga.rows()
    }

    pub fn ga(&self) -> &RealMatrix {
        &self.ga
    }

    pub fn gb(&self) -> &RealMatrix {
        &self.gb
    }

    /// `x_jᵀx_i = GA[j,i]·GB[i,j]`.
    #[inline]
    pub fn pair(&self, j: usize, i: usize) -> f64 {
        self.ga.get(j, i) * self.gb.get(i, j)
    }

    /// Total pair lookups performed by `batch_inner*` and `delta_dot`.
    pub fn lookups(&self) -> u64 {
        self.lookups.load(Ordering::Relaxed)
    }

    pub fn reset_lookups(&self) {
        self.lookups.store(0, Ordering::Relaxed);
    }

    /// `[x_jᵀx_i for j in batch]`.
    pub fn batch_inner(&self, batch: &[usize], i: usize) -> Result<Vec<f64>> {
        self.check_indices(batch, i)?;
        let mut out = vec![0.0; batch.len()];
        self.batch_inner_into(batch, i, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`batch_inner`](Self::batch_inner) for the hot loop.
    #[inline]
    pub fn batch_inner_into(&self, batch: &[usize], i: usize, out: &mut [f64]) {
        debug_assert_eq!(batch.len(), out.len());
        self.lookups.fetch_add(batch.len() as u64, Ordering::Relaxed);
        for (o, &j) in out.iter_mut().zip(batch) {
            *o = self.pair(j, i);
        }
    }

    /// `δᵀx_i` for `δ = Σ_k coeffs[k]·x_{batch[k]}`.
    pub fn delta_dot(&self, batch: &[usize], coeffs: &[f64], i: usize) -> Result<f64> {
        Error::check_len("coefficient count", batch.len(), coeffs.len())?;
        self.check_indices(batch, i)?;
        self.lookups.fetch_add(batch.len() as u64, Ordering::Relaxed);
        Ok(batch
            .iter()
            .zip(coeffs)
            .map(|(&j, &c)| c * self.pair(j, i))
            .sum())
    }

    fn check_indices(&self, batch: &[usize], i: usize) -> Result<()> {
        let n = self.n();
        Error::check_index("sample", i, n)?;
        batch
            .iter()
            .try_for_each(|&j| Error::check_index("batch sample", j, n))
    }
}

fn factor_gram(f: &RealMatrix) -> RealMatrix {
    let n = f.cols();
    let mut g = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(f.col(i), f.col(j));
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    g
}
