//! Data-dependent kernel matrices and their smallest eigenvalue.
//!
//! All three kernels share the form
//! `H_{i,j} = x_iᵀx_j · (fraction of weights w with wᵀx_i > τ and wᵀx_j > τ)`
//! and differ only in where the weights come from: a fixed network (`dis`),
//! fresh Gaussian draws (`cts-mc`), or the trainer's current iterate
//! (`dynamic`). Joint fire counts are kept as integers so that identical
//! weight samples give bit-identical matrices.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::KroneckerDataset;
use crate::error::{Error, Result};
use crate::kernels::{scores_for_weight, scores_into, GramCache};
use crate::matrix::RealMatrix;
use crate::network::TwoLayerNet;
use crate::rng::{self, Stream};
use crate::trainer::TrainerState;

/// Largest matrix accepted by the eigensolver.
pub const MAX_EIGEN_DIM: usize = 2048;

/// Monte-Carlo samples are split over this many independently seeded shards.
/// Fixed so results do not depend on the machine.
pub const MC_SHARDS: u32 = 32;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    CtsMc,
    Dis,
    Dynamic,
}

impl GramKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GramKind::CtsMc => "cts-mc",
            GramKind::Dis => "dis",
            GramKind::Dynamic => "dynamic",
        }
    }
}

impl std::fmt::Display for GramKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub matrix: RealMatrix,
    pub lambda_min: f64,
    pub kind: GramKind,
    /// Monte-Carlo sample count; `None` for exact kernels.
    pub samples_used: Option<u64>,
    /// Per-entry standard error of the Monte-Carlo mean.
    pub entry_se: Option<RealMatrix>,
    /// Standard error of `lambda_min`, first-order in the entry noise.
    pub lambda_se: Option<f64>,
}

impl GramReport {
    pub const CSV_HEADER: &'static str = "n,kind,lambda_min,samples";

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn csv_row(&self) -> String {
        let samples = self.samples_used.map(|s| s.to_string()).unwrap_or_default();
        format!("{},{},{:e},{}", self.n(), self.kind, self.lambda_min, samples)
    }
}

/// Upper-triangular joint fire counts, `counts[i*n + j]` for `i ≤ j`.
struct PairCounts {
    n: usize,
    counts: Vec<u64>,
    fired: Vec<usize>,
}

impl PairCounts {
    fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
            fired: Vec::with_capacity(n),
        }
    }

    fn add(&mut self, above: impl Iterator<Item = bool>) {
        self.fired.clear();
        self.fired.extend(above.enumerate().filter(|&(_, f)| f).map(|(i, _)| i));
        for (a, &i) in self.fired.iter().enumerate() {
            for &j in &self.fired[a..] {
                self.counts[i * self.n + j] += 1;
            }
        }
    }

    fn merge(mut self, other: PairCounts) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }

    fn kernel(&self, grams: &GramCache, total: u64) -> RealMatrix {
        let n = self.n;
        let mut h = RealMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = grams.pair(i, j) * (self.counts[i * n + j] as f64 / total as f64);
                h.set(i, j, v);
                h.set(j, i, v);
            }
        }
        h
    }
}

/// `H^dis_{i,j} = (1/m) Σ_r x_iᵀx_j · 1(w_rᵀx_i > τ, w_rᵀx_j > τ)`.
pub fn h_dis(net: &TwoLayerNet, ds: &KroneckerDataset) -> Result<GramReport> {
    Error::check_len("input dimension", ds.dim(), net.d())?;
    let mut pc = PairCounts::new(ds.n());
    for r in 0..net.m() {
        let s = scores_for_weight(ds, net.weight(r))?;
        pc.add(s.iter().map(|&v| v > net.tau()));
    }
    let matrix = pc.kernel(&GramCache::new(ds), net.m() as u64);
    exact_report(matrix, GramKind::Dis)
}

/// Same kernel as [`h_dis`] with indicators read from the trainer's leaves.
pub fn h_dynamic(state: &TrainerState) -> Result<GramReport> {
    let (n, tau) = (state.n(), state.tau());
    let mut pc = PairCounts::new(n);
    for r in 0..state.m() {
        pc.add((0..n).map(|i| state.bank().trees()[i].leaf(r) > tau));
    }
    let matrix = pc.kernel(state.grams(), state.m() as u64);
    exact_report(matrix, GramKind::Dynamic)
}

fn exact_report(matrix: RealMatrix, kind: GramKind) -> Result<GramReport> {
    Ok(GramReport {
        lambda_min: lambda_min_sym(&matrix)?,
        matrix,
        kind,
        samples_used: None,
        entry_se: None,
        lambda_se: None,
    })
}

fn shard_len(samples: u64, shard: u32) -> u64 {
    let base = samples / MC_SHARDS as u64;
    base + u64::from((shard as u64) < samples % MC_SHARDS as u64)
}

/// Calls `visit` with the score vector of every Monte-Carlo weight of one
/// shard, in draw order.
fn for_each_mc_sample(
    ds: &KroneckerDataset,
    samples: u64,
    seed: u64,
    shard: u32,
    mut visit: impl FnMut(&[f64], &[f64]),
) {
    let mut rng = rng::substream(seed, Stream::MonteCarlo, shard);
    let mut w = vec![0.0; ds.dim()];
    let mut scores = vec![0.0; ds.n()];
    for _ in 0..shard_len(samples, shard) {
        for v in w.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        scores_into(ds.factor_a(), ds.factor_b(), &w, &mut scores);
        visit(&w, &scores);
    }
}

/// The `samples` Gaussian weights [`h_cts_mc`] draws, as a d×samples matrix.
pub fn monte_carlo_weights(ds: &KroneckerDataset, samples: u64, seed: u64) -> RealMatrix {
    let mut data = Vec::with_capacity(samples as usize * ds.dim());
    for shard in 0..MC_SHARDS {
        for_each_mc_sample(ds, samples, seed, shard, |w, _| data.extend_from_slice(w));
    }
    RealMatrix::from_col_major(ds.dim(), samples as usize, data)
        .expect("sample matrix dimensions are consistent")
}

/// Monte-Carlo estimate of
/// `H^cts_{i,j} = E_{w~N(0,I)}[x_iᵀx_j · 1(wᵀx_i > τ, wᵀx_j > τ)]`.
///
/// Shards run in parallel; counts are integers so the result does not depend
/// on scheduling. The eigenvalue standard error comes from a second pass over
/// the same draws, measuring the spread of `vᵀ H_s v` for the eigenvector `v`
/// of the estimated minimum.
pub fn h_cts_mc(ds: &KroneckerDataset, tau: f64, samples: u64, seed: u64) -> Result<GramReport> {
    if samples == 0 {
        return Err(Error::InvalidInput("Monte-Carlo sample count must be positive".into()));
    }
    let n = ds.n();
    let pc = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut pc = PairCounts::new(n);
            for_each_mc_sample(ds, samples, seed, shard, |_, s| pc.add(s.iter().map(|&v| v > tau)));
            pc
        })
        .reduce(|| PairCounts::new(n), PairCounts::merge);
    let grams = GramCache::new(ds);
    let matrix = pc.kernel(&grams, samples);

    let denom = if samples > 1 { (samples - 1) as f64 } else { 1.0 };
    let mut se = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let p = pc.counts[i * n + j] as f64 / samples as f64;
            let v = grams.pair(i, j).abs() * (p * (1.0 - p) * samples as f64 / denom / samples as f64).sqrt();
            se.set(i, j, v);
            se.set(j, i, v);
        }
    }

    let (values, vectors) = symmetric_eigen(&matrix)?;
    let v = vectors.col(0).to_vec();
    let moments: Vec<(f64, f64)> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let (mut s1, mut s2) = (0.0, 0.0);
            let mut fired = Vec::with_capacity(n);
            for_each_mc_sample(ds, samples, seed, shard, |_, s| {
                fired.clear();
                fired.extend((0..n).filter(|&i| s[i] > tau));
                let mut z = 0.0;
                for &i in &fired {
                    for &j in &fired {
                        z += v[i] * v[j] * grams.pair(i, j);
                    }
                }
                s1 += z;
                s2 += z * z;
            });
            (s1, s2)
        })
        .collect();
    let (s1, s2) = moments.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let mean = s1 / samples as f64;
    let var = ((s2 - samples as f64 * mean * mean) / denom).max(0.0);

    Ok(GramReport {
        lambda_min: values[0],
        matrix,
        kind: GramKind::CtsMc,
        samples_used: Some(samples),
        entry_se: Some(se),
        lambda_se: Some((var / samples as f64).sqrt()),
    })
}

fn check_symmetric(m: &RealMatrix) -> Result<()> {
    let n = m.rows();
    Error::check_len("square matrix columns", n, m.cols())?;
    if n > MAX_EIGEN_DIM {
        return Err(Error::InvalidInput(format!(
            "eigensolver supports n <= {MAX_EIGEN_DIM} (got {n})"
        )));
    }
    let scale = m.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        for j in i + 1..n {
            let gap = (m.get(i, j) - m.get(j, i)).abs();
            if gap > 1e-9 * scale {
                return Err(Error::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    Ok(())
}

/// Eigenvalues (ascending) and matching orthonormal eigenvectors (columns)
/// of a symmetric matrix, by cyclic Jacobi rotations run until the
/// off-diagonal Frobenius norm is at most `1e-12·‖M‖_F`.
pub fn symmetric_eigen(m: &RealMatrix) -> Result<(Vec<f64>, RealMatrix)> {
    check_symmetric(m)?;
    let n = m.rows();
    // Row-major working copy, symmetrized.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m.get(i, j) + m.get(j, i));
        }
    }
    let mut v = RealMatrix::identity(n);
    let target = 1e-12 * m.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let vm = v.as_mut_slice();
                for k in 0..n {
                    let (vkp, vkq) = (vm[p * n + k], vm[q * n + k]);
                    vm[p * n + k] = c * vkp - s * vkq;
                    vm[q * n + k] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let cols: Vec<&[f64]> = order.iter().map(|&i| v.col(i)).collect();
    Ok((values, RealMatrix::from_columns(&cols)?))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_sym(m: &RealMatrix) -> Result<f64> {
    Ok(symmetric_eigen(m)?.0[0])
}
