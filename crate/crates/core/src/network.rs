//! Two-layer shifted-ReLU network with dense weights.
//!
//! `f(W, a, x) = (1/√m) Σ_r a_r · φ_τ(w_rᵀx)` with `φ_τ(z) = max(z − τ, 0)`.
//! Only the first layer is trained. Everything here is the straightforward
//! O(m·d)-per-sample implementation and serves as the reference the fast
//! trainer is checked against.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::KroneckerDataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, RealMatrix};
use crate::rng::{self, Stream};
use crate::sampler::BatchSampler;
use crate::trajectory::{squared_residual, PhaseTimings, StepRecord, TrainConfig, Trajectory};

/// Ratio slack allowed when checking the gradient-norm bound.
pub const GRADIENT_BOUND_SLACK: f64 = 1e-12;

#[inline]
pub fn phi_tau(x: f64, tau: f64) -> f64 {
    (x - tau).max(0.0)
}

/// `τ = √(ln m / 2)`, which makes `m·exp(−τ²/2) = m^{3/4}`.
pub fn default_tau(m: usize) -> f64 {
    ((m as f64).ln() / 2.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    /// d×m; column `r` is `w_r`.
    weights: RealMatrix,
    signs: Vec<f64>,
    tau: f64,
}

/// `w_r ~ N(0, I_d)` from the weight stream, `a_r` uniform on {−1, +1} from
/// the sign stream.
pub fn init_network(m: usize, d: usize, tau: f64, seed: u64) -> Result<TwoLayerNet> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidInput("network width and input dimension must be positive".into()));
    }
    let mut wrng = rng::stream(seed, Stream::Weights);
    let mut weights = RealMatrix::zeros(d, m);
    for r in 0..m {
        for v in weights.col_mut(r) {
            *v = wrng.sample(StandardNormal);
        }
    }
    let signs = init_signs(m, seed);
    TwoLayerNet::new(weights, signs, tau)
}

pub(crate) fn init_signs(m: usize, seed: u64) -> Vec<f64> {
    let mut srng = rng::stream(seed, Stream::Signs);
    (0..m)
        .map(|_| if srng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect()
}

impl TwoLayerNet {
    pub fn new(weights: RealMatrix, signs: Vec<f64>, tau: f64) -> Result<Self> {
        Error::check_len("sign count", weights.cols(), signs.len())?;
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidInput("second-layer signs must be +1 or -1".into()));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidInput(format!("threshold must be finite and >= 0 (got {tau})")));
        }
        Ok(Self { weights, signs, tau })
    }

    pub fn m(&self) -> usize {
        self.weights.cols()
    }

    pub fn d(&self) -> usize {
        self.weights.rows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn weights(&self) -> &RealMatrix {
        &self.weights
    }

    pub fn weight(&self, r: usize) -> &[f64] {
        self.weights.col(r)
    }

    pub fn weight_mut(&mut self, r: usize) -> &mut [f64] {
        self.weights.col_mut(r)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Error::check_len("input dimension", self.d(), x.len())?;
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = (0..self.m())
            .map(|r| self.signs[r] * phi_tau(dot(self.weights.col(r), x), self.tau))
            .sum();
        sum / (self.m() as f64).sqrt()
    }

    fn predict_all(&self, x: &RealMatrix) -> Vec<f64> {
        (0..x.cols()).map(|i| self.predict_unchecked(x.col(i))).collect()
    }
}

/// Stochastic gradient for every neuron, returned as a d×m matrix whose
/// column `r` is
/// `G_{t,r} = (n/|S|)(1/√m) Σ_{i∈S} (u_i − y_i)·a_r·1(w_rᵀx_i > τ)·x_i`.
pub fn sgd_gradient_naive(
    net: &TwoLayerNet,
    ds: &KroneckerDataset,
    batch: &[usize],
    u_batch: &[f64],
) -> Result<RealMatrix> {
    Error::check_len("batch predictions", batch.len(), u_batch.len())?;
    Error::check_len("input dimension", net.d(), ds.dim())?;
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let cols = batch
        .iter()
        .map(|&i| ds.materialize_column(i))
        .collect::<Result<Vec<_>>>()?;
    let xb = RealMatrix::from_columns(&cols)?;
    let scores = batch_scores(net, &xb);
    let y = ds.labels();
    let residuals: Vec<f64> = batch.iter().zip(u_batch).map(|(&i, &u)| u - y[i]).collect();
    Ok(gradient_from_scores(net, &xb, &scores, &residuals, ds.n()))
}

/// m×|S| matrix of `w_rᵀx_k`.
fn batch_scores(net: &TwoLayerNet, xb: &RealMatrix) -> RealMatrix {
    let mut s = RealMatrix::zeros(net.m(), xb.cols());
    for k in 0..xb.cols() {
        for r in 0..net.m() {
            s.set(r, k, dot(net.weight(r), xb.col(k)));
        }
    }
    s
}

fn gradient_from_scores(
    net: &TwoLayerNet,
    xb: &RealMatrix,
    scores: &RealMatrix,
    residuals: &[f64],
    n: usize,
) -> RealMatrix {
    let (m, d) = (net.m(), net.d());
    let scale = n as f64 / residuals.len() as f64 / (m as f64).sqrt();
    let mut g = RealMatrix::zeros(d, m);
    for r in 0..m {
        let gr = g.col_mut(r);
        for (k, &res) in residuals.iter().enumerate() {
            if scores.get(r, k) > net.tau() {
                let c = scale * res * net.signs()[r];
                for (gv, &xv) in gr.iter_mut().zip(xb.col(k)) {
                    *gv += c * xv;
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientBound {
    /// `max_r ‖G_{t,r}‖₂ / (n/√(m·S_batch) · ‖u − y‖₂)`; 0 when every
    /// gradient vanishes.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Checks `‖G_{t,r}‖₂ ≤ n/√(m·S_batch) · ‖u(t) − y‖₂` for every column of
/// `grads`, where `u` is the full prediction vector.
pub fn gradient_norm_check(
    grads: &RealMatrix,
    u: &[f64],
    y: &[f64],
    m: usize,
    s_batch: usize,
    n: usize,
) -> GradientBound {
    let bound = n as f64 / ((m * s_batch) as f64).sqrt() * squared_residual(u, y).sqrt();
    let max_ratio = (0..grads.cols())
        .map(|r| {
            let norm = norm2(grads.col(r));
            if norm == 0.0 {
                0.0
            } else {
                norm / bound
            }
        })
        .fold(0.0, f64::max);
    GradientBound {
        max_ratio,
        holds: max_ratio <= 1.0 + GRADIENT_BOUND_SLACK,
    }
}

/// Dense mini-batch SGD, `w_r ← w_r − η·G_{t,r}`.
///
/// Consumes batches from `sampler` exactly like the fast trainer does.
pub fn train_naive(
    net: &mut TwoLayerNet,
    ds: &KroneckerDataset,
    cfg: &TrainConfig,
    sampler: &mut BatchSampler,
) -> Result<Trajectory> {
    let n = ds.n();
    cfg.validate(n)?;
    Error::check_len("input dimension", net.d(), ds.dim())?;
    let x = ds.materialize();
    let y = ds.labels();
    let m = net.m();
    let inv_sqrt_m = 1.0 / (m as f64).sqrt();

    let initial_u = net.predict_all(&x);
    let mut traj = Trajectory {
        evals: vec![(0, squared_residual(&initial_u, y))],
        initial_u,
        ..Default::default()
    };

    for t in 1..=cfg.iters {
        let batch = sampler.sample(n, cfg.s_batch);
        let clock = Instant::now();
        let cols: Vec<&[f64]> = batch.iter().map(|&i| x.col(i)).collect();
        let xb = RealMatrix::from_columns(&cols)?;
        let scores = batch_scores(net, &xb);
        let mut u_batch = Vec::with_capacity(batch.len());
        let mut fire_counts = Vec::with_capacity(batch.len());
        for k in 0..batch.len() {
            let mut sum = 0.0;
            let mut fired = 0;
            for r in 0..m {
                let s = scores.get(r, k);
                sum += net.signs[r] * phi_tau(s, net.tau);
                fired += usize::from(s > net.tau);
            }
            u_batch.push(sum * inv_sqrt_m);
            fire_counts.push(fired);
        }
        let changed = (0..m)
            .filter(|&r| (0..batch.len()).any(|k| scores.get(r, k) > net.tau))
            .count();
        let forward_ns = elapsed_ns(clock);

        let clock = Instant::now();
        let residuals: Vec<f64> = batch.iter().zip(&u_batch).map(|(&i, &u)| u - y[i]).collect();
        let grads = gradient_from_scores(net, &xb, &scores, &residuals, n);
        let delta_ns = elapsed_ns(clock);

        let grad_ratio = cfg.check_gradient_bound.then(|| {
            let u_full = net.predict_all(&x);
            gradient_norm_check(&grads, &u_full, y, m, cfg.s_batch, n).max_ratio
        });

        let clock = Instant::now();
        for r in 0..m {
            for (w, g) in net.weights.col_mut(r).iter_mut().zip(grads.col(r)) {
                *w -= cfg.eta * g;
            }
        }
        let update_ns = elapsed_ns(clock);

        let batch_loss = residuals.iter().map(|r| r * r).sum();
        traj.steps.push(StepRecord {
            t,
            batch,
            u_batch,
            batch_loss,
            fire_counts,
            changed,
            timings: PhaseTimings {
                query_ns: 0,
                forward_ns,
                delta_ns,
                update_ns,
            },
            grad_ratio,
        });
        if cfg.evaluates_at(t) {
            traj.evals.push((t, squared_residual(&net.predict_all(&x), y)));
        }
    }
    traj.final_u = net.predict_all(&x);
    Ok(traj)
}

pub(crate) fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}
