use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub s_batch: usize,
    pub iters: usize,
    /// Full-loss evaluation period; `0` evaluates only at the start and end.
    pub eval_every: usize,
    /// Naive trainer only: evaluate the per-neuron gradient bound each step.
    /// Costs a full forward pass per step.
    pub check_gradient_bound: bool,
}

impl TrainConfig {
    pub fn new(eta: f64, s_batch: usize, iters: usize) -> Self {
        Self {
            eta,
            s_batch,
            iters,
            eval_every: 1,
            check_gradient_bound: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "step size must be finite and >= 0 (got {})",
                self.eta
            )));
        }
        if self.s_batch == 0 || self.s_batch > n {
            return Err(Error::InvalidInput(format!(
                "batch size must be in 1..={n} (got {})",
                self.s_batch
            )));
        }
        Ok(())
    }

    pub(crate) fn evaluates_at(&self, t: usize) -> bool {
        t == self.iters || (self.eval_every > 0 && t.is_multiple_of(self.eval_every))
    }
}

/// Nanoseconds spent in each phase of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimings {
    pub query_ns: u64,
    pub forward_ns: u64,
    pub delta_ns: u64,
    pub update_ns: u64,
}

impl PhaseTimings {
    pub fn total_ns(&self) -> u64 {
        self.query_ns + self.forward_ns + self.delta_ns + self.update_ns
    }
}

/// Compact per-step summary kept for every iteration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based iteration number.
    pub t: usize,
    pub batch: Vec<usize>,
    /// Predictions `u_i(t)` for the batch, taken before the update.
    pub u_batch: Vec<f64>,
    /// `Σ_{i∈S_t} (u_i − y_i)²`.
    pub batch_loss: f64,
    /// `|L_i|` for each batch point.
    pub fire_counts: Vec<usize>,
    /// `|ℓ(t)|`, neurons firing on at least one batch point.
    pub changed: usize,
    pub timings: PhaseTimings,
    /// Worst ratio of `‖G_{t,r}‖₂` to its bound, when requested.
    pub grad_ratio: Option<f64>,
}

impl StepRecord {
    pub fn q_max(&self) -> usize {
        self.fire_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn q_mean(&self) -> f64 {
        if self.fire_counts.is_empty() {
            0.0
        } else {
            self.fire_counts.iter().sum::<usize>() as f64 / self.fire_counts.len() as f64
        }
    }

    pub fn fire_total(&self) -> usize {
        self.fire_counts.iter().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// Full prediction vector before the first step.
    pub initial_u: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// `(t, ‖u(t) − y‖₂²)` at every evaluation point, starting with `t = 0`.
    pub evals: Vec<(usize, f64)>,
    /// Full prediction vector after the last step.
    pub final_u: Vec<f64>,
}

impl Trajectory {
    pub fn initial_loss(&self) -> Option<f64> {
        self.evals.first().map(|&(_, l)| l)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.evals.last().map(|&(_, l)| l)
    }

    pub fn loss_at(&self, t: usize) -> Option<f64> {
        self.evals.iter().find(|&&(s, _)| s == t).map(|&(_, l)| l)
    }
}

pub fn squared_residual(u: &[f64], y: &[f64]) -> f64 {
    u.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
