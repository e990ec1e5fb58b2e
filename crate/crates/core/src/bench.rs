//! Per-step wall time as a function of the data dimension.

use std::io::{self, Write};
use std::time::Instant;

use crate::dataset::generate_synthetic;
use crate::error::{Error, Result};
use crate::network::{default_tau, elapsed_ns, init_network, train_naive};
use crate::sampler::BatchSampler;
use crate::trainer::init_trainer;
use crate::trajectory::{StepRecord, TrainConfig};

pub const BENCH_HEADER: &str = "d,p,q,fast_ns_median,naive_ns_median,init_ns";

/// Largest aspect ratio `q/p` accepted when factoring `d`.
pub const MAX_ASPECT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub n: usize,
    pub m: usize,
    pub s_batch: usize,
    pub iters: usize,
    pub seed: u64,
    /// `None` uses `√(ln m / 2)`.
    pub tau: Option<f64>,
    pub eta: f64,
    /// Untimed steps run before measuring.
    pub warmup: usize,
    pub naive: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![64, 256, 1024, 4096],
            n: 64,
            m: 1024,
            s_batch: 4,
            iters: 100,
            seed: 1,
            tau: None,
            eta: 0.01,
            warmup: 10,
            naive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub d: usize,
    pub p: usize,
    pub q: usize,
    pub fast_ns_median: u64,
    pub naive_ns_median: Option<u64>,
    /// Fast-trainer initialization (scores, trees, Grams).
    pub init_ns: u64,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.d,
            self.p,
            self.q,
            self.fast_ns_median,
            self.naive_ns_median.map(|v| v.to_string()).unwrap_or_default(),
            self.init_ns
        )
    }
}

/// `d = p·q` with `p ≤ q` as close to `√d` as possible, or `None` when the
/// best split is more elongated than [`MAX_ASPECT`].
pub fn factor_dim(d: usize) -> Option<(usize, usize)> {
    if d == 0 {
        return None;
    }
    let p = (1..=d.isqrt()).rev().find(|p| d.is_multiple_of(*p))?;
    let q = d / p;
    (q <= MAX_ASPECT * p).then_some((p, q))
}

/// Median of the observations; the lower middle for even counts.
pub fn median(mut xs: Vec<u64>) -> u64 {
    xs.sort_unstable();
    match xs.len() {
        0 => 0,
        n if n % 2 == 1 => xs[n / 2],
        n => (xs[n / 2 - 1] + xs[n / 2]) / 2,
    }
}

fn step_median(steps: &[StepRecord]) -> u64 {
    median(steps.iter().map(|s| s.timings.total_ns()).collect())
}

/// Runs the sweep. Dimensions that do not factor are reported through `warn`
/// and skipped.
pub fn run_bench(cfg: &BenchConfig, mut warn: impl FnMut(String)) -> Result<Vec<BenchRow>> {
    if cfg.iters == 0 {
        return Err(Error::InvalidInput("benchmark needs at least one timed step".into()));
    }
    let tau = cfg.tau.unwrap_or_else(|| default_tau(cfg.m));
    let mut timed = TrainConfig::new(cfg.eta, cfg.s_batch, cfg.iters);
    timed.eval_every = 0;
    let mut warm = TrainConfig::new(cfg.eta, cfg.s_batch, cfg.warmup);
    warm.eval_every = 0;

    let mut rows = Vec::new();
    for &d in &cfg.dims {
        let Some((p, q)) = factor_dim(d) else {
            warn(format!("skipping d={d}: no factorization p*q with q/p <= {MAX_ASPECT}"));
            continue;
        };
        let ds = generate_synthetic(cfg.n, p, q, cfg.seed, 1.0, false)?;

        let clock = Instant::now();
        let mut st = init_trainer(ds.clone(), cfg.m, tau, cfg.seed)?;
        let init_ns = elapsed_ns(clock);
        let mut sampler = BatchSampler::new(cfg.seed);
        st.train(&warm, &mut sampler)?;
        let fast = st.train(&timed, &mut sampler)?;

        let naive_ns_median = if cfg.naive {
            let mut net = init_network(cfg.m, d, tau, cfg.seed)?;
            let mut sampler = BatchSampler::new(cfg.seed);
            train_naive(&mut net, &ds, &warm, &mut sampler)?;
            let naive = train_naive(&mut net, &ds, &timed, &mut sampler)?;
            Some(step_median(&naive.steps))
        } else {
            None
        };

        rows.push(BenchRow {
            d,
            p,
            q,
            fast_ns_median: step_median(&fast.steps),
            naive_ns_median,
            init_ns,
        });
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(mut out: W, rows: &[BenchRow]) -> io::Result<()> {
    writeln!(out, "{BENCH_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_close_to_square() {
        assert_eq!(factor_dim(64), Some((8, 8)));
        assert_eq!(factor_dim(4096), Some((64, 64)));
        assert_eq!(factor_dim(12), Some((3, 4)));
        assert_eq!(factor_dim(8), Some((2, 4)));
        assert_eq!(factor_dim(13), None);
        assert_eq!(factor_dim(0), None);
        assert_eq!(factor_dim(1), Some((1, 1)));
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(vec![7]), 7);
        assert_eq!(median(vec![3, 1, 2]), 2);
        assert_eq!(median(vec![4, 1, 3, 2]), 2);
    }

    #[test]
    fn small_sweep() {
        let cfg = BenchConfig {
            dims: vec![16, 13],
            n: 8,
            m: 32,
            iters: 1,
            warmup: 0,
            ..Default::default()
        };
        let mut warnings = Vec::new();
        let rows = run_bench(&cfg, |w| warnings.push(w)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert_eq!((rows[0].p, rows[0].q), (4, 4));
        assert!(rows[0].naive_ns_median.is_some());
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
