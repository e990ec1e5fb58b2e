//! Self-check suites run by `kron-sgd verify`.
//!
//! Each suite compares the optimized code paths with brute-force oracles on
//! seeded random instances. A failure carries enough information (suite,
//! seed, case) to replay it.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{generate_synthetic, KroneckerDataset};
use crate::error::Result;
use crate::kernels::{scores_for_weight, GramCache};
use crate::matrix::dot;
use crate::maxtree::ThresholdTree;
use crate::network::{default_tau, init_network, train_naive};
use crate::params::{resolve, Param};
use crate::sampler::BatchSampler;
use crate::trainer::init_trainer;
use crate::trajectory::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Tree,
    Tensor,
    Equivalence,
    Fire,
    Kbound,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Tree, Suite::Tensor, Suite::Equivalence, Suite::Fire, Suite::Kbound];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tree => "tree",
            Suite::Tensor => "tensor",
            Suite::Equivalence => "equivalence",
            Suite::Fire => "fire",
            Suite::Kbound => "kbound",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (expected tree, tensor, equivalence, fire or kbound)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub suites: Vec<Suite>,
    pub seed: u64,
    /// Corrupts one internal tree node in the tree suite.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            suites: Suite::ALL.to_vec(),
            seed: 1,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub suite: Suite,
    pub cases: usize,
    pub failures: usize,
    /// Replay description of the first failing case.
    pub first_failure: Option<String>,
}

impl SuiteResult {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            cases: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn run(opts: &VerifyOptions) -> Result<Vec<SuiteResult>> {
    let mut suites = opts.suites.clone();
    suites.sort();
    suites.dedup();
    suites
        .into_iter()
        .map(|s| match s {
            Suite::Tree => Ok(tree_suite(opts.seed, opts.inject_fault)),
            Suite::Tensor => tensor_suite(opts.seed),
            Suite::Equivalence => equivalence_suite(opts.seed),
            Suite::Fire => fire_suite(opts.seed),
            Suite::Kbound => kbound_suite(opts.seed),
        })
        .collect()
}

/// Random build/update/query sequences against a linear scan.
pub fn tree_suite(seed: u64, inject_fault: bool) -> SuiteResult {
    const SEQUENCES: usize = 1000;
    const OPS: usize = 12;
    let mut res = SuiteResult::new(Suite::Tree);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..SEQUENCES {
        let m = rng.random_range(1..=257);
        let mut shadow: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut tree = ThresholdTree::build(&shadow);
        if inject_fault && case == 0 && tree.padded_leaves() > 1 {
            tree.corrupt_node(1, tree.root() + 1.0);
        }
        let mut ok = tree.check_invariants().is_ok();
        let mut failed_op = None;
        for op in 0..OPS {
            if !ok {
                break;
            }
            let r = rng.random_range(0..m);
            let delta = rng.random_range(-5.0..5.0);
            shadow[r] += delta;
            tree.add_to_leaf(r, delta);
            let tau = if rng.random_bool(0.5) {
                shadow[rng.random_range(0..m)]
            } else {
                rng.random_range(-6.0..6.0)
            };
            let want: Vec<usize> = (0..m).filter(|&j| shadow[j] > tau).collect();
            ok = tree.check_invariants().is_ok() && tree.query(tau) == want;
            if !ok {
                failed_op = Some(op);
            }
        }
        res.record(ok, || format!("tree seed={seed} case={case} m={m} op={failed_op:?}"));
    }
    res
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Bilinear-form and Gram identities against materialized vectors.
pub fn tensor_suite(seed: u64) -> Result<SuiteResult> {
    const CASES: usize = 500;
    let mut res = SuiteResult::new(Suite::Tensor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..CASES {
        let (p, q, n) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=6));
        let ds = generate_synthetic(n, p, q, rng.random(), 1.0, false)?;
        let w: Vec<f64> = (0..p * q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = ds.materialize();
        let scores = scores_for_weight(&ds, &w)?;
        let grams = GramCache::new(&ds);
        let batch: Vec<usize> = (0..rng.random_range(1..=n)).map(|_| rng.random_range(0..n)).collect();
        let coeffs: Vec<f64> = batch.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut ok = true;
        for (i, &score) in scores.iter().enumerate() {
            ok &= rel_close(score, dot(x.col(i), &w), 1e-10);
            let inner = grams.batch_inner(&batch, i)?;
            for (k, &j) in batch.iter().enumerate() {
                ok &= rel_close(inner[k], dot(x.col(j), x.col(i)), 1e-10);
            }
            let delta: Vec<f64> = (0..p * q)
                .map(|e| batch.iter().zip(&coeffs).map(|(&j, c)| c * x.col(j)[e]).sum())
                .collect();
            ok &= rel_close(grams.delta_dot(&batch, &coeffs, i)?, dot(&delta, x.col(i)), 1e-10);
        }
        res.record(ok, || format!("tensor seed={seed} case={case} p={p} q={q} n={n}"));
    }
    Ok(res)
}

fn headline_dataset(seed: u64) -> Result<KroneckerDataset> {
    generate_synthetic(32, 4, 4, seed, 1.0, false)
}

/// Fast and dense trainers on a shared batch stream: batch predictions agree
/// within 1e-8 on every step and exported weights within 1e-7.
pub fn equivalence_suite(seed: u64) -> Result<SuiteResult> {
    let mut res = SuiteResult::new(Suite::Equivalence);
    let ds = headline_dataset(seed)?;
    let m = 256;
    let r = resolve(&ds, m, Param::Auto, Param::Auto, 4, seed)?;
    let cfg = TrainConfig::new(r.eta, 4, 200);
    let mut fast = init_trainer(ds.clone(), m, r.tau, seed)?;
    let ft = fast.train(&cfg, &mut BatchSampler::new(seed))?;
    let mut net = init_network(m, ds.dim(), r.tau, seed)?;
    let nt = train_naive(&mut net, &ds, &cfg, &mut BatchSampler::new(seed))?;
    for (a, b) in ft.steps.iter().zip(&nt.steps) {
        let gap = a.u_batch.iter().zip(&b.u_batch).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        res.record(a.batch == b.batch && gap <= 1e-8, || {
            format!("equivalence seed={seed} t={} gap={gap:e}", a.t)
        });
    }
    let wgap = fast.export_network()?.weights().max_abs_diff(net.weights());
    res.record(wgap <= 1e-7, || format!("equivalence seed={seed} export gap={wgap:e}"));
    Ok(res)
}

/// At initialization the mean fire count stays below `3·m·exp(−τ²/2)` for
/// `τ = √(ln m / 2)`, and at `τ = 0` about half the neurons fire.
pub fn fire_suite(seed: u64) -> Result<SuiteResult> {
    let mut res = SuiteResult::new(Suite::Fire);
    for (k, m) in [1usize << 8, 1 << 10, 1 << 12].into_iter().enumerate() {
        let ds = generate_synthetic(16, 4, 4, seed + k as u64, 1.0, false)?;
        let tau = default_tau(m);
        let counts = init_trainer(ds.clone(), m, tau, seed + k as u64)?.fire_counts();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        let bound = 3.0 * m as f64 * (-tau * tau / 2.0).exp();
        res.record(mean <= bound, || format!("fire seed={seed} m={m} mean={mean} bound={bound}"));

        let counts = init_trainer(ds, m, 0.0, seed + k as u64)?.fire_counts();
        let frac = counts.iter().sum::<usize>() as f64 / (counts.len() * m) as f64;
        res.record((frac - 0.5).abs() <= 0.05, || format!("fire seed={seed} m={m} tau=0 fraction={frac}"));
    }
    Ok(res)
}

/// `|ℓ(t)| ≤ Σ_{i∈S_t} |L_i|` on every step.
pub fn kbound_suite(seed: u64) -> Result<SuiteResult> {
    let mut res = SuiteResult::new(Suite::Kbound);
    let ds = headline_dataset(seed)?;
    let mut st = init_trainer(ds, 256, default_tau(256), seed)?;
    let mut sampler = BatchSampler::new(seed);
    for t in 1..=200 {
        let report = st.step(0.05, 4, &mut sampler)?;
        let total: usize = report.fire_sets.iter().map(Vec::len).sum();
        res.record(report.changed.len() <= total, || {
            format!("kbound seed={seed} t={t} K={} sum={total}", report.changed.len())
        });
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn tree_suite_passes_and_catches_fault() {
        let ok = tree_suite(3, false);
        assert!(ok.passed());
        assert_eq!(ok.cases, 1000);
        let bad = tree_suite(3, true);
        assert!(!bad.passed());
        assert!(bad.first_failure.unwrap().contains("case=0"));
    }

    #[test]
    fn selected_suite_only() {
        let opts = VerifyOptions {
            suites: vec![Suite::Tensor],
            ..Default::default()
        };
        let res = run(&opts).unwrap();
        assert_eq!(res.len(), 1);
        assert!(res[0].passed());
    }
}
