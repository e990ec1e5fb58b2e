//! Fast mini-batch SGD whose steps never touch a d-length vector.
//!
//! Every sample owns a max-tree over the current scores `w_r(t)ᵀx_i`. A step
//! queries the trees of the batch for their fire sets, reads predictions from
//! the leaves, and pushes the weight change of every firing neuron into all
//! `n` trees through the cached Grams. Weights are only kept in coefficient
//! form, `w_r(t) = w_r(0) + Σ_j c_{r,j}·x_j`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::KroneckerDataset;
use crate::error::{Error, Result};
use crate::kernels::{scores_into, GramCache};
use crate::matrix::RealMatrix;
use crate::maxtree::{ThresholdTree, TreeBank};
use crate::network::{elapsed_ns, init_network, init_signs, TwoLayerNet};
use crate::rng::{self, Stream};
use crate::sampler::BatchSampler;
use crate::trajectory::{squared_residual, PhaseTimings, StepRecord, TrainConfig, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub batch: Vec<usize>,
    pub u_batch: Vec<f64>,
    /// `L_i` for each batch point, ascending.
    pub fire_sets: Vec<Vec<usize>>,
    /// `ℓ(t) = ∪ L_i`, ascending.
    pub changed: Vec<usize>,
    pub timings: PhaseTimings,
}

impl StepReport {
    pub fn fire_counts(&self) -> Vec<usize> {
        self.fire_sets.iter().map(Vec::len).collect()
    }

    pub fn to_record(&self, t: usize, y: &[f64]) -> StepRecord {
        StepRecord {
            t,
            batch: self.batch.clone(),
            u_batch: self.u_batch.clone(),
            batch_loss: self
                .batch
                .iter()
                .zip(&self.u_batch)
                .map(|(&i, &u)| (u - y[i]) * (u - y[i]))
                .sum(),
            fire_counts: self.fire_counts(),
            changed: self.changed.len(),
            timings: self.timings,
            grad_ratio: None,
        }
    }
}

/// Fire-set sizes observed in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FireObservation {
    pub q_max: usize,
    pub q_mean: f64,
    pub k: usize,
    pub fire_total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FireSummary {
    pub steps: usize,
    /// Largest `|L_i|` over all recorded steps.
    pub q_max: usize,
    /// Mean of the per-step mean `|L_i|`.
    pub q_mean: f64,
    /// Largest `|ℓ(t)|`.
    pub k_max: usize,
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    ds: Arc<KroneckerDataset>,
    bank: TreeBank,
    grams: GramCache,
    signs: Vec<f64>,
    tau: f64,
    m: usize,
    n: usize,
    t: usize,
    seed: u64,
    ledger: Vec<BTreeMap<usize, f64>>,
    fire_stats: Vec<FireObservation>,
    timings: PhaseTimings,
    pool: Option<Arc<rayon::ThreadPool>>,
}

/// Builds the network `init_network(m, d, tau, seed)` would build, without
/// keeping its dense weights: each `w_r(0)` is drawn, scored against all
/// samples and dropped.
pub fn init_trainer(ds: impl Into<Arc<KroneckerDataset>>, m: usize, tau: f64, seed: u64) -> Result<TrainerState> {
    let ds = ds.into();
    if m == 0 {
        return Err(Error::InvalidInput("network width must be positive".into()));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be finite and >= 0 (got {tau})")));
    }
    let (n, d) = (ds.n(), ds.dim());
    let mut wrng = rng::stream(seed, Stream::Weights);
    let mut w = vec![0.0; d];
    let mut col = vec![0.0; n];
    let mut scores = RealMatrix::zeros(n, m);
    for r in 0..m {
        for v in w.iter_mut() {
            *v = wrng.sample(StandardNormal);
        }
        scores_into(ds.factor_a(), ds.factor_b(), &w, &mut col);
        scores.col_mut(r).copy_from_slice(&col);
    }
    let bank = TreeBank::build(&scores);
    let grams = GramCache::new(&ds);
    Ok(TrainerState {
        bank,
        grams,
        signs: init_signs(m, seed),
        tau,
        m,
        n,
        t: 0,
        seed,
        ledger: vec![BTreeMap::new(); m],
        fire_stats: Vec::new(),
        timings: PhaseTimings::default(),
        pool: None,
        ds,
    })
}

impl TrainerState {
    /// Runs queries and tree updates on a dedicated pool of `workers` threads.
    /// Results do not depend on the worker count.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        self.pool = if workers <= 1 {
            None
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
            Some(Arc::new(pool))
        };
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Completed steps.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn bank(&self) -> &TreeBank {
        &self.bank
    }

    pub fn grams(&self) -> &GramCache {
        &self.grams
    }

    pub fn dataset(&self) -> &Arc<KroneckerDataset> {
        &self.ds
    }

    /// Accumulated `c_{r,j}` for neuron `r`, keyed by sample.
    pub fn ledger(&self, r: usize) -> Result<&BTreeMap<usize, f64>> {
        Error::check_index("neuron", r, self.m)?;
        Ok(&self.ledger[r])
    }

    pub fn ledger_entries(&self) -> usize {
        self.ledger.iter().map(BTreeMap::len).sum()
    }

    /// Sum of per-phase step timings so far.
    pub fn timings(&self) -> PhaseTimings {
        self.timings
    }

    pub fn fire_observations(&self) -> &[FireObservation] {
        &self.fire_stats
    }

    /// Current `w_r(t)ᵀx_i`.
    pub fn leaf_value(&self, i: usize, r: usize) -> Result<f64> {
        self.bank.leaf_value(i, r)
    }

    /// `|L_i|` for every sample under the current weights.
    pub fn fire_counts(&self) -> Vec<usize> {
        let mut buf = Vec::new();
        self.bank
            .trees()
            .iter()
            .map(|tree| {
                buf.clear();
                tree.query_into(self.tau, &mut buf);
                buf.len()
            })
            .collect()
    }

    /// `u_i(t)` for every sample, summed over fire sets only.
    pub fn predictions(&self) -> Vec<f64> {
        let mut buf = Vec::new();
        self.bank
            .trees()
            .iter()
            .map(|tree| {
                buf.clear();
                tree.query_into(self.tau, &mut buf);
                self.output(tree, &buf)
            })
            .collect()
    }

    pub fn loss(&self) -> f64 {
        squared_residual(&self.predictions(), self.ds.labels())
    }

    fn output(&self, tree: &ThresholdTree, fire: &[usize]) -> f64 {
        let sum: f64 = fire
            .iter()
            .map(|&r| self.signs[r] * (tree.leaf(r) - self.tau))
            .sum();
        sum / (self.m as f64).sqrt()
    }

    /// One SGD step on a batch of `s_batch` samples drawn from `sampler`.
    ///
    /// Reads only labels, trees and Grams; cost is independent of `d`.
    pub fn step(&mut self, eta: f64, s_batch: usize, sampler: &mut BatchSampler) -> Result<StepReport> {
        TrainConfig::new(eta, s_batch, 1).validate(self.n)?;
        let batch = sampler.sample(self.n, s_batch);
        let y = self.ds.labels();
        let tau = self.tau;

        let clock = Instant::now();
        let trees = self.bank.trees();
        let fire_sets: Vec<Vec<usize>> = match &self.pool {
            Some(pool) => pool.install(|| batch.par_iter().map(|&i| trees[i].query(tau)).collect()),
            None => batch.iter().map(|&i| trees[i].query(tau)).collect(),
        };
        let query_ns = elapsed_ns(clock);

        let clock = Instant::now();
        let u_batch: Vec<f64> = batch
            .iter()
            .zip(&fire_sets)
            .map(|(&i, fire)| self.output(&trees[i], fire))
            .collect();
        let forward_ns = elapsed_ns(clock);

        // Every coefficient is fixed from W(t) before any tree moves.
        let clock = Instant::now();
        let mut changed: Vec<usize> = fire_sets.iter().flatten().copied().collect();
        changed.sort_unstable();
        changed.dedup();
        let scale = eta * self.n as f64 / (s_batch as f64 * (self.m as f64).sqrt());
        let mut updates: Vec<(usize, Vec<f64>)> = Vec::with_capacity(changed.len());
        for &r in &changed {
            let coeffs: Vec<f64> = batch
                .iter()
                .zip(&u_batch)
                .map(|(&i, &u)| {
                    if trees[i].leaf(r) > tau {
                        scale * self.signs[r] * (y[i] - u)
                    } else {
                        0.0
                    }
                })
                .collect();
            if coeffs.iter().any(|&c| c != 0.0) {
                updates.push((r, coeffs));
            }
        }
        for (r, coeffs) in &updates {
            let row = &mut self.ledger[*r];
            for (&j, &c) in batch.iter().zip(coeffs) {
                if c != 0.0 {
                    *row.entry(j).or_insert(0.0) += c;
                }
            }
        }
        let delta_ns = elapsed_ns(clock);

        let clock = Instant::now();
        if !updates.is_empty() {
            let grams = &self.grams;
            let apply = |(i, tree): (usize, &mut ThresholdTree)| {
                let mut g = vec![0.0; batch.len()];
                grams.batch_inner_into(&batch, i, &mut g);
                for (r, coeffs) in &updates {
                    let delta: f64 = coeffs.iter().zip(&g).map(|(c, x)| c * x).sum();
                    tree.add_to_leaf(*r, delta);
                }
            };
            let trees = self.bank.trees_mut();
            match &self.pool {
                Some(pool) => pool.install(|| trees.par_iter_mut().enumerate().for_each(apply)),
                None => trees.iter_mut().enumerate().for_each(apply),
            }
        }
        let update_ns = elapsed_ns(clock);

        let timings = PhaseTimings {
            query_ns,
            forward_ns,
            delta_ns,
            update_ns,
        };
        self.timings.query_ns += query_ns;
        self.timings.forward_ns += forward_ns;
        self.timings.delta_ns += delta_ns;
        self.timings.update_ns += update_ns;
        self.t += 1;

        let report = StepReport {
            batch,
            u_batch,
            fire_sets,
            changed,
            timings,
        };
        let counts = report.fire_counts();
        self.fire_stats.push(FireObservation {
            q_max: counts.iter().copied().max().unwrap_or(0),
            q_mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            k: report.changed.len(),
            fire_total: counts.iter().sum(),
        });
        Ok(report)
    }

    /// Runs `cfg.iters` steps. Full-loss evaluations go through tree queries
    /// and are not included in step timings.
    pub fn train(&mut self, cfg: &TrainConfig, sampler: &mut BatchSampler) -> Result<Trajectory> {
        cfg.validate(self.n)?;
        let initial_u = self.predictions();
        let y = self.ds.labels().to_vec();
        let mut traj = Trajectory {
            evals: vec![(self.t, squared_residual(&initial_u, &y))],
            initial_u,
            ..Default::default()
        };
        for t in 1..=cfg.iters {
            let report = self.step(cfg.eta, cfg.s_batch, sampler)?;
            traj.steps.push(report.to_record(t, &y));
            if cfg.evaluates_at(t) {
                traj.evals.push((t, self.loss()));
            }
        }
        traj.final_u = self.predictions();
        Ok(traj)
    }

    pub fn fire_statistics(&self) -> Option<FireSummary> {
        if self.fire_stats.is_empty() {
            return None;
        }
        let steps = self.fire_stats.len();
        Some(FireSummary {
            steps,
            q_max: self.fire_stats.iter().map(|o| o.q_max).max().unwrap_or(0),
            q_mean: self.fire_stats.iter().map(|o| o.q_mean).sum::<f64>() / steps as f64,
            k_max: self.fire_stats.iter().map(|o| o.k).max().unwrap_or(0),
        })
    }

    /// `‖w_r(t) − w_r(0)‖₂ = √(cᵀGc)` over the samples touched by neuron `r`.
    pub fn weight_movement(&self, r: usize) -> Result<f64> {
        let row: Vec<(usize, f64)> = self.ledger(r)?.iter().map(|(&j, &c)| (j, c)).collect();
        let mut sq = 0.0;
        for &(j, cj) in &row {
            for &(k, ck) in &row {
                sq += cj * ck * self.grams.pair(j, k);
            }
        }
        Ok(sq.max(0.0).sqrt())
    }

    /// Dense network at the current iterate: `w_r(0)` is regenerated from the
    /// seed and the ledger is expanded against materialized samples.
    /// Costs O(m·d + ledger_entries·d).
    pub fn export_network(&self) -> Result<TwoLayerNet> {
        let mut net = init_network(self.m, self.ds.dim(), self.tau, self.seed)?;
        let cols: Vec<Vec<f64>> = (0..self.n)
            .map(|i| self.ds.materialize_column(i))
            .collect::<Result<_>>()?;
        for (r, row) in self.ledger.iter().enumerate() {
            let w = net.weight_mut(r);
            for (&j, &c) in row {
                for (wv, xv) in w.iter_mut().zip(&cols[j]) {
                    *wv += c * xv;
                }
            }
        }
        Ok(net)
    }

    /// m×d matrix whose row `r` is `w_r(t)`.
    pub fn export_weights(&self) -> Result<RealMatrix> {
        Ok(self.export_network()?.weights().transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use crate::matrix::dot;

    fn state(n: usize, p: usize, q: usize, m: usize, tau: f64, seed: u64) -> TrainerState {
        let ds = generate_synthetic(n, p, q, seed, 1.0, false).unwrap();
        init_trainer(ds, m, tau, seed).unwrap()
    }

    #[test]
    fn init_leaves_match_materialized_scores() {
        let st = state(8, 2, 3, 16, 0.4, 5);
        let net = init_network(16, 6, 0.4, 5).unwrap();
        for i in 0..8 {
            let x = st.dataset().materialize_column(i).unwrap();
            for r in 0..16 {
                let want = dot(&x, net.weight(r));
                let got = st.leaf_value(i, r).unwrap();
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
        }
        assert_eq!(st.ledger_entries(), 0);
        assert_eq!(st.t(), 0);
        assert!(st.fire_statistics().is_none());
        assert_eq!(st.export_network().unwrap(), net);
    }

    #[test]
    fn unreachable_threshold_means_nothing_moves() {
        let mut st = state(6, 2, 2, 32, 100.0, 1);
        let before = st.bank().clone();
        let report = st.step(0.5, 3, &mut BatchSampler::new(1)).unwrap();
        assert!(report.changed.is_empty());
        assert_eq!(report.u_batch, vec![0.0; 3]);
        assert_eq!(st.bank(), &before);
        assert_eq!(st.fire_statistics().unwrap().q_max, 0);
    }

    #[test]
    fn zero_step_size_leaves_trees_unchanged() {
        let mut st = state(6, 2, 2, 32, 0.0, 2);
        let before = st.bank().clone();
        let report = st.step(0.0, 2, &mut BatchSampler::new(2)).unwrap();
        assert!(!report.changed.is_empty());
        assert_eq!(st.bank(), &before);
        assert_eq!(st.ledger_entries(), 0);
    }

    #[test]
    fn union_is_bounded_by_fire_totals() {
        let mut st = state(10, 2, 2, 64, 0.3, 3);
        let mut sampler = BatchSampler::new(3);
        for _ in 0..20 {
            let report = st.step(0.1, 4, &mut sampler).unwrap();
            let total: usize = report.fire_sets.iter().map(Vec::len).sum();
            assert!(report.changed.len() <= total);
            for fire in &report.fire_sets {
                assert!(fire.windows(2).all(|w| w[0] < w[1]));
                assert!(fire.iter().all(|&r| report.changed.binary_search(&r).is_ok()));
            }
        }
    }

    #[test]
    fn movement_of_single_coefficient_is_its_magnitude() {
        let mut st = state(5, 2, 2, 8, 0.0, 4);
        let r = 3;
        st.ledger[r].insert(2, -0.7);
        assert!((st.weight_movement(r).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(st.weight_movement(0).unwrap(), 0.0);
        assert!(st.weight_movement(8).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let run = |workers| {
            let mut st = state(12, 3, 2, 64, 0.2, 6).with_workers(workers).unwrap();
            let traj = st.train(&TrainConfig::new(0.05, 4, 30), &mut BatchSampler::new(6)).unwrap();
            (st.bank().clone(), traj.final_u)
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn empty_run_is_a_no_op() {
        let mut st = state(6, 2, 2, 16, 0.1, 7);
        let before = st.bank().clone();
        let traj = st.train(&TrainConfig::new(0.1, 2, 0), &mut BatchSampler::new(7)).unwrap();
        assert!(traj.steps.is_empty());
        assert_eq!(traj.evals.len(), 1);
        assert_eq!(st.bank(), &before);
    }

    #[test]
    fn rejects_bad_batch() {
        let mut st = state(4, 2, 2, 8, 0.1, 8);
        assert!(st.step(0.1, 0, &mut BatchSampler::new(1)).is_err());
        assert!(st.step(0.1, 5, &mut BatchSampler::new(1)).is_err());
        assert!(init_trainer(generate_synthetic(2, 2, 2, 1, 1.0, false).unwrap(), 0, 0.0, 1).is_err());
    }
}
