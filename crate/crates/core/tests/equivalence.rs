use kron_sgd::matrix::dot;
use kron_sgd::{
    default_tau, generate_synthetic, init_network, init_trainer, train_naive, BatchSampler, KroneckerDataset,
    TrainConfig,
};

fn run_both(ds: &KroneckerDataset, m: usize, tau: f64, cfg: &TrainConfig, seed: u64) -> (f64, f64, f64) {
    let mut fast = init_trainer(ds.clone(), m, tau, seed).unwrap();
    let fast_traj = fast.train(cfg, &mut BatchSampler::new(seed)).unwrap();

    let mut net = init_network(m, ds.dim(), tau, seed).unwrap();
    let naive_traj = train_naive(&mut net, ds, cfg, &mut BatchSampler::new(seed)).unwrap();

    let mut step_gap = 0.0f64;
    for (a, b) in fast_traj.steps.iter().zip(&naive_traj.steps) {
        assert_eq!(a.batch, b.batch);
        assert_eq!(a.fire_counts, b.fire_counts, "fire sets diverged at t={}", a.t);
        for (x, y) in a.u_batch.iter().zip(&b.u_batch) {
            step_gap = step_gap.max((x - y).abs());
        }
    }
    let final_gap = fast_traj
        .final_u
        .iter()
        .zip(&naive_traj.final_u)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let weight_gap = fast.export_network().unwrap().weights().max_abs_diff(net.weights());
    (step_gap, final_gap, weight_gap)
}

#[test]
fn headline_run_matches_dense_trainer() {
    let ds = generate_synthetic(32, 4, 4, 11, 1.0, false).unwrap();
    let cfg = TrainConfig::new(0.05, 4, 200);
    let (step_gap, final_gap, weight_gap) = run_both(&ds, 256, default_tau(256), &cfg, 11);
    assert!(step_gap <= 1e-8, "{step_gap}");
    assert!(final_gap <= 1e-8, "{final_gap}");
    assert!(weight_gap <= 1e-7, "{weight_gap}");
}

#[test]
fn zero_threshold_and_full_batch() {
    let ds = generate_synthetic(8, 2, 3, 4, 1.0, false).unwrap();
    let (a, b, c) = run_both(&ds, 64, 0.0, &TrainConfig::new(0.1, 8, 50), 4);
    assert!(a <= 1e-8 && b <= 1e-8 && c <= 1e-7);
}

#[test]
fn one_step_leaves_match_dense_scores() {
    let ds = generate_synthetic(8, 4, 4, 3, 1.0, false).unwrap();
    let (m, tau) = (64, default_tau(64));
    let mut st = init_trainer(ds.clone(), m, tau, 3).unwrap();
    let mut sampler = BatchSampler::new(3);
    st.step(0.2, 4, &mut sampler).unwrap();

    let mut net = init_network(m, 16, tau, 3).unwrap();
    train_naive(&mut net, &ds, &TrainConfig::new(0.2, 4, 1), &mut BatchSampler::new(3)).unwrap();
    for i in 0..8 {
        let x = ds.materialize_column(i).unwrap();
        for r in 0..m {
            let want = dot(&x, net.weight(r));
            assert!((st.leaf_value(i, r).unwrap() - want).abs() <= 1e-10);
        }
    }
}

#[test]
fn leaves_stay_consistent_with_exported_weights() {
    let ds = generate_synthetic(12, 3, 3, 8, 1.0, false).unwrap();
    let mut st = init_trainer(ds.clone(), 128, 0.4, 8).unwrap();
    let mut sampler = BatchSampler::new(8);
    for _ in 0..5 {
        st.train(&TrainConfig::new(0.1, 3, 20), &mut sampler).unwrap();
        let net = st.export_network().unwrap();
        let u = st.predictions();
        for (i, &ui) in u.iter().enumerate() {
            let x = ds.materialize_column(i).unwrap();
            for r in 0..128 {
                assert!((st.leaf_value(i, r).unwrap() - dot(&x, net.weight(r))).abs() <= 1e-8);
            }
            assert!((net.predict(&x).unwrap() - ui).abs() <= 1e-8);
        }
    }
}

#[test]
fn weight_movement_matches_materialized_difference() {
    let ds = generate_synthetic(10, 3, 2, 5, 1.0, false).unwrap();
    let mut st = init_trainer(ds.clone(), 64, 0.2, 5).unwrap();
    st.train(&TrainConfig::new(0.2, 4, 40), &mut BatchSampler::new(5)).unwrap();
    let w0 = init_network(64, 6, 0.2, 5).unwrap();
    let wt = st.export_network().unwrap();
    let mut touched = 0;
    for r in 0..64 {
        let diff: Vec<f64> = wt.weight(r).iter().zip(w0.weight(r)).map(|(a, b)| a - b).collect();
        let want = dot(&diff, &diff).sqrt();
        let got = st.weight_movement(r).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.max(1e-12), "r={r}: {got} vs {want}");
        touched += usize::from(want > 0.0);
    }
    assert!(touched > 0);
}

#[test]
fn zero_step_size_exports_initial_weights() {
    let ds = generate_synthetic(6, 2, 2, 2, 1.0, false).unwrap();
    let mut st = init_trainer(ds, 32, 0.1, 2).unwrap();
    let traj = st.train(&TrainConfig::new(0.0, 2, 25), &mut BatchSampler::new(2)).unwrap();
    assert_eq!(st.export_network().unwrap(), init_network(32, 4, 0.1, 2).unwrap());
    assert!(traj.evals.iter().all(|&(_, l)| l == traj.evals[0].1));
}

#[test]
fn repeated_runs_are_identical() {
    let ds = generate_synthetic(16, 2, 2, 6, 1.0, false).unwrap();
    let run = || {
        let mut st = init_trainer(ds.clone(), 64, 0.3, 6).unwrap();
        let traj = st.train(&TrainConfig::new(0.1, 4, 30), &mut BatchSampler::new(6)).unwrap();
        traj.steps
            .iter()
            .map(|s| (s.batch.clone(), s.u_batch.clone(), s.fire_counts.clone(), s.changed))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
