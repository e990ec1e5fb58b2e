use kron_sgd::matrix::dot;
use kron_sgd::{
    generate_synthetic, h_dis, h_dynamic, init_trainer, scores_for_weight, BatchSampler, GramCache, KroneckerDataset,
    RealMatrix, TwoLayerNet,
};
use proptest::prelude::*;

fn kron_column(ds: &KroneckerDataset, i: usize) -> Vec<f64> {
    let (a, b) = (ds.factor_a().col(i), ds.factor_b().col(i));
    b.iter().flat_map(|&bc| a.iter().map(move |&ak| ak * bc)).collect()
}

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-10 * want.abs().max(1.0)
}

/// Dense `H_ij = x_iᵀx_j · (1/m) Σ_r 1(w_rᵀx_i > τ) 1(w_rᵀx_j > τ)`.
fn dense_kernel(net: &TwoLayerNet, ds: &KroneckerDataset) -> RealMatrix {
    let n = ds.n();
    let xs: Vec<Vec<f64>> = (0..n).map(|i| kron_column(ds, i)).collect();
    let fires: Vec<Vec<bool>> = xs
        .iter()
        .map(|x| (0..net.m()).map(|r| dot(net.weight(r), x) > net.tau()).collect())
        .collect();
    let mut h = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let both = (0..net.m()).filter(|&r| fires[i][r] && fires[j][r]).count();
            h.set(i, j, dot(&xs[i], &xs[j]) * both as f64 / net.m() as f64);
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_match_materialized(
        n in 1usize..7,
        p in 1usize..6,
        q in 1usize..6,
        seed in any::<u64>(),
        w_seed in any::<u64>(),
        batch in proptest::collection::vec(0usize..64, 1..5),
        coeffs in proptest::collection::vec(-3.0f64..3.0, 4),
    ) {
        let ds = generate_synthetic(n, p, q, seed, 1.0, false).unwrap();
        let batch: Vec<usize> = batch.into_iter().map(|j| j % n).collect();
        let coeffs = &coeffs[..batch.len()];
        let xs: Vec<Vec<f64>> = (0..n).map(|i| kron_column(&ds, i)).collect();
        let w: Vec<f64> = (0..p * q).map(|e| ((e as u64 ^ w_seed) % 97) as f64 / 48.0 - 1.0).collect();
        let scores = scores_for_weight(&ds, &w).unwrap();
        let grams = GramCache::new(&ds);
        for i in 0..n {
            prop_assert!(close(scores[i], dot(&xs[i], &w)));
            let inner = grams.batch_inner(&batch, i).unwrap();
            let mut want_delta = 0.0;
            for (k, &j) in batch.iter().enumerate() {
                let want = dot(&xs[j], &xs[i]);
                prop_assert!(close(inner[k], want));
                prop_assert!(close(grams.pair(j, i), want));
                want_delta += coeffs[k] * want;
            }
            prop_assert!(close(grams.delta_dot(&batch, coeffs, i).unwrap(), want_delta));
        }
    }
}

#[test]
fn dis_kernel_matches_dense_oracle() {
    let ds = generate_synthetic(7, 3, 2, 21, 1.0, false).unwrap();
    let net = kron_sgd::init_network(96, ds.dim(), 0.3, 21).unwrap();
    let got = h_dis(&net, &ds).unwrap();
    let want = dense_kernel(&net, &ds);
    assert!(got.matrix.max_abs_diff(&want) <= 1e-12);
}

#[test]
fn dynamic_kernel_uses_current_weights() {
    let ds = generate_synthetic(9, 3, 3, 4, 1.0, false).unwrap();
    let mut st = init_trainer(ds.clone(), 80, 0.2, 4).unwrap();
    let before = h_dynamic(&st).unwrap();
    let init = st.export_network().unwrap();
    assert!(before.matrix.max_abs_diff(&dense_kernel(&init, &ds)) <= 1e-12);

    let mut sampler = BatchSampler::new(4);
    for _ in 0..30 {
        st.step(0.5, 3, &mut sampler).unwrap();
    }
    let after = h_dynamic(&st).unwrap();
    let trained = st.export_network().unwrap();
    assert!(after.matrix.max_abs_diff(&dense_kernel(&trained, &ds)) <= 1e-10);
    assert!(after.matrix.max_abs_diff(&before.matrix) > 0.0);
    assert!((after.lambda_min - kron_sgd::lambda_min_sym(&after.matrix).unwrap()).abs() <= 1e-12);
}

#[test]
fn half_of_neurons_fire_at_zero_threshold() {
    let m = 1 << 12;
    let ds = generate_synthetic(16, 4, 4, 12, 1.0, false).unwrap();
    let mut st = init_trainer(ds, m, 0.0, 12).unwrap();
    let mut sampler = BatchSampler::new(12);
    for _ in 0..5 {
        st.step(1e-4, 4, &mut sampler).unwrap();
    }
    let summary = st.fire_statistics().unwrap();
    assert_eq!(summary.steps, 5);
    let frac = summary.q_mean / m as f64;
    assert!((frac - 0.5).abs() <= 0.05, "fire fraction {frac}");
    assert!(summary.q_max <= m && summary.k_max <= m);
}
