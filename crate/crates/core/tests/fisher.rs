#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use fedcurv::fisher::{estimate_fisher_diag, fisher_weighted_params, FisherSampling};
use fedcurv::model::backward;
use fedcurv::{Error, FisherDiag, ParamVector};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn matches_per_sample_oracle() {
    let mut r = rng(11);
    for _ in 0..50 {
        let spec = random_spec(&mut r, 100);
        let theta = random_params(&mut r, &spec, 1.0);
        let n = r.random_range(1..=64);
        let ds = random_dataset(&mut r, n, spec.input_dim(), spec.classes());
        let fast = estimate_fisher_diag(&spec, &theta, &ds, None).unwrap();
        let slow = naive_fisher(&spec, &theta, &ds);
        assert_close(&fast, &slow, 1e-12, "fisher");
        assert!(fast.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn thirty_params_sixteen_samples() {
    let mut r = rng(12);
    let spec = fedcurv::ModelSpec::new(vec![3, 3, 2, 3], fedcurv::Activation::Tanh).unwrap();
    assert_eq!(spec.param_count(), 29);
    let theta = random_params(&mut r, &spec, 1.0);
    let ds = random_dataset(&mut r, 16, 3, 3);
    let fast = estimate_fisher_diag(&spec, &theta, &ds, None).unwrap();
    assert_close(&fast, &naive_fisher(&spec, &theta, &ds), 1e-12, "fisher");
}

#[test]
fn larger_than_one_chunk() {
    let mut r = rng(13);
    let spec = fedcurv::ModelSpec::new(vec![5, 6, 4], fedcurv::Activation::Relu).unwrap();
    let theta = random_params(&mut r, &spec, 1.0);
    let ds = random_dataset(&mut r, 700, 5, 4);
    let fast = estimate_fisher_diag(&spec, &theta, &ds, None).unwrap();
    assert_close(&fast, &naive_fisher(&spec, &theta, &ds), 1e-12, "fisher");
}

#[test]
fn single_sample_is_squared_gradient() {
    let mut r = rng(14);
    let spec = random_spec(&mut r, 80);
    let theta = random_params(&mut r, &spec, 1.0);
    let ds = random_dataset(&mut r, 1, spec.input_dim(), spec.classes());
    let g = backward(&spec, &theta, ds.as_batch()).unwrap();
    let f = estimate_fisher_diag(&spec, &theta, &ds, None).unwrap();
    // δ²·a² and (δ·a)² round differently; allow a few ulps.
    for (fi, gi) in f.iter().zip(g.iter()) {
        assert!((fi - gi * gi).abs() <= 4.0 * f64::EPSILON * gi * gi, "{fi} vs {}", gi * gi);
    }
}

#[test]
fn errors() {
    let mut r = rng(15);
    let spec = random_spec(&mut r, 80);
    let theta = random_params(&mut r, &spec, 1.0);
    let ds = random_dataset(&mut r, 4, spec.input_dim(), spec.classes());
    let zero = Some(FisherSampling { limit: 0, seed: 1 });
    assert!(matches!(
        estimate_fisher_diag(&spec, &theta, &ds, zero),
        Err(Error::InvalidArgument { .. })
    ));
    assert!(estimate_fisher_diag(&spec, &ParamVector::zeros(1), &ds, None).is_err());
}

#[test]
fn weighted_params_match_scalar_loop() {
    let mut r = rng(16);
    let f = random_fisher(&mut r, 40);
    let theta = ParamVector::from_vec(random_vec(&mut r, 40, 3.0));
    let w = fisher_weighted_params(&f, &theta).unwrap();
    for k in 0..40 {
        assert_eq!(w[k], f[k] * theta[k]);
    }
    assert_eq!(fisher_weighted_params(&FisherDiag::new(vec![1.0; 40]).unwrap(), &theta).unwrap(), theta);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entries_nonnegative_and_finite(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let mut r = rng(seed);
        let spec = random_spec(&mut r, 100);
        let theta = random_params(&mut r, &spec, scale);
        let n = r.random_range(1..40);
        let ds = random_dataset(&mut r, n, spec.input_dim(), spec.classes());
        let f = estimate_fisher_diag(&spec, &theta, &ds, None).unwrap();
        prop_assert!(f.iter().all(|&x| x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn duplication_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = random_spec(&mut r, 100);
        let theta = random_params(&mut r, &spec, 1.0);
        let n = r.random_range(1..20);
        let ds = random_dataset(&mut r, n, spec.input_dim(), spec.classes());
        let twice: Vec<usize> = (0..n).flat_map(|i| [i, i]).collect();
        let a = estimate_fisher_diag(&spec, &theta, &ds, None).unwrap();
        let b = estimate_fisher_diag(&spec, &theta, &ds.select(&twice).unwrap(), None).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-13 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn subsample_is_deterministic(seed in any::<u64>(), limit in 1usize..30) {
        let mut r = rng(seed);
        let spec = random_spec(&mut r, 60);
        let theta = random_params(&mut r, &spec, 1.0);
        let ds = random_dataset(&mut r, 25, spec.input_dim(), spec.classes());
        let s = Some(FisherSampling { limit, seed });
        prop_assert_eq!(
            estimate_fisher_diag(&spec, &theta, &ds, s).unwrap(),
            estimate_fisher_diag(&spec, &theta, &ds, s).unwrap()
        );
    }
}
