//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use fedcurv::data::Dataset;
use fedcurv::model::{backward, Activation, Batch, ModelSpec, ParamVector};
use fedcurv::FisherDiag;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_params(rng: &mut ChaCha8Rng, spec: &ModelSpec, scale: f64) -> ParamVector {
    ParamVector::from_vec(random_vec(rng, spec.param_count(), scale))
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Dataset {
    let inputs = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(inputs, labels, classes).unwrap()
}

/// A random small architecture with at most `max_params` parameters.
pub fn random_spec(rng: &mut ChaCha8Rng, max_params: usize) -> ModelSpec {
    loop {
        let depth = rng.random_range(0..3);
        let mut sizes = vec![rng.random_range(1..8)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..8));
        }
        sizes.push(rng.random_range(2..6));
        let act = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh };
        let spec = ModelSpec::new(sizes, act).unwrap();
        if spec.param_count() <= max_params {
            return spec;
        }
    }
}

/// Per-sample, scalar-loop forward pass. Returns the logits and every
/// hidden pre-activation (used to detect ReLU kinks).
pub fn naive_forward(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut h = x.to_vec();
    let mut pre = Vec::new();
    let n_layers = spec.layer_sizes.len() - 1;
    let mut offset = 0;
    for l in 0..n_layers {
        let (fan_in, fan_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let bias_at = offset + fan_in * fan_out;
        let mut z = vec![0.0; fan_out];
        for i in 0..fan_out {
            let mut acc = theta[bias_at + i];
            for j in 0..fan_in {
                acc += theta[offset + i * fan_in + j] * h[j];
            }
            z[i] = acc;
        }
        offset = bias_at + fan_out;
        if l + 1 < n_layers {
            pre.extend_from_slice(&z);
            h = z
                .iter()
                .map(|&v| match spec.activation {
                    Activation::Relu => v.max(0.0),
                    Activation::Tanh => v.tanh(),
                })
                .collect();
        } else {
            h = z;
        }
    }
    (h, pre)
}

pub fn naive_sample_loss(spec: &ModelSpec, theta: &[f64], x: &[f64], label: usize) -> f64 {
    let (logits, _) = naive_forward(spec, theta, x);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn naive_loss(spec: &ModelSpec, theta: &[f64], batch: Batch<'_>) -> f64 {
    let n = batch.len();
    (0..n)
        .map(|r| {
            let x: Vec<f64> = batch.inputs.row(r).to_vec();
            naive_sample_loss(spec, theta, &x, batch.labels[r])
        })
        .sum::<f64>()
        / n as f64
}

/// Hidden-unit signs at θ; a change under perturbation means the finite
/// difference straddles a ReLU kink.
pub fn relu_pattern(spec: &ModelSpec, theta: &[f64], batch: Batch<'_>) -> Vec<bool> {
    (0..batch.len())
        .flat_map(|r| {
            let x: Vec<f64> = batch.inputs.row(r).to_vec();
            naive_forward(spec, theta, &x).1.into_iter().map(|z| z > 0.0)
        })
        .collect()
}

/// Central difference of `f` along coordinate `k`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, theta: &[f64], k: usize, h: f64) -> f64 {
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so coordinates whose gradient is
/// numerically zero compare on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Fisher diagonal by looping over samples and squaring single-sample gradients.
pub fn naive_fisher(spec: &ModelSpec, theta: &ParamVector, ds: &Dataset) -> Vec<f64> {
    let mut acc = vec![0.0; theta.len()];
    for r in 0..ds.len() {
        let g = backward(spec, theta, ds.slice(r, r + 1)).unwrap();
        for (a, gk) in acc.iter_mut().zip(g.iter()) {
            *a += gk * gk;
        }
    }
    acc.iter().map(|a| a / ds.len() as f64).collect()
}

/// `λ Σ_j (θ − θ_j)ᵀ diag(I_j) (θ − θ_j)`, summed node by node.
pub fn direct_curv_penalty(theta: &[f64], others: &[(FisherDiag, ParamVector)], lambda: f64) -> f64 {
    lambda
        * others
            .iter()
            .map(|(fisher, anchor)| {
                theta
                    .iter()
                    .zip(anchor.iter())
                    .zip(fisher.iter())
                    .map(|((t, a), f)| (t - a) * f * (t - a))
                    .sum::<f64>()
            })
            .sum::<f64>()
}

/// The θ-independent term the expanded form drops: `λ Σ_j θ_jᵀ diag(I_j) θ_j`.
pub fn dropped_constant(others: &[(FisherDiag, ParamVector)], lambda: f64) -> f64 {
    lambda
        * others
            .iter()
            .map(|(fisher, anchor)| anchor.iter().zip(fisher.iter()).map(|(a, f)| a * f * a).sum::<f64>())
            .sum::<f64>()
}

/// Gradient of the direct form, `2λ Σ_j I_j ⊙ (θ − θ_j)`.
pub fn direct_curv_grad(theta: &[f64], others: &[(FisherDiag, ParamVector)], lambda: f64) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    for (fisher, anchor) in others {
        for k in 0..theta.len() {
            g[k] += 2.0 * lambda * fisher[k] * (theta[k] - anchor[k]);
        }
    }
    g
}

pub fn random_fisher(rng: &mut ChaCha8Rng, len: usize) -> FisherDiag {
    FisherDiag::new((0..len).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        let scale = x.abs().max(y.abs()).max(1.0);
        assert!((x - y).abs() <= tol * scale, "{what}[{k}]: {x} vs {y}");
    }
}

/// Directory with the MNIST IDX files: `$FEDCURV_DATA_DIR`, else the
/// workspace's `data/mnist`.
pub fn mnist_dir() -> std::path::PathBuf {
    std::env::var_os("FEDCURV_DATA_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist_available() -> bool {
    mnist_dir().join("train-images-idx3-ubyte").exists()
}
