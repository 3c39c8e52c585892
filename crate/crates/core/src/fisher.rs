//! Diagonal of the empirical Fisher information.
//!
//! For per-sample gradients `g_n` of the negative log-likelihood at the
//! observed label, the estimate is `(1/n) Σ g_n ⊙ g_n`. A dense layer's
//! per-sample weight gradient is the outer product `δ_n a_nᵀ`, so its square
//! is `δ_n² (a_n²)ᵀ` and the sum over a chunk of samples reduces to one matrix
//! product of the squared error signals with the squared layer inputs.

use std::ops::Deref;

use ndarray::linalg::general_mat_mul;
use ndarray::ArrayViewMut2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::model::{backprop, ModelSpec, ParamVector};

/// Samples per backprop chunk. Chunks are visited in dataset order.
const CHUNK: usize = 256;

/// Nonnegative per-coordinate Fisher information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FisherDiag(Vec<f64>);

impl FisherDiag {
    pub fn zeros(len: usize) -> Self {
        FisherDiag(vec![0.0; len])
    }

    /// Rejects negative or non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::arg(
                "fisher",
                format!("entry {i} is {v}, expected finite and >= 0"),
            ));
        }
        Ok(FisherDiag(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FisherDiag {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Optional subsampling of the dataset before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FisherSampling {
    pub limit: usize,
    pub seed: u64,
}

/// Row indices used for the estimate: all rows, or a seeded uniform subset
/// without replacement, in ascending order.
pub fn fisher_rows(n: usize, sampling: Option<FisherSampling>) -> Result<Vec<usize>> {
    match sampling {
        None => Ok((0..n).collect()),
        Some(s) if s.limit == 0 => Err(Error::arg("batch_limit", "must be at least 1")),
        Some(s) if s.limit >= n => Ok((0..n).collect()),
        Some(s) => {
            let mut rows = index::sample(&mut ChaCha8Rng::seed_from_u64(s.seed), n, s.limit).into_vec();
            rows.sort_unstable();
            Ok(rows)
        }
    }
}

/// Empirical Fisher diagonal of `dataset` at `theta`.
pub fn estimate_fisher_diag(
    spec: &ModelSpec,
    theta: &ParamVector,
    dataset: &Dataset,
    sampling: Option<FisherSampling>,
) -> Result<FisherDiag> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len("parameter vector", spec.param_count(), theta.len())?;
    check_len("input dimension", spec.input_dim(), dataset.dim())?;
    let rows = fisher_rows(dataset.len(), sampling)?;

    let layers = spec.layers();
    let mut acc = vec![0.0; theta.len()];
    let mut inputs = ndarray::Array2::zeros((0, 0));
    let mut labels = Vec::new();
    for chunk in rows.chunks(CHUNK) {
        let batch = if chunk.len() == dataset.len() || is_contiguous(chunk) {
            dataset.slice(chunk[0], chunk[0] + chunk.len())
        } else {
            dataset.gather_into(chunk, &mut inputs, &mut labels);
            crate::model::Batch {
                inputs: inputs.view(),
                labels: &labels,
            }
        };
        if let Some(&label) = batch.labels.iter().find(|&&l| l >= spec.classes()) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: spec.classes(),
            });
        }
        let bp = backprop(spec, theta, batch);
        for (l, layer) in layers.iter().enumerate() {
            let delta_sq = bp.deltas[l].mapv(|d| d * d);
            let input_sq = bp.layer_input(l).mapv(|a| a * a);
            let mut acc_w = ArrayViewMut2::from_shape(
                (layer.fan_out, layer.fan_in),
                &mut acc[layer.weight_range()],
            )
            .expect("layer view matches layout");
            general_mat_mul(1.0, &delta_sq.t(), &input_sq, 1.0, &mut acc_w);
            for (dst, col) in acc[layer.bias_range()].iter_mut().zip(delta_sq.columns()) {
                *dst += col.sum();
            }
        }
    }
    let scale = 1.0 / rows.len() as f64;
    acc.iter_mut().for_each(|x| *x *= scale);
    Ok(FisherDiag(acc))
}

fn is_contiguous(rows: &[usize]) -> bool {
    rows.windows(2).all(|w| w[1] == w[0] + 1)
}

/// Elementwise `I ⊙ θ`.
pub fn fisher_weighted_params(fisher: &FisherDiag, theta: &ParamVector) -> Result<ParamVector> {
    check_len("fisher-weighted parameters", fisher.len(), theta.len())?;
    Ok(ParamVector::from_vec(
        fisher.iter().zip(theta.iter()).map(|(i, t)| i * t).collect(),
    ))
}
