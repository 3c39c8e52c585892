use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::Result;

/// Distance of each class mean from the origin.
pub const DEFAULT_BLOB_SCALE: f64 = 5.0;

/// Fixed stream for class means when `dim < classes`, so train and test
/// draws with different seeds share the same clusters.
const MEAN_SEED: u64 = 0x6d65_616e_7321;

/// Parameters of a synthetic train/test pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_test_per_class() -> usize {
    100
}

fn default_scale() -> f64 {
    DEFAULT_BLOB_SCALE
}

impl SynthSpec {
    pub fn train(&self, seed: u64) -> Result<Dataset> {
        synth_blobs_scaled(self.classes, self.per_class, self.dim, self.scale, seed)
    }

    pub fn test(&self, seed: u64) -> Result<Dataset> {
        synth_blobs_scaled(
            self.classes,
            self.test_per_class,
            self.dim,
            self.scale,
            seed ^ 0x7465_7374,
        )
    }
}

fn class_means(classes: usize, dim: usize, scale: f64) -> Array2<f64> {
    let mut means = Array2::zeros((classes, dim));
    if dim >= classes {
        for c in 0..classes {
            means[[c, c]] = scale;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(MEAN_SEED);
        for mut row in means.rows_mut() {
            row.mapv_inplace(|_| StandardNormal.sample(&mut rng));
            let norm = row.dot(&row).sqrt().max(f64::MIN_POSITIVE);
            row.mapv_inplace(|x| x * scale / norm);
        }
    }
    means
}

/// Gaussian clusters with unit noise around simplex vertices scaled by
/// [`DEFAULT_BLOB_SCALE`]. Samples are grouped by class.
pub fn synth_blobs(classes: usize, per_class: usize, dim: usize, seed: u64) -> Result<Dataset> {
    synth_blobs_scaled(classes, per_class, dim, DEFAULT_BLOB_SCALE, seed)
}

pub fn synth_blobs_scaled(
    classes: usize,
    per_class: usize,
    dim: usize,
    scale: f64,
    seed: u64,
) -> Result<Dataset> {
    let means = class_means(classes, dim, scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let mut inputs = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for k in 0..per_class {
            let mut row = inputs.row_mut(c * per_class + k);
            for (x, &m) in row.iter_mut().zip(means.row(c)) {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *x = m + noise;
            }
            labels.push(c);
        }
    }
    Dataset::new(inputs, labels, classes)
}
