//! Datasets, the IDX loader, synthetic blobs and node partitioning.

mod idx;
mod partition;
mod synth;

use ndarray::{s, Array2};
use crate::error::{check_len, Error, Result};
use crate::model::Batch;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use partition::{partition_iid, partition_noniid, Partition, PartitionSpec};
pub use synth::{synth_blobs, synth_blobs_scaled, SynthSpec, DEFAULT_BLOB_SCALE};

/// Row-major `n × D` inputs with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_len("dataset labels", inputs.nrows(), labels.len())?;
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
        Ok(Dataset {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn as_batch(&self) -> Batch<'_> {
        self.slice(0, self.len())
    }

    /// Rows `start..end` as a batch view.
    pub fn slice(&self, start: usize, end: usize) -> Batch<'_> {
        Batch {
            inputs: self.inputs.slice(s![start..end, ..]),
            labels: &self.labels[start..end],
        }
    }

    /// Copy of the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut inputs = Array2::zeros((indices.len(), self.dim()));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::arg("indices", format!("index {i} out of range for {} rows", self.len())));
            }
            inputs.row_mut(row).assign(&self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            inputs,
            labels,
            class_count: self.class_count,
        })
    }

    /// Gathers `indices` into reusable buffers, resizing them as needed.
    pub(crate) fn gather_into(&self, indices: &[usize], inputs: &mut Array2<f64>, labels: &mut Vec<usize>) {
        if inputs.nrows() != indices.len() || inputs.ncols() != self.dim() {
            *inputs = Array2::zeros((indices.len(), self.dim()));
        }
        labels.clear();
        for (row, &i) in indices.iter().enumerate() {
            inputs.row_mut(row).assign(&self.inputs.row(i));
            labels.push(self.labels[i]);
        }
    }

    /// Number of samples per class.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.class_count];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }

    pub fn distinct_labels(&self) -> usize {
        self.label_histogram().iter().filter(|&&c| c > 0).count()
    }
}
