//! Run configuration.
//!
//! Configs are TOML documents with one table per subsystem. Every table
//! rejects unknown keys, so a typo such as `lamda` aborts the run before any
//! computation. Grammar:
//!
//! ```toml
//! [run]
//! algo = "fedcurv"              # fedavg | fedprox | fedcurv
//! max_rounds = 60
//! thresholds = [0.85, 0.90, 0.95]
//! seed = 0
//! threads = 1                   # optional, worker threads for node training
//! early_stop = true             # optional, stop once the top threshold is reached
//!
//! [model]
//! layer_sizes = [784, 64, 10]
//! activation = "relu"           # relu | tanh
//!
//! [hyper]
//! lambda = 1.0                  # FedCurv
//! mu = 0.0                      # FedProx
//! epochs = 10
//! batch_size = 256
//! learning_rate = 0.01
//! participation = 1.0           # must be 1.0
//!
//! [partition]
//! kind = "noniid"               # noniid | iid
//! nodes = 8
//! blocks_per_node = 2
//! seed = 7                      # optional, derived from run.seed when absent
//!
//! [data]
//! source = "idx"                # idx | synthetic
//! dir = "data/mnist"            # optional, else $FEDCURV_DATA_DIR, else ./data/mnist
//!
//! [fisher]                      # optional
//! sample_limit = 2000
//!
//! [sparsity]                    # optional, FedCurv only
//! q = 0.5
//!
//! [output]                      # optional
//! dir = "out/fedcurv"
//! ```
//!
//! A synthetic data table instead reads
//! `source = "synthetic"`, `classes`, `per_class`, `dim` and optionally
//! `test_per_class` and `scale`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::objectives::{Algorithm, HyperParams};
use crate::orchestrator::{derive_seed, SparsityConfig};

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "FEDCURV_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

const PARTITION_STREAM: u64 = 0x7061_7274;
const INIT_STREAM: u64 = 0x696e_6974;
const SYNTH_STREAM: u64 = 0x7379_6e74;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algo: Algorithm,
    pub max_rounds: usize,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Execution setting only: results do not depend on it, so it is not
    /// echoed into result files.
    #[serde(default = "default_threads", skip_serializing)]
    pub threads: usize,
    #[serde(default = "default_true")]
    pub early_stop: bool,
}

fn default_thresholds() -> Vec<f64> {
    vec![0.85, 0.90, 0.95]
}

fn default_threads() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    #[default]
    Noniid,
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    #[serde(default)]
    pub kind: PartitionKind,
    pub nodes: usize,
    #[serde(default = "default_blocks")]
    pub blocks_per_node: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_blocks() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub train_images: Option<PathBuf>,
    #[serde(default)]
    pub train_labels: Option<PathBuf>,
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSection {
    Idx(IdxSource),
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FisherSection {
    #[serde(default)]
    pub sample_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSpec,
    pub hyper: HyperParams,
    pub partition: PartitionSection,
    pub data: DataSection,
    #[serde(default)]
    pub fisher: FisherSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<SparsityConfig>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let mut field = e.span().map_or_else(String::new, |s| field_at(text, s.start));
            // Tagged tables report the whole table; the key is in the message.
            if let Some(key) = e.message().strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
                if !field.ends_with(key) {
                    field = if field.is_empty() { key.to_string() } else { format!("{field}.{key}") };
                }
            }
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let th = &self.run.thresholds;
        if let Some(t) = th.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::config("run.thresholds", format!("{t} is outside (0, 1)")));
        }
        if th.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("run.thresholds", "must be strictly increasing"));
        }
        if self.run.threads == 0 {
            return Err(Error::config("run.threads", "must be at least 1"));
        }
        self.model
            .validate()
            .map_err(|e| Error::config("model.layer_sizes", e.to_string()))?;
        self.hyper.validate()?;
        if self.partition.nodes == 0 {
            return Err(Error::config("partition.nodes", "must be at least 1"));
        }
        if self.partition.blocks_per_node == 0 {
            return Err(Error::config("partition.blocks_per_node", "must be at least 1"));
        }
        if let DataSection::Synthetic(s) = &self.data {
            if s.classes == 0 || s.per_class == 0 || s.dim == 0 || s.test_per_class == 0 {
                return Err(Error::config("data", "synthetic classes, per_class, dim and test_per_class must be positive"));
            }
            if !(s.scale.is_finite() && s.scale > 0.0) {
                return Err(Error::config("data.scale", "must be finite and > 0"));
            }
        }
        if self.fisher.sample_limit == Some(0) {
            return Err(Error::config("fisher.sample_limit", "must be at least 1"));
        }
        if let Some(sp) = &self.sparsity {
            sp.validate()?;
            if self.run.algo != Algorithm::FedCurv {
                return Err(Error::config("sparsity", "only applies to fedcurv"));
            }
        }
        Ok(())
    }

    /// Fills every defaulted or derived field so the config echoes the run exactly.
    pub fn resolved(&self) -> RunConfig {
        let mut cfg = self.clone();
        if cfg.partition.seed.is_none() {
            cfg.partition.seed = Some(derive_seed(cfg.run.seed, PARTITION_STREAM));
        }
        if let DataSection::Idx(src) = &mut cfg.data {
            let dir = src.dir.clone().unwrap_or_else(default_data_dir);
            src.train_images.get_or_insert_with(|| dir.join(TRAIN_IMAGES));
            src.train_labels.get_or_insert_with(|| dir.join(TRAIN_LABELS));
            src.test_images.get_or_insert_with(|| dir.join(TEST_IMAGES));
            src.test_labels.get_or_insert_with(|| dir.join(TEST_LABELS));
            src.dir = Some(dir);
        }
        cfg
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.run.seed, INIT_STREAM)
    }

    pub fn synth_seed(&self) -> u64 {
        derive_seed(self.run.seed, SYNTH_STREAM)
    }

    /// Replaces the global seed. Init, synthetic-data and (unless set
    /// explicitly) partition seeds all follow it.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.run.seed = seed;
        self
    }
}

/// Dotted key path (`section.key`) of the TOML line containing byte `pos`.
fn field_at(text: &str, pos: usize) -> String {
    let mut section = String::new();
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        let end = start + line.len();
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|l| l.split(']').next()) {
            section = name.trim().to_string();
        }
        if pos < end {
            return match trimmed.split_once('=') {
                Some((key, _)) if !trimmed.starts_with('[') => {
                    let key = key.trim().trim_matches('"');
                    if section.is_empty() { key.to_string() } else { format!("{section}.{key}") }
                }
                _ => section,
            };
        }
        start = end;
    }
    section
}

pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}
