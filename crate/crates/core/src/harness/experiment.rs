use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataSection, PartitionKind, RunConfig};
use crate::data::{load_idx, partition_iid, partition_noniid, Dataset, Partition, PartitionSpec};
use crate::error::{Error, Result};
use crate::model::param_init;
use crate::orchestrator::{BandwidthLedger, RoundMetrics, RoundSetup, Simulation};

/// Train and test sets of a run, loaded once and shareable across runs.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
}

impl ExperimentData {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let cfg = cfg.resolved();
        match &cfg.data {
            DataSection::Idx(src) => {
                let path = |p: &Option<std::path::PathBuf>| p.clone().expect("resolved config");
                Ok(ExperimentData {
                    train: load_idx(path(&src.train_images), path(&src.train_labels))?,
                    test: load_idx(path(&src.test_images), path(&src.test_labels))?,
                })
            }
            DataSection::Synthetic(s) => Ok(ExperimentData {
                train: s.train(cfg.synth_seed())?,
                test: s.test(cfg.synth_seed())?,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub test_accuracy: f64,
    pub train_loss: f64,
    /// Cumulative upload elements (values plus index slots) over all nodes.
    pub up_elems: u64,
    /// Cumulative download elements over all nodes.
    pub down_elems: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdHit {
    pub threshold: f64,
    /// First round whose test accuracy reaches the threshold; `None` if never.
    pub round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub param_count: usize,
    pub nodes: usize,
    pub shard_sizes: Vec<usize>,
    /// Samples per label block (non-iid) or per shard (iid).
    pub block_size: usize,
    pub discarded_samples: usize,
    pub test_samples: usize,
    /// `None` means the full shard.
    pub fisher_sample_limit: Option<usize>,
    pub stop_accuracy: Option<f64>,
    /// Round whose local training produced non-finite parameters; the run
    /// ends there and later thresholds count as not reached.
    pub diverged_at: Option<usize>,
    pub notes: Vec<String>,
}

/// Wall-clock data; the only part of a result that is not a pure function of the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub rows: Vec<MetricsRow>,
    pub rounds_to_threshold: Vec<ThresholdHit>,
    pub ledger: BandwidthLedger,
    pub metadata: RunMetadata,
    pub timing: Timing,
}

const NOTES: &[&str] = &[
    "train_loss is the global model's mean cross-entropy over all node shards; penalties and the FedCurv additive constant are excluded",
    "fisher is the empirical diagonal at observed labels",
    "theta_mean is the unweighted mean of node parameters",
    "idx pixels are scaled by 1/255 without further normalization",
    "up_elems counts value elements plus sparse index slots",
    "fedcurv with lambda = 0 exchanges no Fisher terms",
];

impl RunResult {
    pub fn best_accuracy(&self) -> f64 {
        self.rows.iter().map(|r| r.test_accuracy).fold(0.0, f64::max)
    }

    pub fn completed_rounds(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn rounds_to(&self, threshold: f64) -> Option<usize> {
        first_round_reaching(&self.rows, threshold)
    }

    /// `metrics.csv` contents.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("round,test_acc,train_loss,up_elems,down_elems\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.round, r.test_accuracy, r.train_loss, r.up_elems, r.down_elems
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedResult {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Writes `metrics.csv` and `result.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("metrics.csv");
        std::fs::write(&csv, self.metrics_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join("result.json");
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        let c = &self.config;
        let diverged = self
            .metadata
            .diverged_at
            .map_or_else(String::new, |r| format!(", diverged in round {r}"));
        let mut line = format!(
            "{} lambda={} mu={} E={} seed={}:",
            c.run.algo, c.hyper.lambda, c.hyper.mu, c.hyper.epochs, c.run.seed
        );
        for hit in &self.rounds_to_threshold {
            match hit.round {
                Some(r) => write!(line, " {}@{}", hit.threshold, r).unwrap(),
                None => write!(line, " {}@-", hit.threshold).unwrap(),
            }
        }
        let last = self.rows.last().expect("round 0 is always present");
        write!(
            line,
            " (final acc {:.4} after {} rounds{diverged})",
            last.test_accuracy,
            self.completed_rounds()
        )
        .unwrap();
        line
    }
}

pub fn first_round_reaching(rows: &[MetricsRow], threshold: f64) -> Option<usize> {
    rows.iter().find(|r| r.test_accuracy >= threshold).map(|r| r.round)
}

fn partition(cfg: &RunConfig, train: &Dataset) -> Result<Partition> {
    let seed = cfg.partition.seed.expect("resolved config");
    match cfg.partition.kind {
        PartitionKind::Noniid => partition_noniid(
            train,
            &PartitionSpec {
                nodes: cfg.partition.nodes,
                blocks_per_node: cfg.partition.blocks_per_node,
                seed,
            },
        ),
        PartitionKind::Iid => partition_iid(train, cfg.partition.nodes, seed),
    }
}

/// Loads the configured data and runs it.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let data = ExperimentData::load(cfg)?;
    run_experiment_with(cfg, &data)
}

/// Runs on preloaded data with the configured early stop.
pub fn run_experiment_with(cfg: &RunConfig, data: &ExperimentData) -> Result<RunResult> {
    let stop = if cfg.run.early_stop {
        cfg.run.thresholds.last().copied()
    } else {
        None
    };
    run_until(cfg, data, stop)
}

/// Runs until `max_rounds` or until test accuracy reaches `stop_accuracy`.
pub fn run_until(cfg: &RunConfig, data: &ExperimentData, stop_accuracy: Option<f64>) -> Result<RunResult> {
    let started = Instant::now();
    cfg.validate()?;
    let cfg = cfg.resolved();
    let spec = cfg.model.clone();
    for (name, ds) in [("train", &data.train), ("test", &data.test)] {
        if ds.dim() != spec.input_dim() {
            return Err(Error::config(
                "model.layer_sizes",
                format!("input size {} does not match {name} data dimension {}", spec.input_dim(), ds.dim()),
            ));
        }
        if ds.class_count() > spec.classes() {
            return Err(Error::config(
                "model.layer_sizes",
                format!("{} classes cannot fit {name} labels up to {}", spec.classes(), ds.class_count() - 1),
            ));
        }
    }
    let part = partition(&cfg, &data.train)?;
    let mut metadata = RunMetadata {
        param_count: spec.param_count(),
        nodes: part.shards.len(),
        shard_sizes: part.shards.iter().map(Dataset::len).collect(),
        block_size: part.block_size,
        discarded_samples: part.discarded,
        test_samples: data.test.len(),
        fisher_sample_limit: cfg.fisher.sample_limit,
        stop_accuracy,
        diverged_at: None,
        notes: NOTES.iter().map(|s| s.to_string()).collect(),
    };
    let setup = RoundSetup {
        algo: cfg.run.algo,
        spec: spec.clone(),
        hp: cfg.hyper.clone(),
        sparsity: cfg.sparsity,
        fisher_limit: cfg.fisher.sample_limit,
        seed: cfg.run.seed,
    };
    let theta0 = param_init(&spec, cfg.init_seed());
    let mut sim = Simulation::new(setup, theta0, part.shards, data.test.clone(), cfg.run.threads)?;

    let mut rows = vec![row(sim.evaluate()?, &sim.ledger)];
    while rows.len() <= cfg.run.max_rounds {
        if let Some(stop) = stop_accuracy {
            if rows.last().is_some_and(|r| r.test_accuracy >= stop) {
                break;
            }
        }
        match sim.step() {
            Ok(metrics) => rows.push(row(metrics, &sim.ledger)),
            Err(Error::Diverged { round, .. }) => {
                metadata.diverged_at = Some(round);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let rounds_to_threshold = cfg
        .run
        .thresholds
        .iter()
        .map(|&threshold| ThresholdHit {
            threshold,
            round: first_round_reaching(&rows, threshold),
        })
        .collect();
    Ok(RunResult {
        config: cfg,
        rows,
        rounds_to_threshold,
        ledger: sim.ledger,
        metadata,
        timing: Timing {
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    })
}

fn row(m: RoundMetrics, ledger: &BandwidthLedger) -> MetricsRow {
    let (up, down) = ledger.cumulative(m.round);
    MetricsRow {
        round: m.round,
        test_accuracy: m.test_accuracy,
        train_loss: m.train_loss,
        up_elems: up,
        down_elems: down,
    }
}
