//! Experiment front door: configs, runs, grid searches and summary tables.
//!
//! The `fedcurv` binary is a thin wrapper over [`cli_run`], [`cli_grid`] and
//! [`cli_table`].

mod config;
mod experiment;
mod grid;
mod table;

use std::path::{Path, PathBuf};

pub use config::{
    default_data_dir, DataSection, FisherSection, IdxSource, OutputSection, PartitionKind, PartitionSection,
    RunConfig, RunSection, DATA_DIR_ENV, DEFAULT_DATA_DIR, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS,
};
pub use experiment::{
    first_round_reaching, run_experiment, run_experiment_with, run_until, ExperimentData, MetricsRow,
    RunMetadata, RunResult, ThresholdHit, Timing,
};
pub use grid::{grid_search, grid_search_with, GridEntry, GridOutcome, GridParam, GridSpec};
pub use table::{SummaryRow, SummaryTable};

use crate::error::{Error, Result};

/// Process exit codes of the command-line front end.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const TARGET_NOT_REACHED: i32 = 3;
}

/// Maps an error to the exit code the CLI reports for it.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidSpec(_) => exit_code::CONFIG,
        _ => exit_code::FAILURE,
    }
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Overrides {
    fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(threads) = self.threads {
            cfg.run.threads = threads;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = Some(dir.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs one experiment and writes `metrics.csv` and `result.json`.
pub fn cli_run(config_path: &Path, overrides: &Overrides) -> Result<RunResult> {
    let cfg = overrides.apply(RunConfig::load(config_path)?)?;
    let result = run_experiment(&cfg)?;
    result.write_to(out_dir(&cfg))?;
    Ok(result)
}

/// Grid search; writes `grid.csv` and `grid.json` into the output directory.
pub fn cli_grid(config_path: &Path, spec: &GridSpec, overrides: &Overrides) -> Result<GridOutcome> {
    let cfg = overrides.apply(RunConfig::load(config_path)?)?;
    let data = ExperimentData::load(&cfg)?;
    let outcome = grid_search(&cfg, spec, &data)?;
    let dir = out_dir(&cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let csv = dir.join("grid.csv");
    std::fs::write(&csv, outcome.table()).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("grid.json");
    std::fs::write(&json, serde_json::to_string_pretty(&outcome)?).map_err(|e| Error::io(&json, e))?;
    Ok(outcome)
}

/// Summary table over result files.
pub fn cli_table<P: AsRef<Path>>(paths: &[P]) -> Result<SummaryTable> {
    if paths.is_empty() {
        return Err(Error::arg("results", "at least one result file is required"));
    }
    SummaryTable::from_files(paths)
}
