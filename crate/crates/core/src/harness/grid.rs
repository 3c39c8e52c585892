//! Two-phase multiplicative grid search over FedCurv's λ or FedProx's μ.
//!
//! Phase 1 scans `v₀·10^k` for `k` in a range; phase 2 refines the winner
//! `v*` with `{v*/2, v*, 2v*}`. The score is the number of rounds to reach
//! the target accuracy ("not reached" ranks last), ties going to the smaller
//! value. Phase 1 runs from the largest value down; the winner does not
//! depend on the order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::experiment::{run_until, ExperimentData, RunResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridParam {
    Lambda,
    Mu,
}

impl GridParam {
    pub fn name(self) -> &'static str {
        match self {
            GridParam::Lambda => "lambda",
            GridParam::Mu => "mu",
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: f64) {
        match self {
            GridParam::Lambda => cfg.hyper.lambda = value,
            GridParam::Mu => cfg.hyper.mu = value,
        }
    }
}

impl std::str::FromStr for GridParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(GridParam::Lambda),
            "mu" => Ok(GridParam::Mu),
            other => Err(Error::config("param", format!("expected lambda or mu, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub param: GridParam,
    pub target: f64,
    pub base: f64,
    pub k_min: i32,
    pub k_max: i32,
    /// Cap each run at the incumbent's round count, which cannot change the
    /// winner but avoids running losers to `max_rounds`.
    pub prune: bool,
}

impl GridSpec {
    pub fn new(param: GridParam, target: f64) -> Self {
        GridSpec {
            param,
            target,
            base: 1.0,
            k_min: -5,
            k_max: 1,
            prune: true,
        }
    }

    /// Phase-1 values, largest first.
    pub fn phase1_values(&self) -> Vec<f64> {
        (self.k_min..=self.k_max)
            .rev()
            .map(|k| self.base * 10f64.powi(k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub phase: u8,
    pub value: f64,
    /// Rounds to the target, `None` if not reached within `round_cap`.
    pub rounds: Option<usize>,
    pub round_cap: usize,
    pub best_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub spec: GridSpec,
    /// `None` when no value reached the target.
    pub best: Option<f64>,
    pub best_rounds: Option<usize>,
    pub entries: Vec<GridEntry>,
}

impl GridOutcome {
    pub fn table(&self) -> String {
        let mut out = format!(
            "phase,{},rounds_to_{},round_cap,best_acc\n",
            self.spec.param.name(),
            self.spec.target
        );
        for e in &self.entries {
            let rounds = e.rounds.map_or_else(|| "-".to_string(), |r| r.to_string());
            writeln!(out, "{},{},{},{},{}", e.phase, e.value, rounds, e.round_cap, e.best_accuracy).unwrap();
        }
        out
    }
}

/// `a` beats `b` if it needs fewer rounds, or as many with a smaller value.
fn better(a: (Option<usize>, f64), b: (Option<usize>, f64)) -> bool {
    let key = |r: Option<usize>| r.unwrap_or(usize::MAX);
    (key(a.0), a.1) < (key(b.0), b.1)
}

/// Runs the search with `run` executing each candidate config up to the
/// target accuracy. Exposed separately so the search logic can be driven
/// without training.
pub fn grid_search_with<F>(base: &RunConfig, spec: &GridSpec, mut run: F) -> Result<GridOutcome>
where
    F: FnMut(&RunConfig) -> Result<RunResult>,
{
    if !(spec.target > 0.0 && spec.target < 1.0) {
        return Err(Error::config("target", format!("{} is outside (0, 1)", spec.target)));
    }
    if !base.run.thresholds.contains(&spec.target) {
        return Err(Error::config(
            "target",
            format!("{} is not one of run.thresholds {:?}", spec.target, base.run.thresholds),
        ));
    }
    if spec.k_min > spec.k_max {
        return Err(Error::config("k_min", "must not exceed k_max"));
    }
    if !(spec.base.is_finite() && spec.base > 0.0) {
        return Err(Error::config("base", "must be finite and > 0"));
    }

    let mut entries: Vec<GridEntry> = Vec::new();
    let mut incumbent: Option<(Option<usize>, f64)> = None;
    let mut evaluate = |phase: u8, value: f64, incumbent: &mut Option<(Option<usize>, f64)>| -> Result<()> {
        let mut cfg = base.clone();
        spec.param.apply(&mut cfg, value);
        if spec.prune {
            if let Some((Some(best_rounds), best_value)) = *incumbent {
                let cap = if value < best_value { best_rounds } else { best_rounds.saturating_sub(1) };
                cfg.run.max_rounds = cfg.run.max_rounds.min(cap);
            }
        }
        let result = run(&cfg)?;
        let rounds = result.rounds_to(spec.target);
        entries.push(GridEntry {
            phase,
            value,
            rounds,
            round_cap: cfg.run.max_rounds,
            best_accuracy: result.best_accuracy(),
        });
        if incumbent.is_none_or(|inc| better((rounds, value), inc)) {
            *incumbent = Some((rounds, value));
        }
        Ok(())
    };

    for value in spec.phase1_values() {
        evaluate(1, value, &mut incumbent)?;
    }
    let (_, star) = incumbent.expect("phase 1 scans at least one value");
    if incumbent.is_some_and(|(r, _)| r.is_some()) {
        for value in [star / 2.0, star * 2.0] {
            evaluate(2, value, &mut incumbent)?;
        }
    }
    let (best_rounds, best_value) = incumbent.expect("at least one run");
    Ok(GridOutcome {
        spec: spec.clone(),
        best: best_rounds.map(|_| best_value),
        best_rounds,
        entries,
    })
}

/// Grid search on preloaded data; each candidate stops once it reaches the target.
pub fn grid_search(base: &RunConfig, spec: &GridSpec, data: &ExperimentData) -> Result<GridOutcome> {
    grid_search_with(base, spec, |cfg| run_until(cfg, data, Some(spec.target)))
}
