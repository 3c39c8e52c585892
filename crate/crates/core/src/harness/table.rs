//! Rounds-to-accuracy summary tables over finished runs.

use std::fmt::Write as _;
use std::path::Path;

use super::experiment::RunResult;
use crate::error::Result;

const MISSING: &str = "—";

/// One table row: a run's identity and its rounds per threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algo: String,
    pub params: String,
    pub epochs: usize,
    pub seed: u64,
    /// Aligned with [`SummaryTable::thresholds`].
    pub rounds: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    /// Descending, as in the usual rounds-to-accuracy layout.
    pub thresholds: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

fn params_label(r: &RunResult) -> String {
    use crate::objectives::Algorithm::*;
    match r.config.run.algo {
        FedAvg => String::new(),
        FedProx => format!("mu={}", r.config.hyper.mu),
        FedCurv => format!("lambda={}", r.config.hyper.lambda),
    }
}

impl SummaryTable {
    pub fn from_results(results: &[RunResult]) -> Self {
        let mut thresholds: Vec<f64> = results
            .iter()
            .flat_map(|r| r.config.run.thresholds.iter().copied())
            .collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut rows: Vec<SummaryRow> = results
            .iter()
            .map(|r| SummaryRow {
                algo: r.config.run.algo.name().to_string(),
                params: params_label(r),
                epochs: r.config.hyper.epochs,
                seed: r.config.run.seed,
                rounds: thresholds.iter().map(|&t| r.rounds_to(t)).collect(),
            })
            .collect();
        rows.sort_by(|a, b| {
            a.algo
                .cmp(&b.algo)
                .then(b.epochs.cmp(&a.epochs))
                .then(a.params.cmp(&b.params))
                .then(a.seed.cmp(&b.seed))
        });
        SummaryTable { thresholds, rows }
    }

    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let results = paths
            .iter()
            .map(RunResult::from_json_file)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_results(&results))
    }

    fn cell(r: Option<usize>) -> String {
        r.map_or_else(|| MISSING.to_string(), |r| r.to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("algo,params,E,seed");
        for t in &self.thresholds {
            write!(out, ",{t}").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{},{},{},{}", row.algo, row.params, row.epochs, row.seed).unwrap();
            for &r in &row.rounds {
                write!(out, ",{}", Self::cell(r)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text rendering.
    pub fn to_text(&self) -> String {
        let mut header = vec!["algo".to_string(), "params".into(), "E".into(), "seed".into()];
        header.extend(self.thresholds.iter().map(|t| t.to_string()));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![row.algo.clone(), row.params.clone(), row.epochs.to_string(), row.seed.to_string()];
                cells.extend(row.rounds.iter().map(|&r| Self::cell(r)));
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                std::iter::once(&header)
                    .chain(&body)
                    .map(|r| r[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(&body) {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
