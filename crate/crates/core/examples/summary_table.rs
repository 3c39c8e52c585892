//! Runs each algorithm at two local-epoch settings, writes the result files
//! and renders the rounds-to-accuracy table from them.
//!
//! cargo run --release --example summary_table [-- OUT_DIR]

use std::path::PathBuf;

use fedcurv::harness::{run_experiment, RunConfig, SummaryTable};
use fedcurv::Result;

fn config(algo: &str, stiffness: &str, epochs: usize) -> Result<RunConfig> {
    RunConfig::from_toml(&format!(
        r#"
[run]
algo = "{algo}"
max_rounds = 25
thresholds = [0.7, 0.8, 0.9]
seed = 0

[model]
layer_sizes = [20, 32, 10]

[hyper]
epochs = {epochs}
batch_size = 32
learning_rate = 0.05
{stiffness}

[partition]
nodes = 10

[data]
source = "synthetic"
classes = 10
per_class = 300
dim = 20
scale = 3.0
"#
    ))
}

fn main() -> Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| "out/summary".into(), PathBuf::from);
    let mut files = vec![];
    for epochs in [2, 5] {
        for (algo, stiffness) in [("fedavg", ""), ("fedprox", "mu = 0.1"), ("fedcurv", "lambda = 1.0")] {
            let result = run_experiment(&config(algo, stiffness, epochs)?)?;
            println!("{}", result.summary_line());
            let dir = out.join(format!("{algo}-e{epochs}"));
            result.write_to(&dir)?;
            files.push(dir.join("result.json"));
        }
    }
    let table = SummaryTable::from_files(&files)?;
    println!("\n{}", table.to_text());
    Ok(())
}
