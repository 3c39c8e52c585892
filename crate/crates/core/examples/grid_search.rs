//! Two-phase multiplicative grid over FedCurv's lambda on synthetic data,
//! the same search the `fedcurv grid` subcommand runs.
//!
//! cargo run --release --example grid_search

use fedcurv::harness::{grid_search, ExperimentData, GridParam, GridSpec, RunConfig};
use fedcurv::Result;

const CONFIG: &str = r#"
[run]
algo = "fedcurv"
max_rounds = 30
thresholds = [0.8, 0.9]
seed = 0

[model]
layer_sizes = [20, 32, 10]

[hyper]
epochs = 5
batch_size = 32
learning_rate = 0.05

[partition]
nodes = 10

[data]
source = "synthetic"
classes = 10
per_class = 300
dim = 20
scale = 3.0
"#;

fn main() -> Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    let data = ExperimentData::load(&cfg)?;
    let mut spec = GridSpec::new(GridParam::Lambda, 0.8);
    spec.k_min = -3;
    spec.k_max = 1;
    let outcome = grid_search(&cfg, &spec, &data)?;
    print!("{}", outcome.table());
    match outcome.best {
        Some(best) => println!("best lambda {best} reaches 0.8 in {} rounds", outcome.best_rounds.unwrap_or(0)),
        None => println!("no lambda reached 0.8 within {} rounds", cfg.run.max_rounds),
    }
    Ok(())
}
