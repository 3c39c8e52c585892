use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedcurv::harness::{self, exit_code, GridParam, GridSpec, Overrides};

#[derive(Parser)]
#[command(name = "fedcurv", version, about = "Federated learning simulator: FedAvg, FedProx, FedCurv")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, writing metrics.csv and result.json.
    Run(Common),
    /// Search lambda or mu on a multiplicative grid.
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: GridParam,
        /// Accuracy whose rounds-to-reach is minimized; must be a configured threshold.
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 1.0)]
        base: f64,
        #[arg(long, default_value_t = -5, allow_hyphen_values = true)]
        k_min: i32,
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        k_max: i32,
    },
    /// Rounds-to-accuracy table over result.json files.
    Table {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(common) => harness::cli_run(&common.config, &common.overrides()).map(|r| {
            println!("{}", r.summary_line());
            exit_code::SUCCESS
        }),
        Command::Grid { common, param, target, base, k_min, k_max } => {
            let spec = GridSpec { param, target, base, k_min, k_max, prune: true };
            harness::cli_grid(&common.config, &spec, &common.overrides()).map(|g| {
                print!("{}", g.table());
                match g.best {
                    Some(best) => {
                        println!("best {}={best} ({} rounds)", param.name(), g.best_rounds.unwrap_or_default());
                        exit_code::SUCCESS
                    }
                    None => {
                        eprintln!("no {} value reached {target}; best accuracies are listed above", param.name());
                        exit_code::TARGET_NOT_REACHED
                    }
                }
            })
        }
        Command::Table { results, csv } => harness::cli_table(&results).map(|t| {
            print!("{}", if csv { t.to_csv() } else { t.to_text() });
            exit_code::SUCCESS
        }),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(harness::exit_code_for(&err) as u8)
        }
    }
}
