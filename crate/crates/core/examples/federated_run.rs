//! FedAvg, FedProx and FedCurv side by side on a non-iid synthetic
//! federation, driven round by round through `Simulation`.
//!
//! cargo run --release --example federated_run

use fedcurv::data::{partition_noniid, PartitionSpec, SynthSpec};
use fedcurv::model::param_init;
use fedcurv::orchestrator::RoundSetup;
use fedcurv::{Activation, Algorithm, HyperParams, ModelSpec, Result, Simulation};

fn main() -> Result<()> {
    let blobs = SynthSpec { classes: 10, per_class: 300, dim: 20, test_per_class: 100, scale: 3.0 };
    let train = blobs.train(1)?;
    let test = blobs.test(1)?;
    let spec = ModelSpec::new(vec![20, 32, 10], Activation::Relu)?;
    let rounds = 15;

    let runs = [
        ("FedAvg", Algorithm::FedAvg, 0.0, 0.0),
        ("FedProx mu=0.1", Algorithm::FedProx, 0.0, 0.1),
        ("FedCurv lambda=1", Algorithm::FedCurv, 1.0, 0.0),
    ];
    let mut curves = vec![];
    for (name, algo, lambda, mu) in runs {
        let part = partition_noniid(&train, &PartitionSpec { nodes: 10, blocks_per_node: 2, seed: 3 })?;
        let setup = RoundSetup {
            algo,
            spec: spec.clone(),
            hp: HyperParams { lambda, mu, epochs: 5, batch_size: 32, learning_rate: 0.05, ..Default::default() },
            sparsity: None,
            fisher_limit: None,
            seed: 0,
        };
        let mut sim = Simulation::new(setup, param_init(&spec, 0), part.shards, test.clone(), 1)?;
        let mut acc = vec![sim.evaluate()?.test_accuracy];
        for _ in 0..rounds {
            acc.push(sim.step()?.test_accuracy);
        }
        curves.push((name, acc));
    }

    print!("round");
    for (name, _) in &curves {
        print!("  {name:>16}");
    }
    println!();
    for r in 0..=rounds {
        print!("{r:>5}");
        for (_, acc) in &curves {
            print!("  {:>16.4}", acc[r]);
        }
        println!();
    }
    Ok(())
}
