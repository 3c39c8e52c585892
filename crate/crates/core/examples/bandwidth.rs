//! Per-round traffic of each algorithm, including top-q sparsified Fisher
//! uploads, on a small synthetic federation.
//!
//! cargo run --release --example bandwidth

use fedcurv::data::{partition_noniid, synth_blobs, PartitionSpec};
use fedcurv::model::param_init;
use fedcurv::orchestrator::{sparsify_topq, RoundSetup};
use fedcurv::{Activation, Algorithm, FisherDiag, HyperParams, ModelSpec, ParamVector, Result, Simulation, SparsityConfig};

fn main() -> Result<()> {
    let fisher = FisherDiag::new(vec![0.1, 0.4, 0.4, 0.2])?;
    let kept = sparsify_topq(&fisher, &ParamVector::from_vec(vec![1.0; 4]), SparsityConfig::new(0.5)?)?;
    println!("top-q of (0.1, 0.4, 0.4, 0.2) at q=0.5 keeps indices {:?}\n", kept.indices);

    let spec = ModelSpec::new(vec![8, 10, 4], Activation::Relu)?;
    let train = synth_blobs(4, 50, 8, 1)?;
    let test = synth_blobs(4, 20, 8, 2)?;
    let p = spec.param_count();
    println!("P = {p}, 4 nodes, 3 rounds");
    println!("{:<16} {:>10} {:>10} {:>10} {:>12} {:>12}", "setup", "down/node", "up values", "up index", "total up", "total down");
    let cases = [
        ("FedAvg", Algorithm::FedAvg, 0.0, None),
        ("FedProx", Algorithm::FedProx, 0.0, None),
        ("FedCurv", Algorithm::FedCurv, 1.0, None),
        ("FedCurv q=0.5", Algorithm::FedCurv, 1.0, Some(0.5)),
        ("FedCurv q=0.1", Algorithm::FedCurv, 1.0, Some(0.1)),
    ];
    for (name, algo, lambda, q) in cases {
        let part = partition_noniid(&train, &PartitionSpec { nodes: 4, blocks_per_node: 2, seed: 0 })?;
        let setup = RoundSetup {
            algo,
            spec: spec.clone(),
            hp: HyperParams { lambda, mu: 0.01, epochs: 1, batch_size: 16, ..Default::default() },
            sparsity: q.map(SparsityConfig::new).transpose()?,
            fisher_limit: None,
            seed: 0,
        };
        let mut sim = Simulation::new(setup, param_init(&spec, 0), part.shards, test.clone(), 1)?;
        for _ in 0..3 {
            sim.step()?;
        }
        let node = sim.ledger.rounds[0].nodes[0];
        let (up, down) = sim.ledger.cumulative(3);
        println!(
            "{name:<16} {:>10} {:>10} {:>10} {up:>12} {down:>12}",
            node.download, node.upload_values, node.upload_indices
        );
    }
    Ok(())
}
