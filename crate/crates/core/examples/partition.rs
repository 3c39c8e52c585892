//! Non-iid block partition of MNIST (or synthetic blobs when the IDX files
//! are absent): label makeup of each node's shard.
//!
//! cargo run --release --example partition [-- NODES]

use fedcurv::data::{load_idx, partition_iid, partition_noniid, synth_blobs, PartitionSpec};
use fedcurv::harness::default_data_dir;
use fedcurv::Result;

fn main() -> Result<()> {
    let nodes: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let dir = default_data_dir();
    let data = if dir.join("train-labels-idx1-ubyte").exists() {
        println!("MNIST from {}", dir.display());
        load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?
    } else {
        println!("no IDX files in {}; using synthetic blobs", dir.display());
        synth_blobs(10, 600, 20, 0)?
    };
    println!("{} samples, {} features, label counts {:?}", data.len(), data.dim(), data.label_histogram());

    let part = partition_noniid(&data, &PartitionSpec { nodes, blocks_per_node: 2, seed: 0 })?;
    println!(
        "\nnon-iid: {} blocks of {} samples, {} discarded",
        nodes * 2,
        part.block_size,
        part.discarded
    );
    for (i, shard) in part.shards.iter().enumerate().take(12) {
        let hist: Vec<String> = shard
            .label_histogram()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, c)| format!("{l}:{c}"))
            .collect();
        println!("  node {i:>3}: {} samples, labels {}", shard.len(), hist.join(" "));
    }
    if part.shards.len() > 12 {
        println!("  ...");
    }
    let mean_labels =
        part.shards.iter().map(|s| s.distinct_labels()).sum::<usize>() as f64 / part.shards.len() as f64;
    println!("  mean distinct labels per shard: {mean_labels:.2}");

    let iid = partition_iid(&data, nodes, 0)?;
    println!("\niid: {} shards of {}, node 0 labels {:?}", nodes, iid.block_size, iid.shards[0].label_histogram());
    Ok(())
}
