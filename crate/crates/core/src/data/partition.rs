use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub nodes: usize,
    #[serde(default = "default_blocks")]
    pub blocks_per_node: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_blocks() -> usize {
    2
}

/// Node shards together with the source indices they were cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: Vec<Dataset>,
    /// Indices into the source dataset, one list per node, in shard row order.
    pub node_indices: Vec<Vec<usize>>,
    /// Samples per block (non-iid) or per shard (iid).
    pub block_size: usize,
    /// Samples dropped because they did not fill a whole block.
    pub discarded: usize,
}

/// Homogeneous-label block partition.
///
/// Sample indices are stably sorted by label and the first `K·m` of them are
/// cut into `K = nodes·blocks_per_node` contiguous blocks of `m = ⌊n/K⌋`
/// samples; the tail is dropped. Blocks are shuffled with the seeded RNG and
/// each node takes `blocks_per_node` consecutive blocks.
pub fn partition_noniid(ds: &Dataset, spec: &PartitionSpec) -> Result<Partition> {
    if spec.nodes == 0 {
        return Err(Error::arg("nodes", "must be at least 1"));
    }
    if spec.blocks_per_node == 0 {
        return Err(Error::arg("blocks_per_node", "must be at least 1"));
    }
    let blocks = spec.nodes * spec.blocks_per_node;
    let block_size = ds.len() / blocks;
    if block_size == 0 {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {blocks} nonempty blocks",
            ds.len()
        )));
    }

    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| ds.labels()[i]);

    let mut block_ids: Vec<usize> = (0..blocks).collect();
    block_ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let node_indices: Vec<Vec<usize>> = block_ids
        .chunks(spec.blocks_per_node)
        .map(|ids| {
            ids.iter()
                .flat_map(|&b| order[b * block_size..(b + 1) * block_size].iter().copied())
                .collect()
        })
        .collect();
    let shards = node_indices
        .iter()
        .map(|idx| ds.select(idx))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition {
        shards,
        node_indices,
        block_size,
        discarded: ds.len() - blocks * block_size,
    })
}

/// Seeded shuffle followed by an equal split; the remainder is dropped.
pub fn partition_iid(ds: &Dataset, nodes: usize, seed: u64) -> Result<Partition> {
    if nodes == 0 {
        return Err(Error::arg("nodes", "must be at least 1"));
    }
    if nodes > ds.len() {
        return Err(Error::InsufficientData(format!(
            "{nodes} nodes but only {} samples",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = ds.len() / nodes;
    let node_indices: Vec<Vec<usize>> = order.chunks_exact(size).take(nodes).map(<[usize]>::to_vec).collect();
    let shards = node_indices
        .iter()
        .map(|idx| ds.select(idx))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition {
        shards,
        node_indices,
        block_size: size,
        discarded: ds.len() - nodes * size,
    })
}
