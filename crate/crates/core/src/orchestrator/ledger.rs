use serde::{Deserialize, Serialize};

/// Scalars moved between the server and one node during one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeTraffic {
    /// Server → node value elements.
    pub download: u64,
    /// Node → server value elements.
    pub upload_values: u64,
    /// Node → server index slots (sparse uploads only).
    pub upload_indices: u64,
}

impl NodeTraffic {
    pub fn upload_total(&self) -> u64 {
        self.upload_values + self.upload_indices
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub round: usize,
    /// Indexed by node id.
    pub nodes: Vec<NodeTraffic>,
}

impl RoundTraffic {
    pub fn download(&self) -> u64 {
        self.nodes.iter().map(|n| n.download).sum()
    }

    pub fn upload(&self) -> u64 {
        self.nodes.iter().map(NodeTraffic::upload_total).sum()
    }
}

/// Per-round, per-node, per-direction element counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BandwidthLedger {
    pub rounds: Vec<RoundTraffic>,
}

impl BandwidthLedger {
    pub fn record(&mut self, round: usize, nodes: Vec<NodeTraffic>) {
        self.rounds.push(RoundTraffic { round, nodes });
    }

    pub fn round(&self, round: usize) -> Option<&RoundTraffic> {
        self.rounds.iter().find(|r| r.round == round)
    }

    /// Upload and download totals summed over all rounds up to and including `round`.
    pub fn cumulative(&self, round: usize) -> (u64, u64) {
        self.rounds
            .iter()
            .filter(|r| r.round <= round)
            .fold((0, 0), |(up, down), r| (up + r.upload(), down + r.download()))
    }
}
