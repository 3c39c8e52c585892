//! Federated learning on non-iid data with Fisher-weighted inter-node penalties.
//!
//! The crate simulates a synchronous federation of nodes that each hold a
//! shard of a classification dataset and train a small MLP locally. Three
//! local objectives are provided:
//!
//! - **FedAvg**: the node's own loss.
//! - **FedProx**: the loss plus an isotropic pull `(μ/2)‖θ − θ_t‖²` toward the
//!   round's starting model.
//! - **FedCurv**: the loss plus `λ Σ_{j≠s} (θ − θ_j)ᵀ diag(I_j)(θ − θ_j)`, a pull
//!   toward every other node's last parameters weighted per coordinate by that
//!   node's Fisher diagonal. The server only keeps the sums `u = Σ I_j` and
//!   `v = Σ I_j ⊙ θ_j`; nodes recover the "all but me" sums by subtraction.
//!
//! Module map:
//!
//! - [`model`]: MLP forward/backward over a flat [`ParamVector`], SGD, accuracy.
//! - [`fisher`]: empirical Fisher diagonal.
//! - [`objectives`]: penalties, their gradients and the anchor construction.
//! - [`orchestrator`]: rounds, aggregation, top-q sparsification, bandwidth ledger.
//! - [`data`]: IDX loading, synthetic blobs, iid and label-block partitions.
//! - [`harness`]: run configuration, experiments, grid search, summary tables.
//!
//! Everything is deterministic given the configured seeds, independent of the
//! worker thread count.

pub mod data;
pub mod error;
pub mod fisher;
pub mod harness;
pub mod model;
pub mod objectives;
pub mod orchestrator;

pub use data::Dataset;
pub use error::{Error, Result};
pub use fisher::FisherDiag;
pub use model::{Activation, Batch, ModelSpec, ParamVector};
pub use objectives::{Algorithm, CurvAnchor, HyperParams};
pub use orchestrator::{ServerState, Simulation, SparsityConfig};
