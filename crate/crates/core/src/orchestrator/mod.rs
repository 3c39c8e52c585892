//! Synchronous round loop of the simulated federation.
//!
//! Each round the server broadcasts `θ_t` (and, for FedCurv, the aggregates
//! `u_t = Σ_j I_j` and `v_t = Σ_j I_j ⊙ θ_j`), every node trains locally for
//! `E` epochs, uploads its parameters (and Fisher terms), and the server
//! replaces its state by the new mean and sums. The server never keeps
//! per-node vectors; each node keeps its own last upload so it can subtract
//! itself from the next broadcast.

mod ledger;
mod sparsify;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::fisher::{estimate_fisher_diag, fisher_weighted_params, FisherDiag, FisherSampling};
use crate::model::{dataset_loss_sum, evaluate, sgd_step_in_place, Batch, ModelSpec, ParamVector};
use crate::objectives::{
    build_curv_anchor, local_objective_step, Algorithm, CurvAnchor, HyperParams, ObjectiveContext,
};

pub use ledger::{BandwidthLedger, NodeTraffic, RoundTraffic};
pub use sparsify::{sparsify_topq, SparseFisher, SparsityConfig};

/// SplitMix64 finalizer; derives independent seeds from a base seed and a stream tag.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const ROUND_STREAM: u64 = 0x0072_6f75_6e64;
const FISHER_STREAM: u64 = 0x6669_7368_6572;

/// Seed of the local shuffles of `node` in `round`: `round_seed ⊕ node_id`.
pub fn node_seed(run_seed: u64, round: usize, node: usize) -> u64 {
    derive_seed(run_seed, ROUND_STREAM.wrapping_add(round as u64)) ^ node as u64
}

/// Aggregates held by the server between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    /// Number of completed rounds.
    pub round: usize,
    pub theta_mean: ParamVector,
    /// Σ of the nodes' last Fisher diagonals.
    pub u: Vec<f64>,
    /// Σ of the nodes' last Fisher-weighted parameters.
    pub v: Vec<f64>,
}

impl ServerState {
    /// Round-0 state: no Fisher history yet.
    pub fn initial(theta: ParamVector) -> Self {
        let len = theta.len();
        ServerState {
            round: 0,
            theta_mean: theta,
            u: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    pub shard: Dataset,
    pub theta_last: ParamVector,
    /// What the server last summed for this node (sparsified if configured).
    pub fisher_last: FisherDiag,
    pub weighted_last: ParamVector,
}

impl NodeState {
    pub fn new(id: usize, shard: Dataset, theta: &ParamVector) -> Self {
        NodeState {
            id,
            shard,
            theta_last: theta.clone(),
            fisher_last: FisherDiag::zeros(theta.len()),
            weighted_last: ParamVector::zeros(theta.len()),
        }
    }
}

/// Everything about a round that is shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSetup {
    pub algo: Algorithm,
    pub spec: ModelSpec,
    pub hp: HyperParams,
    pub sparsity: Option<SparsityConfig>,
    /// Fisher subsample size; `None` uses the whole shard.
    pub fisher_limit: Option<usize>,
    pub seed: u64,
}

impl RoundSetup {
    /// Whether Fisher terms are computed and exchanged. FedCurv with `λ = 0`
    /// has no penalty to build, so it moves only θ like FedAvg.
    pub fn exchanges_fisher(&self) -> bool {
        self.algo == Algorithm::FedCurv && self.hp.lambda != 0.0
    }

    /// Analytic per-node traffic of one round for a model of `len` parameters.
    pub fn node_traffic(&self, len: usize) -> NodeTraffic {
        let p = len as u64;
        if !self.exchanges_fisher() {
            return NodeTraffic {
                download: p,
                upload_values: p,
                upload_indices: 0,
            };
        }
        match self.sparsity {
            None => NodeTraffic {
                download: 3 * p,
                upload_values: 3 * p,
                upload_indices: 0,
            },
            Some(cfg) => {
                let k = cfg.kept(len) as u64;
                NodeTraffic {
                    download: 3 * p,
                    upload_values: p + 2 * k,
                    upload_indices: k,
                }
            }
        }
    }
}

/// Output of one node's local round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub theta: ParamVector,
    pub fisher: FisherDiag,
    pub weighted: ParamVector,
    /// Mean minibatch loss (without penalty) over the local epochs.
    pub train_loss: f64,
}

/// `E` epochs of minibatch SGD on `shard` from `theta_start`, reshuffling
/// every epoch from a stream seeded with `seed`. Returns the final parameters
/// and the sample-weighted mean minibatch loss.
pub fn local_train(
    algo: Algorithm,
    spec: &ModelSpec,
    shard: &Dataset,
    theta_start: &ParamVector,
    ctx: &ObjectiveContext<'_>,
    hp: &HyperParams,
    seed: u64,
) -> Result<(ParamVector, f64)> {
    if shard.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if hp.epochs == 0 || hp.batch_size == 0 {
        return Err(Error::arg("hp", "epochs and batch_size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut theta = theta_start.clone();
    let mut inputs = Array2::zeros((0, 0));
    let mut labels = Vec::new();
    let mut loss_sum = 0.0;
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch_size) {
            shard.gather_into(chunk, &mut inputs, &mut labels);
            let batch = Batch {
                inputs: inputs.view(),
                labels: &labels,
            };
            let (loss, grad) = local_objective_step(algo, spec, &theta, batch, ctx)?;
            sgd_step_in_place(&mut theta, &grad, hp.learning_rate)?;
            loss_sum += loss * chunk.len() as f64;
        }
    }
    Ok((theta, loss_sum / (hp.epochs * shard.len()) as f64))
}

/// Local training followed by the Fisher diagonal at the result.
#[allow(clippy::too_many_arguments)]
pub fn run_local_round(
    node: &NodeState,
    algo: Algorithm,
    spec: &ModelSpec,
    theta_start: &ParamVector,
    ctx: &ObjectiveContext<'_>,
    hp: &HyperParams,
    fisher_limit: Option<usize>,
    round_seed: u64,
) -> Result<LocalUpdate> {
    let seed = round_seed ^ node.id as u64;
    let (theta, train_loss) = local_train(algo, spec, &node.shard, theta_start, ctx, hp, seed)?;
    let sampling = fisher_limit.map(|limit| FisherSampling {
        limit,
        seed: derive_seed(seed, FISHER_STREAM),
    });
    let fisher = estimate_fisher_diag(spec, &theta, &node.shard, sampling)?;
    let weighted = fisher_weighted_params(&fisher, &theta)?;
    Ok(LocalUpdate {
        theta,
        fisher,
        weighted,
        train_loss,
    })
}

/// Mean of the uploaded parameters and sums of the Fisher terms, accumulated
/// in the order given (node id ascending).
pub fn aggregate<'a, I>(round: usize, uploads: I) -> Result<ServerState>
where
    I: IntoIterator<Item = (&'a ParamVector, &'a FisherDiag, &'a ParamVector)>,
{
    let mut iter = uploads.into_iter();
    let (theta0, fisher0, weighted0) = iter.next().ok_or(Error::EmptyDataset)?;
    let len = theta0.len();
    check_len("uploaded fisher", len, fisher0.len())?;
    check_len("uploaded fisher-weighted params", len, weighted0.len())?;
    let mut sum = theta0.to_vec();
    let mut u = fisher0.to_vec();
    let mut v = weighted0.to_vec();
    let mut count = 1usize;
    for (theta, fisher, weighted) in iter {
        check_len("uploaded parameters", len, theta.len())?;
        check_len("uploaded fisher", len, fisher.len())?;
        check_len("uploaded fisher-weighted params", len, weighted.len())?;
        for k in 0..len {
            sum[k] += theta[k];
            u[k] += fisher[k];
            v[k] += weighted[k];
        }
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|x| *x /= n);
    Ok(ServerState {
        round,
        theta_mean: ParamVector::from_vec(sum),
        u,
        v,
    })
}

/// Evaluation of the global model after a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub test_accuracy: f64,
    /// Mean cross-entropy of the global model over all node shards.
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub server: ServerState,
    pub traffic: Vec<NodeTraffic>,
    pub metrics: RoundMetrics,
}

fn in_pool<R: Send>(pool: Option<&ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Test accuracy and shard loss of the server model.
pub fn evaluate_global(
    spec: &ModelSpec,
    theta: &ParamVector,
    nodes: &[NodeState],
    test: &Dataset,
    round: usize,
    pool: Option<&ThreadPool>,
) -> Result<RoundMetrics> {
    let sums: Vec<Result<f64>> = in_pool(pool, || {
        nodes
            .par_iter()
            .map(|node| dataset_loss_sum(spec, theta, &node.shard))
            .collect()
    });
    let mut loss = 0.0;
    for s in sums {
        loss += s?;
    }
    let samples: usize = nodes.iter().map(|n| n.shard.len()).sum();
    Ok(RoundMetrics {
        round,
        test_accuracy: evaluate(spec, theta, test)?,
        train_loss: loss / samples as f64,
    })
}

/// One synchronous round over all nodes. Nodes train in parallel inside
/// `pool` when given; every reduction runs in node order, so the result does
/// not depend on the thread count.
pub fn run_round(
    server: &ServerState,
    nodes: &mut [NodeState],
    setup: &RoundSetup,
    test: &Dataset,
    pool: Option<&ThreadPool>,
) -> Result<RoundOutcome> {
    if nodes.is_empty() {
        return Err(Error::arg("nodes", "at least one node is required"));
    }
    let len = server.theta_mean.len();
    check_len("parameter vector", setup.spec.param_count(), len)?;
    let round = server.round + 1;
    let round_seed = derive_seed(setup.seed, ROUND_STREAM.wrapping_add(round as u64));
    let exchange = setup.exchanges_fisher();

    let results: Vec<Result<()>> = in_pool(pool, || {
        nodes
            .par_iter_mut()
            .map(|node| {
                let anchor: CurvAnchor;
                let mut ctx = ObjectiveContext {
                    mu: setup.hp.mu,
                    lambda: setup.hp.lambda,
                    ..Default::default()
                };
                match setup.algo {
                    Algorithm::FedAvg => {}
                    Algorithm::FedProx => ctx.prox_anchor = Some(&server.theta_mean),
                    Algorithm::FedCurv => {
                        anchor = if exchange {
                            build_curv_anchor(&server.u, &server.v, &node.fisher_last, &node.weighted_last)?
                        } else {
                            CurvAnchor::zeros(len)
                        };
                        ctx.curv_anchor = Some(&anchor);
                    }
                }
                let diverged = || Error::Diverged { round, node: node.id };
                if exchange {
                    let update = run_local_round(
                        node,
                        setup.algo,
                        &setup.spec,
                        &server.theta_mean,
                        &ctx,
                        &setup.hp,
                        setup.fisher_limit,
                        round_seed,
                    )?;
                    if !update.theta.is_finite() {
                        return Err(diverged());
                    }
                    let (fisher, weighted) = match setup.sparsity {
                        Some(cfg) => sparsify_topq(&update.fisher, &update.weighted, cfg)?.to_dense(),
                        None => (update.fisher, update.weighted),
                    };
                    node.theta_last = update.theta;
                    node.fisher_last = fisher;
                    node.weighted_last = weighted;
                } else {
                    let seed = round_seed ^ node.id as u64;
                    let (theta, _) = local_train(
                        setup.algo,
                        &setup.spec,
                        &node.shard,
                        &server.theta_mean,
                        &ctx,
                        &setup.hp,
                        seed,
                    )?;
                    if !theta.is_finite() {
                        return Err(diverged());
                    }
                    node.theta_last = theta;
                }
                Ok(())
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;

    let next = aggregate(
        round,
        nodes
            .iter()
            .map(|n| (&n.theta_last, &n.fisher_last, &n.weighted_last)),
    )?;
    let traffic = vec![setup.node_traffic(len); nodes.len()];
    let metrics = evaluate_global(&setup.spec, &next.theta_mean, nodes, test, round, pool)?;
    Ok(RoundOutcome {
        server: next,
        traffic,
        metrics,
    })
}

/// A federation in progress: server aggregates, node states and the ledger.
pub struct Simulation {
    pub setup: RoundSetup,
    pub server: ServerState,
    pub nodes: Vec<NodeState>,
    pub ledger: BandwidthLedger,
    test: Dataset,
    pool: Option<ThreadPool>,
}

impl Simulation {
    /// All nodes start from `theta0`; `threads = 1` runs without a pool.
    pub fn new(
        setup: RoundSetup,
        theta0: ParamVector,
        shards: Vec<Dataset>,
        test: Dataset,
        threads: usize,
    ) -> Result<Self> {
        check_len("initial parameters", setup.spec.param_count(), theta0.len())?;
        if shards.is_empty() {
            return Err(Error::arg("shards", "at least one node is required"));
        }
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::arg("threads", e.to_string()))?,
            )
        } else {
            None
        };
        let nodes = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| NodeState::new(id, shard, &theta0))
            .collect();
        Ok(Simulation {
            setup,
            server: ServerState::initial(theta0),
            nodes,
            ledger: BandwidthLedger::default(),
            test,
            pool,
        })
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    /// Metrics of the current global model without advancing.
    pub fn evaluate(&self) -> Result<RoundMetrics> {
        evaluate_global(
            &self.setup.spec,
            &self.server.theta_mean,
            &self.nodes,
            &self.test,
            self.server.round,
            self.pool.as_ref(),
        )
    }

    pub fn step(&mut self) -> Result<RoundMetrics> {
        let outcome = run_round(
            &self.server,
            &mut self.nodes,
            &self.setup,
            &self.test,
            self.pool.as_ref(),
        )?;
        self.ledger.record(outcome.metrics.round, outcome.traffic);
        self.server = outcome.server;
        Ok(outcome.metrics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec())
    }

    #[test]
    fn aggregate_single_node_is_identity() {
        let theta = pv(&[1.0, -2.0, 3.5]);
        let fisher = FisherDiag::new(vec![0.1, 0.0, 4.0]).unwrap();
        let weighted = fisher_weighted_params(&fisher, &theta).unwrap();
        let s = aggregate(1, [(&theta, &fisher, &weighted)]).unwrap();
        assert_eq!(s.theta_mean, theta);
        assert_eq!(s.u, fisher.to_vec());
        assert_eq!(s.v, weighted.to_vec());
    }

    #[test]
    fn aggregate_opposites_cancel() {
        let a = pv(&[0.3, -1.25, 7.0]);
        let b = pv(&[-0.3, 1.25, -7.0]);
        let f = FisherDiag::zeros(3);
        let w = ParamVector::zeros(3);
        let s = aggregate(1, [(&a, &f, &w), (&b, &f, &w)]).unwrap();
        assert!(s.theta_mean.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn aggregate_rejects_empty_and_ragged() {
        assert!(aggregate(1, std::iter::empty()).is_err());
        let a = pv(&[1.0, 2.0]);
        let b = pv(&[1.0]);
        let f = FisherDiag::zeros(2);
        let w = ParamVector::zeros(2);
        assert!(aggregate(1, [(&a, &f, &w), (&b, &f, &w)]).is_err());
    }

    #[test]
    fn seeds_differ_per_node_and_round() {
        assert_ne!(node_seed(1, 1, 0), node_seed(1, 1, 1));
        assert_ne!(node_seed(1, 1, 0), node_seed(1, 2, 0));
        assert_eq!(node_seed(1, 1, 3), node_seed(1, 1, 0) ^ 3);
    }

    #[test]
    fn server_state_carries_only_aggregates() {
        let s = ServerState::initial(ParamVector::zeros(4));
        let json = serde_json::to_value(&s).unwrap();
        let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, vec!["round", "theta_mean", "u", "v"]);
        assert!(s.u.iter().chain(&s.v).all(|&x| x == 0.0));
    }
}
