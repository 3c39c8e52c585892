#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use fedcurv::data::{partition_noniid, synth_blobs, Dataset, PartitionSpec};
use fedcurv::fisher::{estimate_fisher_diag, fisher_weighted_params};
use fedcurv::model::{dataset_loss, param_init};
use fedcurv::objectives::{build_curv_anchor, ObjectiveContext};
use fedcurv::orchestrator::{
    aggregate, derive_seed, node_seed, run_local_round, sparsify_topq, NodeState, RoundSetup, ServerState,
};
use fedcurv::{Activation, Algorithm, FisherDiag, HyperParams, ModelSpec, ParamVector, Simulation, SparsityConfig};
use proptest::prelude::*;
use rand::Rng;

fn toy() -> (ModelSpec, Vec<Dataset>, Dataset) {
    let train = synth_blobs(4, 30, 6, 1).unwrap();
    let test = synth_blobs(4, 10, 6, 2).unwrap();
    let part = partition_noniid(&train, &PartitionSpec { nodes: 4, blocks_per_node: 2, seed: 3 }).unwrap();
    (ModelSpec::new(vec![6, 5, 4], Activation::Relu).unwrap(), part.shards, test)
}

fn setup(algo: Algorithm, lambda: f64, mu: f64, sparsity: Option<SparsityConfig>) -> RoundSetup {
    let spec = toy().0;
    RoundSetup {
        algo,
        spec,
        hp: HyperParams { lambda, mu, epochs: 2, batch_size: 8, learning_rate: 0.05, ..Default::default() },
        sparsity,
        fisher_limit: None,
        seed: 9,
    }
}

fn simulate(setup: RoundSetup, rounds: usize, threads: usize) -> Simulation {
    let (spec, shards, test) = toy();
    let theta0 = param_init(&spec, 4);
    let mut sim = Simulation::new(setup, theta0, shards, test, threads).unwrap();
    for _ in 0..rounds {
        sim.step().unwrap();
    }
    sim
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let (spec, shards, _) = toy();
    let theta = param_init(&spec, 1);
    let node = NodeState::new(0, shards[0].clone(), &theta);
    let hp = HyperParams { epochs: 3, learning_rate: 0.0, batch_size: 4, ..Default::default() };
    let out = run_local_round(&node, Algorithm::FedAvg, &spec, &theta, &ObjectiveContext::default(), &hp, None, 5)
        .unwrap();
    assert_eq!(out.theta, theta);
    assert_eq!(out.fisher, estimate_fisher_diag(&spec, &theta, &node.shard, None).unwrap());
    assert_eq!(out.weighted, fisher_weighted_params(&out.fisher, &out.theta).unwrap());
}

#[test]
fn local_round_descends_on_convex_toy() {
    let ds = synth_blobs(3, 40, 5, 8).unwrap();
    let spec = ModelSpec::new(vec![5, 3], Activation::Relu).unwrap();
    let theta = param_init(&spec, 2);
    let node = NodeState::new(0, ds.clone(), &theta);
    let hp = HyperParams { epochs: 20, learning_rate: 0.05, batch_size: 16, ..Default::default() };
    let out = run_local_round(&node, Algorithm::FedAvg, &spec, &theta, &ObjectiveContext::default(), &hp, None, 5)
        .unwrap();
    assert!(dataset_loss(&spec, &out.theta, &ds).unwrap() < dataset_loss(&spec, &theta, &ds).unwrap());
}

#[test]
fn local_round_is_deterministic() {
    let (spec, shards, _) = toy();
    let theta = param_init(&spec, 1);
    let node = NodeState::new(2, shards[2].clone(), &theta);
    let hp = HyperParams { epochs: 2, batch_size: 4, ..Default::default() };
    let run = || {
        run_local_round(&node, Algorithm::FedAvg, &spec, &theta, &ObjectiveContext::default(), &hp, Some(5), 77)
            .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn empty_shard_is_rejected() {
    let spec = ModelSpec::new(vec![2, 2], Activation::Relu).unwrap();
    let theta = param_init(&spec, 0);
    let empty = Dataset::new(ndarray::Array2::zeros((0, 2)), vec![], 2);
    // Either construction or the local round must refuse an empty shard.
    if let Ok(empty) = empty {
        let node = NodeState::new(0, empty, &theta);
        let hp = HyperParams::default();
        assert!(run_local_round(&node, Algorithm::FedAvg, &spec, &theta, &ObjectiveContext::default(), &hp, None, 0)
            .is_err());
    }
}

#[test]
fn aggregate_matches_naive_sum() {
    let mut r = rng(31);
    let len = 37;
    let uploads: Vec<(ParamVector, FisherDiag, ParamVector)> = (0..5)
        .map(|_| {
            let t = ParamVector::from_vec(random_vec(&mut r, len, 3.0));
            let f = random_fisher(&mut r, len);
            let w = fisher_weighted_params(&f, &t).unwrap();
            (t, f, w)
        })
        .collect();
    let s = aggregate(3, uploads.iter().map(|(t, f, w)| (t, f, w))).unwrap();
    assert_eq!(s.round, 3);
    for k in 0..len {
        let mean: f64 = uploads.iter().map(|u| u.0[k]).sum::<f64>() / 5.0;
        let u: f64 = uploads.iter().map(|u| u.1[k]).sum();
        let v: f64 = uploads.iter().map(|u| u.2[k]).sum();
        assert!((s.theta_mean[k] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((s.u[k] - u).abs() <= 1e-12 * u.max(1.0));
        assert!((s.v[k] - v).abs() <= 1e-12 * v.abs().max(1.0));
    }
}

#[test]
fn first_fedcurv_round_equals_fedavg() {
    let avg = simulate(setup(Algorithm::FedAvg, 0.0, 0.0, None), 1, 1);
    let curv = simulate(setup(Algorithm::FedCurv, 2.5, 0.0, None), 1, 1);
    assert_eq!(avg.server.theta_mean, curv.server.theta_mean);
    assert!(curv.server.u.iter().any(|&x| x > 0.0));
    // From round 2 on the penalty is live.
    let avg = simulate(setup(Algorithm::FedAvg, 0.0, 0.0, None), 2, 1);
    let curv = simulate(setup(Algorithm::FedCurv, 2.5, 0.0, None), 2, 1);
    assert_ne!(avg.server.theta_mean, curv.server.theta_mean);
}

#[test]
fn degenerate_stiffness_trajectories_match_fedavg() {
    let avg = simulate(setup(Algorithm::FedAvg, 0.0, 0.0, None), 3, 1);
    for s in [setup(Algorithm::FedCurv, 0.0, 0.0, None), setup(Algorithm::FedProx, 0.0, 0.0, None)] {
        let other = simulate(s, 3, 1);
        assert_eq!(avg.server.theta_mean, other.server.theta_mean);
        assert_eq!(avg.ledger, other.ledger);
    }
}

#[test]
fn anchors_reconstruct_the_aggregate() {
    for sparsity in [None, Some(SparsityConfig::new(0.3).unwrap())] {
        let sim = simulate(setup(Algorithm::FedCurv, 1.0, 0.0, sparsity), 3, 1);
        let s = &sim.server;
        for node in &sim.nodes {
            let a = build_curv_anchor(&s.u, &s.v, &node.fisher_last, &node.weighted_last).unwrap();
            for k in 0..s.u.len() {
                let u = a.u_excl[k] + node.fisher_last[k];
                let v = a.v_excl[k] + node.weighted_last[k];
                assert!((u - s.u[k]).abs() <= 1e-12 * s.u[k].max(1.0));
                assert!((v - s.v[k]).abs() <= 1e-12 * s.v[k].abs().max(1.0));
            }
        }
    }
}

#[test]
fn node_state_keeps_weighted_consistent() {
    let sim = simulate(setup(Algorithm::FedCurv, 1.0, 0.0, None), 2, 1);
    for node in &sim.nodes {
        assert_eq!(node.weighted_last, fisher_weighted_params(&node.fisher_last, &node.theta_last).unwrap());
    }
}

#[test]
fn ledger_counts_follow_the_formulas() {
    let p = toy().0.param_count() as u64;
    let rounds = 3;
    let cases = [
        (setup(Algorithm::FedAvg, 0.0, 0.0, None), p, p, 0),
        (setup(Algorithm::FedProx, 0.0, 0.1, None), p, p, 0),
        (setup(Algorithm::FedCurv, 1.0, 0.0, None), 3 * p, 3 * p, 0),
    ];
    for (s, down, up, idx) in cases {
        let sim = simulate(s, rounds, 1);
        assert_eq!(sim.ledger.rounds.len(), rounds);
        for (i, round) in sim.ledger.rounds.iter().enumerate() {
            assert_eq!(round.round, i + 1);
            assert_eq!(round.nodes.len(), 4);
            for n in &round.nodes {
                assert_eq!((n.download, n.upload_values, n.upload_indices), (down, up, idx));
            }
        }
        assert_eq!(sim.ledger.cumulative(rounds), (4 * rounds as u64 * up, 4 * rounds as u64 * down));
    }
    let k = (0.5 * p as f64).ceil() as u64;
    let sim = simulate(setup(Algorithm::FedCurv, 1.0, 0.0, Some(SparsityConfig::new(0.5).unwrap())), rounds, 1);
    for round in &sim.ledger.rounds {
        for n in &round.nodes {
            assert_eq!(n.download, 3 * p);
            assert_eq!(n.upload_values, p + 2 * k);
            assert_eq!(n.upload_indices, k);
        }
    }
}

#[test]
fn sparse_nodes_store_what_they_sent() {
    let q = SparsityConfig::new(0.25).unwrap();
    let sim = simulate(setup(Algorithm::FedCurv, 1.0, 0.0, Some(q)), 2, 1);
    let p = sim.setup.spec.param_count();
    for node in &sim.nodes {
        let nonzero = node.fisher_last.iter().filter(|&&x| x != 0.0).count();
        assert!(nonzero <= q.kept(p));
        let dense = estimate_fisher_diag(&sim.setup.spec, &node.theta_last, &node.shard, None).unwrap();
        let w = fisher_weighted_params(&dense, &node.theta_last).unwrap();
        let (f, v) = sparsify_topq(&dense, &w, q).unwrap().to_dense();
        assert_eq!(f, node.fisher_last);
        assert_eq!(v, node.weighted_last);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    for s in [
        setup(Algorithm::FedAvg, 0.0, 0.0, None),
        setup(Algorithm::FedProx, 0.0, 0.1, None),
        setup(Algorithm::FedCurv, 1.0, 0.0, None),
        setup(Algorithm::FedCurv, 1.0, 0.0, Some(SparsityConfig::new(0.5).unwrap())),
    ] {
        let one = simulate(s.clone(), 3, 1);
        let four = simulate(s, 3, 4);
        assert_eq!(one.server, four.server);
        assert_eq!(one.ledger, four.ledger);
        assert_eq!(one.evaluate().unwrap(), four.evaluate().unwrap());
    }
}

#[test]
fn round_zero_state_is_empty() {
    let s = ServerState::initial(ParamVector::from_vec(vec![1.0, 2.0]));
    assert_eq!(s.round, 0);
    assert_eq!(s.u, vec![0.0, 0.0]);
    assert_eq!(s.v, vec![0.0, 0.0]);
}

#[test]
fn server_state_holds_only_aggregates() {
    let sim = simulate(setup(Algorithm::FedCurv, 1.0, 0.0, None), 1, 1);
    let json = serde_json::to_value(&sim.server).unwrap();
    let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["round", "theta_mean", "u", "v"]);
    let p = sim.setup.spec.param_count();
    assert_eq!(json["theta_mean"].as_array().unwrap().len(), p);
    assert_eq!(json["u"].as_array().unwrap().len(), p);
}

#[test]
fn seeds_differ_per_node_and_round() {
    let mut seen = std::collections::HashSet::new();
    for round in 1..20 {
        for node in 0..16 {
            assert!(seen.insert(node_seed(5, round, node)));
        }
    }
    assert_ne!(derive_seed(0, 1), derive_seed(1, 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregate_sums_in_node_order(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let len = r.random_range(1..30);
        let ups: Vec<(ParamVector, FisherDiag, ParamVector)> = (0..n)
            .map(|_| {
                let t = ParamVector::from_vec(random_vec(&mut r, len, 2.0));
                let f = random_fisher(&mut r, len);
                let w = fisher_weighted_params(&f, &t).unwrap();
                (t, f, w)
            })
            .collect();
        let s = aggregate(1, ups.iter().map(|(t, f, w)| (t, f, w))).unwrap();
        prop_assert!(s.u.iter().all(|&x| x >= 0.0 && x.is_finite()));
        for k in 0..len {
            let mut u = 0.0;
            for up in &ups {
                u += up.1[k];
            }
            prop_assert_eq!(s.u[k].to_bits(), u.to_bits());
        }
    }
}
