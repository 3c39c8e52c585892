//! How a node rebuilds the other nodes' Fisher penalty from the server's two
//! aggregate vectors, and that it equals the explicit sum over the others.
//!
//! cargo run --release --example curvature_penalty

use fedcurv::fisher::fisher_weighted_params;
use fedcurv::objectives::{build_curv_anchor, fedcurv_penalty};
use fedcurv::orchestrator::aggregate;
use fedcurv::{FisherDiag, ParamVector, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (nodes, len, lambda) = (4, 6, 0.5);
    let mut thetas = vec![];
    let mut fishers = vec![];
    for _ in 0..nodes {
        thetas.push(ParamVector::from_vec((0..len).map(|_| rng.random_range(-1.0..1.0)).collect()));
        fishers.push(FisherDiag::new((0..len).map(|_| rng.random_range(0.0..2.0)).collect())?);
    }
    let weighted = fishers
        .iter()
        .zip(&thetas)
        .map(|(f, t)| fisher_weighted_params(f, t))
        .collect::<Result<Vec<_>>>()?;

    // The server only ever holds the mean and the two sums.
    let server = aggregate(1, (0..nodes).map(|j| (&thetas[j], &fishers[j], &weighted[j])))?;
    println!("u = {:.3?}", server.u);
    println!("v = {:.3?}", server.v);

    let me = 0;
    let anchor = build_curv_anchor(&server.u, &server.v, &fishers[me], &weighted[me])?;
    let theta = server.theta_mean.clone();
    let (value, grad) = fedcurv_penalty(&theta, &anchor, lambda)?;

    let mut direct = 0.0;
    let mut constant = 0.0;
    for j in (0..nodes).filter(|&j| j != me) {
        for k in 0..len {
            let d = theta[k] - thetas[j][k];
            direct += lambda * fishers[j][k] * d * d;
            constant += lambda * fishers[j][k] * thetas[j][k] * thetas[j][k];
        }
    }
    println!("penalty from aggregates + constant = {:.12}", value + constant);
    println!("explicit sum over other nodes      = {direct:.12}");
    println!("gradient at the global mean = {:.4?}", grad.as_slice());
    Ok(())
}
