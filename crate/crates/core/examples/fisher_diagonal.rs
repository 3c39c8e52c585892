//! Empirical Fisher diagonal of a briefly trained model, full shard and
//! subsampled.
//!
//! cargo run --release --example fisher_diagonal

use fedcurv::data::synth_blobs;
use fedcurv::fisher::{estimate_fisher_diag, FisherSampling};
use fedcurv::model::{evaluate, loss_and_grad, param_init, sgd_step_in_place};
use fedcurv::{Activation, ModelSpec, Result};

fn main() -> Result<()> {
    let spec = ModelSpec::new(vec![10, 16, 5], Activation::Relu)?;
    let data = synth_blobs(5, 200, 10, 3)?;
    let mut theta = param_init(&spec, 0);
    for _ in 0..100 {
        let (_, g) = loss_and_grad(&spec, &theta, data.as_batch())?;
        sgd_step_in_place(&mut theta, &g, 0.2)?;
    }
    println!("train accuracy {:.3}", evaluate(&spec, &theta, &data)?);

    let full = estimate_fisher_diag(&spec, &theta, &data, None)?;
    let sub = estimate_fisher_diag(&spec, &theta, &data, Some(FisherSampling { limit: 100, seed: 7 }))?;

    for (l, layer) in spec.layers().iter().enumerate() {
        let w = &full[layer.weight_range()];
        let b = &full[layer.bias_range()];
        println!(
            "layer {l}: weight mean {:.3e} max {:.3e}, bias mean {:.3e}",
            w.iter().sum::<f64>() / w.len() as f64,
            w.iter().cloned().fold(0.0, f64::max),
            b.iter().sum::<f64>() / b.len() as f64,
        );
    }
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.sort_by(|&a, &b| full[b].total_cmp(&full[a]));
    println!("stiffest coordinates (full vs 100-sample estimate):");
    for &k in &order[..8] {
        println!("  {k:>4}: {:.4e}  {:.4e}", full[k], sub[k]);
    }
    Ok(())
}
