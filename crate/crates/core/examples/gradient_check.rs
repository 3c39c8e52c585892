//! Backprop versus central finite differences on a small tanh MLP.
//!
//! cargo run --release --example gradient_check

use fedcurv::data::synth_blobs;
use fedcurv::model::{backward, forward, param_init};
use fedcurv::{Activation, ModelSpec, ParamVector, Result};

fn main() -> Result<()> {
    let spec = ModelSpec::new(vec![6, 8, 4], Activation::Tanh)?;
    let theta = param_init(&spec, 1);
    let data = synth_blobs(4, 5, 6, 2)?;
    let grad = backward(&spec, &theta, data.as_batch())?;

    let loss_at = |t: &ParamVector| forward(&spec, t, data.as_batch()).map(|(_, l)| l);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    println!("{:>5} {:>14} {:>14} {:>10}", "coord", "analytic", "numeric", "rel err");
    for k in (0..spec.param_count()).step_by(7) {
        let mut plus = theta.clone();
        plus[k] += h;
        let mut minus = theta.clone();
        minus[k] -= h;
        let numeric = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
        let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        println!("{k:>5} {:>14.8e} {:>14.8e} {rel:>10.2e}", grad[k], numeric);
    }
    println!("P = {}, worst relative error {worst:.2e}", spec.param_count());
    Ok(())
}
