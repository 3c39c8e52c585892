//! Local training objectives.
//!
//! Every algorithm optimizes the node's mean cross-entropy plus a penalty:
//!
//! - FedAvg: no penalty.
//! - FedProx: `(μ/2)·‖θ − θ_t‖²` around the round's starting model `θ_t`.
//! - FedCurv: `λ Σ_{j≠s} (θ − θ_j)ᵀ diag(I_j) (θ − θ_j)` over the other nodes'
//!   last parameters and Fisher diagonals. Expanding the quadratic gives
//!   `λ (θᵀ diag(u_excl) θ − 2 θᵀ v_excl) + const` with
//!   `u_excl = Σ_{j≠s} I_j` and `v_excl = Σ_{j≠s} I_j ⊙ θ_j`, which is the form
//!   evaluated here. The constant is dropped, so reported penalty values are
//!   offset from the sum-over-nodes form by a θ-independent amount.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fisher::FisherDiag;
use crate::model::{loss_and_grad, Batch, ModelSpec, ParamVector};

/// Tolerance below zero accepted in `u_excl` before the aggregates are
/// considered corrupted; smaller negatives are cancellation noise and are
/// clamped to zero.
pub const U_EXCL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    FedAvg,
    FedProx,
    FedCurv,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "FedAvg",
            Algorithm::FedProx => "FedProx",
            Algorithm::FedCurv => "FedCurv",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Local-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// FedCurv stiffness λ.
    #[serde(default)]
    pub lambda: f64,
    /// FedProx stiffness μ.
    #[serde(default)]
    pub mu: f64,
    /// Local epochs per round (E).
    pub epochs: usize,
    /// Local minibatch size (B).
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// SGD learning rate (η).
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Fraction of nodes participating per round (C). Only 1.0 is supported.
    #[serde(default = "default_participation")]
    pub participation: f64,
}

fn default_batch() -> usize {
    256
}

fn default_lr() -> f64 {
    0.01
}

fn default_participation() -> f64 {
    1.0
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda: 0.0,
            mu: 0.0,
            epochs: 1,
            batch_size: default_batch(),
            learning_rate: default_lr(),
            participation: default_participation(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("hyper.{name}"), format!("must be finite and >= 0, got {v}")))
            }
        };
        nonneg("lambda", self.lambda)?;
        nonneg("mu", self.mu)?;
        if self.epochs == 0 {
            return Err(Error::config("hyper.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("hyper.batch_size", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(
                "hyper.learning_rate",
                format!("must be finite and > 0, got {}", self.learning_rate),
            ));
        }
        if self.participation != 1.0 {
            return Err(Error::config(
                "hyper.participation",
                format!("only full participation (1.0) is supported, got {}", self.participation),
            ));
        }
        Ok(())
    }
}

/// Sums of the other nodes' Fisher terms, as seen by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvAnchor {
    pub u_excl: Vec<f64>,
    pub v_excl: Vec<f64>,
}

impl CurvAnchor {
    pub fn zeros(len: usize) -> Self {
        CurvAnchor {
            u_excl: vec![0.0; len],
            v_excl: vec![0.0; len],
        }
    }
}

/// Removes a node's own contribution from the broadcast aggregates.
pub fn build_curv_anchor(
    u: &[f64],
    v: &[f64],
    own_fisher: &FisherDiag,
    own_weighted: &ParamVector,
) -> Result<CurvAnchor> {
    check_len("aggregate v", u.len(), v.len())?;
    check_len("own fisher", u.len(), own_fisher.len())?;
    check_len("own fisher-weighted params", u.len(), own_weighted.len())?;
    let mut u_excl = Vec::with_capacity(u.len());
    for (index, (&total, &own)) in u.iter().zip(own_fisher.iter()).enumerate() {
        let value = total - own;
        if value < -U_EXCL_TOLERANCE || !value.is_finite() {
            return Err(Error::CorruptedAggregate { index, value });
        }
        u_excl.push(value.max(0.0));
    }
    let v_excl = v.iter().zip(own_weighted.iter()).map(|(t, o)| t - o).collect();
    Ok(CurvAnchor { u_excl, v_excl })
}

/// `(μ/2)·‖θ − anchor‖²` and its gradient `μ·(θ − anchor)`.
pub fn fedprox_penalty(theta: &ParamVector, anchor: &ParamVector, mu: f64) -> Result<(f64, ParamVector)> {
    check_len("proximal anchor", theta.len(), anchor.len())?;
    let mut value = 0.0;
    let grad = theta
        .iter()
        .zip(anchor.iter())
        .map(|(t, a)| {
            let d = t - a;
            value += d * d;
            mu * d
        })
        .collect();
    Ok((0.5 * mu * value, ParamVector::from_vec(grad)))
}

/// `λ·(θᵀ(u_excl ⊙ θ) − 2θᵀv_excl)` and its gradient `2λ·(u_excl ⊙ θ − v_excl)`.
pub fn fedcurv_penalty(theta: &ParamVector, anchor: &CurvAnchor, lambda: f64) -> Result<(f64, ParamVector)> {
    check_len("curvature anchor u", theta.len(), anchor.u_excl.len())?;
    check_len("curvature anchor v", theta.len(), anchor.v_excl.len())?;
    let mut value = 0.0;
    let grad = theta
        .iter()
        .zip(anchor.u_excl.iter().zip(&anchor.v_excl))
        .map(|(&t, (&u, &v))| {
            value += t * (u * t - 2.0 * v);
            2.0 * lambda * (u * t - v)
        })
        .collect();
    Ok((lambda * value, ParamVector::from_vec(grad)))
}

/// Per-round data a node needs besides its minibatch.
#[derive(Debug, Clone, Copy, Default)]
pub struct ObjectiveContext<'a> {
    /// Round-start model, the FedProx anchor.
    pub prox_anchor: Option<&'a ParamVector>,
    pub curv_anchor: Option<&'a CurvAnchor>,
    pub mu: f64,
    pub lambda: f64,
}

fn add_into(grad: &mut ParamVector, penalty: &ParamVector) {
    for (g, p) in grad.iter_mut().zip(penalty.iter()) {
        *g += p;
    }
}

/// Base minibatch loss and the gradient of loss plus the algorithm's penalty.
///
/// A zero stiffness skips the penalty altogether, so the update is the FedAvg
/// one bit for bit.
pub fn local_objective_step(
    algo: Algorithm,
    spec: &ModelSpec,
    theta: &ParamVector,
    batch: Batch<'_>,
    ctx: &ObjectiveContext<'_>,
) -> Result<(f64, ParamVector)> {
    let (loss, mut grad) = loss_and_grad(spec, theta, batch)?;
    match algo {
        Algorithm::FedAvg => {}
        Algorithm::FedProx => {
            let anchor = ctx.prox_anchor.ok_or(Error::MissingContext {
                algo: "FedProx",
                missing: "a proximal anchor",
            })?;
            if ctx.mu != 0.0 {
                add_into(&mut grad, &fedprox_penalty(theta, anchor, ctx.mu)?.1);
            }
        }
        Algorithm::FedCurv => {
            let anchor = ctx.curv_anchor.ok_or(Error::MissingContext {
                algo: "FedCurv",
                missing: "a curvature anchor",
            })?;
            if ctx.lambda != 0.0 {
                add_into(&mut grad, &fedcurv_penalty(theta, anchor, ctx.lambda)?.1);
            }
        }
    }
    Ok((loss, grad))
}

pub fn local_objective_grad(
    algo: Algorithm,
    spec: &ModelSpec,
    theta: &ParamVector,
    batch: Batch<'_>,
    ctx: &ObjectiveContext<'_>,
) -> Result<ParamVector> {
    Ok(local_objective_step(algo, spec, theta, batch, ctx)?.1)
}
