use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fisher::FisherDiag;
use crate::model::ParamVector;

/// Fraction of Fisher coordinates kept on upload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityConfig {
    pub q: f64,
}

impl SparsityConfig {
    pub fn new(q: f64) -> Result<Self> {
        let cfg = SparsityConfig { q };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::config("sparsity.q", format!("must lie in (0, 1], got {}", self.q)));
        }
        Ok(())
    }

    /// `k = ⌈q·P⌉`, with a relative slack so that `q = 1/P` yields exactly one.
    pub fn kept(&self, len: usize) -> usize {
        let k = (self.q * len as f64 * (1.0 - 1e-12)).ceil() as usize;
        k.clamp(1, len.max(1))
    }
}

/// The `k` largest Fisher coordinates and the matching `I ⊙ θ` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFisher {
    pub len: usize,
    /// Ascending.
    pub indices: Vec<usize>,
    pub fisher: Vec<f64>,
    pub weighted: Vec<f64>,
}

impl SparseFisher {
    /// Dense vectors with zeros at the dropped coordinates.
    pub fn to_dense(&self) -> (FisherDiag, ParamVector) {
        let mut fisher = vec![0.0; self.len];
        let mut weighted = vec![0.0; self.len];
        for (k, &i) in self.indices.iter().enumerate() {
            fisher[i] = self.fisher[k];
            weighted[i] = self.weighted[k];
        }
        (
            FisherDiag::new(fisher).expect("subset of a valid diagonal"),
            ParamVector::from_vec(weighted),
        )
    }
}

/// Keeps the `⌈q·P⌉` coordinates with the largest Fisher values, ties going
/// to the lower index.
pub fn sparsify_topq(fisher: &FisherDiag, weighted: &ParamVector, cfg: SparsityConfig) -> Result<SparseFisher> {
    cfg.validate()?;
    check_len("fisher-weighted parameters", fisher.len(), weighted.len())?;
    let len = fisher.len();
    let mut order: Vec<usize> = (0..len).collect();
    if len == 0 {
        return Ok(SparseFisher { len, indices: order, fisher: vec![], weighted: vec![] });
    }
    let k = cfg.kept(len);
    let rank = |a: &usize, b: &usize| -> Ordering { fisher[*b].total_cmp(&fisher[*a]).then(a.cmp(b)) };
    if k < len {
        order.select_nth_unstable_by(k - 1, rank);
        order.truncate(k);
    }
    order.sort_unstable();
    Ok(SparseFisher {
        len,
        fisher: order.iter().map(|&i| fisher[i]).collect(),
        weighted: order.iter().map(|&i| weighted[i]).collect(),
        indices: order,
    })
}
