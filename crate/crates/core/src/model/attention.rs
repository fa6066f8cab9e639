//! Bilinear attention pooling used by both rotatory steps.

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamKind, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct AttentionHead {
    /// 2d × 2d
    pub w: ParamId,
    /// scalar
    pub b: ParamId,
}

impl AttentionHead {
    pub fn register(store: &mut ParamStore, prefix: &str, state_dim: usize) -> Self {
        AttentionHead {
            w: store.add(
                format!("{prefix}.W"),
                Tensor::zeros(&[state_dim, state_dim]),
                ParamKind::Weight,
            ),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[1]), ParamKind::Bias),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Attended {
    pub scores: Var,
    pub pooled: Var,
}

/// `f_i = tanh(h_iᵀ W q + b)`, `α = softmax(f)`, pooled = `Σ α_i h_i`.
pub fn attend(
    tape: &mut Tape,
    store: &ParamStore,
    head: &AttentionHead,
    hidden: &[Var],
    query: Var,
) -> Result<Attended> {
    if hidden.is_empty() {
        return Err(Error::Empty("attend"));
    }
    let w = tape.param(store, head.w);
    let b = tape.param(store, head.b);
    let wq = tape.matvec(w, query)?;
    let mut logits = Vec::with_capacity(hidden.len());
    for &h in hidden {
        let s = tape.dot(h, wq)?;
        let s = tape.add(s, b)?;
        logits.push(tape.tanh(s));
    }
    let f = tape.concat(&logits)?;
    let scores = tape.softmax(f)?;
    let pooled = tape.weighted_sum(scores, hidden)?;
    Ok(Attended { scores, pooled })
}
