//! Hierarchical attention over the four pooled vectors
//! `(r^l, r^r, r^{t_l}, r^{t_r})`.
//!
//! Each method is a strategy: which vectors are normalized together, and
//! whether the rescale happens after the last hop only or inside every hop
//! (where the rescaled target vectors become the next hop's queries).
//!
//! | method | groups                     | when        |
//! |--------|----------------------------|-------------|
//! | 0      | none                       | never       |
//! | 1      | all four                   | after final |
//! | 2      | all four                   | every hop   |
//! | 3      | contexts, targets          | after final |
//! | 4      | contexts, targets          | every hop   |

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamKind, ParamStore, Tape, Tensor, Var};

pub const ALL_FOUR: &[&[usize]] = &[&[0, 1, 2, 3]];
pub const PAIRS: &[&[usize]] = &[&[0, 1], &[2, 3]];

/// One scoring group: `f(v) = tanh(vᵀ W + b)` with W stored as 1 × 2d.
#[derive(Clone, Debug)]
pub struct GroupParams {
    pub w: ParamId,
    pub b: ParamId,
}

/// Scores produced by one rescale, one entry per group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupScores {
    pub members: Vec<usize>,
    pub alpha: Vec<f64>,
}

pub trait HierarchyStrategy: Send + Sync {
    fn method(&self) -> u8;

    fn name(&self) -> &'static str;

    /// Vector index groups normalized independently.
    fn groups(&self) -> &'static [&'static [usize]];

    /// Rescale inside every hop rather than once after the last one.
    fn per_hop(&self) -> bool;

    fn group_names(&self) -> &'static [&'static str] {
        match self.groups().len() {
            0 => &[],
            1 => &["all"],
            _ => &["context", "target"],
        }
    }

    fn register(&self, store: &mut ParamStore, state_dim: usize) -> Vec<GroupParams> {
        self.group_names()
            .iter()
            .map(|g| GroupParams {
                w: store.add(
                    format!("hier.{g}.W"),
                    Tensor::zeros(&[1, state_dim]),
                    ParamKind::Weight,
                ),
                b: store.add(format!("hier.{g}.b"), Tensor::zeros(&[1]), ParamKind::Bias),
            })
            .collect()
    }

    /// `v_i ← α_i · v_i` with α a softmax of `f(v)` within each group.
    fn rescale(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        params: &[GroupParams],
        vectors: [Var; 4],
    ) -> Result<([Var; 4], Vec<GroupScores>)> {
        let mut out = vectors;
        let mut scores = Vec::with_capacity(self.groups().len());
        for (members, gp) in self.groups().iter().zip(params) {
            let w = tape.param(store, gp.w);
            let b = tape.param(store, gp.b);
            let mut logits = Vec::with_capacity(members.len());
            for &m in members.iter() {
                let s = tape.matvec(w, vectors[m])?;
                let s = tape.add(s, b)?;
                logits.push(tape.tanh(s));
            }
            let f = tape.concat(&logits)?;
            let alpha = tape.softmax(f)?;
            for (k, &m) in members.iter().enumerate() {
                let a = tape.element(alpha, k)?;
                out[m] = tape.scale(vectors[m], a)?;
            }
            scores.push(GroupScores {
                members: members.to_vec(),
                alpha: tape.value(alpha).data().to_vec(),
            });
        }
        Ok((out, scores))
    }
}

pub struct NoHierarchy;

impl HierarchyStrategy for NoHierarchy {
    fn method(&self) -> u8 {
        0
    }
    fn name(&self) -> &'static str {
        "none"
    }
    fn groups(&self) -> &'static [&'static [usize]] {
        &[]
    }
    fn per_hop(&self) -> bool {
        false
    }
}

/// Method 1.
pub struct FinalAll;

impl HierarchyStrategy for FinalAll {
    fn method(&self) -> u8 {
        1
    }
    fn name(&self) -> &'static str {
        "final-all"
    }
    fn groups(&self) -> &'static [&'static [usize]] {
        ALL_FOUR
    }
    fn per_hop(&self) -> bool {
        false
    }
}

/// Method 2.
pub struct PerHopAll;

impl HierarchyStrategy for PerHopAll {
    fn method(&self) -> u8 {
        2
    }
    fn name(&self) -> &'static str {
        "per-hop-all"
    }
    fn groups(&self) -> &'static [&'static [usize]] {
        ALL_FOUR
    }
    fn per_hop(&self) -> bool {
        true
    }
}

/// Method 3.
pub struct FinalPairs;

impl HierarchyStrategy for FinalPairs {
    fn method(&self) -> u8 {
        3
    }
    fn name(&self) -> &'static str {
        "final-pairs"
    }
    fn groups(&self) -> &'static [&'static [usize]] {
        PAIRS
    }
    fn per_hop(&self) -> bool {
        false
    }
}

/// Method 4.
pub struct PerHopPairs;

impl HierarchyStrategy for PerHopPairs {
    fn method(&self) -> u8 {
        4
    }
    fn name(&self) -> &'static str {
        "per-hop-pairs"
    }
    fn groups(&self) -> &'static [&'static [usize]] {
        PAIRS
    }
    fn per_hop(&self) -> bool {
        true
    }
}

/// Strategies keyed by method number, also reachable by name.
#[derive(Clone)]
pub struct HierarchyRegistry {
    by_method: BTreeMap<u8, Arc<dyn HierarchyStrategy>>,
}

impl Default for HierarchyRegistry {
    fn default() -> Self {
        let mut r = HierarchyRegistry {
            by_method: BTreeMap::new(),
        };
        r.register(Arc::new(NoHierarchy));
        r.register(Arc::new(FinalAll));
        r.register(Arc::new(PerHopAll));
        r.register(Arc::new(FinalPairs));
        r.register(Arc::new(PerHopPairs));
        r
    }
}

impl HierarchyRegistry {
    pub fn register(&mut self, s: Arc<dyn HierarchyStrategy>) {
        self.by_method.insert(s.method(), s);
    }

    pub fn get(&self, method: u8) -> Result<Arc<dyn HierarchyStrategy>> {
        self.by_method
            .get(&method)
            .cloned()
            .ok_or_else(|| Error::config(format!("no hierarchical method {method}")))
    }

    pub fn by_name(&self, name: &str) -> Result<Arc<dyn HierarchyStrategy>> {
        if let Ok(m) = name.parse::<u8>() {
            return self.get(m);
        }
        self.by_method
            .values()
            .find(|s| s.name() == name)
            .cloned()
            .ok_or_else(|| Error::config(format!("no hierarchical method named {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn HierarchyStrategy>> {
        self.by_method.values()
    }
}
