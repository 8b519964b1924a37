use std::collections::BTreeSet;

use crate::baselines::Scored;
use crate::error::{Error, Result};
use crate::graph::NodeId;

/// A scored candidate ordering for one anchor, with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    anchor: NodeId,
    ranking: Vec<Scored>,
    positives: BTreeSet<NodeId>,
}

impl RankedList {
    /// Fails if a candidate repeats or a positive is not among the candidates.
    pub fn new(anchor: NodeId, ranking: Vec<Scored>, positives: BTreeSet<NodeId>) -> Result<Self> {
        let ids: BTreeSet<&NodeId> = ranking.iter().map(|s| &s.id).collect();
        if ids.len() != ranking.len() {
            return Err(Error::ConfigInvalid(format!("ranking for `{anchor}` repeats a candidate")));
        }
        if let Some(p) = positives.iter().find(|p| !ids.contains(p)) {
            return Err(Error::UnknownNode(format!("{p} (positive is not a candidate of `{anchor}`)")));
        }
        Ok(RankedList {
            anchor,
            ranking,
            positives,
        })
    }

    pub fn anchor(&self) -> &NodeId {
        &self.anchor
    }

    pub fn ranking(&self) -> &[Scored] {
        &self.ranking
    }

    pub fn positives(&self) -> &BTreeSet<NodeId> {
        &self.positives
    }

    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }

    /// The first `k` candidate ids.
    pub fn top_k(&self, k: usize) -> impl Iterator<Item = &NodeId> {
        self.ranking.iter().take(k).map(|s| &s.id)
    }

    /// Positives over candidates.
    pub fn prevalence(&self) -> f64 {
        if self.ranking.is_empty() {
            0.0
        } else {
            self.positives.len() as f64 / self.ranking.len() as f64
        }
    }
}

/// Positives among the top `k`, divided by `min(k, #positives)`.
pub fn precision_at_k(r: &RankedList, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::ConfigInvalid("k must be at least 1".into()));
    }
    if r.positives.is_empty() {
        return Err(Error::NoPositives);
    }
    let hits = r.top_k(k).filter(|id| r.positives.contains(*id)).count();
    Ok(hits as f64 / k.min(r.positives.len()) as f64)
}

/// `⌈fraction · candidates⌉`, at least 1.
pub fn dynamic_k(candidates: usize, fraction: f64) -> usize {
    ((fraction * candidates as f64).ceil() as usize).max(1)
}
