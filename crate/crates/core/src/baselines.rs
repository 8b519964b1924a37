//! Comparison rankers: uniform random order, cosine similarity to the anchor
//! label, and historical co-change counts.
//!
//! Every ranker breaks ties by ascending node id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledPair;
use crate::embedding::{cosine, fnv1a64, EmbeddingVector};
use crate::error::{Error, Result};
use crate::graph::{NodeId, StructuralDiff};
use crate::scalar::Scalar;

/// A candidate with the score its ranker assigned.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub id: NodeId,
    pub score: f64,
}

/// Sorts by descending score, then ascending id. NaN scores sort last.
pub fn sort_by_score(items: &mut [Scored]) {
    items.sort_by(|a, b| {
        match (a.score.is_nan(), b.score.is_nan()) {
            (true, false) => return Ordering::Greater,
            (false, true) => return Ordering::Less,
            _ => {}
        }
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
}

/// Uniform random permutation, seeded by `seed` and the anchor id.
pub fn rank_random(candidates: &[NodeId], anchor: &NodeId, seed: u64) -> Result<Vec<Scored>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut order: Vec<NodeId> = candidates.to_vec();
    order.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(anchor.as_str().as_bytes()));
    order.shuffle(&mut rng);
    let n = order.len();
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, id)| Scored {
            id,
            score: (n - i) as f64,
        })
        .collect())
}

/// Candidates by descending cosine similarity to the anchor. Candidates
/// whose similarity is undefined (zero vectors) come last.
pub fn rank_semantic<T: Scalar>(
    anchor: &EmbeddingVector<T>,
    candidates: &[(NodeId, &EmbeddingVector<T>)],
) -> Vec<Scored> {
    let mut out: Vec<Scored> = candidates
        .iter()
        .map(|(id, emb)| Scored {
            id: id.clone(),
            score: cosine(anchor, emb).map_or(f64::NEG_INFINITY, |c| c.as_f64()),
        })
        .collect();
    sort_by_score(&mut out);
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoChangeMode {
    /// Count positive (anchor, candidate) pairs under the labeling rule.
    #[default]
    Aligned,
    /// Count pairs of nodes that both changed in the same diff.
    Literal,
}

/// How often each (anchor, candidate) pair co-changed in training history.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoChangeMatrix {
    counts: BTreeMap<(NodeId, NodeId), u64>,
}

#[derive(Serialize, Deserialize)]
struct CountRecord {
    anchor: NodeId,
    candidate: NodeId,
    count: u64,
}

impl CoChangeMatrix {
    /// Counts every distinct positive `(diff, anchor, candidate)` once.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a LabeledPair>) -> Self {
        let mut m = CoChangeMatrix::default();
        m.add_pairs(pairs);
        m
    }

    pub fn add_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = &'a LabeledPair>) {
        let distinct: BTreeSet<(&str, usize, &NodeId, &NodeId)> = pairs
            .into_iter()
            .filter(|p| p.label)
            .map(|p| (p.project.as_str(), p.diff_index, &p.anchor, &p.candidate))
            .collect();
        for (_, _, a, c) in distinct {
            *self.counts.entry((a.clone(), c.clone())).or_default() += 1;
        }
    }

    /// Counts ordered pairs of distinct nodes changed in the same diff.
    pub fn from_diffs_literal<'a>(diffs: impl IntoIterator<Item = &'a StructuralDiff>) -> Self {
        let mut m = CoChangeMatrix::default();
        for d in diffs {
            let changed = d.changed_nodes();
            for &a in &changed {
                for &b in &changed {
                    if a != b {
                        *m.counts.entry((a.clone(), b.clone())).or_default() += 1;
                    }
                }
            }
        }
        m
    }

    pub fn merge(&mut self, other: &CoChangeMatrix) {
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_default() += v;
        }
    }

    pub fn count(&self, anchor: &NodeId, candidate: &NodeId) -> u64 {
        self.counts
            .get(&(anchor.clone(), candidate.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &NodeId, u64)> {
        self.counts.iter().map(|((a, c), &n)| (a, c, n))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (a, c, n) in self.iter() {
            serde_json::to_writer(
                &mut out,
                &CountRecord {
                    anchor: a.clone(),
                    candidate: c.clone(),
                    count: n,
                },
            )?;
            out.write_all(b"\n").expect("writing to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = CoChangeMatrix::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let r: CountRecord = serde_json::from_str(line)?;
            if r.count > 0 {
                *m.counts.entry((r.anchor, r.candidate)).or_default() += r.count;
            }
        }
        Ok(m)
    }
}

/// Candidates by descending co-change count with the anchor.
pub fn rank_cochange(matrix: &CoChangeMatrix, anchor: &NodeId, candidates: &[NodeId]) -> Vec<Scored> {
    let mut out: Vec<Scored> = candidates
        .iter()
        .map(|c| Scored {
            id: c.clone(),
            score: matrix.count(anchor, c) as f64,
        })
        .collect();
    sort_by_score(&mut out);
    out
}
