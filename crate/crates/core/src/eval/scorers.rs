use std::collections::BTreeMap;

use crate::baselines::{rank_cochange, rank_random, rank_semantic, sort_by_score, CoChangeMatrix, Scored};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::ranker::RankerParams;
use crate::scalar::Scalar;

use super::{Candidate, EvalCase};

/// Label text to embedding.
pub type LabelTable<T> = BTreeMap<String, EmbeddingVector<T>>;

/// Produces a full ordering of the given candidates for one case.
pub trait Scorer {
    fn name(&self) -> &str;
    fn rank(&self, case: &EvalCase, candidates: &[&Candidate]) -> Result<Vec<Scored>>;
}

fn lookup<'t, T>(table: &'t LabelTable<T>, label: &str) -> Result<&'t EmbeddingVector<T>> {
    table
        .get(label)
        .ok_or_else(|| Error::UnknownNode(format!("no embedding for label `{label}`")))
}

/// The trained attention ranker.
pub struct NextFocusScorer<'a, T> {
    pub params: &'a RankerParams<T>,
    pub embeddings: &'a LabelTable<T>,
}

impl<T: Scalar> Scorer for NextFocusScorer<'_, T> {
    fn name(&self) -> &str {
        "nextfocus"
    }

    fn rank(&self, case: &EvalCase, candidates: &[&Candidate]) -> Result<Vec<Scored>> {
        let anchor = lookup(self.embeddings, &case.anchor_label)?;
        let mut out = Vec::with_capacity(candidates.len());
        for c in candidates {
            let emb = lookup(self.embeddings, &c.label)?;
            let z = self.params.forward(anchor.as_slice(), emb.as_slice())?;
            out.push(Scored {
                id: c.id.clone(),
                score: z.as_f64(),
            });
        }
        sort_by_score(&mut out);
        Ok(out)
    }
}

pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn rank(&self, case: &EvalCase, candidates: &[&Candidate]) -> Result<Vec<Scored>> {
        let ids: Vec<NodeId> = candidates.iter().map(|c| c.id.clone()).collect();
        rank_random(&ids, &case.anchor, self.seed)
    }
}

/// Cosine similarity between label embeddings.
pub struct SemanticScorer<'a, T> {
    pub embeddings: &'a LabelTable<T>,
}

impl<T: Scalar> Scorer for SemanticScorer<'_, T> {
    fn name(&self) -> &str {
        "semantic"
    }

    fn rank(&self, case: &EvalCase, candidates: &[&Candidate]) -> Result<Vec<Scored>> {
        let anchor = lookup(self.embeddings, &case.anchor_label)?;
        let embs = candidates
            .iter()
            .map(|c| Ok((c.id.clone(), lookup(self.embeddings, &c.label)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(rank_semantic(anchor, &embs))
    }
}

/// Historical co-change counts, one matrix per project since node ids are
/// only unique within a project.
pub struct CoChangeScorer<'a> {
    pub matrices: &'a BTreeMap<String, CoChangeMatrix>,
}

impl Scorer for CoChangeScorer<'_> {
    fn name(&self) -> &str {
        "cochange"
    }

    fn rank(&self, case: &EvalCase, candidates: &[&Candidate]) -> Result<Vec<Scored>> {
        let ids: Vec<NodeId> = candidates.iter().map(|c| c.id.clone()).collect();
        let empty = CoChangeMatrix::default();
        let m = self.matrices.get(&case.project).unwrap_or(&empty);
        Ok(rank_cochange(m, &case.anchor, &ids))
    }
}
