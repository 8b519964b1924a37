//! Evaluation: Precision@k over ranked candidates, radius-restricted
//! candidate sets, prevalence baselines, per-project aggregation, report
//! files, and rank statistics.

mod metrics;
mod scorers;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{evaluation_anchor, positive_candidates};
use crate::embedding::write_atomic;
use crate::error::{Error, Result};
use crate::graph::{Distance, ModelGraph, NodeId, Project};

pub use metrics::{dynamic_k, precision_at_k, RankedList};
pub use scorers::{CoChangeScorer, LabelTable, NextFocusScorer, RandomScorer, SemanticScorer, Scorer};
pub use stats::{mann_whitney_u, spearman_rho, Alternative, MannWhitney};

/// Largest k evaluated by default.
pub const K_MAX: usize = 10;
/// Fraction of candidates used for the dynamic k.
pub const DYNAMIC_K_FRACTION: f64 = 0.01;
/// Denominator floor for the precision/prevalence ratio.
pub const PREVALENCE_FLOOR: f64 = 1e-12;

/// A preserved node offered to the scorers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub id: NodeId,
    pub label: String,
    /// Undirected hop count from the anchor on the union graph.
    pub distance: Distance,
}

/// One anchor of one test diff with its unrestricted candidate set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalCase {
    pub project: String,
    pub diff_index: usize,
    pub anchor: NodeId,
    pub anchor_label: String,
    /// Sorted by id; never contains the anchor.
    pub candidates: Vec<Candidate>,
    pub positives: BTreeSet<NodeId>,
}

impl EvalCase {
    /// Candidates within `tau` hops of the anchor; all of them when `tau` is `None`.
    pub fn within(&self, tau: Option<usize>) -> Vec<&Candidate> {
        self.candidates
            .iter()
            .filter(|c| tau.is_none_or(|t| c.distance <= Distance::Finite(t)))
            .collect()
    }
}

/// Builds the case for diff `diff_index` of `project`, anchored at the
/// smallest changed node. `None` when the diff changes no node.
pub fn build_case(project: &Project, diff_index: usize) -> Result<Option<EvalCase>> {
    let (Some(source), Some(target)) = (
        project.versions.get(diff_index),
        project.versions.get(diff_index + 1),
    ) else {
        return Err(Error::ConfigInvalid(format!(
            "project `{}` has no diff {diff_index}",
            project.project
        )));
    };
    let d = crate::graph::diff_versions(source, target, diff_index, diff_index + 1);
    let Some(anchor) = evaluation_anchor(&d) else {
        return Ok(None);
    };
    let union = ModelGraph::union(source, target);
    let reach = union.bfs(&anchor)?;
    let anchor_label = target
        .label(&anchor)
        .or_else(|| source.label(&anchor))
        .unwrap_or_default()
        .to_owned();
    let positives = positive_candidates(&d, target).into_iter().cloned().collect();
    let candidates = d
        .preserved_nodes()
        .into_iter()
        .filter(|&v| *v != anchor)
        .map(|v| Candidate {
            id: v.clone(),
            label: target.label(v).unwrap_or_default().to_owned(),
            distance: reach.get(v).map_or(Distance::Infinite, |&x| Distance::Finite(x)),
        })
        .collect();
    Ok(Some(EvalCase {
        project: project.project.clone(),
        diff_index,
        anchor,
        anchor_label,
        candidates,
        positives,
    }))
}

/// Per-anchor outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorResult {
    pub project: String,
    #[serde(rename = "diff")]
    pub diff_index: usize,
    pub anchor: NodeId,
    pub candidates: usize,
    pub positives: usize,
    pub prevalence: f64,
    /// Precision@k for k = 1..=k_max.
    pub precision: Vec<f64>,
    pub dynamic_k: usize,
    pub precision_dynamic: f64,
}

impl AnchorResult {
    /// Mean of Precision@k over k = 1..=k_max.
    pub fn mean_precision(&self) -> f64 {
        mean(&self.precision)
    }
}

/// A case left out of the averages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedAnchor {
    pub project: String,
    #[serde(rename = "diff")]
    pub diff_index: usize,
    pub anchor: Option<NodeId>,
    pub reason: String,
}

/// Averages over evaluated anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub anchors: usize,
    pub skipped: usize,
    /// Mean Precision@k per k.
    pub precision: Vec<f64>,
    /// Mean of `precision`.
    pub mean_precision: f64,
    /// Mean per-anchor prevalence.
    pub prevalence: f64,
    pub ratio: Vec<f64>,
    pub margin: Vec<f64>,
    pub precision_dynamic: f64,
    /// Per-project mean Precision@k per k.
    pub per_project: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub approach: String,
    /// Radius threshold; `None` is unrestricted.
    pub tau: Option<usize>,
    pub k_max: usize,
    pub summary: Summary,
    pub anchors: Vec<AnchorResult>,
    pub skipped: Vec<SkippedAnchor>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Ranks every case with `scorer` and scores the rankings.
pub fn evaluate(scorer: &dyn Scorer, cases: &[EvalCase], k_max: usize, tau: Option<usize>) -> Result<EvalReport> {
    if k_max == 0 {
        return Err(Error::ConfigInvalid("k_max must be at least 1".into()));
    }
    let mut anchors = Vec::new();
    let mut skipped = Vec::new();
    for case in cases {
        let cands = case.within(tau);
        let ids: BTreeSet<&NodeId> = cands.iter().map(|c| &c.id).collect();
        let positives: BTreeSet<NodeId> = case.positives.iter().filter(|p| ids.contains(p)).cloned().collect();
        if positives.is_empty() {
            skipped.push(SkippedAnchor {
                project: case.project.clone(),
                diff_index: case.diff_index,
                anchor: Some(case.anchor.clone()),
                reason: Error::NoPositives.to_string(),
            });
            continue;
        }
        let ranking = scorer.rank(case, &cands)?;
        let list = RankedList::new(case.anchor.clone(), ranking, positives)?;
        if list.len() != cands.len() {
            return Err(Error::ConfigInvalid(format!(
                "scorer `{}` ranked {} of {} candidates",
                scorer.name(),
                list.len(),
                cands.len()
            )));
        }
        let precision = (1..=k_max)
            .map(|k| precision_at_k(&list, k))
            .collect::<Result<Vec<_>>>()?;
        let dk = dynamic_k(list.len(), DYNAMIC_K_FRACTION);
        anchors.push(AnchorResult {
            project: case.project.clone(),
            diff_index: case.diff_index,
            anchor: case.anchor.clone(),
            candidates: list.len(),
            positives: list.positives().len(),
            prevalence: list.prevalence(),
            precision,
            dynamic_k: dk,
            precision_dynamic: precision_at_k(&list, dk)?,
        });
    }
    let summary = summarize(&anchors, skipped.len(), k_max);
    Ok(EvalReport {
        approach: scorer.name().to_owned(),
        tau,
        k_max,
        summary,
        anchors,
        skipped,
    })
}

fn summarize(anchors: &[AnchorResult], skipped: usize, k_max: usize) -> Summary {
    let precision: Vec<f64> = (0..k_max)
        .map(|i| mean(&anchors.iter().map(|a| a.precision[i]).collect::<Vec<_>>()))
        .collect();
    let prevalence = mean(&anchors.iter().map(|a| a.prevalence).collect::<Vec<_>>());
    let per_project = (1..=k_max)
        .map(|k| aggregate_by_project(anchors, KChoice::Fixed(k)).expect("k within range"))
        .fold(BTreeMap::<String, Vec<f64>>::new(), |mut acc, t| {
            for (p, v) in t.per_project {
                acc.entry(p).or_default().push(v);
            }
            acc
        });
    Summary {
        anchors: anchors.len(),
        skipped,
        mean_precision: mean(&precision),
        ratio: precision.iter().map(|p| p / prevalence.max(PREVALENCE_FLOOR)).collect(),
        margin: precision.iter().map(|p| p - prevalence).collect(),
        precision,
        prevalence,
        precision_dynamic: mean(&anchors.iter().map(|a| a.precision_dynamic).collect::<Vec<_>>()),
        per_project,
    }
}

/// Which precision value to aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    /// The per-anchor k of `⌈0.01 · candidates⌉`.
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectTable {
    pub per_project: BTreeMap<String, f64>,
    /// Unweighted mean of the project means; 0 when there are none.
    pub overall: f64,
}

/// Mean over anchors within each project, then the mean over projects.
pub fn aggregate_by_project(results: &[AnchorResult], k: KChoice) -> Result<ProjectTable> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        let v = match k {
            KChoice::Dynamic => r.precision_dynamic,
            KChoice::Fixed(k) => *k
                .checked_sub(1)
                .and_then(|i| r.precision.get(i))
                .ok_or_else(|| Error::ConfigInvalid(format!("k={k} outside 1..={}", r.precision.len())))?,
        };
        groups.entry(r.project.clone()).or_default().push(v);
    }
    let per_project: BTreeMap<String, f64> = groups.into_iter().map(|(p, v)| (p, mean(&v))).collect();
    let overall = mean(&per_project.values().copied().collect::<Vec<_>>());
    Ok(ProjectTable { per_project, overall })
}

fn tau_text(tau: Option<usize>) -> String {
    tau.map_or_else(|| "inf".to_owned(), |t| t.to_string())
}

fn csv_bytes(f: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).map_err(|e| Error::Parse(e.to_string()))?;
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

/// One row per anchor and k.
pub fn write_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["approach", "tau", "project", "diff", "anchor", "k", "precision", "prevalence", "candidates", "positives"])?;
        let tau = tau_text(report.tau);
        for a in &report.anchors {
            for (i, p) in a.precision.iter().enumerate() {
                w.write_record([
                    report.approach.clone(),
                    tau.clone(),
                    a.project.clone(),
                    a.diff_index.to_string(),
                    a.anchor.to_string(),
                    (i + 1).to_string(),
                    p.to_string(),
                    a.prevalence.to_string(),
                    a.candidates.to_string(),
                    a.positives.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

pub fn write_json(report: &EvalReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    write_atomic(path, text.as_bytes())
}

pub fn read_json(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// The (radius, k, precision, prevalence, ratio, margin) series of a sweep.
pub fn write_plot_data(reports: &[EvalReport], path: &Path) -> Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["approach", "tau", "k", "precision", "prevalence", "ratio", "margin"])?;
        for r in reports {
            let s = &r.summary;
            for (i, p) in s.precision.iter().enumerate() {
                w.write_record([
                    r.approach.clone(),
                    tau_text(r.tau),
                    (i + 1).to_string(),
                    p.to_string(),
                    s.prevalence.to_string(),
                    s.ratio[i].to_string(),
                    s.margin[i].to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}
