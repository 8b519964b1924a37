//! Labeled anchor/candidate pairs, commit-ordered and cross-project splits,
//! and per-project balancing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a64;
use crate::error::{Error, Result};
use crate::graph::{ModelGraph, NodeId, StructuralDiff};

/// One training or evaluation data point.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledPair {
    pub project: String,
    #[serde(rename = "diff")]
    pub diff_index: usize,
    pub anchor: NodeId,
    pub candidate: NodeId,
    #[serde(with = "label01")]
    pub label: bool,
}

mod label01 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// Preserved nodes that have at least one direct successor among the changed
/// nodes, with successors read from the target version.
pub fn positive_candidates<'a>(d: &'a StructuralDiff, g_target: &ModelGraph) -> BTreeSet<&'a NodeId> {
    let changed = d.changed_nodes();
    d.preserved_nodes()
        .into_iter()
        .filter(|v| {
            g_target
                .succ(v)
                .map(|s| s.iter().any(|u| changed.contains(u)))
                .unwrap_or(false)
        })
        .collect()
}

/// Pairs every anchor with every preserved node and labels the pair positive
/// iff a direct successor of the candidate (in `g_target`) is a changed node.
pub fn label_pairs(
    project: &str,
    diff_index: usize,
    d: &StructuralDiff,
    g_target: &ModelGraph,
    anchors: &BTreeSet<NodeId>,
) -> Result<Vec<LabeledPair>> {
    if anchors.is_empty() {
        return Err(Error::EmptyAnchorSet);
    }
    let changed = d.changed_nodes();
    if let Some(a) = anchors.iter().find(|a| !changed.contains(a)) {
        return Err(Error::UnknownNode(format!("{a} (anchor is not a changed node)")));
    }
    let positives = positive_candidates(d, g_target);
    let candidates = d.preserved_nodes();
    let mut out = Vec::with_capacity(anchors.len() * candidates.len());
    for anchor in anchors {
        for &cand in &candidates {
            if cand == anchor {
                continue;
            }
            out.push(LabeledPair {
                project: project.to_owned(),
                diff_index,
                anchor: anchor.clone(),
                candidate: cand.clone(),
                label: positives.contains(cand),
            });
        }
    }
    Ok(out)
}

/// All changed nodes of `d`, the training-time anchor set.
pub fn all_anchors(d: &StructuralDiff) -> BTreeSet<NodeId> {
    d.changed_nodes().into_iter().cloned().collect()
}

/// The evaluation anchor: the lexicographically smallest changed node.
pub fn evaluation_anchor(d: &StructuralDiff) -> Option<NodeId> {
    d.changed_nodes().into_iter().next().cloned()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiffRef {
    pub project: String,
    #[serde(rename = "diff")]
    pub diff_index: usize,
}

impl DiffRef {
    pub fn new(project: impl Into<String>, diff_index: usize) -> Self {
        DiffRef {
            project: project.into(),
            diff_index,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Temporal,
    CrossProject,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub mode: SplitMode,
    pub train: Vec<DiffRef>,
    pub validation: Vec<DiffRef>,
    pub test: Vec<DiffRef>,
}

impl DatasetSplit {
    fn empty(mode: SplitMode) -> Self {
        DatasetSplit {
            mode,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }

    /// Concatenates per-project temporal splits.
    pub fn merge(parts: impl IntoIterator<Item = DatasetSplit>) -> DatasetSplit {
        let mut out = DatasetSplit::empty(SplitMode::Temporal);
        for p in parts {
            out.mode = p.mode;
            out.train.extend(p.train);
            out.validation.extend(p.validation);
            out.test.extend(p.test);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Commit-ordered split of one project's `n_diffs` diffs: all but the last two
/// train, the second-to-last validates, the last tests.
pub fn split_temporal(project: &str, n_diffs: usize) -> Result<DatasetSplit> {
    if n_diffs < 3 {
        return Err(Error::TooFewCommits {
            project: project.to_owned(),
            diffs: n_diffs,
        });
    }
    Ok(DatasetSplit {
        mode: SplitMode::Temporal,
        train: (0..n_diffs - 2).map(|i| DiffRef::new(project, i)).collect(),
        validation: vec![DiffRef::new(project, n_diffs - 2)],
        test: vec![DiffRef::new(project, n_diffs - 1)],
    })
}

/// Cross-project folds. Projects are shuffled by `seed` and dealt into
/// `folds` contiguous test groups whose sizes differ by at most one. Train
/// projects contribute their last diff to validation and the rest to
/// training; test projects contribute their last diff.
pub fn split_cross_project(
    projects: &[(String, usize)],
    folds: usize,
    seed: u64,
) -> Result<Vec<DatasetSplit>> {
    if folds < 2 || projects.len() < folds {
        return Err(Error::TooFewProjects {
            projects: projects.len(),
            folds,
        });
    }
    if let Some((p, n)) = projects.iter().find(|(_, n)| *n < 2) {
        return Err(Error::TooFewCommits {
            project: p.clone(),
            diffs: *n,
        });
    }
    let mut order: Vec<&(String, usize)> = projects.iter().collect();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = projects.len() / folds;
    let extra = projects.len() % folds;
    let mut splits = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let held: BTreeSet<&str> = order[start..start + size]
            .iter()
            .map(|(p, _)| p.as_str())
            .collect();
        start += size;
        let mut split = DatasetSplit::empty(SplitMode::CrossProject);
        let mut sorted: Vec<&(String, usize)> = projects.iter().collect();
        sorted.sort();
        for (p, n) in sorted {
            if held.contains(p.as_str()) {
                split.test.push(DiffRef::new(p, n - 1));
            } else {
                split.train.extend((0..n - 1).map(|i| DiffRef::new(p, i)));
                split.validation.push(DiffRef::new(p, n - 1));
            }
        }
        splits.push(split);
    }
    Ok(splits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    pub target_pairs_per_project: usize,
    pub seed: u64,
}

/// Resamples every project group to exactly `target_pairs_per_project` pairs.
///
/// Larger groups are subsampled without replacement, keeping original order.
/// Smaller groups keep every pair once and are topped up with draws with
/// replacement. Output is ordered by project id.
pub fn balance(
    groups: &BTreeMap<String, Vec<LabeledPair>>,
    cfg: &BalanceConfig,
) -> Result<Vec<LabeledPair>> {
    let target = cfg.target_pairs_per_project;
    if target == 0 {
        return Err(Error::ConfigInvalid(
            "target_pairs_per_project must be positive".into(),
        ));
    }
    let mut out = Vec::with_capacity(groups.len() * target);
    for (project, pairs) in groups {
        if pairs.is_empty() {
            return Err(Error::EmptyProject(project.clone()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ fnv1a64(project.as_bytes()));
        let n = pairs.len();
        if n >= target {
            let mut picked = index::sample(&mut rng, n, target).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| pairs[i].clone()));
        } else {
            out.extend(pairs.iter().cloned());
            out.extend((n..target).map(|_| pairs[rng.gen_range(0..n)].clone()));
        }
    }
    Ok(out)
}

/// Groups pairs by project.
pub fn group_by_project(pairs: Vec<LabeledPair>) -> BTreeMap<String, Vec<LabeledPair>> {
    let mut groups: BTreeMap<String, Vec<LabeledPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.project.clone()).or_default().push(p);
    }
    groups
}

pub fn write_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: LabeledPair = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(pair);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{diff, Edge};

    fn chain_diff() -> (StructuralDiff, ModelGraph) {
        let m = ModelGraph::new(
            [("A".into(), "a".to_string()), ("B".into(), "b".to_string())],
            [Edge::new("A", "B", "")],
        )
        .unwrap();
        let n = ModelGraph::new(
            [
                ("A".into(), "a".to_string()),
                ("B".into(), "b".to_string()),
                ("C".into(), "c".to_string()),
            ],
            [Edge::new("A", "B", ""), Edge::new("B", "C", "")],
        )
        .unwrap();
        (diff(&m, &n), n)
    }

    #[test]
    fn labels_follow_successor_rule() {
        let (d, n) = chain_diff();
        let pairs = label_pairs("p", 0, &d, &n, &["C".into()].into()).unwrap();
        let by_cand: BTreeMap<&str, bool> = pairs
            .iter()
            .map(|p| (p.candidate.as_str(), p.label))
            .collect();
        assert_eq!(by_cand, [("A", false), ("B", true)].into());
    }

    #[test]
    fn empty_anchor_set_is_rejected() {
        let (_, n) = chain_diff();
        let d = diff(&n, &n);
        assert!(matches!(
            label_pairs("p", 0, &d, &n, &all_anchors(&d)),
            Err(Error::EmptyAnchorSet)
        ));
    }

    #[test]
    fn anchors_must_be_changed() {
        let (d, n) = chain_diff();
        assert!(label_pairs("p", 0, &d, &n, &["A".into()].into()).is_err());
    }

    #[test]
    fn temporal_split_layout() {
        let s = split_temporal("p", 5).unwrap();
        let idx = |v: &[DiffRef]| v.iter().map(|r| r.diff_index).collect::<Vec<_>>();
        assert_eq!(idx(&s.train), [0, 1, 2]);
        assert_eq!(idx(&s.validation), [3]);
        assert_eq!(idx(&s.test), [4]);
        let s = split_temporal("p", 3).unwrap();
        assert_eq!((idx(&s.train), idx(&s.validation), idx(&s.test)), (vec![0], vec![1], vec![2]));
        assert!(matches!(split_temporal("p", 2), Err(Error::TooFewCommits { .. })));
    }

    fn projects(n: usize) -> Vec<(String, usize)> {
        (0..n).map(|i| (format!("p{i}"), 4)).collect()
    }

    #[test]
    fn cross_project_folds_partition_projects() {
        let folds = split_cross_project(&projects(10), 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.test.len() == 1));

        let folds = split_cross_project(&projects(4), 2, 7).unwrap();
        let tests: Vec<BTreeSet<String>> = folds
            .iter()
            .map(|f| f.test.iter().map(|r| r.project.clone()).collect())
            .collect();
        assert!(tests.iter().all(|t| t.len() == 2));
        assert!(tests[0].is_disjoint(&tests[1]));
        for f in &folds {
            let train: BTreeSet<_> = f.train.iter().map(|r| &r.project).collect();
            assert!(f.test.iter().all(|r| !train.contains(&r.project)));
        }
        assert!(matches!(
            split_cross_project(&projects(3), 5, 7),
            Err(Error::TooFewProjects { .. })
        ));
        assert_eq!(
            split_cross_project(&projects(7), 3, 11).unwrap(),
            split_cross_project(&projects(7), 3, 11).unwrap()
        );
    }

    fn group(project: &str, n: usize) -> Vec<LabeledPair> {
        (0..n)
            .map(|i| LabeledPair {
                project: project.into(),
                diff_index: 0,
                anchor: "a".into(),
                candidate: NodeId::new(format!("c{i}")).unwrap(),
                label: i % 7 == 0,
            })
            .collect()
    }

    #[test]
    fn balance_sizes_and_identity() {
        let groups: BTreeMap<_, _> = [("big".to_string(), group("big", 100)), ("small".to_string(), group("small", 10))].into();
        let cfg = BalanceConfig { target_pairs_per_project: 50, seed: 3 };
        let out = balance(&groups, &cfg).unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(out.iter().filter(|p| p.project == "big").count(), 50);
        assert_eq!(out.iter().filter(|p| p.project == "small").count(), 50);
        let big: BTreeSet<_> = out.iter().filter(|p| p.project == "big").map(|p| &p.candidate).collect();
        assert_eq!(big.len(), 50, "down-sampling draws without replacement");
        assert_eq!(out, balance(&groups, &cfg).unwrap());

        let exact: BTreeMap<_, _> = [("p".to_string(), group("p", 50))].into();
        assert_eq!(balance(&exact, &cfg).unwrap(), group("p", 50));

        let empty: BTreeMap<_, _> = [("e".to_string(), Vec::new())].into();
        assert!(matches!(balance(&empty, &cfg), Err(Error::EmptyProject(_))));
    }

    #[test]
    fn pairs_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = group("p", 5);
        write_pairs(&path, &pairs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains(r#""diff":0"#));
        assert!(text.lines().next().unwrap().ends_with(r#""label":1}"#));
        assert_eq!(read_pairs(&path).unwrap(), pairs);
        fs::write(&path, r#"{"project":"p","diff":0,"anchor":"a","candidate":"b","label":2}"#).unwrap();
        assert!(read_pairs(&path).is_err());
    }

}
