//! End-to-end commands: generate a corpus, prepare labeled pairs and splits,
//! train, evaluate an approach, rank focus nodes, and check gradients.
//!
//! Every command reads a [`RunConfig`] and writes under its output
//! directory:
//!
//! ```text
//! <out>/corpus/projects/<project>.json   gen
//! <out>/corpus/manifest.json             gen
//! <out>/prepared/split.json              prepare
//! <out>/prepared/{train,validation,test}.jsonl
//! <out>/prepared/cochange/<project>.jsonl
//! <out>/model/checkpoint.json            train
//! <out>/reports/<approach>.{csv,json}    eval
//! <out>/run-manifest.json                every command
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::baselines::{CoChangeMatrix, CoChangeMode, Scored};
use crate::datagen::{self, CorpusStats, GenConfig};
use crate::dataset::{
    all_anchors, balance, group_by_project, label_pairs, read_pairs, split_cross_project, split_temporal,
    write_pairs, BalanceConfig, DatasetSplit, DiffRef, LabeledPair, SplitMode,
};
use crate::embedding::{write_atomic, Embedder, ProviderConfig};
use crate::error::{Error, Result};
use crate::eval::{
    self, build_case, evaluate, CoChangeScorer, EvalCase, EvalReport, LabelTable, NextFocusScorer, RandomScorer,
    Scorer, SemanticScorer,
};
use crate::graph::{diff_versions, NodeId, Project};
use crate::ranker::{grid_search, gradcheck, Checkpoint, GradCheckReport, GridConfig, GridPoint, Sample, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    /// Cross-project folds.
    pub folds: usize,
    /// Which cross-project fold to train and test on.
    pub fold: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            mode: SplitMode::Temporal,
            folds: 4,
            fold: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSettings {
    /// Resample each project's training pairs to this count; off when absent.
    pub target_pairs_per_project: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k_max: usize,
    /// Radius threshold; unrestricted when absent.
    pub tau: Option<usize>,
    /// Radii evaluated when plot data is requested; `null` is unrestricted.
    pub sweep: Vec<Option<usize>>,
    pub plot_data: bool,
    pub random_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_max: eval::K_MAX,
            tau: None,
            sweep: vec![Some(1), Some(2), Some(3), None],
            plot_data: false,
            random_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Corpus location; `<out_dir>/corpus` when absent.
    pub corpus_dir: Option<PathBuf>,
    /// When set, overrides every component seed.
    pub seed: Option<u64>,
    pub gen: GenConfig,
    pub provider: ProviderConfig,
    pub train: TrainConfig,
    /// Hyperparameter grid searched by `train`; empty trains `train` as is.
    pub tune: GridConfig,
    pub split: SplitConfig,
    pub balance: BalanceSettings,
    pub cochange_mode: CoChangeMode,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("run"),
            corpus_dir: None,
            seed: None,
            gen: GenConfig::default(),
            provider: ProviderConfig::default(),
            train: TrainConfig::default(),
            tune: GridConfig::default(),
            split: SplitConfig::default(),
            balance: BalanceSettings::default(),
            cochange_mode: CoChangeMode::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Sets a dotted key such as `train.learning_rate` in a JSON object. The
/// value is read as JSON when it parses, as a string otherwise.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::ConfigInvalid(format!("malformed key `{key}`")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        node = node
            .as_object_mut()
            .expect("object")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node {
        Value::Object(map) => {
            map.insert(parts[parts.len() - 1].to_owned(), value);
            Ok(())
        }
        _ => Err(Error::ConfigInvalid(format!("`{key}` does not name an object field"))),
    }
}

/// Overlays `patch` onto `base`, recursing into objects present in both.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Reads the optional config file, applies `key=value` overrides, then
    /// the seed and output flags, and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::MissingArtifact(p.to_path_buf()));
                }
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let file: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", p.display())))?;
                let mut root = serde_json::to_value(RunConfig::default())?;
                merge(&mut root, file);
                root
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid(format!("override `{o}` is not key=value")))?;
            apply_override(&mut root, k.trim(), v.trim())?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(root).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        if seed.is_some() {
            cfg.seed = seed;
        }
        if let Some(o) = out {
            cfg.out_dir = o.to_path_buf();
        }
        cfg.resolve_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copies the global seed, if any, into every component.
    pub fn resolve_seeds(&mut self) {
        if let Some(s) = self.seed {
            self.gen.seed = s;
            self.train.seed = s;
            self.split.seed = s;
            self.balance.seed = s;
            self.eval.random_seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.provider.validate()?;
        self.train.validate()?;
        if self.split.mode == SplitMode::CrossProject && self.split.fold >= self.split.folds {
            return Err(Error::ConfigInvalid(format!(
                "fold {} outside 0..{}",
                self.split.fold, self.split.folds
            )));
        }
        if self.balance.target_pairs_per_project == Some(0) {
            return Err(Error::ConfigInvalid("target_pairs_per_project must be positive".into()));
        }
        if self.eval.k_max == 0 {
            return Err(Error::ConfigInvalid("k_max must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn layout(&self) -> Layout {
        Layout {
            out: self.out_dir.clone(),
            corpus: self.corpus_dir.clone().unwrap_or_else(|| self.out_dir.join("corpus")),
        }
    }
}

/// File locations of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub out: PathBuf,
    pub corpus: PathBuf,
}

impl Layout {
    pub fn projects(&self) -> PathBuf {
        self.corpus.join(datagen::PROJECTS_DIR)
    }
    pub fn prepared(&self) -> PathBuf {
        self.out.join("prepared")
    }
    pub fn split(&self) -> PathBuf {
        self.prepared().join("split.json")
    }
    pub fn pairs(&self, partition: &str) -> PathBuf {
        self.prepared().join(format!("{partition}.jsonl"))
    }
    pub fn cochange(&self) -> PathBuf {
        self.prepared().join("cochange")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.out.join("model").join("checkpoint.json")
    }
    pub fn grid(&self) -> PathBuf {
        self.out.join("model").join("grid.json")
    }
    pub fn reports(&self) -> PathBuf {
        self.out.join("reports")
    }
    pub fn manifest(&self) -> PathBuf {
        self.out.join("run-manifest.json")
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn require(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(p.to_path_buf()))
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(path, text.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub gen: u64,
    pub train: u64,
    pub split: u64,
    pub balance: u64,
    pub random: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub config_sha256: String,
    pub seeds: Seeds,
    pub config: RunConfig,
}

/// Everything needed to repeat each command of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

fn record(cfg: &RunConfig, command: &str) -> Result<()> {
    let layout = cfg.layout();
    let path = layout.manifest();
    let mut m = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str::<RunManifest>(&text).ok(),
        Err(_) => None,
    }
    .unwrap_or_else(|| RunManifest {
        tool: "nextfocus".into(),
        version: String::new(),
        commands: BTreeMap::new(),
    });
    m.version = env!("CARGO_PKG_VERSION").into();
    m.commands.insert(
        command.to_owned(),
        CommandRecord {
            config_sha256: cfg.sha256(),
            seeds: Seeds {
                gen: cfg.gen.seed,
                train: cfg.train.seed,
                split: cfg.split.seed,
                balance: cfg.balance.seed,
                random: cfg.eval.random_seed,
            },
            config: cfg.clone(),
        },
    );
    write_json(&path, &m)
}

/// Generates the synthetic corpus.
pub fn cmd_gen(cfg: &RunConfig) -> Result<CorpusStats> {
    let corpus = datagen::generate(&cfg.gen)?;
    let layout = cfg.layout();
    ensure_dir(&layout.corpus)?;
    corpus.save(&layout.corpus)?;
    record(cfg, "gen")?;
    datagen::describe(&corpus.projects)
}

fn load_projects(layout: &Layout) -> Result<BTreeMap<String, Project>> {
    let list = datagen::load_projects(&layout.projects())?;
    if list.is_empty() {
        return Err(Error::MissingArtifact(layout.projects()));
    }
    Ok(list.into_iter().map(|p| (p.project.clone(), p)).collect())
}

fn project_of<'p>(projects: &'p BTreeMap<String, Project>, name: &str) -> Result<&'p Project> {
    projects
        .get(name)
        .ok_or_else(|| Error::ConfigInvalid(format!("unknown project `{name}`")))
}

/// Labeled pairs of the referenced diffs, every changed node an anchor.
fn pairs_for(projects: &BTreeMap<String, Project>, refs: &[DiffRef]) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    for r in refs {
        let p = project_of(projects, &r.project)?;
        let (Some(src), Some(tgt)) = (p.versions.get(r.diff_index), p.versions.get(r.diff_index + 1)) else {
            return Err(Error::ConfigInvalid(format!("project `{}` has no diff {}", r.project, r.diff_index)));
        };
        let d = diff_versions(src, tgt, r.diff_index, r.diff_index + 1);
        let anchors = all_anchors(&d);
        if anchors.is_empty() {
            continue;
        }
        out.extend(label_pairs(&r.project, r.diff_index, &d, tgt, &anchors)?);
    }
    Ok(out)
}

fn make_split(cfg: &RunConfig, projects: &BTreeMap<String, Project>) -> Result<DatasetSplit> {
    match cfg.split.mode {
        SplitMode::Temporal => Ok(DatasetSplit::merge(
            projects
                .values()
                .map(|p| split_temporal(&p.project, p.versions.len().saturating_sub(1)))
                .collect::<Result<Vec<_>>>()?,
        )),
        SplitMode::CrossProject => {
            let sizes: Vec<(String, usize)> = projects
                .values()
                .map(|p| (p.project.clone(), p.versions.len().saturating_sub(1)))
                .collect();
            let mut folds = split_cross_project(&sizes, cfg.split.folds, cfg.split.seed)?;
            Ok(folds.swap_remove(cfg.split.fold))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub train_pairs: usize,
    pub validation_pairs: usize,
    pub test_pairs: usize,
    pub labels: usize,
}

/// Splits the corpus, labels pairs, balances training pairs, counts
/// co-changes over the training history and warms the embedding cache.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    let layout = cfg.layout();
    require(&layout.projects())?;
    let projects = load_projects(&layout)?;
    let split = make_split(cfg, &projects)?;
    ensure_dir(&layout.prepared())?;
    split.save(&layout.split())?;

    let history: Vec<DiffRef> = split.train.iter().chain(&split.validation).cloned().collect();
    let cochange_dir = layout.cochange();
    if cochange_dir.exists() {
        fs::remove_dir_all(&cochange_dir).map_err(|e| Error::io(&cochange_dir, e))?;
    }
    ensure_dir(&cochange_dir)?;
    for name in projects.keys() {
        let refs: Vec<DiffRef> = history.iter().filter(|r| &r.project == name).cloned().collect();
        let m = match cfg.cochange_mode {
            CoChangeMode::Aligned => CoChangeMatrix::from_pairs(&pairs_for(&projects, &refs)?),
            CoChangeMode::Literal => {
                let p = &projects[name];
                let diffs: Vec<_> = refs
                    .iter()
                    .map(|r| diff_versions(&p.versions[r.diff_index], &p.versions[r.diff_index + 1], r.diff_index, r.diff_index + 1))
                    .collect();
                CoChangeMatrix::from_diffs_literal(&diffs)
            }
        };
        m.write_jsonl(&cochange_dir.join(format!("{name}.jsonl")))?;
    }

    let mut train_pairs = pairs_for(&projects, &split.train)?;
    if let Some(target) = cfg.balance.target_pairs_per_project {
        let bc = BalanceConfig {
            target_pairs_per_project: target,
            seed: cfg.balance.seed,
        };
        train_pairs = balance(&group_by_project(train_pairs), &bc)?;
    }
    let validation_pairs = pairs_for(&projects, &split.validation)?;
    let test_pairs = pairs_for(&projects, &split.test)?;
    write_pairs(&layout.pairs("train"), &train_pairs)?;
    write_pairs(&layout.pairs("validation"), &validation_pairs)?;
    write_pairs(&layout.pairs("test"), &test_pairs)?;

    let labels: BTreeSet<String> = projects
        .values()
        .flat_map(|p| p.versions.iter().flat_map(|v| v.nodes().map(|(_, l)| l.to_owned())))
        .collect();
    let labels: Vec<String> = labels.into_iter().collect();
    Embedder::new(cfg.provider.clone())?.embed(&labels)?;

    record(cfg, "prepare")?;
    Ok(PrepareSummary {
        train_pairs: train_pairs.len(),
        validation_pairs: validation_pairs.len(),
        test_pairs: test_pairs.len(),
        labels: labels.len(),
    })
}

/// Label of a node in a diff: from the target version, else the source.
fn label_in(p: &Project, diff_index: usize, id: &NodeId) -> Result<String> {
    p.versions
        .get(diff_index + 1)
        .and_then(|g| g.label(id))
        .or_else(|| p.versions.get(diff_index).and_then(|g| g.label(id)))
        .map(str::to_owned)
        .ok_or_else(|| Error::UnknownNode(format!("{id} in {} diff {diff_index}", p.project)))
}

/// Embedding table rows and samples for a set of pairs.
struct Encoded {
    rows: BTreeMap<String, usize>,
}

impl Encoded {
    fn samples(&mut self, projects: &BTreeMap<String, Project>, pairs: &[LabeledPair]) -> Result<Vec<Sample>> {
        let mut row = |label: String| {
            let n = self.rows.len();
            *self.rows.entry(label).or_insert(n)
        };
        pairs
            .iter()
            .map(|x| {
                let p = project_of(projects, &x.project)?;
                Ok(Sample {
                    anchor: row(label_in(p, x.diff_index, &x.anchor)?),
                    candidate: row(label_in(p, x.diff_index, &x.candidate)?),
                    label: x.label,
                })
            })
            .collect()
    }

    fn table(&self, embedder: &Embedder) -> Result<Vec<Vec<f64>>> {
        let mut labels = vec![String::new(); self.rows.len()];
        for (l, &i) in &self.rows {
            labels[i] = l.clone();
        }
        Ok(embedder.embed(&labels)?.into_iter().map(|v| v.as_slice().to_vec()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_val_loss: Option<f64>,
    pub checkpoint: PathBuf,
    /// Every grid point tried; one entry when no grid is configured.
    pub grid: Vec<GridPoint>,
}

/// Trains the ranker on the prepared pairs and writes the checkpoint.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let layout = cfg.layout();
    for p in [layout.pairs("train"), layout.pairs("validation")] {
        require(&p)?;
    }
    let projects = load_projects(&layout)?;
    let mut enc = Encoded { rows: BTreeMap::new() };
    let train_set = enc.samples(&projects, &read_pairs(&layout.pairs("train"))?)?;
    let val_set = enc.samples(&projects, &read_pairs(&layout.pairs("validation"))?)?;
    let embedder = Embedder::new(cfg.provider.clone())?;
    let table = enc.table(&embedder)?;
    let (ckpt, grid) = grid_search::<f64>(&table, &train_set, &val_set, &cfg.train, &cfg.tune, &embedder.fingerprint())?;
    let path = layout.checkpoint();
    ensure_dir(path.parent().expect("model dir"))?;
    ckpt.save(&path)?;
    if !cfg.tune.is_empty() {
        write_json(&layout.grid(), &grid)?;
    }
    record(cfg, "train")?;
    Ok(TrainSummary {
        epochs_run: ckpt.history.len(),
        best_val_loss: ckpt.history.iter().map(|m| m.val_loss).reduce(f64::min),
        checkpoint: path,
        grid,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    NextFocus,
    Random,
    Semantic,
    CoChange,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::NextFocus, Approach::Random, Approach::Semantic, Approach::CoChange];

    pub fn name(self) -> &'static str {
        match self {
            Approach::NextFocus => "nextfocus",
            Approach::Random => "random",
            Approach::Semantic => "semantic",
            Approach::CoChange => "cochange",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown approach `{s}`")))
    }
}

fn load_checkpoint(layout: &Layout, embedder: &Embedder) -> Result<Checkpoint<f64>> {
    let ckpt = Checkpoint::<f64>::load(&layout.checkpoint())?;
    if ckpt.provider != embedder.fingerprint() {
        return Err(Error::ConfigInvalid(format!(
            "checkpoint was trained on `{}` embeddings, configured provider is `{}`",
            ckpt.provider,
            embedder.fingerprint()
        )));
    }
    Ok(ckpt)
}

fn label_table(embedder: &Embedder, labels: BTreeSet<&str>) -> Result<LabelTable<f64>> {
    let labels: Vec<String> = labels.into_iter().map(str::to_owned).collect();
    let vecs = embedder.embed(&labels)?;
    Ok(labels.into_iter().zip(vecs).collect())
}

/// Test cases of the prepared split.
pub fn test_cases(cfg: &RunConfig) -> Result<Vec<EvalCase>> {
    let layout = cfg.layout();
    require(&layout.split())?;
    let projects = load_projects(&layout)?;
    let split = DatasetSplit::load(&layout.split())?;
    let mut cases = Vec::new();
    for r in &split.test {
        match build_case(project_of(&projects, &r.project)?, r.diff_index)? {
            Some(c) => cases.push(c),
            None => log::warn!("{} diff {} changes no node; not evaluated", r.project, r.diff_index),
        }
    }
    Ok(cases)
}

fn report_name(approach: Approach, tau: Option<usize>) -> String {
    match tau {
        Some(t) => format!("{approach}-tau{t}"),
        None => approach.name().to_owned(),
    }
}

/// Evaluates one approach on the test diffs. The first report uses the
/// configured radius; with plot data enabled, one report per swept radius
/// follows.
pub fn cmd_eval(cfg: &RunConfig, approach: Approach) -> Result<Vec<EvalReport>> {
    let layout = cfg.layout();
    require(&layout.split())?;
    let embedder = Embedder::new(cfg.provider.clone())?;
    let checkpoint = match approach {
        Approach::NextFocus => Some(load_checkpoint(&layout, &embedder)?),
        _ => None,
    };
    let matrices = match approach {
        Approach::CoChange => {
            require(&layout.cochange())?;
            let projects = load_projects(&layout)?;
            let mut m = BTreeMap::new();
            for name in projects.keys() {
                let path = layout.cochange().join(format!("{name}.jsonl"));
                require(&path)?;
                m.insert(name.clone(), CoChangeMatrix::read_jsonl(&path)?);
            }
            m
        }
        _ => BTreeMap::new(),
    };
    let cases = test_cases(cfg)?;
    let table = match approach {
        Approach::NextFocus | Approach::Semantic => label_table(
            &embedder,
            cases
                .iter()
                .flat_map(|c| std::iter::once(c.anchor_label.as_str()).chain(c.candidates.iter().map(|x| x.label.as_str())))
                .collect(),
        )?,
        _ => LabelTable::new(),
    };
    let scorer: Box<dyn Scorer + '_> = match approach {
        Approach::NextFocus => Box::new(NextFocusScorer {
            params: &checkpoint.as_ref().expect("loaded").params,
            embeddings: &table,
        }),
        Approach::Random => Box::new(RandomScorer {
            seed: cfg.eval.random_seed,
        }),
        Approach::Semantic => Box::new(SemanticScorer { embeddings: &table }),
        Approach::CoChange => Box::new(CoChangeScorer { matrices: &matrices }),
    };

    let dir = layout.reports();
    ensure_dir(&dir)?;
    let mut reports = vec![evaluate(scorer.as_ref(), &cases, cfg.eval.k_max, cfg.eval.tau)?];
    let base = report_name(approach, cfg.eval.tau);
    eval::write_csv(&reports[0], &dir.join(format!("{base}.csv")))?;
    eval::write_json(&reports[0], &dir.join(format!("{base}.json")))?;
    if cfg.eval.plot_data {
        for &tau in &cfg.eval.sweep {
            let r = evaluate(scorer.as_ref(), &cases, cfg.eval.k_max, tau)?;
            eval::write_json(&r, &dir.join(format!("{}-sweep.json", report_name(approach, tau))))?;
            reports.push(r);
        }
        eval::write_plot_data(&reports[1..], &dir.join(format!("{approach}-plot-data.csv")))?;
    }
    record(cfg, &format!("eval-{approach}"))?;
    Ok(reports)
}

/// The `k` highest-ranked focus nodes for `anchor` in the newest version of
/// `project`; every other node of that version is a candidate.
pub fn cmd_rank(cfg: &RunConfig, project: &str, anchor: &str, k: usize) -> Result<Vec<Scored>> {
    if k == 0 {
        return Err(Error::ConfigInvalid("k must be at least 1".into()));
    }
    let layout = cfg.layout();
    let path = layout.projects().join(format!("{project}.json"));
    require(&path)?;
    let embedder = Embedder::new(cfg.provider.clone())?;
    let ckpt = load_checkpoint(&layout, &embedder)?;
    let p = Project::load(&path)?;
    let g = p
        .versions
        .last()
        .ok_or_else(|| Error::ConfigInvalid(format!("project `{project}` has no versions")))?;
    let anchor = NodeId::new(anchor)?;
    let anchor_label = g
        .label(&anchor)
        .ok_or_else(|| Error::ConfigInvalid(format!("anchor `{anchor}` is not in the newest version of `{project}`")))?
        .to_owned();
    let candidates: Vec<eval::Candidate> = g
        .nodes()
        .filter(|(id, _)| **id != anchor)
        .map(|(id, l)| eval::Candidate {
            id: id.clone(),
            label: l.to_owned(),
            distance: crate::graph::Distance::Infinite,
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let table = label_table(
        &embedder,
        candidates
            .iter()
            .map(|c| c.label.as_str())
            .chain([anchor_label.as_str()])
            .collect(),
    )?;
    let case = EvalCase {
        project: p.project.clone(),
        diff_index: p.versions.len().saturating_sub(2),
        anchor,
        anchor_label,
        candidates,
        positives: BTreeSet::new(),
    };
    let refs: Vec<&eval::Candidate> = case.candidates.iter().collect();
    let scorer = NextFocusScorer {
        params: &ckpt.params,
        embeddings: &table,
    };
    let mut ranked = scorer.rank(&case, &refs)?;
    ranked.truncate(k);
    Ok(ranked)
}

/// Finite-difference check of the ranker gradient under the configured loss.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<GradCheckReport> {
    Ok(gradcheck(20, cfg.train.seed, &cfg.train.loss, 1e-4))
}
