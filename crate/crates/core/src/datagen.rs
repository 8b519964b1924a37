//! Deterministic synthetic corpora of versioned model graphs with planted
//! multi-location change patterns.
//!
//! Each project starts from a random tree whose labels are `<Concept><Role>`
//! pairs. One concept is "hot": `pattern_size_c` nodes, pairwise at least
//! `target_dispersion_s` hops apart, carry it together with a pattern role
//! that no other node uses. A planted commit adds one `<Hot>Entry` child under
//! every member; a noise commit makes one or two unrelated edits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{all_anchors, label_pairs};
use crate::embedding::write_atomic;
use crate::error::{Error, Result};
use crate::graph::{Edge, ModelGraph, NodeId, Project};

/// Roles used by ordinary nodes.
pub const BASE_ROLES: [&str; 10] = [
    "Name", "Id", "Status", "Date", "Amount", "Type", "Code", "Note", "Owner", "Price",
];
/// Roles reserved for hot-group members.
pub const PATTERN_ROLES: [&str; 12] = [
    "Trigger", "Guard", "Handler", "Listener", "Validator", "Observer", "Binding", "Hook", "Policy",
    "Adapter", "Gateway", "Monitor",
];
/// Role of the children added by a planted commit.
pub const ADDED_ROLE: &str = "Entry";
const EDGE_LABEL: &str = "contains";
const PLACEMENT_ATTEMPTS: usize = 64;

fn default_vocabulary() -> Vec<String> {
    [
        "Order", "Customer", "Invoice", "Product", "Account", "Payment", "Shipment", "Warehouse",
        "Supplier", "Contract", "Employee", "Ticket",
    ]
    .map(String::from)
    .to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub projects: usize,
    /// Diffs per project; each project has one more version than this.
    pub commits_per_project: usize,
    pub base_nodes: usize,
    /// Concept tokens; capitalized alphabetic words.
    pub vocabulary: Vec<String>,
    pub pattern_size_c: usize,
    pub target_dispersion_s: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            projects: 8,
            commits_per_project: 10,
            base_nodes: 60,
            vocabulary: default_vocabulary(),
            pattern_size_c: 4,
            target_dispersion_s: 3,
            noise_rate: 0.3,
            seed: 0,
        }
    }
}

fn is_token(w: &str) -> bool {
    let mut cs = w.chars();
    cs.next().is_some_and(|c| c.is_ascii_uppercase()) && cs.all(|c| c.is_ascii_lowercase())
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.projects == 0 {
            return bad("projects must be at least 1".into());
        }
        if self.commits_per_project < 3 {
            return bad(format!("commits_per_project {} < 3", self.commits_per_project));
        }
        if self.pattern_size_c < 2 || self.target_dispersion_s < 2 {
            return bad("pattern_size_c and target_dispersion_s must be at least 2".into());
        }
        if self.pattern_size_c > PATTERN_ROLES.len() {
            return bad(format!("pattern_size_c exceeds {} pattern roles", PATTERN_ROLES.len()));
        }
        if self.base_nodes < self.pattern_size_c {
            return bad("base_nodes smaller than pattern_size_c".into());
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} not in [0,1]", self.noise_rate));
        }
        if self.vocabulary.is_empty() {
            return bad("vocabulary is empty".into());
        }
        let reserved: BTreeSet<&str> = BASE_ROLES.iter().chain(&PATTERN_ROLES).chain([&ADDED_ROLE]).copied().collect();
        let mut seen = BTreeSet::new();
        for w in &self.vocabulary {
            if !is_token(w) || reserved.contains(w.as_str()) || !seen.insert(w) {
                return bad(format!("vocabulary token `{w}` is malformed, reserved or repeated"));
            }
        }
        Ok(())
    }
}

/// Ground truth of one generated project. Never used for training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectTruth {
    pub project: String,
    pub hot_concept: String,
    pub members: Vec<NodeId>,
    /// Indices of the diffs that carry the planted pattern.
    pub planted_diffs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GenConfig,
    pub projects: Vec<ProjectTruth>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub projects: Vec<Project>,
    pub manifest: Manifest,
}

struct Builder<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    graph: ModelGraph,
    next_id: usize,
}

impl Builder<'_> {
    fn fresh_id(&mut self) -> NodeId {
        let id = NodeId::from(format!("n{}", self.next_id).as_str());
        self.next_id += 1;
        id
    }

    fn random_label(&mut self, exclude_concept: Option<&str>) -> String {
        let concept = loop {
            let c = self.cfg.vocabulary.choose(&mut self.rng).expect("non-empty vocabulary");
            if Some(c.as_str()) != exclude_concept || self.cfg.vocabulary.len() == 1 {
                break c.clone();
            }
        };
        let role = BASE_ROLES.choose(&mut self.rng).expect("roles");
        format!("{concept}{role}")
    }

    fn add_child(&mut self, parent: &NodeId, label: String) -> NodeId {
        let id = self.fresh_id();
        self.graph.add_node(id.clone(), label).expect("fresh id");
        self.graph
            .add_edge(Edge::new(parent.clone(), id.clone(), EDGE_LABEL))
            .expect("endpoints exist");
        id
    }

    fn base_tree(&mut self) {
        let mut order = Vec::with_capacity(self.cfg.base_nodes);
        for i in 0..self.cfg.base_nodes {
            let label = self.random_label(None);
            if i == 0 {
                let id = self.fresh_id();
                self.graph.add_node(id.clone(), label).expect("fresh id");
                order.push(id);
            } else {
                let parent = order[self.rng.gen_range(i.saturating_sub(3)..i)].clone();
                order.push(self.add_child(&parent, label));
            }
        }
    }

    /// Greedy placement of the hot group over random node orders.
    fn place_members(&mut self) -> Result<Vec<NodeId>> {
        let ids: Vec<NodeId> = self.graph.node_ids().cloned().collect();
        let s = self.cfg.target_dispersion_s;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let mut order = ids.clone();
            order.shuffle(&mut self.rng);
            let mut chosen: Vec<(NodeId, BTreeMap<NodeId, usize>)> = Vec::new();
            for v in order {
                let far = chosen
                    .iter()
                    .all(|(_, reach)| reach.get(&v).is_none_or(|&d| d >= s));
                if far {
                    let reach = self.graph.bfs(&v)?;
                    chosen.push((v, reach));
                    if chosen.len() == self.cfg.pattern_size_c {
                        return Ok(chosen.into_iter().map(|(v, _)| v).collect());
                    }
                }
            }
        }
        Err(Error::ConfigInvalid(format!(
            "cannot place {} nodes pairwise {} hops apart among {} base nodes",
            self.cfg.pattern_size_c, s, self.cfg.base_nodes
        )))
    }

    fn noise_commit(&mut self, hot: &str, protected: &BTreeSet<NodeId>) {
        let edits = self.rng.gen_range(1..=2);
        for _ in 0..edits {
            let ids: Vec<NodeId> = self.graph.node_ids().cloned().collect();
            if self.rng.gen_bool(0.5) {
                let parent = ids.choose(&mut self.rng).expect("non-empty graph").clone();
                let label = self.random_label(None);
                self.add_child(&parent, label);
            } else {
                let open: Vec<&NodeId> = ids.iter().filter(|v| !protected.contains(*v)).collect();
                if let Some(&v) = open.choose(&mut self.rng) {
                    let label = self.random_label(Some(hot));
                    self.graph.relabel(v, label).expect("node exists");
                }
            }
        }
    }
}

/// Generates one project with its ground truth.
fn generate_project(cfg: &GenConfig, index: usize) -> Result<(Project, ProjectTruth)> {
    let name = format!("p{index:02}");
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64),
        graph: ModelGraph::default(),
        next_id: 0,
    };
    b.base_tree();
    let hot = cfg.vocabulary.choose(&mut b.rng).expect("non-empty vocabulary").clone();
    let members = b.place_members()?;
    for (i, m) in members.iter().enumerate() {
        b.graph.relabel(m, format!("{hot}{}", PATTERN_ROLES[i])).expect("member exists");
    }
    let protected: BTreeSet<NodeId> = members.iter().cloned().collect();

    let mut versions = vec![b.graph.clone()];
    let mut planted_diffs = Vec::new();
    for commit in 0..cfg.commits_per_project {
        let last = commit + 1 == cfg.commits_per_project;
        let planted = if cfg.noise_rate >= 1.0 {
            false
        } else {
            last || !b.rng.gen_bool(cfg.noise_rate)
        };
        if planted {
            for m in &members {
                b.add_child(m, format!("{hot}{ADDED_ROLE}"));
            }
            planted_diffs.push(commit);
        } else {
            b.noise_commit(&hot, &protected);
        }
        versions.push(b.graph.clone());
    }
    Ok((
        Project {
            project: name.clone(),
            versions,
        },
        ProjectTruth {
            project: name,
            hot_concept: hot,
            members,
            planted_diffs,
        },
    ))
}

/// Generates the whole corpus; identical configs give identical corpora.
pub fn generate(cfg: &GenConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut projects = Vec::with_capacity(cfg.projects);
    let mut truths = Vec::with_capacity(cfg.projects);
    for i in 0..cfg.projects {
        let (p, t) = generate_project(cfg, i)?;
        projects.push(p);
        truths.push(t);
    }
    Ok(Corpus {
        projects,
        manifest: Manifest {
            config: cfg.clone(),
            projects: truths,
        },
    })
}

pub const PROJECTS_DIR: &str = "projects";
pub const MANIFEST_FILE: &str = "manifest.json";

impl Corpus {
    /// Writes `projects/<name>.json` and `manifest.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let pdir = dir.join(PROJECTS_DIR);
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        for p in &self.projects {
            let text = serde_json::to_string_pretty(p)? + "\n";
            write_atomic(&pdir.join(format!("{}.json", p.project)), text.as_bytes())?;
        }
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

/// Loads every `*.json` project file of a directory in file-name order.
pub fn load_projects(dir: &Path) -> Result<Vec<Project>> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.to_path_buf()));
    }
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Project::load(p)).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub projects: usize,
    pub versions: usize,
    pub diffs: usize,
    pub mean_nodes_per_version: f64,
    /// Mean changed elements per diff.
    pub mean_changes_per_commit: f64,
    /// Anchor/candidate pairs over all diffs, every changed node an anchor.
    pub pairs: usize,
    pub positive_pairs: usize,
    pub prevalence: f64,
}

pub fn describe(projects: &[Project]) -> Result<CorpusStats> {
    let mut st = CorpusStats {
        projects: projects.len(),
        ..CorpusStats::default()
    };
    let (mut nodes, mut changes) = (0usize, 0usize);
    for p in projects {
        st.versions += p.versions.len();
        nodes += p.versions.iter().map(ModelGraph::node_count).sum::<usize>();
        for (i, d) in p.diffs().iter().enumerate() {
            st.diffs += 1;
            changes += d.changed.len();
            let anchors = all_anchors(d);
            if anchors.is_empty() {
                continue;
            }
            let pairs = label_pairs(&p.project, i, d, &p.versions[i + 1], &anchors)?;
            st.positive_pairs += pairs.iter().filter(|x| x.label).count();
            st.pairs += pairs.len();
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    st.mean_nodes_per_version = ratio(nodes, st.versions);
    st.mean_changes_per_commit = ratio(changes, st.diffs);
    st.prevalence = ratio(st.positive_pairs, st.pairs);
    Ok(st)
}
