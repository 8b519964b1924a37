//! Versioned model graphs, structural differences and graph distances.
//!
//! A model version is a labeled directed graph. Elements are matched across
//! versions by identifier: nodes by [`NodeId`], edges by their
//! `(src, dst, label)` triple. Distances are measured on the undirected view
//! of a graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidGraph("node id must be non-empty".into()));
        }
        Ok(NodeId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    /// Panics on an empty id; use [`NodeId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        NodeId::new(s).expect("non-empty node id")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub label: String,
}

impl Edge {
    pub fn new(src: impl Into<NodeId>, dst: impl Into<NodeId>, label: impl Into<String>) -> Self {
        Edge {
            src: src.into(),
            dst: dst.into(),
            label: label.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    label: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct GraphRecord {
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
}

/// One version of a model: nodes with labels plus labeled directed edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct ModelGraph {
    nodes: BTreeMap<NodeId, String>,
    edges: BTreeSet<Edge>,
    successors: BTreeMap<NodeId, BTreeSet<NodeId>>,
    neighbors: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl ModelGraph {
    /// Builds a graph, rejecting duplicate node ids, duplicate edge triples
    /// and edges whose endpoints are missing.
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = (NodeId, String)>,
        E: IntoIterator<Item = Edge>,
    {
        let mut g = ModelGraph::default();
        for (id, label) in nodes {
            g.add_node(id, label)?;
        }
        for e in edges {
            g.add_edge(e)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, id: NodeId, label: impl Into<String>) -> Result<()> {
        if self.nodes.contains_key(&id) {
            return Err(Error::InvalidGraph(format!("duplicate node id `{id}`")));
        }
        self.nodes.insert(id, label.into());
        Ok(())
    }

    pub fn add_edge(&mut self, e: Edge) -> Result<()> {
        for end in [&e.src, &e.dst] {
            if !self.nodes.contains_key(end) {
                return Err(Error::InvalidGraph(format!(
                    "edge endpoint `{end}` is not a node"
                )));
            }
        }
        if self.edges.contains(&e) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge {} -[{}]-> {}",
                e.src, e.label, e.dst
            )));
        }
        self.successors
            .entry(e.src.clone())
            .or_default()
            .insert(e.dst.clone());
        self.neighbors
            .entry(e.src.clone())
            .or_default()
            .insert(e.dst.clone());
        self.neighbors
            .entry(e.dst.clone())
            .or_default()
            .insert(e.src.clone());
        self.edges.insert(e);
        Ok(())
    }

    /// Replaces the label of an existing node.
    pub fn relabel(&mut self, id: &NodeId, label: impl Into<String>) -> Result<()> {
        match self.nodes.get_mut(id) {
            Some(l) => {
                *l = label.into();
                Ok(())
            }
            None => Err(Error::UnknownNode(id.to_string())),
        }
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn label(&self, id: &NodeId) -> Option<&str> {
        self.nodes.get(id).map(String::as_str)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, &str)> {
        self.nodes.iter().map(|(k, v)| (k, v.as_str()))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    /// Direct successors of `v`, deduplicated over parallel edges.
    pub fn succ(&self, v: &NodeId) -> Result<&BTreeSet<NodeId>> {
        static EMPTY: BTreeSet<NodeId> = BTreeSet::new();
        if !self.contains(v) {
            return Err(Error::UnknownNode(v.to_string()));
        }
        Ok(self.successors.get(v).unwrap_or(&EMPTY))
    }

    /// Direct predecessors of `v`.
    pub fn pred(&self, v: &NodeId) -> Result<BTreeSet<NodeId>> {
        if !self.contains(v) {
            return Err(Error::UnknownNode(v.to_string()));
        }
        Ok(self
            .edges
            .iter()
            .filter(|e| &e.dst == v)
            .map(|e| e.src.clone())
            .collect())
    }

    /// Neighbors in the undirected view.
    pub fn neighbors(&self, v: &NodeId) -> impl Iterator<Item = &NodeId> {
        self.neighbors.get(v).into_iter().flatten()
    }

    /// Hop counts from `source` to every node reachable in the undirected view.
    pub fn bfs(&self, source: &NodeId) -> Result<BTreeMap<NodeId, usize>> {
        if !self.contains(source) {
            return Err(Error::UnknownNode(source.to_string()));
        }
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(source.clone(), 0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u];
            for w in self.neighbors(u) {
                if !dist.contains_key(w) {
                    dist.insert(w.clone(), du + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// Shortest-path length between `u` and `v`, ignoring edge direction.
    pub fn distance(&self, u: &NodeId, v: &NodeId) -> Result<Distance> {
        if !self.contains(v) {
            return Err(Error::UnknownNode(v.to_string()));
        }
        Ok(self
            .bfs(u)?
            .get(v)
            .map_or(Distance::Infinite, |&d| Distance::Finite(d)))
    }

    /// Union of two versions. Nodes present in both take the label of `newer`.
    pub fn union(older: &ModelGraph, newer: &ModelGraph) -> ModelGraph {
        let mut g = newer.clone();
        for (id, label) in older.nodes() {
            if !g.contains(id) {
                g.nodes.insert(id.clone(), label.to_owned());
            }
        }
        for e in older.edges() {
            if !g.edges.contains(e) {
                g.add_edge(e.clone()).expect("endpoints exist in union");
            }
        }
        g
    }

    /// Every node and edge as a diff element.
    pub fn elements(&self) -> BTreeSet<ElementRef> {
        self.nodes
            .keys()
            .cloned()
            .map(ElementRef::Node)
            .chain(self.edges.iter().cloned().map(ElementRef::Edge))
            .collect()
    }
}

impl TryFrom<GraphRecord> for ModelGraph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Self> {
        ModelGraph::new(r.nodes.into_iter().map(|n| (n.id, n.label)), r.edges)
    }
}

impl From<ModelGraph> for GraphRecord {
    fn from(g: ModelGraph) -> Self {
        GraphRecord {
            nodes: g
                .nodes
                .into_iter()
                .map(|(id, label)| NodeRecord { id, label })
                .collect(),
            edges: g.edges.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "key", rename_all = "lowercase")]
pub enum ElementRef {
    Node(NodeId),
    Edge(Edge),
}

/// Changed and preserved elements between two consecutive versions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralDiff {
    pub changed: BTreeSet<ElementRef>,
    pub preserved: BTreeSet<ElementRef>,
    pub source_version: usize,
    pub target_version: usize,
}

impl StructuralDiff {
    /// Nodes that were added, deleted or relabeled.
    pub fn changed_nodes(&self) -> BTreeSet<&NodeId> {
        nodes_of(&self.changed)
    }

    pub fn preserved_nodes(&self) -> BTreeSet<&NodeId> {
        nodes_of(&self.preserved)
    }

    /// Changed nodes plus the endpoints of changed edges.
    pub fn involved_nodes(&self) -> BTreeSet<&NodeId> {
        let mut out = BTreeSet::new();
        for el in &self.changed {
            match el {
                ElementRef::Node(id) => {
                    out.insert(id);
                }
                ElementRef::Edge(e) => {
                    out.insert(&e.src);
                    out.insert(&e.dst);
                }
            }
        }
        out
    }
}

fn nodes_of(set: &BTreeSet<ElementRef>) -> BTreeSet<&NodeId> {
    set.iter()
        .filter_map(|el| match el {
            ElementRef::Node(id) => Some(id),
            ElementRef::Edge(_) => None,
        })
        .collect()
}

/// Structural difference from `m` to `n`. A node whose label differs between
/// the versions is changed; an edge is identified by its full triple.
pub fn diff(m: &ModelGraph, n: &ModelGraph) -> StructuralDiff {
    diff_versions(m, n, 0, 1)
}

pub(crate) fn diff_versions(
    m: &ModelGraph,
    n: &ModelGraph,
    source_version: usize,
    target_version: usize,
) -> StructuralDiff {
    let mut changed = BTreeSet::new();
    let mut preserved = BTreeSet::new();
    let ids: BTreeSet<&NodeId> = m.node_ids().chain(n.node_ids()).collect();
    for id in ids {
        let el = ElementRef::Node(id.clone());
        match (m.label(id), n.label(id)) {
            (Some(a), Some(b)) if a == b => preserved.insert(el),
            _ => changed.insert(el),
        };
    }
    for e in m.edges.union(&n.edges) {
        let el = ElementRef::Edge(e.clone());
        if m.has_edge(e) && n.has_edge(e) {
            preserved.insert(el);
        } else {
            changed.insert(el);
        }
    }
    StructuralDiff {
        changed,
        preserved,
        source_version,
        target_version,
    }
}

/// Hop count in the undirected view; `Infinite` between components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(usize),
    Infinite,
}

impl Distance {
    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

/// Size `c` and dispersion `s` of a change set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChangeRadius {
    pub c: usize,
    pub s: Distance,
}

impl ChangeRadius {
    /// More than one changed element spread beyond direct neighbors.
    pub fn is_multi_location(&self) -> bool {
        self.c > 1 && self.s > Distance::Finite(1)
    }
}

/// Counts the changed elements and measures the largest pairwise distance
/// among the nodes they touch, on the union graph of both versions.
pub fn change_radius(g_union: &ModelGraph, d: &StructuralDiff) -> Result<ChangeRadius> {
    let involved = d.involved_nodes();
    let mut s = Distance::Finite(0);
    for (i, &u) in involved.iter().enumerate() {
        let reach = g_union.bfs(u)?;
        for &v in involved.iter().skip(i + 1) {
            if !g_union.contains(v) {
                return Err(Error::UnknownNode(v.to_string()));
            }
            let dv = reach
                .get(v)
                .map_or(Distance::Infinite, |&x| Distance::Finite(x));
            s = s.max(dv);
        }
    }
    Ok(ChangeRadius {
        c: d.changed.len(),
        s,
    })
}

/// A modeling project: its versions ordered oldest to newest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub project: String,
    pub versions: Vec<ModelGraph>,
}

/// Entries dropped while reading a project file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_nodes: usize,
    pub dropped_edges: usize,
}

#[derive(Deserialize)]
struct RawProject {
    project: String,
    versions: Vec<RawGraph>,
}

#[derive(Deserialize)]
struct RawGraph {
    #[serde(default)]
    nodes: Vec<serde_json::Value>,
    #[serde(default)]
    edges: Vec<serde_json::Value>,
}

impl Project {
    /// Diffs between consecutive versions, oldest first.
    pub fn diffs(&self) -> Vec<StructuralDiff> {
        self.versions
            .windows(2)
            .enumerate()
            .map(|(i, w)| diff_versions(&w[0], &w[1], i, i + 1))
            .collect()
    }

    pub fn from_json_str(text: &str) -> Result<(Self, LoadReport)> {
        let raw: RawProject = serde_json::from_str(text)?;
        let mut report = LoadReport::default();
        let mut versions = Vec::with_capacity(raw.versions.len());
        for rv in raw.versions {
            let mut g = ModelGraph::default();
            for v in rv.nodes {
                let parsed = serde_json::from_value::<NodeRecord>(v)
                    .ok()
                    .filter(|n| !n.id.0.is_empty());
                let added = parsed.is_some_and(|n| g.add_node(n.id, n.label).is_ok());
                if !added {
                    report.dropped_nodes += 1;
                }
            }
            for v in rv.edges {
                match serde_json::from_value::<Edge>(v) {
                    Ok(e) if g.add_edge(e.clone()).is_ok() => {}
                    _ => report.dropped_edges += 1,
                }
            }
            versions.push(g);
        }
        if report != LoadReport::default() {
            log::warn!(
                "project `{}`: dropped {} malformed nodes and {} malformed edges",
                raw.project,
                report.dropped_nodes,
                report.dropped_edges
            );
        }
        Ok((
            Project {
                project: raw.project,
                versions,
            },
            report,
        ))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_json_str(&text)?.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
