//! Network graph model: nodes, switches and undirected links.
//!
//! Graphs are built once (from a topology file, a fixture, or a generator)
//! and then treated as immutable values. The simulator replaces the whole
//! graph when the topology changes instead of mutating shared state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identifier. Unique within a graph and stable over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u16);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Node,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
    #[serde(default)]
    pub label: String,
}

/// Undirected link. Endpoints are stored in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: VertexId,
    pub b: VertexId,
    /// Traversal time in simulator ticks.
    #[serde(default = "default_latency")]
    pub latency: u32,
    /// Per-traversal drop probability.
    #[serde(default)]
    pub loss: f64,
}

fn default_latency() -> u32 {
    1
}

impl Link {
    pub fn new(a: VertexId, b: VertexId, latency: u32, loss: f64) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        Link {
            a,
            b,
            latency,
            loss,
        }
    }

    pub fn key(&self) -> (VertexId, VertexId) {
        (self.a, self.b)
    }

    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {field}: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("duplicate vertex id {0}")]
    DuplicateId(VertexId),
    #[error("link {0}-{1} references a missing vertex")]
    DanglingLink(VertexId, VertexId),
    #[error("duplicate link {0}-{1}")]
    DuplicateLink(VertexId, VertexId),
    #[error("self loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("loss {0} outside [0, 1]")]
    InvalidLoss(f64),
    #[error("no link {0}-{1}")]
    MissingLink(VertexId, VertexId),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyFormat {
    Text,
    Json,
}

/// Undirected graph of typed vertices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkGraph {
    vertices: BTreeMap<VertexId, Vertex>,
    links: BTreeMap<(VertexId, VertexId), Link>,
    adjacency: BTreeMap<VertexId, BTreeSet<VertexId>>,
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(
        &mut self,
        id: VertexId,
        kind: VertexKind,
        label: impl Into<String>,
    ) -> Result<(), TopologyError> {
        if self.vertices.contains_key(&id) {
            return Err(TopologyError::DuplicateId(id));
        }
        self.vertices.insert(
            id,
            Vertex {
                id,
                kind,
                label: label.into(),
            },
        );
        self.adjacency.entry(id).or_default();
        Ok(())
    }

    pub fn add_node(&mut self, id: u16) -> Result<(), TopologyError> {
        self.add_vertex(VertexId(id), VertexKind::Node, "")
    }

    pub fn add_switch(&mut self, id: u16) -> Result<(), TopologyError> {
        self.add_vertex(VertexId(id), VertexKind::Switch, "")
    }

    pub fn add_link(&mut self, link: Link) -> Result<(), TopologyError> {
        if link.a == link.b {
            return Err(TopologyError::SelfLoop(link.a));
        }
        if !self.vertices.contains_key(&link.a) || !self.vertices.contains_key(&link.b) {
            return Err(TopologyError::DanglingLink(link.a, link.b));
        }
        if !(0.0..=1.0).contains(&link.loss) {
            return Err(TopologyError::InvalidLoss(link.loss));
        }
        if self.links.contains_key(&link.key()) {
            return Err(TopologyError::DuplicateLink(link.a, link.b));
        }
        self.adjacency.entry(link.a).or_default().insert(link.b);
        self.adjacency.entry(link.b).or_default().insert(link.a);
        self.links.insert(link.key(), link);
        Ok(())
    }

    /// Convenience for generators and tests: unit latency, no loss.
    pub fn connect(&mut self, a: u16, b: u16) -> Result<(), TopologyError> {
        self.add_link(Link::new(VertexId(a), VertexId(b), 1, 0.0))
    }

    pub fn remove_link(&mut self, a: VertexId, b: VertexId) -> Result<Link, TopologyError> {
        let key = if a <= b { (a, b) } else { (b, a) };
        let link = self
            .links
            .remove(&key)
            .ok_or(TopologyError::MissingLink(a, b))?;
        if let Some(n) = self.adjacency.get_mut(&a) {
            n.remove(&b);
        }
        if let Some(n) = self.adjacency.get_mut(&b) {
            n.remove(&a);
        }
        Ok(link)
    }

    /// Set loss on every link. Used by scenarios that override fixture defaults.
    pub fn set_uniform_loss(&mut self, loss: f64) -> Result<(), TopologyError> {
        if !(0.0..=1.0).contains(&loss) {
            return Err(TopologyError::InvalidLoss(loss));
        }
        for link in self.links.values_mut() {
            link.loss = loss;
        }
        Ok(())
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.vertices.contains_key(&id)
    }

    pub fn kind(&self, id: VertexId) -> Option<VertexKind> {
        self.vertices.get(&id).map(|v| v.kind)
    }

    pub fn is_switch(&self, id: VertexId) -> bool {
        self.kind(id) == Some(VertexKind::Switch)
    }

    pub fn is_node(&self, id: VertexId) -> bool {
        self.kind(id) == Some(VertexKind::Node)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.keys().copied()
    }

    pub fn switches(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .values()
            .filter(|v| v.kind == VertexKind::Switch)
            .map(|v| v.id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .values()
            .filter(|v| v.kind == VertexKind::Node)
            .map(|v| v.id)
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn link(&self, a: VertexId, b: VertexId) -> Option<&Link> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.links.get(&key)
    }

    pub fn adjacent(&self, a: VertexId, b: VertexId) -> bool {
        self.link(a, b).is_some()
    }

    pub fn neighbors(&self, id: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn degree(&self, id: VertexId) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// BFS restricted to `allowed`. Returns the component of `start`.
    pub fn component_within(
        &self,
        start: VertexId,
        allowed: &BTreeSet<VertexId>,
    ) -> BTreeSet<VertexId> {
        let mut seen = BTreeSet::new();
        if !allowed.contains(&start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(v) = queue.pop_front() {
            for n in self.neighbors(v) {
                if allowed.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    pub fn is_connected_within(&self, set: &BTreeSet<VertexId>) -> bool {
        match set.iter().next() {
            None => true,
            Some(&first) => self.component_within(first, set).len() == set.len(),
        }
    }

    /// Shortest path (by link latency, then hop count, then lowest vertex ids)
    /// from `from` to `to` that only visits vertices in `allowed`, except that
    /// `to` itself may lie outside `allowed`.
    pub fn shortest_path_within(
        &self,
        from: VertexId,
        to: VertexId,
        allowed: &BTreeSet<VertexId>,
    ) -> Option<Vec<VertexId>> {
        let mut paths = self.shortest_paths_within(from, to, allowed, 1);
        paths.pop()
    }

    /// Up to `limit` equal-cost shortest paths, in canonical order.
    pub fn shortest_paths_within(
        &self,
        from: VertexId,
        to: VertexId,
        allowed: &BTreeSet<VertexId>,
        limit: usize,
    ) -> Vec<Vec<VertexId>> {
        if from == to {
            return vec![vec![from]];
        }
        if !self.contains(from) || !self.contains(to) {
            return Vec::new();
        }
        // Dijkstra on (latency, hops) with predecessor sets for ECMP enumeration.
        let mut dist: BTreeMap<VertexId, (u64, u32)> = BTreeMap::new();
        let mut preds: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        let mut frontier = std::collections::BinaryHeap::new();
        dist.insert(from, (0, 0));
        frontier.push(std::cmp::Reverse(((0u64, 0u32), from)));
        while let Some(std::cmp::Reverse((d, v))) = frontier.pop() {
            if dist.get(&v).is_some_and(|&best| best < d) {
                continue;
            }
            if v == to {
                continue;
            }
            for n in self.neighbors(v) {
                if n != to && !allowed.contains(&n) {
                    continue;
                }
                let link = self.link(v, n).expect("adjacency mirrors links");
                let nd = (d.0 + u64::from(link.latency), d.1 + 1);
                match dist.get(&n) {
                    Some(&old) if old < nd => {}
                    Some(&old) if old == nd => preds.entry(n).or_default().push(v),
                    _ => {
                        dist.insert(n, nd);
                        preds.insert(n, vec![v]);
                        frontier.push(std::cmp::Reverse((nd, n)));
                    }
                }
            }
        }
        if !dist.contains_key(&to) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut suffix = vec![to];
        self.unwind(from, to, &preds, &mut suffix, &mut out, limit);
        out.sort();
        out
    }

    fn unwind(
        &self,
        from: VertexId,
        at: VertexId,
        preds: &BTreeMap<VertexId, Vec<VertexId>>,
        suffix: &mut Vec<VertexId>,
        out: &mut Vec<Vec<VertexId>>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if at == from {
            out.push(suffix.iter().rev().copied().collect());
            return;
        }
        let mut ps = preds.get(&at).cloned().unwrap_or_default();
        ps.sort();
        ps.dedup();
        for p in ps {
            suffix.push(p);
            self.unwind(from, p, preds, suffix, out, limit);
            suffix.pop();
        }
    }

    /// Serialize to the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in self.vertices.values() {
            let kw = match v.kind {
                VertexKind::Node => "node",
                VertexKind::Switch => "switch",
            };
            if v.label.is_empty() {
                out.push_str(&format!("{kw} {}\n", v.id));
            } else {
                out.push_str(&format!("{kw} {} {}\n", v.id, v.label));
            }
        }
        for l in self.links.values() {
            out.push_str(&format!(
                "link {} {} latency={} loss={}\n",
                l.a, l.b, l.latency, l.loss
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = TopologyDoc {
            vertices: self.vertices.values().cloned().collect(),
            links: self.links.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("topology serializes")
    }

    pub fn serialize(&self, format: TopologyFormat) -> String {
        match format {
            TopologyFormat::Text => self.to_text(),
            TopologyFormat::Json => self.to_json(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyDoc {
    vertices: Vec<Vertex>,
    links: Vec<Link>,
}

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> TopologyError {
    TopologyError::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_id(line: usize, field: &str, raw: Option<&str>) -> Result<VertexId, TopologyError> {
    let raw = raw.ok_or_else(|| parse_err(line, field, "missing"))?;
    raw.parse::<u16>()
        .map(VertexId)
        .map_err(|e| parse_err(line, field, format!("`{raw}`: {e}")))
}

/// Parse a topology from bytes in the given format and validate links.
pub fn load_topology(source: &[u8], format: TopologyFormat) -> Result<NetworkGraph, TopologyError> {
    match format {
        TopologyFormat::Text => {
            let text =
                std::str::from_utf8(source).map_err(|e| parse_err(0, "encoding", e.to_string()))?;
            parse_text(text)
        }
        TopologyFormat::Json => {
            let doc: TopologyDoc =
                serde_json::from_slice(source).map_err(|e| TopologyError::Json(e.to_string()))?;
            let mut g = NetworkGraph::new();
            for v in doc.vertices {
                g.add_vertex(v.id, v.kind, v.label)?;
            }
            for l in doc.links {
                g.add_link(Link::new(l.a, l.b, l.latency, l.loss))?;
            }
            Ok(g)
        }
    }
}

fn parse_text(text: &str) -> Result<NetworkGraph, TopologyError> {
    let mut g = NetworkGraph::new();
    let mut pending_links = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or_default();
        match keyword {
            "node" | "switch" => {
                let id = parse_id(line_no, "id", parts.next())?;
                let label = parts.collect::<Vec<_>>().join(" ");
                let kind = if keyword == "node" {
                    VertexKind::Node
                } else {
                    VertexKind::Switch
                };
                g.add_vertex(id, kind, label)?;
            }
            "link" => {
                let a = parse_id(line_no, "idA", parts.next())?;
                let b = parse_id(line_no, "idB", parts.next())?;
                let mut latency = 1u32;
                let mut loss = 0.0f64;
                for attr in parts {
                    let (key, value) = attr
                        .split_once('=')
                        .ok_or_else(|| parse_err(line_no, attr, "expected key=value"))?;
                    match key {
                        "latency" => {
                            latency = value
                                .parse()
                                .map_err(|e| parse_err(line_no, "latency", format!("{e}")))?
                        }
                        "loss" => {
                            loss = value
                                .parse()
                                .map_err(|e| parse_err(line_no, "loss", format!("{e}")))?;
                            if !(0.0..=1.0).contains(&loss) {
                                return Err(parse_err(line_no, "loss", "outside [0, 1]"));
                            }
                        }
                        other => return Err(parse_err(line_no, other, "unknown attribute")),
                    }
                }
                pending_links.push((line_no, Link::new(a, b, latency, loss)));
            }
            other => return Err(parse_err(line_no, "keyword", format!("unknown `{other}`"))),
        }
    }
    // Links may reference vertices declared later in the file.
    for (_, link) in pending_links {
        g.add_link(link)?;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub vertex_count: usize,
    pub link_count: usize,
    pub switch_count: usize,
    pub connected: bool,
    pub isolated: Vec<VertexId>,
    pub issues: Vec<String>,
}

/// Structural checks. Pure: identical graphs give identical reports.
pub fn validate(graph: &NetworkGraph) -> ValidationReport {
    let all: BTreeSet<VertexId> = graph.vertex_ids().collect();
    let connected = graph.is_connected_within(&all);
    let isolated: Vec<VertexId> = graph
        .vertex_ids()
        .filter(|&v| graph.degree(v) == 0)
        .collect();
    let switch_count = graph.switches().count();
    let mut issues = Vec::new();
    if !connected {
        issues.push("graph is not connected".to_string());
    }
    for v in &isolated {
        issues.push(format!("vertex {v} is isolated"));
    }
    if switch_count == 0 && graph.vertex_count() > 0 {
        issues.push("no switches; routing is impossible".to_string());
    }
    ValidationReport {
        vertex_count: graph.vertex_count(),
        link_count: graph.link_count(),
        switch_count,
        connected,
        isolated,
        issues,
    }
}

pub mod fixtures {
    //! Small hand-built graphs. `fig1a` and `fig1b` are one net before and
    //! after a node moves; `fig2` is BCube-like with overlapping regions;
    //! `fig3` is the eight-region routing example.

    use super::{load_topology, NetworkGraph, TopologyError, TopologyFormat};

    pub const NAMES: [&str; 4] = ["fig1a", "fig1b", "fig2", "fig3"];

    pub fn source(name: &str) -> Option<&'static str> {
        Some(match name {
            "fig1a" => include_str!("../fixtures/fig1a.topo"),
            "fig1b" => include_str!("../fixtures/fig1b.topo"),
            "fig2" => include_str!("../fixtures/fig2.topo"),
            "fig3" => include_str!("../fixtures/fig3.topo"),
            _ => return None,
        })
    }

    /// Region definitions shipped alongside a fixture, if any.
    pub fn decomposition_source(name: &str) -> Option<&'static str> {
        Some(match name {
            "fig1a" => include_str!("../fixtures/fig1a.regions"),
            "fig1b" => include_str!("../fixtures/fig1b.regions"),
            "fig2" => include_str!("../fixtures/fig2.regions"),
            "fig3" => include_str!("../fixtures/fig3.regions"),
            _ => return None,
        })
    }

    pub fn builtin_fixture(name: &str) -> Result<NetworkGraph, TopologyError> {
        let text = source(name).ok_or_else(|| TopologyError::UnknownFixture(name.to_string()))?;
        load_topology(text.as_bytes(), TopologyFormat::Text)
    }
}

pub use fixtures::builtin_fixture;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_loads() {
        let g = load_topology(
            b"node 1\nswitch 2 core\nlink 1 2 latency=3 loss=0.25\n",
            TopologyFormat::Text,
        )
        .unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.link_count(), 1);
        let l = g.link(VertexId(2), VertexId(1)).unwrap();
        assert_eq!(l.latency, 3);
        assert_eq!(l.loss, 0.25);
        assert_eq!(g.vertex(VertexId(2)).unwrap().label, "core");
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = load_topology(b"node 5\nswitch 5\n", TopologyFormat::Text).unwrap_err();
        assert_eq!(err, TopologyError::DuplicateId(VertexId(5)));
    }

    #[test]
    fn dangling_link_rejected() {
        let err = load_topology(b"node 1\nlink 1 9\n", TopologyFormat::Text).unwrap_err();
        assert_eq!(err, TopologyError::DanglingLink(VertexId(1), VertexId(9)));
    }

    #[test]
    fn parse_error_carries_location() {
        let err = load_topology(b"node 1\nnode x\n", TopologyFormat::Text).unwrap_err();
        match err {
            TopologyError::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "id");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err =
            load_topology(b"node 1\nnode 2\nlink 1 2 loss=2\n", TopologyFormat::Text).unwrap_err();
        assert!(matches!(err, TopologyError::Parse { line: 3, .. }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = load_topology(
            b"# header\n\nnode 1 # trailing\nswitch 2\nlink 1 2\n",
            TopologyFormat::Text,
        )
        .unwrap();
        assert_eq!(g.link(VertexId(1), VertexId(2)).unwrap().latency, 1);
    }

    #[test]
    fn json_and_text_agree() {
        let g = builtin_fixture("fig3").unwrap();
        let json = g.to_json();
        let back = load_topology(json.as_bytes(), TopologyFormat::Json).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn validate_path_and_disjoint() {
        let mut g = NetworkGraph::new();
        g.add_node(1).unwrap();
        g.add_switch(2).unwrap();
        g.add_node(3).unwrap();
        g.connect(1, 2).unwrap();
        g.connect(2, 3).unwrap();
        let r = validate(&g);
        assert!(r.connected);
        assert!(r.issues.is_empty());

        let mut d = NetworkGraph::new();
        d.add_node(1).unwrap();
        d.add_switch(2).unwrap();
        let r = validate(&d);
        assert!(!r.connected);
        assert_eq!(r.isolated, vec![VertexId(1), VertexId(2)]);
    }

    #[test]
    fn unknown_fixture() {
        assert_eq!(
            builtin_fixture("fig9").unwrap_err(),
            TopologyError::UnknownFixture("fig9".into())
        );
    }

    #[test]
    fn ecmp_paths_enumerated() {
        // square 1-2-4, 1-3-4
        let mut g = NetworkGraph::new();
        for i in 1..=4 {
            g.add_switch(i).unwrap();
        }
        g.connect(1, 2).unwrap();
        g.connect(1, 3).unwrap();
        g.connect(2, 4).unwrap();
        g.connect(3, 4).unwrap();
        let all: BTreeSet<VertexId> = g.vertex_ids().collect();
        let paths = g.shortest_paths_within(VertexId(1), VertexId(4), &all, 8);
        assert_eq!(paths.len(), 2);
        assert_eq!(
            g.shortest_path_within(VertexId(1), VertexId(4), &all)
                .unwrap(),
            vec![VertexId(1), VertexId(2), VertexId(4)]
        );
    }
}
