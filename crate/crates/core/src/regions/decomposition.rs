use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FullRegion, HighLevelRegion, RegionError, RegionId};
use crate::topology::{NetworkGraph, VertexId};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered: usize,
    pub uncovered: Vec<VertexId>,
}

/// Selected full regions plus a validated, acyclic grouping hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDecomposition {
    full: BTreeMap<RegionId, FullRegion>,
    high: BTreeMap<RegionId, HighLevelRegion>,
    coverage: CoverageReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedRegion<'a> {
    Full(&'a FullRegion),
    High(&'a HighLevelRegion),
}

impl ResolvedRegion<'_> {
    pub fn rid(&self) -> RegionId {
        match self {
            ResolvedRegion::Full(r) => r.rid,
            ResolvedRegion::High(r) => r.rid,
        }
    }
}

fn check_full_region(graph: &NetworkGraph, region: &FullRegion) -> Result<(), RegionError> {
    let fail = |reason: String| RegionError::NotAFullRegion {
        rid: region.rid,
        reason,
    };
    if region.switches.is_empty() || region.nodes.is_empty() {
        return Err(fail("needs at least one switch and one node".into()));
    }
    for &s in &region.switches {
        if !graph.is_switch(s) {
            return Err(fail(format!("{s} is not a switch")));
        }
    }
    for &n in &region.nodes {
        if !graph.is_node(n) {
            return Err(fail(format!("{n} is not a node")));
        }
        for &s in &region.switches {
            if !graph.adjacent(s, n) {
                return Err(fail(format!("switch {s} not linked to node {n}")));
            }
        }
    }
    if !graph.is_connected_within(&region.members()) {
        return Err(fail("induced subgraph is disconnected".into()));
    }
    let first = *region.switches.iter().next().expect("non-empty");
    let outside = graph
        .neighbors(first)
        .filter(|&n| graph.is_node(n) && !region.nodes.contains(&n))
        .find(|&n| region.switches.iter().all(|&s| graph.adjacent(s, n)));
    if let Some(n) = outside {
        return Err(fail(format!(
            "not maximal: node {n} is adjacent to every switch"
        )));
    }
    Ok(())
}

/// Assemble a decomposition from a selection of full regions and a grouping.
pub fn build_decomposition(
    graph: &NetworkGraph,
    selection: Vec<FullRegion>,
    grouping: Vec<HighLevelRegion>,
) -> Result<RegionDecomposition, RegionError> {
    let mut full = BTreeMap::new();
    for region in selection {
        check_full_region(graph, &region)?;
        if full.insert(region.rid, region.clone()).is_some() {
            return Err(RegionError::DuplicateRid(region.rid));
        }
    }
    let mut high = BTreeMap::new();
    for group in grouping {
        if full.contains_key(&group.rid) || high.contains_key(&group.rid) {
            return Err(RegionError::DuplicateRid(group.rid));
        }
        high.insert(group.rid, group);
    }
    for group in high.values() {
        if group.children.is_empty() {
            return Err(RegionError::NotAFullRegion {
                rid: group.rid,
                reason: "group has no children".into(),
            });
        }
        for child in &group.children {
            if !full.contains_key(child) && !high.contains_key(child) {
                return Err(RegionError::UnknownChild {
                    parent: group.rid,
                    child: *child,
                });
            }
        }
    }
    // Acyclicity: three-colour DFS over the group graph.
    let mut state: BTreeMap<RegionId, u8> = BTreeMap::new();
    for &rid in high.keys() {
        visit(rid, &high, &mut state)?;
    }

    let covered: BTreeSet<VertexId> = full.values().flat_map(FullRegion::members).collect();
    let coverage = CoverageReport {
        covered: covered.len(),
        uncovered: graph
            .vertex_ids()
            .filter(|v| !covered.contains(v))
            .collect(),
    };
    Ok(RegionDecomposition {
        full,
        high,
        coverage,
    })
}

fn visit(
    rid: RegionId,
    high: &BTreeMap<RegionId, HighLevelRegion>,
    state: &mut BTreeMap<RegionId, u8>,
) -> Result<(), RegionError> {
    match state.get(&rid) {
        Some(1) => return Err(RegionError::CycleInHierarchy(rid)),
        Some(2) => return Ok(()),
        _ => {}
    }
    state.insert(rid, 1);
    if let Some(group) = high.get(&rid) {
        for &child in &group.children {
            visit(child, high, state)?;
        }
    }
    state.insert(rid, 2);
    Ok(())
}

impl RegionDecomposition {
    pub fn full_regions(&self) -> impl Iterator<Item = &FullRegion> {
        self.full.values()
    }

    pub fn high_level_regions(&self) -> impl Iterator<Item = &HighLevelRegion> {
        self.high.values()
    }

    pub fn full_region(&self, rid: RegionId) -> Option<&FullRegion> {
        self.full.get(&rid)
    }

    pub fn high_level_region(&self, rid: RegionId) -> Option<&HighLevelRegion> {
        self.high.get(&rid)
    }

    pub fn contains(&self, rid: RegionId) -> bool {
        self.full.contains_key(&rid) || self.high.contains_key(&rid)
    }

    pub fn len(&self) -> usize {
        self.full.len() + self.high.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coverage(&self) -> &CoverageReport {
        &self.coverage
    }

    /// Longest chain from a top-level group down to a full region (full regions have depth 1).
    pub fn depth(&self) -> usize {
        fn depth_of(d: &RegionDecomposition, rid: RegionId) -> usize {
            match d.high.get(&rid) {
                None => 1,
                Some(g) => {
                    1 + g
                        .children
                        .iter()
                        .map(|&c| depth_of(d, c))
                        .max()
                        .unwrap_or(0)
                }
            }
        }
        self.full
            .keys()
            .chain(self.high.keys())
            .map(|&r| depth_of(self, r))
            .max()
            .unwrap_or(0)
    }

    /// Full regions under `rid` (itself, if it is a full region).
    pub fn leaves(&self, rid: RegionId) -> BTreeSet<RegionId> {
        let mut out = BTreeSet::new();
        self.collect_leaves(rid, &mut out);
        out
    }

    fn collect_leaves(&self, rid: RegionId, out: &mut BTreeSet<RegionId>) {
        if self.full.contains_key(&rid) {
            out.insert(rid);
        } else if let Some(g) = self.high.get(&rid) {
            for &c in &g.children {
                self.collect_leaves(c, out);
            }
        }
    }

    /// Enclosing groups of `rid`, nearest first.
    pub fn ancestors(&self, rid: RegionId) -> Vec<RegionId> {
        let mut out = Vec::new();
        let mut frontier = vec![rid];
        while let Some(cur) = frontier.pop() {
            for g in self.high.values() {
                if g.children.contains(&cur) && !out.contains(&g.rid) {
                    out.push(g.rid);
                    frontier.insert(0, g.rid);
                }
            }
        }
        out
    }

    /// Full regions containing vertex `v`.
    pub fn regions_of(&self, v: VertexId) -> Vec<RegionId> {
        self.full
            .values()
            .filter(|r| r.contains(v))
            .map(|r| r.rid)
            .collect()
    }

    /// Copy of this decomposition with `node` moved from one full region to
    /// another. The caller rewires the graph; membership is validated here.
    pub fn with_node_moved(
        &self,
        graph: &NetworkGraph,
        node: VertexId,
        from: RegionId,
        to: RegionId,
    ) -> Result<RegionDecomposition, RegionError> {
        let mut selection: Vec<FullRegion> = self.full.values().cloned().collect();
        if !self.full.contains_key(&to) {
            return Err(RegionError::UnknownRegion(to));
        }
        if !self.full.contains_key(&from) {
            return Err(RegionError::UnknownRegion(from));
        }
        for region in &mut selection {
            if region.rid == from {
                region.nodes.remove(&node);
            }
            if region.rid == to {
                region.nodes.insert(node);
            }
        }
        // An emptied region disappears from the decomposition.
        selection.retain(|r| !r.nodes.is_empty());
        let grouping = self
            .high
            .values()
            .cloned()
            .map(|mut g| {
                g.children
                    .retain(|c| selection.iter().any(|r| r.rid == *c) || self.high.contains_key(c));
                g
            })
            .filter(|g| !g.children.is_empty())
            .collect();
        build_decomposition(graph, selection, grouping)
    }

    pub fn to_text(&self) -> String {
        let ids = |set: &BTreeSet<VertexId>| {
            set.iter()
                .map(|v| v.0.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        for r in self.full.values() {
            out.push_str(&format!(
                "region {} switches={} nodes={}\n",
                rid_text(r.rid),
                ids(&r.switches),
                ids(&r.nodes)
            ));
        }
        for g in self.high.values() {
            let children = g
                .children
                .iter()
                .map(|&c| rid_text(c))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!(
                "group {} children={}\n",
                rid_text(g.rid),
                children
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = DecompositionDoc {
            regions: self.full.values().cloned().collect(),
            groups: self.high.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("decomposition serializes")
    }
}

fn rid_text(rid: RegionId) -> String {
    match rid.scope {
        None => rid.raw.to_string(),
        Some(s) => format!("{}@{}", rid.raw, s),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DecompositionDoc {
    regions: Vec<FullRegion>,
    #[serde(default)]
    groups: Vec<HighLevelRegion>,
}

/// Parse a decomposition file (text, or JSON if it starts with `{`) and
/// validate it against `graph`.
pub fn load_decomposition(
    source: &str,
    graph: &NetworkGraph,
) -> Result<RegionDecomposition, RegionError> {
    if source.trim_start().starts_with('{') {
        let doc: DecompositionDoc =
            serde_json::from_str(source).map_err(|e| RegionError::Json(e.to_string()))?;
        return build_decomposition(graph, doc.regions, doc.groups);
    }
    let mut selection = Vec::new();
    let mut grouping = Vec::new();
    for (idx, raw_line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| RegionError::Parse {
            line: line_no,
            message,
        };
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or_default();
        let rid: RegionId = parts
            .next()
            .ok_or_else(|| err("missing region id".into()))?
            .parse()
            .map_err(err)?;
        let mut attrs = BTreeMap::new();
        for attr in parts {
            let (k, v) = attr
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{attr}`")))?;
            attrs.insert(k, v);
        }
        let list = |key: &str| -> Result<Vec<&str>, RegionError> {
            Ok(attrs
                .get(key)
                .ok_or_else(|| err(format!("missing `{key}=`")))?
                .split(',')
                .filter(|s| !s.is_empty())
                .collect())
        };
        match keyword {
            "region" => {
                let parse_ids = |items: Vec<&str>| -> Result<BTreeSet<VertexId>, RegionError> {
                    items
                        .into_iter()
                        .map(|s| {
                            s.parse::<u16>()
                                .map(VertexId)
                                .map_err(|e| err(format!("bad vertex id `{s}`: {e}")))
                        })
                        .collect()
                };
                selection.push(FullRegion {
                    rid,
                    switches: parse_ids(list("switches")?)?,
                    nodes: parse_ids(list("nodes")?)?,
                });
            }
            "group" => {
                let children = list("children")?
                    .into_iter()
                    .map(|s| s.parse::<RegionId>().map_err(err))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                grouping.push(HighLevelRegion { rid, children });
            }
            other => return Err(err(format!("unknown keyword `{other}`"))),
        }
    }
    build_decomposition(graph, selection, grouping)
}

/// Resolve a raw header RID using the enclosing-region context (nearest
/// first). Ambiguity is always an error.
pub fn resolve_rid<'a>(
    raw: u16,
    context: &[RegionId],
    decomp: &'a RegionDecomposition,
) -> Result<ResolvedRegion<'a>, RegionError> {
    let candidates: Vec<ResolvedRegion<'a>> = decomp
        .full
        .values()
        .filter(|r| r.rid.raw == raw)
        .map(ResolvedRegion::Full)
        .chain(
            decomp
                .high
                .values()
                .filter(|r| r.rid.raw == raw)
                .map(ResolvedRegion::High),
        )
        .collect();
    match candidates.len() {
        0 => return Err(RegionError::UnknownRid(raw)),
        1 => return Ok(candidates[0]),
        _ => {}
    }
    for scope in context {
        let scoped: Vec<_> = candidates
            .iter()
            .filter(|c| c.rid().scope == Some(scope.raw))
            .collect();
        match scoped.len() {
            0 => continue,
            1 => return Ok(*scoped[0]),
            n => return Err(RegionError::AmbiguousRid { raw, count: n }),
        }
    }
    Err(RegionError::AmbiguousRid {
        raw,
        count: candidates.len(),
    })
}
