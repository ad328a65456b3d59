use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{RegionDecomposition, RegionError, RegionId};
use crate::topology::{NetworkGraph, VertexId};

/// Canonical tag for an intra-region node path: FNV-1a over the ordered
/// vertex ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathTag(pub u32);

impl PathTag {
    pub fn of(sequence: &[VertexId]) -> Self {
        let mut h: u32 = 0x811c_9dc5;
        for v in sequence {
            for byte in v.0.to_be_bytes() {
                h ^= u32::from(byte);
                h = h.wrapping_mul(0x0100_0193);
            }
        }
        PathTag(h)
    }
}

impl fmt::Display for PathTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{:08x}", self.0)
    }
}

/// One way into a neighbouring region: the entry switch and the node path
/// inside the entered region leading to it, with crossing QoS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portal {
    pub entry: VertexId,
    pub sequence: Vec<VertexId>,
    pub latency: u64,
    pub loss: f64,
    pub tag: PathTag,
}

/// Region adjacency over full regions, with directed portal lists per edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionGraph {
    regions: BTreeSet<RegionId>,
    adjacency: BTreeMap<RegionId, BTreeSet<RegionId>>,
    portals: BTreeMap<(RegionId, RegionId), Vec<Portal>>,
}

pub fn build_region_graph(decomp: &RegionDecomposition, graph: &NetworkGraph) -> RegionGraph {
    let mut rg = RegionGraph::default();
    let regions: Vec<_> = decomp.full_regions().collect();
    for r in &regions {
        rg.regions.insert(r.rid);
        rg.adjacency.entry(r.rid).or_default();
    }
    for (i, a) in regions.iter().enumerate() {
        let a_members = a.members();
        for b in &regions[i + 1..] {
            let b_members = b.members();
            let shares = a_members.intersection(&b_members).next().is_some();
            let linked = a_members
                .iter()
                .any(|&u| graph.neighbors(u).any(|w| b_members.contains(&w)));
            if !(shares || linked) {
                continue;
            }
            let ab = portals_into(graph, &a_members, b);
            let ba = portals_into(graph, &b_members, a);
            rg.insert_edge(a.rid, b.rid, ab, ba);
        }
    }
    rg
}

fn portals_into(
    graph: &NetworkGraph,
    from: &BTreeSet<VertexId>,
    into: &super::FullRegion,
) -> Vec<Portal> {
    let into_members = into.members();
    // First vertex of `into` reached from `from`, with its crossing cost.
    let mut firsts: BTreeMap<VertexId, (u64, f64)> = BTreeMap::new();
    for &f in &into_members {
        if from.contains(&f) {
            firsts.insert(f, (0, 0.0));
            continue;
        }
        let best = graph
            .neighbors(f)
            .filter(|u| from.contains(u))
            .filter_map(|u| graph.link(u, f))
            .map(|l| (u64::from(l.latency), l.loss))
            .min_by(|x, y| x.partial_cmp(y).expect("finite"));
        if let Some(cost) = best {
            firsts.insert(f, cost);
        }
    }
    let mut out = Vec::new();
    for &s in &into.switches {
        let mut best: Option<(u64, f64, Vec<VertexId>)> = None;
        for (&f, &(lat, loss)) in &firsts {
            let candidate = if f == s {
                Some((lat, loss, vec![s]))
            } else {
                graph.link(f, s).map(|l| {
                    (
                        lat + u64::from(l.latency),
                        1.0 - (1.0 - loss) * (1.0 - l.loss),
                        vec![f, s],
                    )
                })
            };
            if let Some(c) = candidate {
                let better = match &best {
                    None => true,
                    Some(b) => (c.0, c.2.len(), &c.2) < (b.0, b.2.len(), &b.2),
                };
                if better {
                    best = Some(c);
                }
            }
        }
        if let Some((latency, loss, sequence)) = best {
            out.push(Portal {
                entry: s,
                tag: PathTag::of(&sequence),
                sequence,
                latency,
                loss,
            });
        }
    }
    out
}

impl RegionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_region(&mut self, rid: RegionId) {
        self.regions.insert(rid);
        self.adjacency.entry(rid).or_default();
    }

    pub fn insert_edge(&mut self, a: RegionId, b: RegionId, ab: Vec<Portal>, ba: Vec<Portal>) {
        self.add_region(a);
        self.add_region(b);
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
        self.portals.insert((a, b), ab);
        self.portals.insert((b, a), ba);
    }

    pub fn remove_edge(&mut self, a: RegionId, b: RegionId) -> bool {
        let removed = self.adjacency.get_mut(&a).is_some_and(|n| n.remove(&b));
        if let Some(n) = self.adjacency.get_mut(&b) {
            n.remove(&a);
        }
        self.portals.remove(&(a, b));
        self.portals.remove(&(b, a));
        removed
    }

    pub fn contains(&self, rid: RegionId) -> bool {
        self.regions.contains(&rid)
    }

    pub fn regions(&self) -> impl Iterator<Item = RegionId> + '_ {
        self.regions.iter().copied()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn neighbors(&self, rid: RegionId) -> impl Iterator<Item = RegionId> + '_ {
        self.adjacency.get(&rid).into_iter().flatten().copied()
    }

    pub fn adjacent(&self, a: RegionId, b: RegionId) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    /// Undirected edges, each once with `a < b`.
    pub fn edges(&self) -> Vec<(RegionId, RegionId)> {
        self.adjacency
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    /// Portals for entering `to` from `from`, one per distinct node path.
    pub fn portals(&self, from: RegionId, to: RegionId) -> &[Portal] {
        self.portals.get(&(from, to)).map_or(&[], Vec::as_slice)
    }

    pub fn best_portal(&self, from: RegionId, to: RegionId) -> Option<&Portal> {
        self.portals(from, to).iter().min_by(|x, y| {
            (x.latency, x.sequence.len(), &x.sequence)
                .partial_cmp(&(y.latency, y.sequence.len(), &y.sequence))
                .expect("finite")
                .then(x.loss.partial_cmp(&y.loss).expect("finite"))
        })
    }

    /// Region-hop distances from `from` over reachable regions.
    pub fn hop_distances(&self, from: RegionId) -> BTreeMap<RegionId, u32> {
        let mut dist = BTreeMap::new();
        if !self.regions.contains(&from) {
            return dist;
        }
        dist.insert(from, 0);
        let mut queue = VecDeque::from([from]);
        while let Some(r) = queue.pop_front() {
            let d = dist[&r];
            for n in self.neighbors(r) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(n) {
                    e.insert(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Longest shortest-path distance over connected pairs.
    pub fn diameter(&self) -> u32 {
        self.regions
            .iter()
            .map(|&r| self.hop_distances(r).into_values().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// All minimum-hop region paths from `from` to any region in `targets`,
    /// excluding `from` itself, in lexicographic order. At most `cap` paths.
    pub fn min_hop_paths(
        &self,
        from: RegionId,
        targets: &BTreeSet<RegionId>,
        cap: usize,
    ) -> Result<Vec<Vec<RegionId>>, RegionError> {
        if !self.regions.contains(&from) {
            return Err(RegionError::UnknownRegion(from));
        }
        if targets.contains(&from) {
            return Ok(vec![Vec::new()]);
        }
        // Multi-source BFS from the targets gives distance-to-target.
        let mut to_target: BTreeMap<RegionId, u32> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for &t in targets {
            if self.regions.contains(&t) {
                to_target.insert(t, 0);
                queue.push_back(t);
            }
        }
        while let Some(r) = queue.pop_front() {
            let d = to_target[&r];
            for n in self.neighbors(r) {
                if let std::collections::btree_map::Entry::Vacant(e) = to_target.entry(n) {
                    e.insert(d + 1);
                    queue.push_back(n);
                }
            }
        }
        let Some(&total) = to_target.get(&from) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        let mut path = Vec::with_capacity(total as usize);
        self.descend(from, total, &to_target, &mut path, &mut out, cap);
        Ok(out)
    }

    fn descend(
        &self,
        at: RegionId,
        remaining: u32,
        to_target: &BTreeMap<RegionId, u32>,
        path: &mut Vec<RegionId>,
        out: &mut Vec<Vec<RegionId>>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        if remaining == 0 {
            out.push(path.clone());
            return;
        }
        for n in self.neighbors(at) {
            if to_target.get(&n) == Some(&(remaining - 1)) {
                path.push(n);
                self.descend(n, remaining - 1, to_target, path, out, cap);
                path.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::{build_decomposition, load_decomposition, FullRegion};
    use crate::topology::{builtin_fixture, fixtures};

    fn r(raw: u16) -> RegionId {
        RegionId::new(raw)
    }

    fn fig3_graph() -> RegionGraph {
        let g = builtin_fixture("fig3").unwrap();
        let d = load_decomposition(fixtures::decomposition_source("fig3").unwrap(), &g).unwrap();
        build_region_graph(&d, &g)
    }

    #[test]
    fn fig3_edges_match_reconstruction() {
        let rg = fig3_graph();
        // S=1 C=2 A=3 E=4 H=5 F=6 G=7 R=8
        let expected = vec![
            (r(1), r(2)),
            (r(2), r(3)),
            (r(2), r(4)),
            (r(3), r(5)),
            (r(3), r(6)),
            (r(4), r(6)),
            (r(5), r(7)),
            (r(6), r(7)),
            (r(7), r(8)),
        ];
        assert_eq!(rg.edges(), expected);
        assert_eq!(rg.diameter(), 5);
    }

    #[test]
    fn fig3_two_node_paths_into_e() {
        let rg = fig3_graph();
        let portals = rg.portals(r(2), r(4));
        assert_eq!(portals.len(), 2);
        assert_ne!(portals[0].tag, portals[1].tag);
        assert_eq!(rg.portals(r(2), r(3)).len(), 1);
    }

    #[test]
    fn overlap_implies_adjacency() {
        let g = builtin_fixture("fig2").unwrap();
        let d = build_decomposition(
            &g,
            vec![
                FullRegion::new(r(1), [1], [10, 11]),
                FullRegion::new(r(3), [3], [10, 12]),
            ],
            vec![],
        )
        .unwrap();
        let rg = build_region_graph(&d, &g);
        assert!(rg.adjacent(r(1), r(3)));
        // Region 1 owns node 10, so switch 3 is one link away.
        let p = &rg.portals(r(1), r(3))[0];
        assert_eq!(p.entry, VertexId(3));
        assert_eq!(p.latency, 1);
    }

    #[test]
    fn single_region_is_edgeless() {
        let mut g = NetworkGraph::new();
        g.add_switch(1).unwrap();
        g.add_node(2).unwrap();
        g.connect(1, 2).unwrap();
        let d = build_decomposition(&g, vec![FullRegion::new(r(1), [1], [2])], vec![]).unwrap();
        let rg = build_region_graph(&d, &g);
        assert_eq!(rg.region_count(), 1);
        assert!(rg.edges().is_empty());
    }

    #[test]
    fn min_hop_paths_from_c() {
        let rg = fig3_graph();
        let paths = rg.min_hop_paths(r(2), &[r(8)].into(), 64).unwrap();
        assert_eq!(
            paths,
            vec![
                vec![r(3), r(5), r(7), r(8)],
                vec![r(3), r(6), r(7), r(8)],
                vec![r(4), r(6), r(7), r(8)],
            ]
        );
    }
}
