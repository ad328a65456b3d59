//! Generators and oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use smartpacket::header::{
    prepend_stack, IdsSF, QosSmartSF, RbsSF, RegionStackSF, SmartPacketHeader,
};
use smartpacket::regions::{
    build_decomposition, FullRegion, RegionDecomposition, RegionGraph, RegionId,
};
use smartpacket::sim::{run_scenario, MetricsReport, ScenarioScript};
use smartpacket::topology::{Link, NetworkGraph, VertexId};

pub fn rid(x: u16) -> RegionId {
    RegionId::new(x)
}

fn maybe<T>(rng: &mut ChaCha8Rng, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> Option<T> {
    if rng.gen_bool(0.5) {
        Some(f(rng))
    } else {
        None
    }
}

/// A random header that satisfies every width and structural rule.
pub fn random_header(rng: &mut ChaCha8Rng) -> SmartPacketHeader {
    let len = if rng.gen_bool(0.02) {
        255
    } else {
        rng.gen_range(1..=8)
    };
    let stack = RegionStackSF {
        ephemeral_fid: maybe(rng, |r| r.gen_range(0..16)),
        intra_region_fid: maybe(rng, |r| r.gen()),
        entries: (0..len).map(|_| rng.gen()).collect(),
    };
    if rng.gen_bool(0.1) {
        let legacy: Vec<u8> = (0..rng.gen_range(1..24)).map(|_| rng.gen()).collect();
        return prepend_stack(legacy, stack).expect("non-empty stack");
    }
    let ids = IdsSF {
        packet_pid: maybe(rng, |r| r.gen_range(0..4096)),
        flow_fid: maybe(rng, |r| r.gen_range(0..4096)),
        sender_nid: rng.gen(),
        receiver_nid: maybe(rng, |r| r.gen()),
    };
    let mut h = SmartPacketHeader::new(stack, ids);
    if rng.gen_bool(0.5) {
        h = h.with_qos(QosSmartSF {
            single_hop_latency: maybe(rng, |r| r.gen_range(0..16)),
            path_latency: maybe(rng, |r| r.gen_range(0..16)),
            single_hop_loss: maybe(rng, |r| r.gen_range(0..16)),
            path_loss: maybe(rng, |r| r.gen_range(0..16)),
            fission_rate: maybe(rng, |r| r.gen_range(1..16)),
        });
    }
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(0..8);
        h = h.with_rbs(RbsSF {
            traversed: (0..n).map(|_| rng.gen()).collect(),
        });
    }
    h
}

/// Random typed graph on at most `max_vertices` vertices, ids from 1.
pub fn random_graph(rng: &mut ChaCha8Rng, max_vertices: u16) -> NetworkGraph {
    let n = rng.gen_range(2..=max_vertices);
    let p = rng.gen_range(0.2..0.8);
    let mut g = NetworkGraph::new();
    for id in 1..=n {
        if rng.gen_bool(0.5) {
            g.add_switch(id).unwrap();
        } else {
            g.add_node(id).unwrap();
        }
    }
    for a in 1..=n {
        for b in (a + 1)..=n {
            if rng.gen_bool(p) {
                g.connect(a, b).unwrap();
            }
        }
    }
    g
}

/// Complete full regions by exhaustive subset search, straight from the
/// definitions: a connected induced subgraph in which every switch links to
/// every node, and which no such subgraph with the same switches extends.
/// A region needs at least one switch and one node.
pub fn oracle_full_regions(g: &NetworkGraph) -> BTreeSet<(BTreeSet<u16>, BTreeSet<u16>)> {
    let verts: Vec<VertexId> = g.vertex_ids().collect();
    assert!(verts.len() <= 20, "oracle is exponential");
    let mut partial = Vec::new();
    for mask in 1u32..(1 << verts.len()) {
        let set: BTreeSet<VertexId> = (0..verts.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| verts[i])
            .collect();
        let switches: BTreeSet<u16> = set
            .iter()
            .filter(|v| g.is_switch(**v))
            .map(|v| v.0)
            .collect();
        let nodes: BTreeSet<u16> = set.iter().filter(|v| g.is_node(**v)).map(|v| v.0).collect();
        if switches.is_empty() || nodes.is_empty() {
            continue;
        }
        let full = switches
            .iter()
            .all(|&s| nodes.iter().all(|&n| g.adjacent(VertexId(s), VertexId(n))));
        if full && connected(g, &set) {
            partial.push((switches, nodes));
        }
    }
    partial
        .iter()
        .filter(|(s, n)| {
            !partial
                .iter()
                .any(|(s2, n2)| s2 == s && n2.len() > n.len() && n2.is_superset(n))
        })
        .cloned()
        .collect()
}

fn connected(g: &NetworkGraph, set: &BTreeSet<VertexId>) -> bool {
    let start = *set.iter().next().unwrap();
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for w in g.neighbors(v) {
            if set.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == set.len()
}

/// A random connected region graph realized as a topology: region `i`
/// (rid i, from 1) has one or two switches `10i`, `10i+1` sharing node
/// `10i+5`. Inter-region links join random switches, so a region pair may
/// have several portals. Latencies and losses vary when `varied` is set.
pub struct RandomWorld {
    pub graph: NetworkGraph,
    pub decomp: RegionDecomposition,
    pub regions: u16,
}

impl RandomWorld {
    pub fn node(i: u16) -> u16 {
        10 * i + 5
    }
}

pub fn random_world(rng: &mut ChaCha8Rng, max_regions: u16, varied: bool) -> RandomWorld {
    let k = rng.gen_range(2..=max_regions);
    let mut g = NetworkGraph::new();
    let mut switches: Vec<Vec<u16>> = Vec::new();
    let mut selection = Vec::new();
    let link = |g: &mut NetworkGraph, rng: &mut ChaCha8Rng, a: u16, b: u16| {
        let (lat, loss) = if varied {
            (
                rng.gen_range(1..=5),
                if rng.gen_bool(0.3) {
                    rng.gen_range(0.0..0.05)
                } else {
                    0.0
                },
            )
        } else {
            (1, 0.0)
        };
        if !g.adjacent(VertexId(a), VertexId(b)) {
            g.add_link(Link::new(VertexId(a), VertexId(b), lat, loss))
                .unwrap();
        }
    };
    for i in 1..=k {
        let count = if rng.gen_bool(0.3) { 2 } else { 1 };
        let sw: Vec<u16> = (0..count).map(|j| 10 * i + j).collect();
        for &s in &sw {
            g.add_switch(s).unwrap();
        }
        let n = RandomWorld::node(i);
        g.add_node(n).unwrap();
        for &s in &sw {
            g.add_link(Link::new(VertexId(s), VertexId(n), 1, 0.0))
                .unwrap();
        }
        selection.push(FullRegion::new(rid(i), sw.clone(), [n]));
        switches.push(sw);
    }
    for i in 2..=k {
        let parent = rng.gen_range(1..i);
        let a = *switches[(parent - 1) as usize].choose(rng).unwrap();
        let b = *switches[(i - 1) as usize].choose(rng).unwrap();
        link(&mut g, rng, a, b);
    }
    for i in 1..=k {
        for j in (i + 1)..=k {
            if rng.gen_bool(0.25) {
                let a = *switches[(i - 1) as usize].choose(rng).unwrap();
                let b = *switches[(j - 1) as usize].choose(rng).unwrap();
                link(&mut g, rng, a, b);
            }
        }
    }
    let decomp = build_decomposition(&g, selection, Vec::new()).expect("valid decomposition");
    RandomWorld {
        graph: g,
        decomp,
        regions: k,
    }
}

/// A random simple region path starting at `from`, at most `max_len` long.
pub fn random_walk(
    rng: &mut ChaCha8Rng,
    rg: &RegionGraph,
    from: RegionId,
    max_len: usize,
) -> Vec<RegionId> {
    let mut path = vec![from];
    while path.len() < max_len {
        let here = *path.last().unwrap();
        let next: Vec<RegionId> = rg.neighbors(here).filter(|n| !path.contains(n)).collect();
        match next.choose(rng) {
            Some(&n) => path.push(n),
            None => break,
        }
    }
    path
}

/// Write a world to `dir` and return a script referring to it.
pub fn script_for(
    dir: &Path,
    graph: &NetworkGraph,
    decomp: &RegionDecomposition,
    seed: u64,
    duration: u64,
) -> ScenarioScript {
    fs::write(dir.join("net.topo"), graph.to_text()).unwrap();
    fs::write(dir.join("net.regions"), decomp.to_text()).unwrap();
    let mut s = ScenarioScript::new("net.topo", Some("net.regions"), seed, duration);
    s.base_dir = Some(PathBuf::from(dir));
    s
}

pub fn run(script: &ScenarioScript) -> MetricsReport {
    run_scenario(script).expect("scenario runs")
}

pub fn trace_raw(t: &[RegionId]) -> Vec<u16> {
    t.iter().map(|r| r.raw).collect()
}
