use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::header::RbsSF;
use crate::regions::{
    compose_loss, Horizon, Multiplicity, QosAnnotation, RegionGraph, RegionId, RegionMap,
    RegionMapEntry,
};

/// Empty-body probe. `crossings` holds the measured (latency, loss) of each
/// region boundary crossed so far, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerPacket {
    pub origin_region: RegionId,
    pub rbs: RbsSF,
    pub hop_limit: u32,
    pub crossings: Vec<(u64, f64)>,
}

/// Copy sent back to the origin: the region path walked and its crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerReturn {
    pub origin: RegionId,
    pub path: Vec<RegionId>,
    pub crossings: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExplorerStep {
    pub returned: Option<ExplorerReturn>,
    pub forwards: Vec<(RegionId, ExplorerPacket)>,
}

fn crossing(rgraph: &RegionGraph, a: RegionId, b: RegionId) -> (u64, f64) {
    let ps = rgraph.portals(a, b);
    let lat = rgraph.best_portal(a, b).map_or(u64::MAX, |p| p.latency);
    let loss = ps.iter().map(|p| p.loss).fold(1.0, f64::min);
    (lat, loss)
}

/// First copies from `origin`, one per neighbour region.
pub fn issue_explorers(
    origin: RegionId,
    rgraph: &RegionGraph,
    hop_limit: u32,
) -> Vec<(RegionId, ExplorerPacket)> {
    if hop_limit == 0 {
        return Vec::new();
    }
    rgraph
        .neighbors(origin)
        .map(|n| {
            (
                n,
                ExplorerPacket {
                    origin_region: origin,
                    rbs: RbsSF {
                        traversed: vec![origin.raw],
                    },
                    hop_limit,
                    crossings: vec![crossing(rgraph, origin, n)],
                },
            )
        })
        .collect()
}

/// Handle an explorer at region `at`: record the region, send a copy home
/// and replicate to every neighbour not already on the trace.
pub fn handle_explorer(at: RegionId, pkt: &ExplorerPacket, rgraph: &RegionGraph) -> ExplorerStep {
    if pkt.hop_limit == 0 {
        return ExplorerStep::default();
    }
    let mut rbs = pkt.rbs.clone();
    if rbs.append(at.raw).is_err() {
        return ExplorerStep::default();
    }
    let path: Vec<RegionId> = rbs.traversed.iter().map(|&r| RegionId::new(r)).collect();
    let returned = Some(ExplorerReturn {
        origin: pkt.origin_region,
        path,
        crossings: pkt.crossings.clone(),
    });
    let mut forwards = Vec::new();
    if pkt.hop_limit > 1 {
        for n in rgraph.neighbors(at) {
            if rbs.traversed.contains(&n.raw) {
                continue;
            }
            let mut crossings = pkt.crossings.clone();
            crossings.push(crossing(rgraph, at, n));
            forwards.push((
                n,
                ExplorerPacket {
                    origin_region: pkt.origin_region,
                    rbs: rbs.clone(),
                    hop_limit: pkt.hop_limit - 1,
                    crossings,
                },
            ));
        }
    }
    ExplorerStep { returned, forwards }
}

/// Region map of `owner` built from returned explorer paths: minimum-hop
/// paths only, folded per immediate region.
pub fn integrate_returns(owner: RegionId, returns: &[ExplorerReturn]) -> RegionMap {
    let mut best: BTreeMap<RegionId, u32> = BTreeMap::new();
    for ret in returns
        .iter()
        .filter(|r| r.origin == owner && r.path.len() >= 2)
    {
        let dest = *ret.path.last().expect("len checked");
        let hops = (ret.path.len() - 1) as u32;
        best.entry(dest)
            .and_modify(|h| *h = (*h).min(hops))
            .or_insert(hops);
    }
    let mut rows: BTreeMap<(RegionId, RegionId), QosAnnotation> = BTreeMap::new();
    for ret in returns
        .iter()
        .filter(|r| r.origin == owner && r.path.len() >= 2)
    {
        let dest = *ret.path.last().expect("len checked");
        let hops = (ret.path.len() - 1) as u32;
        if dest == owner || best[&dest] != hops || ret.crossings.len() != hops as usize {
            continue;
        }
        // Same fold order as the global computation: from the destination back.
        let latency = ret
            .crossings
            .iter()
            .fold(0u64, |acc, c| acc.saturating_add(c.0));
        let loss = ret
            .crossings
            .iter()
            .rev()
            .fold(0.0, |acc, c| compose_loss(c.1, acc));
        let q = QosAnnotation {
            path_latency: latency,
            path_loss: loss,
            hop_latency: ret.crossings[0].0,
            hop_loss: ret.crossings[0].1,
        };
        rows.entry((dest, ret.path[1]))
            .and_modify(|x| {
                x.path_latency = x.path_latency.min(q.path_latency);
                x.path_loss = x.path_loss.min(q.path_loss);
                x.hop_latency = x.hop_latency.min(q.hop_latency);
                x.hop_loss = x.hop_loss.min(q.hop_loss);
            })
            .or_insert(q);
    }
    RegionMap {
        owner,
        horizon: Horizon::Global,
        multiplicity: Multiplicity::Aggregate,
        entries: rows
            .into_iter()
            .map(|((destination, immediate), qos)| RegionMapEntry {
                destination,
                immediate,
                path_instance: None,
                hops: best[&destination],
                qos,
            })
            .collect(),
    }
}

/// Synchronous explorer rounds: every region issues once, and each round
/// moves every copy one region hop. Returns reach the origin at the end of
/// the round in which they were produced.
#[derive(Debug, Clone)]
pub struct ExplorerRounds<'a> {
    rgraph: &'a RegionGraph,
    in_flight: Vec<(RegionId, ExplorerPacket)>,
    returns: BTreeMap<RegionId, Vec<ExplorerReturn>>,
    pub rounds: u32,
    pub messages: u64,
}

impl<'a> ExplorerRounds<'a> {
    pub fn new(rgraph: &'a RegionGraph, hop_limit: u32) -> Self {
        let in_flight: Vec<_> = rgraph
            .regions()
            .flat_map(|o| issue_explorers(o, rgraph, hop_limit))
            .collect();
        ExplorerRounds {
            rgraph,
            messages: in_flight.len() as u64,
            in_flight,
            returns: BTreeMap::new(),
            rounds: 0,
        }
    }

    pub fn step(&mut self) {
        let mut next = Vec::new();
        for (at, pkt) in std::mem::take(&mut self.in_flight) {
            let step = handle_explorer(at, &pkt, self.rgraph);
            if let Some(ret) = step.returned {
                self.returns.entry(ret.origin).or_default().push(ret);
            }
            next.extend(step.forwards);
        }
        self.messages += next.len() as u64;
        self.in_flight = next;
        self.rounds += 1;
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_empty()
    }

    pub fn map_of(&self, owner: RegionId) -> RegionMap {
        integrate_returns(owner, self.returns.get(&owner).map_or(&[], Vec::as_slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn r(x: u16) -> RegionId {
        RegionId::new(x)
    }

    fn ring(n: u16) -> RegionGraph {
        let mut g = RegionGraph::new();
        for i in 1..=n {
            let j = i % n + 1;
            g.insert_edge(r(i), r(j), vec![], vec![]);
        }
        g
    }

    #[test]
    fn ring_of_four_discovered_in_two_rounds() {
        let g = ring(4);
        let mut rounds = ExplorerRounds::new(&g, g.diameter());
        rounds.step();
        rounds.step();
        let found: BTreeSet<_> = rounds.map_of(r(1)).destinations().into_iter().collect();
        assert_eq!(found, [r(2), r(3), r(4)].into());
    }

    #[test]
    fn hop_limit_one_finds_neighbours_only() {
        let g = ring(5);
        let mut rounds = ExplorerRounds::new(&g, 1);
        while !rounds.is_idle() {
            rounds.step();
        }
        let found: BTreeSet<_> = rounds.map_of(r(1)).destinations().into_iter().collect();
        assert_eq!(found, [r(2), r(5)].into());
    }

    #[test]
    fn no_reforward_into_trace() {
        let g = ring(3);
        let pkt = ExplorerPacket {
            origin_region: r(1),
            rbs: RbsSF { traversed: vec![1] },
            hop_limit: 5,
            crossings: vec![(1, 0.0)],
        };
        let step = handle_explorer(r(2), &pkt, &g);
        let targets: Vec<_> = step.forwards.iter().map(|(n, _)| *n).collect();
        assert_eq!(targets, vec![r(3)]);
        assert_eq!(step.returned.unwrap().path, vec![r(1), r(2)]);
    }

    #[test]
    fn zero_hop_limit_absorbed() {
        let g = ring(3);
        let pkt = ExplorerPacket {
            origin_region: r(1),
            rbs: RbsSF::default(),
            hop_limit: 0,
            crossings: vec![],
        };
        assert_eq!(handle_explorer(r(2), &pkt, &g), ExplorerStep::default());
    }
}
