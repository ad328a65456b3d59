use std::collections::BTreeSet;

use super::{FullRegion, RegionError, RegionId};
use crate::topology::{NetworkGraph, VertexId};

pub const DEFAULT_CANDIDATE_CAP: usize = 10_000;

/// All complete full regions of `graph`, with rids numbered from 1 in
/// canonical (switch set, node set) order.
pub fn enumerate_full_regions(graph: &NetworkGraph) -> Result<Vec<FullRegion>, RegionError> {
    enumerate_full_regions_capped(graph, DEFAULT_CANDIDATE_CAP)
}

/// Switch-set closure search.
///
/// A complete full region is determined by its switch set: the node set must
/// be the common node neighbourhood of the switches, otherwise a strictly
/// larger region with the same switches exists. The search grows switch sets
/// in ascending id order and prunes as soon as the common neighbourhood is
/// empty, since adding switches can only shrink it.
pub fn enumerate_full_regions_capped(
    graph: &NetworkGraph,
    cap: usize,
) -> Result<Vec<FullRegion>, RegionError> {
    let switches: Vec<VertexId> = graph.switches().collect();
    let node_nbrs: Vec<BTreeSet<VertexId>> = switches
        .iter()
        .map(|&s| graph.neighbors(s).filter(|&n| graph.is_node(n)).collect())
        .collect();

    let mut found = Vec::new();
    let mut chosen = Vec::new();
    for start in 0..switches.len() {
        if node_nbrs[start].is_empty() {
            continue;
        }
        chosen.push(start);
        extend(
            graph,
            &switches,
            &node_nbrs,
            &mut chosen,
            node_nbrs[start].clone(),
            &mut found,
            cap,
        )?;
        chosen.pop();
    }
    found.sort();
    for (i, region) in found.iter_mut().enumerate() {
        region.rid = RegionId::new((i + 1) as u16);
    }
    Ok(found)
}

fn extend(
    graph: &NetworkGraph,
    switches: &[VertexId],
    node_nbrs: &[BTreeSet<VertexId>],
    chosen: &mut Vec<usize>,
    common: BTreeSet<VertexId>,
    found: &mut Vec<FullRegion>,
    cap: usize,
) -> Result<(), RegionError> {
    if found.len() >= cap {
        return Err(RegionError::ResourceLimit { cap });
    }
    let region_switches: BTreeSet<VertexId> = chosen.iter().map(|&i| switches[i]).collect();
    let members: BTreeSet<VertexId> = region_switches.union(&common).copied().collect();
    // Complete bipartite wiring already implies connectivity; the check stays
    // as the basic-region filter.
    if graph.is_connected_within(&members) {
        found.push(FullRegion {
            rid: RegionId::new(0),
            switches: region_switches,
            nodes: common.clone(),
        });
    }
    let last = *chosen.last().expect("chosen is non-empty");
    for next in last + 1..switches.len() {
        let narrowed: BTreeSet<VertexId> = common.intersection(&node_nbrs[next]).copied().collect();
        if narrowed.is_empty() {
            continue;
        }
        chosen.push(next);
        extend(graph, switches, node_nbrs, chosen, narrowed, found, cap)?;
        chosen.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::builtin_fixture;

    #[test]
    fn star_gives_single_region() {
        let mut g = NetworkGraph::new();
        g.add_switch(1).unwrap();
        for n in [2, 3, 4] {
            g.add_node(n).unwrap();
            g.connect(1, n).unwrap();
        }
        let regions = enumerate_full_regions(&g).unwrap();
        assert_eq!(
            regions,
            vec![FullRegion::new(RegionId::new(1), [1], [2, 3, 4])]
        );
    }

    #[test]
    fn fig2_has_overlapping_regions() {
        let g = builtin_fixture("fig2").unwrap();
        let regions = enumerate_full_regions(&g).unwrap();
        assert!(regions.len() >= 2);
        let overlapping = regions.iter().enumerate().any(|(i, a)| {
            regions[i + 1..]
                .iter()
                .any(|b| a.nodes.intersection(&b.nodes).next().is_some())
        });
        assert!(overlapping);
    }

    #[test]
    fn cap_is_enforced() {
        // 1 node adjacent to 12 switches: 4095 switch subsets.
        let mut g = NetworkGraph::new();
        g.add_node(100).unwrap();
        for s in 0..12 {
            g.add_switch(s).unwrap();
            g.connect(s, 100).unwrap();
        }
        assert_eq!(
            enumerate_full_regions_capped(&g, 100).unwrap_err(),
            RegionError::ResourceLimit { cap: 100 }
        );
        assert_eq!(enumerate_full_regions(&g).unwrap().len(), 4095);
    }

    #[test]
    fn switch_without_nodes_forms_no_region() {
        let mut g = NetworkGraph::new();
        g.add_switch(1).unwrap();
        g.add_switch(2).unwrap();
        g.connect(1, 2).unwrap();
        assert!(enumerate_full_regions(&g).unwrap().is_empty());
    }
}
