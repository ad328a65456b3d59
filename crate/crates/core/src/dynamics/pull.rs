use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::regions::{
    compose_loss, Horizon, Multiplicity, QosAnnotation, RegionId, RegionMap, RegionMapEntry,
};
use crate::routing::SwitchState;

/// Region maps a switch can query, one per region.
pub type MapDirectory = BTreeMap<RegionId, RegionMap>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullConfig {
    /// Query rounds before giving up; defaults to the region-graph diameter.
    pub horizon: u32,
    /// Keep the extended map instead of returning to the original one.
    pub retain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullOutcome {
    pub map: RegionMap,
    pub queries: usize,
    pub rounds: u32,
}

type Table = BTreeMap<RegionId, (u32, BTreeMap<RegionId, QosAnnotation>)>;

fn merge(table: &mut Table, dest: RegionId, hops: u32, imm: RegionId, q: QosAnnotation) -> bool {
    let slot = table.entry(dest).or_insert((u32::MAX, BTreeMap::new()));
    if hops < slot.0 {
        *slot = (hops, BTreeMap::from([(imm, q)]));
        return true;
    }
    if hops == slot.0 {
        slot.1
            .entry(imm)
            .and_modify(|x| {
                x.path_latency = x.path_latency.min(q.path_latency);
                x.path_loss = x.path_loss.min(q.path_loss);
                x.hop_latency = x.hop_latency.min(q.hop_latency);
                x.hop_loss = x.hop_loss.min(q.hop_loss);
            })
            .or_insert(q);
    }
    false
}

fn to_map(owner: RegionId, table: &Table) -> RegionMap {
    let reach = table.values().map(|(h, _)| *h).max().unwrap_or(1);
    let entries = table
        .iter()
        .flat_map(|(&dest, (hops, imms))| {
            imms.iter().map(move |(&immediate, &qos)| RegionMapEntry {
                destination: dest,
                immediate,
                path_instance: None,
                hops: *hops,
                qos,
            })
        })
        .collect();
    RegionMap {
        owner,
        horizon: Horizon::Extended(reach),
        multiplicity: Multiplicity::Aggregate,
        entries,
    }
}

/// Extend `owner`'s map by querying the maps of its boundary regions, then
/// theirs, until `unresolved` appears or the horizon runs out.
pub fn pull_region_maps(
    state: &mut SwitchState,
    owner: RegionId,
    unresolved: RegionId,
    directory: &MapDirectory,
    cfg: PullConfig,
) -> Result<PullOutcome, DynamicsError> {
    let own = state
        .region_maps
        .get(&owner)
        .ok_or(DynamicsError::NoMap(owner))?;
    if own.knows(unresolved) {
        return Ok(PullOutcome {
            map: own.clone(),
            queries: 0,
            rounds: 0,
        });
    }
    let mut table: Table = BTreeMap::new();
    for e in &own.entries {
        merge(&mut table, e.destination, e.hops, e.immediate, e.qos);
    }
    let mut queried = BTreeSet::from([owner]);
    let mut frontier: Vec<RegionId> = table.keys().copied().collect();
    let mut queries = 0;
    let mut rounds = 0;
    for round in 1..=cfg.horizon {
        if frontier.is_empty() {
            break;
        }
        rounds = round;
        let mut next = BTreeSet::new();
        for b in std::mem::take(&mut frontier) {
            if !queried.insert(b) {
                continue;
            }
            queries += 1;
            let Some(bmap) = directory.get(&b) else {
                continue;
            };
            let (hb, via) = table[&b].clone();
            for e in &bmap.entries {
                // Split horizon: a boundary route leading back through the
                // owner would loop.
                if e.destination == owner || e.immediate == owner {
                    continue;
                }
                let fresh = !table.contains_key(&e.destination);
                for (&imm, q) in &via {
                    let combined = QosAnnotation {
                        path_latency: q.path_latency.saturating_add(e.qos.path_latency),
                        path_loss: compose_loss(q.path_loss, e.qos.path_loss),
                        hop_latency: q.hop_latency,
                        hop_loss: q.hop_loss,
                    };
                    merge(&mut table, e.destination, hb + e.hops, imm, combined);
                }
                if fresh && !queried.contains(&e.destination) {
                    next.insert(e.destination);
                }
            }
        }
        frontier = next.into_iter().collect();
        // A later round only adds routes through the new frontier, each at
        // least one hop longer than reaching it, so stop once nothing shorter
        // can turn up.
        let floor = frontier
            .iter()
            .filter_map(|d| table.get(d))
            .map(|(h, _)| h + 1)
            .min()
            .unwrap_or(u32::MAX);
        if table.get(&unresolved).is_some_and(|(h, _)| *h <= floor) {
            break;
        }
    }
    if !table.contains_key(&unresolved) {
        return Err(DynamicsError::Unresolvable(unresolved));
    }
    let map = to_map(owner, &table);
    if cfg.retain {
        state.set_region_map(map.clone());
    }
    Ok(PullOutcome {
        map,
        queries,
        rounds,
    })
}
