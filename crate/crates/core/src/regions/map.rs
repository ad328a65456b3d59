use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{PathTag, Portal, RegionError, RegionGraph, RegionId};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QosAnnotation {
    pub path_latency: u64,
    pub path_loss: f64,
    pub hop_latency: u64,
    pub hop_loss: f64,
}

/// How far a region map reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    NeighborsOnly,
    /// Destinations up to this many region hops away.
    Extended(u32),
    Global,
}

impl Horizon {
    pub fn admits(self, hops: u32) -> bool {
        match self {
            Horizon::NeighborsOnly => hops == 1,
            Horizon::Extended(k) => hops <= k,
            Horizon::Global => true,
        }
    }
}

/// Whether an immediate region with several node paths gets one folded
/// entry or one entry per node path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    Aggregate,
    PerPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMapEntry {
    pub destination: RegionId,
    pub immediate: RegionId,
    pub path_instance: Option<PathTag>,
    pub hops: u32,
    pub qos: QosAnnotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub owner: RegionId,
    pub horizon: Horizon,
    pub multiplicity: Multiplicity,
    pub entries: Vec<RegionMapEntry>,
}

impl RegionMap {
    pub fn lookup(&self, destination: RegionId) -> impl Iterator<Item = &RegionMapEntry> {
        self.entries
            .iter()
            .filter(move |e| e.destination == destination)
    }

    pub fn knows(&self, destination: RegionId) -> bool {
        destination == self.owner || self.lookup(destination).next().is_some()
    }

    pub fn destinations(&self) -> Vec<RegionId> {
        let mut d: Vec<_> = self.entries.iter().map(|e| e.destination).collect();
        d.dedup();
        d
    }
}

pub(crate) fn compose_loss(a: f64, b: f64) -> f64 {
    1.0 - (1.0 - a) * (1.0 - b)
}

/// Best (latency, loss) from every region to `dest` along minimum-hop
/// paths, each minimised independently.
pub(crate) fn best_toward(
    rgraph: &RegionGraph,
    dest: RegionId,
) -> BTreeMap<RegionId, (u32, u64, f64)> {
    let mut layers: BTreeMap<RegionId, (u32, u64, f64)> = BTreeMap::new();
    layers.insert(dest, (0, 0, 0.0));
    let mut queue = VecDeque::from([dest]);
    let mut order = vec![dest];
    while let Some(r) = queue.pop_front() {
        let d = layers[&r].0;
        for n in rgraph.neighbors(r) {
            if let std::collections::btree_map::Entry::Vacant(e) = layers.entry(n) {
                e.insert((d + 1, u64::MAX, 1.0));
                queue.push_back(n);
                order.push(n);
            }
        }
    }
    for &r in order.iter().skip(1) {
        let d = layers[&r].0;
        let mut lat = u64::MAX;
        let mut loss = 1.0f64;
        for n in rgraph.neighbors(r) {
            let (nd, nlat, nloss) = layers[&n];
            if nd + 1 != d {
                continue;
            }
            if let Some(p) = rgraph.best_portal(r, n) {
                lat = lat.min(p.latency.saturating_add(nlat));
            }
            for p in rgraph.portals(r, n) {
                loss = loss.min(compose_loss(p.loss, nloss));
            }
        }
        layers.insert(r, (d, lat, loss));
    }
    layers
}

/// QoS of a concrete region path entered through `portal`. The path starts
/// with the immediate region; consecutive crossings use their best portal.
pub fn path_qos(rgraph: &RegionGraph, path: &[RegionId], portal: &Portal) -> QosAnnotation {
    let mut latency = portal.latency;
    let mut loss = portal.loss;
    for pair in path.windows(2) {
        if let Some(p) = rgraph.best_portal(pair[0], pair[1]) {
            latency = latency.saturating_add(p.latency);
            loss = compose_loss(loss, p.loss);
        }
    }
    QosAnnotation {
        path_latency: latency,
        path_loss: loss,
        hop_latency: portal.latency,
        hop_loss: portal.loss,
    }
}

/// Region map of `owner`: for each visible destination, the immediate
/// regions that start a minimum-hop region path to it.
pub fn compute_region_map(
    owner: RegionId,
    rgraph: &RegionGraph,
    horizon: Horizon,
    multiplicity: Multiplicity,
) -> Result<RegionMap, RegionError> {
    if !rgraph.contains(owner) {
        return Err(RegionError::UnknownOwner(owner));
    }
    let dist = rgraph.hop_distances(owner);
    let mut entries = Vec::new();
    for (&dest, &hops) in &dist {
        if hops == 0 || !horizon.admits(hops) {
            continue;
        }
        let toward = best_toward(rgraph, dest);
        for imm in rgraph.neighbors(owner) {
            let Some(&(imm_hops, imm_lat, imm_loss)) = toward.get(&imm) else {
                continue;
            };
            if imm_hops + 1 != hops {
                continue;
            }
            let portals = rgraph.portals(owner, imm);
            let per_portal = portals.iter().map(|p| {
                (
                    p.tag,
                    QosAnnotation {
                        path_latency: p.latency.saturating_add(imm_lat),
                        path_loss: compose_loss(p.loss, imm_loss),
                        hop_latency: p.latency,
                        hop_loss: p.loss,
                    },
                )
            });
            match multiplicity {
                Multiplicity::PerPath => {
                    let mut rows: Vec<_> = per_portal.collect();
                    rows.sort_by_key(|(tag, _)| *tag);
                    for (tag, qos) in rows {
                        entries.push(RegionMapEntry {
                            destination: dest,
                            immediate: imm,
                            path_instance: Some(tag),
                            hops,
                            qos,
                        });
                    }
                }
                Multiplicity::Aggregate => {
                    let folded = per_portal.map(|(_, q)| q).reduce(|a, b| QosAnnotation {
                        path_latency: a.path_latency.min(b.path_latency),
                        path_loss: a.path_loss.min(b.path_loss),
                        hop_latency: a.hop_latency.min(b.hop_latency),
                        hop_loss: a.hop_loss.min(b.hop_loss),
                    });
                    if let Some(qos) = folded {
                        entries.push(RegionMapEntry {
                            destination: dest,
                            immediate: imm,
                            path_instance: None,
                            hops,
                            qos,
                        });
                    }
                }
            }
        }
    }
    Ok(RegionMap {
        owner,
        horizon,
        multiplicity,
        entries,
    })
}
