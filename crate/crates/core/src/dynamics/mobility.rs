use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::header::SmartPacketHeader;
use crate::regions::{RegionDecomposition, RegionGraph, RegionId};
use crate::topology::{Link, NetworkGraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityConfig {
    /// Ticks the old region keeps forwarding after a move.
    pub forward_for: u64,
    /// Ticks the old region keeps informing senders; at least `forward_for`.
    pub inform_for: u64,
    /// Region hops a redirect notice floods.
    pub redirect_ttl: u32,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            forward_for: 500,
            inform_for: 1000,
            redirect_ttl: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardingGesture {
    pub moved_nid: VertexId,
    pub new_region: RegionId,
    pub forward_until: u64,
    pub inform_until: u64,
}

impl ForwardingGesture {
    pub fn new(
        moved_nid: VertexId,
        new_region: RegionId,
        now: u64,
        cfg: &MobilityConfig,
    ) -> Result<Self, DynamicsError> {
        if cfg.inform_for < cfg.forward_for {
            return Err(DynamicsError::InvalidTimers);
        }
        Ok(ForwardingGesture {
            moved_nid,
            new_region,
            forward_until: now.saturating_add(cfg.forward_for),
            inform_until: now.saturating_add(cfg.inform_for),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedirectNotice {
    pub moved_nid: VertexId,
    pub new_region_stack: Vec<RegionId>,
    /// Remaining region hops of the flood.
    pub ttl: u32,
}

impl RedirectNotice {
    pub fn new(
        moved_nid: VertexId,
        new_region_stack: Vec<RegionId>,
        ttl: u32,
    ) -> Result<Self, DynamicsError> {
        if ttl == 0 || new_region_stack.is_empty() {
            return Err(DynamicsError::InvalidRedirect);
        }
        Ok(RedirectNotice {
            moved_nid,
            new_region_stack,
            ttl,
        })
    }
}

/// A notice held by a switch until `expires_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstalledRedirect {
    pub notice: RedirectNotice,
    pub expires_at: u64,
}

/// Point a moved receiver's packet at its new region. Only the stack
/// changes; other packets pass through untouched.
pub fn apply_redirect(notice: &RedirectNotice, mut header: SmartPacketHeader) -> SmartPacketHeader {
    if header.receiver() == Some(notice.moved_nid.0) {
        header.region_stack.entries = notice.new_region_stack.iter().map(|r| r.raw).collect();
    }
    header
}

/// Regions reached by a notice flooded from `origin`, with their hop count.
pub fn redirect_flood(rgraph: &RegionGraph, origin: RegionId, ttl: u32) -> Vec<(RegionId, u32)> {
    let mut out: Vec<_> = rgraph
        .hop_distances(origin)
        .into_iter()
        .filter(|&(_, d)| d <= ttl)
        .collect();
    out.sort_by_key(|&(r, d)| (d, r));
    out
}

/// Rewire `nid` from the switches of `from` to the switches of `to` and
/// move it between the two regions. Reused links keep the old link's
/// latency and loss.
pub fn relocate(
    graph: &NetworkGraph,
    decomp: &RegionDecomposition,
    nid: VertexId,
    from: RegionId,
    to: RegionId,
) -> Result<(NetworkGraph, RegionDecomposition), DynamicsError> {
    if !graph.is_node(nid) {
        return Err(DynamicsError::UnknownNode(nid));
    }
    let src = decomp
        .full_region(from)
        .ok_or(DynamicsError::UnknownRegion(from))?;
    let dst = decomp
        .full_region(to)
        .ok_or(DynamicsError::UnknownRegion(to))?;
    if !src.nodes.contains(&nid) {
        return Err(DynamicsError::NotInRegion(nid, from));
    }
    let mut g = graph.clone();
    let mut template = None;
    for &s in &src.switches {
        if dst.switches.contains(&s) {
            continue;
        }
        if let Ok(link) = g.remove_link(s, nid) {
            template.get_or_insert(link);
        }
    }
    let (latency, loss) = template.map_or((1, 0.0), |l| (l.latency, l.loss));
    for &s in &dst.switches {
        if !g.adjacent(s, nid) {
            g.add_link(Link::new(s, nid, latency, loss))?;
        }
    }
    let d = decomp.with_node_moved(&g, nid, from, to)?;
    Ok((g, d))
}
