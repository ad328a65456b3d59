//! Per-switch stationary routing.
//!
//! A switch acts on behalf of one of its home regions. It pops the stack
//! front when the packet enters that waypoint, delivers inside the
//! destination region, and otherwise asks its region for suggestions,
//! selects among them by QoS, and forwards to the chosen next region's
//! entry switch along an intra-region node path.

mod intra;
mod pipeline;
mod suggest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defense::DdosAlert;
use crate::dynamics::{ForwardingGesture, InstalledRedirect};
use crate::header::SmartPacketHeader;
use crate::regions::{
    Multiplicity, PathTag, QosAnnotation, RegionDecomposition, RegionGraph, RegionId, RegionMap,
};
use crate::topology::{NetworkGraph, VertexId};

pub use intra::intra_region_resolve;
pub use pipeline::{acting_region, handle_packet};
pub use suggest::{rank_paths, select_paths, select_paths_with, suggest_region_paths};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effort {
    Minimal,
    Maximal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntraStrategy {
    ShortestPath,
    /// Spread flows over equal-cost intra-region paths by packet id.
    Ecmp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingConfig {
    pub effort: Effort,
    /// Append the acting region to the RBS when forwarding; `false` clears it.
    pub rbs_courtesy: bool,
    pub cache_ttl: u64,
    pub intra: IntraStrategy,
    /// Whether maximal-effort suggestions keep one row per node path into
    /// the first region.
    pub multiplicity: Multiplicity,
    /// Advertised fee per region on a suggested path.
    pub region_fee: f64,
    pub suggestion_cap: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            effort: Effort::Minimal,
            rbs_courtesy: true,
            cache_ttl: 1000,
            intra: IntraStrategy::ShortestPath,
            multiplicity: Multiplicity::PerPath,
            region_fee: 1.0,
            suggestion_cap: 64,
        }
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct FlowKey {
    pub sender: u16,
    pub receiver: Option<u16>,
    pub fid: Option<u16>,
}

impl FlowKey {
    pub fn of(header: &SmartPacketHeader) -> Option<FlowKey> {
        header.ids.as_ref().map(|ids| FlowKey {
            sender: ids.sender_nid,
            receiver: ids.receiver_nid,
            fid: ids.flow_fid,
        })
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->", self.sender)?;
        match self.receiver {
            Some(r) => write!(f, "{r}")?,
            None => write!(f, "*")?,
        }
        if let Some(fid) = self.fid {
            write!(f, "#{fid}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for FlowKey {
    type Err = String;

    /// Inverse of `Display`: `3->81`, `3->*`, `3->81#7`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (sender, rest) = s
            .split_once("->")
            .ok_or_else(|| format!("bad flow `{s}`"))?;
        let (receiver, fid) = match rest.split_once('#') {
            Some((r, f)) => (r, Some(f)),
            None => (rest, None),
        };
        let num = |t: &str| {
            t.trim()
                .parse::<u16>()
                .map_err(|e| format!("bad flow `{s}`: {e}"))
        };
        Ok(FlowKey {
            sender: num(sender)?,
            receiver: if receiver.trim() == "*" {
                None
            } else {
                Some(num(receiver)?)
            },
            fid: fid.map(num).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSuggestion {
    pub region_path: Vec<RegionId>,
    /// Node-path instance into the first region, when suggestions are per path.
    pub instance: Option<PathTag>,
    pub qos: QosAnnotation,
    pub cost: f64,
}

impl PathSuggestion {
    pub fn first(&self) -> RegionId {
        self.region_path[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedDecision {
    pub acting: RegionId,
    pub front: u16,
    pub choices: Vec<PathSuggestion>,
    pub expires_at: u64,
}

/// One forwarded copy: walk `path` (this switch first, next region's entry
/// switch last), then hand the packet over as `next_region`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hop {
    pub path: Vec<VertexId>,
    pub next_region: RegionId,
    pub region_path: Vec<RegionId>,
    pub header: SmartPacketHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Blocked,
    GestureExpired,
    ReceiverNotInRegion,
    NoPath,
    AllFiltered,
    UnresolvableRid,
    NotInMap,
    EmptyStack,
    NotHome,
    TtlExceeded,
    LinkLoss,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Blocked => "blocked",
            DropReason::GestureExpired => "gesture-expired",
            DropReason::ReceiverNotInRegion => "receiver-not-in-region",
            DropReason::NoPath => "no-path",
            DropReason::AllFiltered => "all-filtered",
            DropReason::UnresolvableRid => "unresolvable-rid",
            DropReason::NotInMap => "not-in-map",
            DropReason::EmptyStack => "empty-stack",
            DropReason::NotHome => "not-home",
            DropReason::TtlExceeded => "ttl-exceeded",
            DropReason::LinkLoss => "link-loss",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForwardAction {
    ForwardToSwitch(Hop),
    DeliverToNode {
        path: Vec<VertexId>,
        node: VertexId,
        header: SmartPacketHeader,
    },
    /// RedunCast: at least two copies over distinct region paths.
    Replicate(Vec<Hop>),
    Drop {
        reason: DropReason,
        header: SmartPacketHeader,
    },
    SecondScreen {
        header: SmartPacketHeader,
    },
}

impl ForwardAction {
    pub fn drop_reason(&self) -> Option<DropReason> {
        match self {
            ForwardAction::Drop { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("region id {0} does not resolve")]
    UnresolvableRid(u16),
    #[error("no region path to {0}")]
    NoPath(u16),
    #[error("destination {0} is not in the region map")]
    NotInMap(u16),
    #[error("no suggestion meets the QoS budgets")]
    AllFiltered,
    #[error("no suggestions to select from")]
    NoSuggestions,
    #[error("receiver {0} is not in region {1}")]
    ReceiverNotInRegion(u16, RegionId),
    #[error("stack front is a home region; resolve intra-region instead")]
    AtDestination,
    #[error("switch has no map for region {0}")]
    NoMap(RegionId),
    #[error("region stack is empty")]
    EmptyStack,
}

impl RoutingError {
    pub fn drop_reason(&self) -> DropReason {
        match self {
            RoutingError::UnresolvableRid(_) => DropReason::UnresolvableRid,
            RoutingError::NoPath(_) | RoutingError::NoSuggestions | RoutingError::AtDestination => {
                DropReason::NoPath
            }
            RoutingError::NotInMap(_) | RoutingError::NoMap(_) => DropReason::NotInMap,
            RoutingError::AllFiltered => DropReason::AllFiltered,
            RoutingError::ReceiverNotInRegion(..) => DropReason::ReceiverNotInRegion,
            RoutingError::EmptyStack => DropReason::EmptyStack,
        }
    }
}

/// Locally installed intra-region flow, matched on the stack's intra FID.
#[derive(Debug, Clone, PartialEq)]
pub struct IntraFlow {
    pub region: RegionId,
    pub path: Vec<VertexId>,
    /// `None` delivers to the last vertex of `path`; otherwise hands over.
    pub next_region: Option<RegionId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCounters {
    pub handled: u64,
    pub cache_hits: u64,
    pub suggestions_computed: u64,
    pub fast_path: u64,
    pub blocked: u64,
    pub screened: u64,
    pub diverted: u64,
    pub redirected: u64,
    pub gesture_forwards: u64,
    /// Paths accepted at their advertised cost, one per fresh selection.
    pub transactions: u64,
    /// Sum of those costs, in thousandths.
    pub fee_millis: u64,
}

/// Messages a switch asks the simulator to deliver out of band.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlOutput {
    /// The old region tells a sender where its receiver went.
    InformSender {
        sender: VertexId,
        moved: VertexId,
        new_region: RegionId,
    },
}

#[derive(Debug, Clone)]
pub struct SwitchState {
    pub switch_id: VertexId,
    pub home_regions: BTreeSet<RegionId>,
    /// Map of each home region as held by this switch.
    pub region_maps: BTreeMap<RegionId, RegionMap>,
    pub flow_cache: BTreeMap<FlowKey, CachedDecision>,
    pub alerts: Vec<DdosAlert>,
    pub config: RoutingConfig,
    /// Regions whose score marks them for degraded service.
    pub degraded: BTreeSet<RegionId>,
    pub intra_flows: BTreeMap<u8, IntraFlow>,
    pub gestures: Vec<ForwardingGesture>,
    pub redirects: Vec<InstalledRedirect>,
    pub counters: SwitchCounters,
    pub outbox: Vec<ControlOutput>,
}

impl SwitchState {
    pub fn new(
        switch_id: VertexId,
        home_regions: BTreeSet<RegionId>,
        region_maps: BTreeMap<RegionId, RegionMap>,
        config: RoutingConfig,
    ) -> Self {
        SwitchState {
            switch_id,
            home_regions,
            region_maps,
            flow_cache: BTreeMap::new(),
            alerts: Vec::new(),
            config,
            degraded: BTreeSet::new(),
            intra_flows: BTreeMap::new(),
            gestures: Vec::new(),
            redirects: Vec::new(),
            counters: SwitchCounters::default(),
            outbox: Vec::new(),
        }
    }

    pub fn rbs_courtesy(&self) -> bool {
        self.config.rbs_courtesy
    }

    /// Replace a home region's map. Cached decisions are dropped since they
    /// were taken against the old map.
    pub fn set_region_map(&mut self, map: RegionMap) {
        self.flow_cache.clear();
        self.region_maps.insert(map.owner, map);
    }

    pub fn install_intra_flow(&mut self, fid: u8, flow: IntraFlow) {
        self.intra_flows.insert(fid, flow);
    }

    pub fn install_alert(&mut self, alert: DdosAlert) {
        if !self.alerts.contains(&alert) {
            self.alerts.push(alert);
        }
    }

    pub fn expire(&mut self, now: u64) {
        self.alerts.retain(|a| a.is_live(now));
        self.flow_cache.retain(|_, c| c.expires_at > now);
        self.redirects.retain(|r| r.expires_at > now);
    }
}

/// The world as a switch sees it while handling one packet.
#[derive(Debug, Clone, Copy)]
pub struct RoutingContext<'a> {
    pub now: u64,
    pub graph: &'a NetworkGraph,
    pub decomp: &'a RegionDecomposition,
    pub rgraph: &'a RegionGraph,
    /// Region the packet was handed to, when it crossed a region boundary.
    pub arrived_as: Option<RegionId>,
    /// Attached node that injected the packet, for locally originated packets.
    pub from_node: Option<VertexId>,
}
