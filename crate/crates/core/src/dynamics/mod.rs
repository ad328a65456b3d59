//! Transitional routing for moving nodes and decentralized map upkeep.

mod events;
mod explorer;
mod mobility;
mod pull;

use thiserror::Error;

use crate::regions::{RegionError, RegionId};
use crate::topology::{TopologyError, VertexId};

pub use events::{
    edge_changes, handle_event, ChangeKind, EventIssuer, EventPacket, EventState, EventStep,
};
pub use explorer::{
    handle_explorer, integrate_returns, issue_explorers, ExplorerPacket, ExplorerReturn,
    ExplorerRounds, ExplorerStep,
};
pub use mobility::{
    apply_redirect, redirect_flood, relocate, ForwardingGesture, InstalledRedirect, MobilityConfig,
    RedirectNotice,
};
pub use pull::{pull_region_maps, MapDirectory, PullConfig, PullOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("unknown node {0}")]
    UnknownNode(VertexId),
    #[error("unknown region {0}")]
    UnknownRegion(RegionId),
    #[error("node {0} is not in region {1}")]
    NotInRegion(VertexId, RegionId),
    #[error("region {0} does not resolve within the pull horizon")]
    Unresolvable(RegionId),
    #[error("switch holds no map for region {0}")]
    NoMap(RegionId),
    #[error("inform period must not be shorter than the forwarding period")]
    InvalidTimers,
    #[error("redirect needs a positive ttl and a non-empty stack")]
    InvalidRedirect,
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}
