//! Region algebra.
//!
//! A *full region* is a set of switches together with every node adjacent to
//! all of them. A decomposition is a chosen set of full regions plus
//! high-level groups. The region graph joins regions that share a vertex or
//! are linked, and a region map is one region's table of next immediate
//! regions toward each visible destination.

mod decomposition;
mod enumerate;
mod graph;
mod map;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::VertexId;

pub use decomposition::{
    build_decomposition, load_decomposition, resolve_rid, CoverageReport, RegionDecomposition,
    ResolvedRegion,
};
pub use enumerate::{enumerate_full_regions, enumerate_full_regions_capped, DEFAULT_CANDIDATE_CAP};
pub use graph::{build_region_graph, PathTag, Portal, RegionGraph};
#[allow(unused_imports)]
pub(crate) use map::compose_loss;
pub use map::{
    compute_region_map, path_qos, Horizon, Multiplicity, QosAnnotation, RegionMap, RegionMapEntry,
};

/// Region identifier. Raw ids may repeat across scopes; `scope` names the
/// raw id of the enclosing high-level region that disambiguates them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId {
    pub raw: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<u16>,
}

impl RegionId {
    pub const fn new(raw: u16) -> Self {
        RegionId { raw, scope: None }
    }

    pub const fn scoped(raw: u16, scope: u16) -> Self {
        RegionId {
            raw,
            scope: Some(scope),
        }
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scope {
            None => write!(f, "R{}", self.raw),
            Some(s) => write!(f, "R{}@{}", self.raw, s),
        }
    }
}

impl std::str::FromStr for RegionId {
    type Err = String;

    /// Accepts `7`, `R7`, `7@100` and `R7@100`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s.strip_prefix('R').unwrap_or(s);
        let (raw, scope) = match s.split_once('@') {
            Some((r, sc)) => (r, Some(sc)),
            None => (s, None),
        };
        let raw = raw
            .parse::<u16>()
            .map_err(|e| format!("bad region id `{s}`: {e}"))?;
        let scope = scope
            .map(|sc| {
                sc.parse::<u16>()
                    .map_err(|e| format!("bad scope `{sc}`: {e}"))
            })
            .transpose()?;
        Ok(RegionId { raw, scope })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FullRegion {
    pub rid: RegionId,
    pub switches: BTreeSet<VertexId>,
    pub nodes: BTreeSet<VertexId>,
}

impl FullRegion {
    pub fn new(
        rid: RegionId,
        switches: impl IntoIterator<Item = u16>,
        nodes: impl IntoIterator<Item = u16>,
    ) -> Self {
        FullRegion {
            rid,
            switches: switches.into_iter().map(VertexId).collect(),
            nodes: nodes.into_iter().map(VertexId).collect(),
        }
    }

    pub fn members(&self) -> BTreeSet<VertexId> {
        self.switches.union(&self.nodes).copied().collect()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.switches.contains(&v) || self.nodes.contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighLevelRegion {
    pub rid: RegionId,
    pub children: BTreeSet<RegionId>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("candidate count exceeded cap of {cap}")]
    ResourceLimit { cap: usize },
    #[error("hierarchy cycle through {0}")]
    CycleInHierarchy(RegionId),
    #[error("group {parent} references unknown child {child}")]
    UnknownChild { parent: RegionId, child: RegionId },
    #[error("duplicate region id {0}")]
    DuplicateRid(RegionId),
    #[error("{rid} is not a complete full region: {reason}")]
    NotAFullRegion { rid: RegionId, reason: String },
    #[error("unknown owner region {0}")]
    UnknownOwner(RegionId),
    #[error("unknown region {0}")]
    UnknownRegion(RegionId),
    #[error("region id {raw} is ambiguous ({count} matches)")]
    AmbiguousRid { raw: u16, count: usize },
    #[error("region id {0} does not resolve")]
    UnknownRid(u16),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("json: {0}")]
    Json(String),
}
