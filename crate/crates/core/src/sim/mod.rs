//! Discrete-event simulator: scripted traffic, mobility, link failures and
//! attacks over a region decomposition, reported per flow.

mod engine;
mod report;
mod scenario;

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::routing::FlowKey;

pub use engine::{load_world, run_scenario, World};
pub use report::{
    emit_report, trace_query, FlowReport, MetricsReport, PacketTrace, ReportFormat, SwitchTotals,
    Totals,
};
pub use scenario::{
    parse_scenario, ConfigPatch, ConfigRule, ConfigScope, ScenarioScript, SendSpec, TimedVerb, Verb,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("load failed: {0}")]
    Load(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("no flow {0} in report")]
    UnknownFlow(FlowKey),
    #[error("{0}")]
    Io(String),
}

impl SimError {
    /// Process exit status for the CLI: 2 for a broken invariant, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Invariant(_) => 2,
            _ => 1,
        }
    }
}

/// Read and parse a scenario file; relative references resolve next to it.
pub fn load_scenario(path: &Path) -> Result<ScenarioScript, SimError> {
    let text =
        fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, path.parent())
}
