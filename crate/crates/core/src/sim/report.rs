use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::defense::RegionScore;
use crate::regions::RegionId;
use crate::routing::FlowKey;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    /// Original packets injected by senders.
    pub sent: u64,
    /// Packets with at least one copy delivered to a node.
    pub delivered: u64,
    /// Packets whose every copy was dropped; includes blocked and screened.
    pub dropped: u64,
    pub in_flight: u64,
    pub blocked: u64,
    pub screened: u64,
    /// Copies handed to nodes, duplicates excluded.
    pub deliveries: u64,
    /// Copies a receiver discarded as already seen.
    pub duplicates: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowReport {
    pub flow: FlowKey,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub blocked: u64,
    pub screened: u64,
    pub deliveries: u64,
    pub duplicates: u64,
    pub latency_sum: u64,
    pub latency_max: u64,
    pub drop_reasons: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketTrace {
    pub flow: Option<FlowKey>,
    pub packet: u64,
    pub copy: u64,
    /// Regions that handled this copy, in order.
    pub regions: Vec<RegionId>,
    pub sent_at: u64,
    pub finished_at: u64,
    /// `delivered`, or the drop reason.
    pub outcome: String,
    pub delivered_to: Option<u16>,
    /// RBS carried on arrival, when present.
    pub rbs: Option<Vec<u16>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchTotals {
    pub cache_hits: u64,
    pub suggestions_computed: u64,
    pub fast_path: u64,
    pub redirected: u64,
    pub gesture_forwards: u64,
    pub diverted: u64,
    pub transactions: u64,
    pub fee_millis: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub duration: u64,
    pub totals: Totals,
    pub flows: Vec<FlowReport>,
    pub traces: Vec<PacketTrace>,
    pub switches: SwitchTotals,
    pub pull_queries: u64,
    pub redirect_notices: u64,
    pub explorer_messages: u64,
    pub event_messages: u64,
    /// First tick at which every region map equalled the recomputed global map
    /// after the last topology change.
    pub map_convergence_tick: Option<u64>,
    pub region_scores: Vec<RegionScore>,
    pub conservation_checks: u64,
}

impl MetricsReport {
    pub fn flow(&self, key: &FlowKey) -> Option<&FlowReport> {
        self.flows.iter().find(|f| &f.flow == key)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Load(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            flow: String,
            sender: u16,
            receiver: String,
            fid: String,
            sent: u64,
            delivered: u64,
            dropped: u64,
            blocked: u64,
            screened: u64,
            deliveries: u64,
            duplicates: u64,
            latency_sum: u64,
            latency_max: u64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.flows.is_empty() {
            w.write_record([
                "flow",
                "sender",
                "receiver",
                "fid",
                "sent",
                "delivered",
                "dropped",
                "blocked",
                "screened",
                "deliveries",
                "duplicates",
                "latency_sum",
                "latency_max",
            ])
            .expect("in-memory write");
        }
        for f in &self.flows {
            w.serialize(Row {
                flow: f.flow.to_string(),
                sender: f.flow.sender,
                receiver: f.flow.receiver.map_or("*".into(), |r| r.to_string()),
                fid: f.flow.fid.map_or(String::new(), |x| x.to_string()),
                sent: f.sent,
                delivered: f.delivered,
                dropped: f.dropped,
                blocked: f.blocked,
                screened: f.screened,
                deliveries: f.deliveries,
                duplicates: f.duplicates,
                latency_sum: f.latency_sum,
                latency_max: f.latency_max,
            })
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn to_text(&self) -> String {
        let t = &self.totals;
        let mut out = format!(
            "seed {} duration {}\nsent {} delivered {} dropped {} in-flight {}\n\
             blocked {} screened {} deliveries {} duplicates {}\n\
             cache-hits {} suggestions {} redirected {} pulls {}\n",
            self.seed,
            self.duration,
            t.sent,
            t.delivered,
            t.dropped,
            t.in_flight,
            t.blocked,
            t.screened,
            t.deliveries,
            t.duplicates,
            self.switches.cache_hits,
            self.switches.suggestions_computed,
            self.switches.redirected,
            self.pull_queries,
        );
        if let Some(c) = self.map_convergence_tick {
            out.push_str(&format!("maps converged at {c}\n"));
        }
        for f in &self.flows {
            out.push_str(&format!(
                "flow {}: sent {} delivered {} dropped {}\n",
                f.flow, f.sent, f.delivered, f.dropped
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "summary" => Ok(ReportFormat::Text),
            _ => Err(format!("unknown report format `{s}`")),
        }
    }
}

/// Write the report into `dir` and return the files written.
pub fn emit_report(
    report: &MetricsReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::Io(e.to_string()))?;
    let (name, body) = match format {
        ReportFormat::Json => ("report.json", report.to_json()),
        ReportFormat::Csv => ("flows.csv", report.to_csv()),
        ReportFormat::Text => ("summary.txt", report.to_text()),
    };
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    Ok(vec![path])
}

/// Region sequences of every copy of `flow`, in packet then copy order.
pub fn trace_query(report: &MetricsReport, flow: &FlowKey) -> Result<Vec<Vec<RegionId>>, SimError> {
    if report.flow(flow).is_none() {
        return Err(SimError::UnknownFlow(*flow));
    }
    let mut traces: Vec<&PacketTrace> = report
        .traces
        .iter()
        .filter(|t| t.flow.as_ref() == Some(flow))
        .collect();
    traces.sort_by_key(|t| (t.packet, t.copy));
    Ok(traces.into_iter().map(|t| t.regions.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(r: u16) -> FlowKey {
        FlowKey {
            sender: 11,
            receiver: Some(r),
            fid: Some(1),
        }
    }

    #[test]
    fn empty_report_outputs() {
        let r = MetricsReport::default();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("flow,sender"));
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn one_csv_row_per_flow() {
        let mut r = MetricsReport::default();
        for k in [key(81), key(71)] {
            r.flows.push(FlowReport {
                flow: k,
                ..Default::default()
            });
        }
        assert_eq!(r.to_csv().lines().count(), 3);
    }

    #[test]
    fn unknown_flow_query() {
        let r = MetricsReport::default();
        assert!(matches!(
            trace_query(&r, &key(81)),
            Err(SimError::UnknownFlow(_))
        ));
    }
}
