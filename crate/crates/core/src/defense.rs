//! DDoS response: alerts naming rogue regions, RBS-based discrimination at
//! every alert-holding switch, and decayed per-region attack scores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header::SmartPacketHeader;
use crate::regions::{RegionDecomposition, RegionGraph, RegionId};
use crate::routing::SwitchState;
use crate::topology::VertexId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdosAlert {
    pub target_nid: VertexId,
    pub rogue_regions: BTreeSet<RegionId>,
    pub issued_at: u64,
    pub ttl: u64,
    pub trh_nid: Option<VertexId>,
}

impl DdosAlert {
    pub fn is_live(&self, now: u64) -> bool {
        now >= self.issued_at && now < self.issued_at.saturating_add(self.ttl)
    }

    fn names_rogue(&self, trace: &[u16]) -> bool {
        self.rogue_regions.iter().any(|r| trace.contains(&r.raw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Block,
    SecondScreen,
    DivertToTrh(VertexId),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DefenseError {
    #[error("unknown alert target {0}")]
    UnknownTarget(VertexId),
    #[error("alert must name at least one rogue region")]
    NoRogueRegions,
    #[error("alert ttl must be positive")]
    ZeroTtl,
}

/// Judge a packet against the live alerts held by this switch.
///
/// The trace is the recorded RBS; `origin` adds the acting region for a
/// packet injected by one of its own nodes, which has crossed nothing yet.
/// Traffic re-emitted by a regulator hub is never judged again.
pub fn filter_packet(
    state: &SwitchState,
    header: &SmartPacketHeader,
    origin: Option<RegionId>,
    now: u64,
) -> Verdict {
    let Some(receiver) = header.receiver() else {
        return Verdict::Pass;
    };
    let matching: Vec<&DdosAlert> = state
        .alerts
        .iter()
        .filter(|a| a.is_live(now) && a.target_nid.0 == receiver)
        .collect();
    if matching.is_empty() {
        return Verdict::Pass;
    }
    let sender = header.sender();
    if matching
        .iter()
        .any(|a| a.trh_nid.is_some_and(|t| Some(t.0) == sender))
    {
        return Verdict::Pass;
    }
    let mut trace: Vec<u16> = header
        .rbs
        .as_ref()
        .map(|r| r.traversed.clone())
        .unwrap_or_default();
    if let Some(o) = origin {
        trace.push(o.raw);
    }
    if matching.iter().any(|a| a.names_rogue(&trace)) {
        return Verdict::Block;
    }
    if trace.is_empty() {
        return Verdict::SecondScreen;
    }
    match matching.iter().find_map(|a| a.trh_nid) {
        Some(trh) => Verdict::DivertToTrh(trh),
        None => Verdict::Pass,
    }
}

/// Install schedule for an alert back-propagated from the target's region:
/// each region receives it one region hop after its predecessor.
pub fn alert_schedule(
    alert: &DdosAlert,
    decomp: &RegionDecomposition,
    rgraph: &RegionGraph,
    hop_delay: u64,
) -> Result<Vec<(RegionId, u64)>, DefenseError> {
    if alert.rogue_regions.is_empty() {
        return Err(DefenseError::NoRogueRegions);
    }
    if alert.ttl == 0 {
        return Err(DefenseError::ZeroTtl);
    }
    let hosts = decomp.regions_of(alert.target_nid);
    if hosts.is_empty() {
        return Err(DefenseError::UnknownTarget(alert.target_nid));
    }
    let mut at: BTreeMap<RegionId, u64> = BTreeMap::new();
    for h in hosts {
        for (r, d) in rgraph.hop_distances(h) {
            let t = alert.issued_at + u64::from(d) * hop_delay;
            at.entry(r).and_modify(|x| *x = (*x).min(t)).or_insert(t);
        }
    }
    let mut out: Vec<_> = at.into_iter().collect();
    out.sort_by_key(|&(r, t)| (t, r));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub region: RegionId,
    pub score: f64,
    /// Attacks observed in total, before decay.
    pub attack_count: u64,
    pub window: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tally {
    decayed: f64,
    last_tick: u64,
    total: u64,
}

/// Exponentially decayed attack counts. `window` is the e-folding time in
/// ticks; `None` disables decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBook {
    pub window: Option<u64>,
    pub threshold: f64,
    tallies: BTreeMap<RegionId, Tally>,
}

impl Default for ScoreBook {
    fn default() -> Self {
        ScoreBook::new(Some(1000))
    }
}

impl ScoreBook {
    pub fn new(window: Option<u64>) -> Self {
        ScoreBook {
            window,
            threshold: 0.5,
            tallies: BTreeMap::new(),
        }
    }

    fn decay(&self, value: f64, dt: u64) -> f64 {
        match self.window {
            Some(w) if w > 0 => value * (-(dt as f64) / w as f64).exp(),
            _ => value,
        }
    }

    pub fn score_at(&self, region: RegionId, now: u64) -> f64 {
        match self.tallies.get(&region) {
            Some(t) => 1.0 / (1.0 + self.decay(t.decayed, now.saturating_sub(t.last_tick))),
            None => 1.0,
        }
    }

    pub fn scores_at(&self, now: u64) -> Vec<RegionScore> {
        self.tallies
            .iter()
            .map(|(&region, t)| RegionScore {
                region,
                score: self.score_at(region, now),
                attack_count: t.total,
                window: self.window,
            })
            .collect()
    }

    /// Regions whose score is below the threshold.
    pub fn degraded(&self, now: u64) -> BTreeSet<RegionId> {
        self.tallies
            .keys()
            .copied()
            .filter(|&r| self.score_at(r, now) < self.threshold)
            .collect()
    }
}

/// Fold observed attacks (region, tick) into the book and return the scores
/// as of the latest observation.
pub fn update_scores(book: &mut ScoreBook, observed: &[(RegionId, u64)]) -> Vec<RegionScore> {
    let mut obs = observed.to_vec();
    obs.sort_by_key(|&(r, t)| (t, r));
    let mut now = 0;
    for (region, tick) in obs {
        now = now.max(tick);
        let window = book.window;
        let t = book.tallies.entry(region).or_insert(Tally {
            decayed: 0.0,
            last_tick: tick,
            total: 0,
        });
        let dt = tick.saturating_sub(t.last_tick);
        t.decayed = match window {
            Some(w) if w > 0 => t.decayed * (-(dt as f64) / w as f64).exp(),
            _ => t.decayed,
        } + 1.0;
        t.last_tick = t.last_tick.max(tick);
        t.total += 1;
    }
    book.scores_at(now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::header::{IdsSF, RbsSF, RegionStackSF};
    use crate::routing::RoutingConfig;

    fn r(x: u16) -> RegionId {
        RegionId::new(x)
    }

    fn state_with(alert: Option<DdosAlert>) -> SwitchState {
        let mut s = SwitchState::new(
            VertexId(80),
            [r(8)].into(),
            BTreeMap::new(),
            RoutingConfig::default(),
        );
        if let Some(a) = alert {
            s.install_alert(a);
        }
        s
    }

    fn alert(rogue: &[u16], trh: Option<u16>) -> DdosAlert {
        DdosAlert {
            target_nid: VertexId(81),
            rogue_regions: rogue.iter().map(|&x| r(x)).collect(),
            issued_at: 10,
            ttl: 100,
            trh_nid: trh.map(VertexId),
        }
    }

    fn packet(rbs: Option<&[u16]>) -> SmartPacketHeader {
        let mut h = SmartPacketHeader::new(RegionStackSF::new([8]), IdsSF::new(11, Some(81)));
        h.rbs = rbs.map(|t| RbsSF {
            traversed: t.to_vec(),
        });
        h
    }

    #[test]
    fn no_alerts_pass() {
        assert_eq!(
            filter_packet(&state_with(None), &packet(None), None, 20),
            Verdict::Pass
        );
    }

    #[test]
    fn rogue_trace_blocked() {
        // S=1, C=2, E=4
        let s = state_with(Some(alert(&[4], None)));
        assert_eq!(
            filter_packet(&s, &packet(Some(&[1, 2, 4, 6])), None, 20),
            Verdict::Block
        );
        assert_eq!(
            filter_packet(&s, &packet(Some(&[1, 2, 3, 5])), None, 20),
            Verdict::Pass
        );
    }

    #[test]
    fn empty_or_absent_rbs_screened() {
        let s = state_with(Some(alert(&[4], None)));
        assert_eq!(
            filter_packet(&s, &packet(Some(&[])), None, 20),
            Verdict::SecondScreen
        );
        assert_eq!(
            filter_packet(&s, &packet(None), None, 20),
            Verdict::SecondScreen
        );
        // Locally originated: the origin region is the trace.
        assert_eq!(
            filter_packet(&s, &packet(Some(&[])), Some(r(1)), 20),
            Verdict::Pass
        );
        assert_eq!(
            filter_packet(&s, &packet(Some(&[])), Some(r(4)), 20),
            Verdict::Block
        );
    }

    #[test]
    fn expiry_reverts_to_pass() {
        let s = state_with(Some(alert(&[4], None)));
        assert_eq!(
            filter_packet(&s, &packet(Some(&[4])), None, 109),
            Verdict::Block
        );
        assert_eq!(
            filter_packet(&s, &packet(Some(&[4])), None, 110),
            Verdict::Pass
        );
        assert_eq!(
            filter_packet(&s, &packet(Some(&[4])), None, 9),
            Verdict::Pass
        );
    }

    #[test]
    fn trh_diverts_clean_traffic() {
        let s = state_with(Some(alert(&[4], Some(51))));
        assert_eq!(
            filter_packet(&s, &packet(Some(&[1, 2])), None, 20),
            Verdict::DivertToTrh(VertexId(51))
        );
        let mut from_trh = packet(None);
        from_trh.ids.as_mut().unwrap().sender_nid = 51;
        assert_eq!(filter_packet(&s, &from_trh, None, 20), Verdict::Pass);
    }

    #[test]
    fn scores_without_decay() {
        let mut book = ScoreBook::new(None);
        assert!(update_scores(&mut book, &[]).is_empty());
        assert_eq!(book.score_at(r(3), 0), 1.0);
        let obs: Vec<_> = (0..4).map(|t| (r(4), t)).collect();
        let scores = update_scores(&mut book, &obs);
        assert_eq!(scores.len(), 1);
        assert!((scores[0].score - 1.0 / 5.0).abs() < 1e-12);
        assert_eq!(scores[0].attack_count, 4);
        assert_eq!(book.degraded(10), [r(4)].into());
    }

    #[test]
    fn scores_recover_with_decay() {
        let mut book = ScoreBook::new(Some(10));
        update_scores(&mut book, &[(r(4), 0), (r(4), 0)]);
        let early = book.score_at(r(4), 0);
        let late = book.score_at(r(4), 100);
        assert!((early - 1.0 / 3.0).abs() < 1e-12);
        assert!(late > 0.99);
    }
}
