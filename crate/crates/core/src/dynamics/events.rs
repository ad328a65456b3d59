use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::regions::{Portal, RegionGraph, RegionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeKind {
    LinkUp,
    LinkDown,
    RegionJoin,
    RegionLeave,
    NodeMoved,
}

/// Change notice flooded from the region that saw it. `LinkUp` carries the
/// current portals in both directions and doubles as a portal update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPacket {
    pub origin: RegionId,
    pub changed_region: RegionId,
    pub change_kind: ChangeKind,
    pub peer: Option<RegionId>,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portals: Option<(Vec<Portal>, Vec<Portal>)>,
}

/// Per-origin sequence numbers, strictly increasing.
#[derive(Debug, Clone, Default)]
pub struct EventIssuer {
    next: BTreeMap<RegionId, u64>,
}

impl EventIssuer {
    pub fn issue(
        &mut self,
        origin: RegionId,
        change_kind: ChangeKind,
        changed_region: RegionId,
        peer: Option<RegionId>,
        portals: Option<(Vec<Portal>, Vec<Portal>)>,
    ) -> EventPacket {
        let seq = self.next.entry(origin).or_insert(0);
        *seq += 1;
        EventPacket {
            origin,
            changed_region,
            change_kind,
            peer,
            seq: *seq,
            portals,
        }
    }
}

/// One region's view of the region graph plus event bookkeeping.
#[derive(Debug, Clone)]
pub struct EventState {
    pub view: RegionGraph,
    seen: BTreeMap<RegionId, BTreeSet<u64>>,
    pending: Vec<EventPacket>,
    pub applied: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventStep {
    pub view_changed: bool,
    pub forwards: Vec<(RegionId, EventPacket)>,
}

impl EventState {
    pub fn new(view: RegionGraph) -> Self {
        EventState {
            view,
            seen: BTreeMap::new(),
            pending: Vec::new(),
            applied: 0,
        }
    }

    pub fn pending(&self) -> &[EventPacket] {
        &self.pending
    }

    fn knows(&self, pkt: &EventPacket) -> bool {
        self.view.contains(pkt.changed_region) && pkt.peer.is_none_or(|p| self.view.contains(p))
    }

    fn apply(&mut self, pkt: &EventPacket) -> bool {
        self.applied += 1;
        match pkt.change_kind {
            ChangeKind::LinkDown => pkt
                .peer
                .is_some_and(|p| self.view.remove_edge(pkt.changed_region, p)),
            ChangeKind::LinkUp => {
                let (Some(p), Some((ab, ba))) = (pkt.peer, pkt.portals.clone()) else {
                    return false;
                };
                let before = (
                    self.view.portals(pkt.changed_region, p).to_vec(),
                    self.view.portals(p, pkt.changed_region).to_vec(),
                );
                let was = self.view.adjacent(pkt.changed_region, p);
                self.view
                    .insert_edge(pkt.changed_region, p, ab.clone(), ba.clone());
                !was || before != (ab, ba)
            }
            ChangeKind::RegionJoin => {
                let fresh = !self.view.contains(pkt.changed_region);
                self.view.add_region(pkt.changed_region);
                fresh
            }
            ChangeKind::RegionLeave => {
                let peers: Vec<_> = self.view.neighbors(pkt.changed_region).collect();
                for p in &peers {
                    self.view.remove_edge(pkt.changed_region, *p);
                }
                !peers.is_empty()
            }
            ChangeKind::NodeMoved => false,
        }
    }
}

/// Handle an event at region `at`. Duplicates are neither applied nor
/// forwarded. Events about regions not yet in the view wait until a join
/// introduces them.
pub fn handle_event(state: &mut EventState, at: RegionId, pkt: &EventPacket) -> EventStep {
    if !state.seen.entry(pkt.origin).or_default().insert(pkt.seq) {
        return EventStep::default();
    }
    let mut changed = false;
    if pkt.change_kind == ChangeKind::RegionJoin || state.knows(pkt) {
        changed |= state.apply(pkt);
        loop {
            let ready: Vec<_> = state
                .pending
                .iter()
                .filter(|p| state.knows(p))
                .cloned()
                .collect();
            if ready.is_empty() {
                break;
            }
            state.pending.retain(|p| !ready.contains(p));
            for p in &ready {
                changed |= state.apply(p);
            }
        }
    } else {
        state.pending.push(pkt.clone());
    }
    let mut forwards: Vec<_> = state
        .view
        .neighbors(at)
        .filter(|&n| n != pkt.origin)
        .map(|n| (n, pkt.clone()))
        .collect();
    // The far end of a failed edge is no longer a neighbour but still needs to hear.
    if let Some(p) = pkt.peer {
        for end in [pkt.changed_region, p] {
            if end != at
                && end != pkt.origin
                && !forwards.iter().any(|(n, _)| *n == end)
                && pkt.change_kind == ChangeKind::LinkDown
                && (at == pkt.changed_region || at == p)
            {
                forwards.push((end, pkt.clone()));
            }
        }
    }
    EventStep {
        view_changed: changed,
        forwards,
    }
}

/// Region edges that differ between two graphs: removed edges as
/// `LinkDown`, added or re-portaled edges as `LinkUp` with the new portals.
pub fn edge_changes(
    old: &RegionGraph,
    new: &RegionGraph,
) -> Vec<(
    ChangeKind,
    RegionId,
    RegionId,
    Option<(Vec<Portal>, Vec<Portal>)>,
)> {
    let before: BTreeSet<_> = old.edges().into_iter().collect();
    let after: BTreeSet<_> = new.edges().into_iter().collect();
    let mut out = Vec::new();
    for &(a, b) in before.difference(&after) {
        out.push((ChangeKind::LinkDown, a, b, None));
    }
    for &(a, b) in &after {
        let portals = (new.portals(a, b).to_vec(), new.portals(b, a).to_vec());
        let same = before.contains(&(a, b))
            && old.portals(a, b) == portals.0.as_slice()
            && old.portals(b, a) == portals.1.as_slice();
        if !same {
            out.push((ChangeKind::LinkUp, a, b, Some(portals)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: u16) -> RegionId {
        RegionId::new(x)
    }

    fn line() -> RegionGraph {
        let mut g = RegionGraph::new();
        g.insert_edge(r(1), r(2), vec![], vec![]);
        g.insert_edge(r(2), r(3), vec![], vec![]);
        g
    }

    #[test]
    fn duplicate_seq_not_reforwarded() {
        let mut st = EventState::new(line());
        let mut issuer = EventIssuer::default();
        let ev = issuer.issue(r(1), ChangeKind::LinkDown, r(2), Some(r(3)), None);
        let first = handle_event(&mut st, r(2), &ev);
        assert!(first.view_changed);
        assert_eq!(handle_event(&mut st, r(2), &ev), EventStep::default());
        assert_eq!(st.applied, 1);
    }

    #[test]
    fn seq_strictly_increasing_per_origin() {
        let mut issuer = EventIssuer::default();
        let a = issuer.issue(r(1), ChangeKind::NodeMoved, r(1), None, None);
        let b = issuer.issue(r(1), ChangeKind::NodeMoved, r(1), None, None);
        let c = issuer.issue(r(2), ChangeKind::NodeMoved, r(2), None, None);
        assert!(b.seq > a.seq);
        assert_eq!(c.seq, 1);
    }

    #[test]
    fn unknown_region_waits_for_join() {
        let mut st = EventState::new(line());
        let mut issuer = EventIssuer::default();
        let up = issuer.issue(
            r(3),
            ChangeKind::LinkUp,
            r(3),
            Some(r(9)),
            Some((vec![], vec![])),
        );
        handle_event(&mut st, r(1), &up);
        assert_eq!(st.pending().len(), 1);
        assert!(!st.view.adjacent(r(3), r(9)));
        let join = issuer.issue(r(9), ChangeKind::RegionJoin, r(9), None, None);
        handle_event(&mut st, r(1), &join);
        assert!(st.pending().is_empty());
        assert!(st.view.adjacent(r(3), r(9)));
    }

    #[test]
    fn edge_diff() {
        let old = line();
        let mut new = line();
        new.remove_edge(r(2), r(3));
        let ch = edge_changes(&old, &new);
        assert_eq!(ch.len(), 1);
        assert_eq!(
            (ch[0].0, ch[0].1, ch[0].2),
            (ChangeKind::LinkDown, r(2), r(3))
        );
    }
}
