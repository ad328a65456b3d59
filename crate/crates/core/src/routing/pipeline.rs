use std::collections::BTreeSet;

use super::intra::intra_path;
use super::suggest::{pick, rank_paths, resolve_targets, suggest_region_paths, waypoint_targets};
use super::{
    CachedDecision, ControlOutput, DropReason, FlowKey, ForwardAction, Hop, PathSuggestion,
    RoutingContext, RoutingError, SwitchState,
};
use crate::defense::{filter_packet, Verdict};
use crate::dynamics::apply_redirect;
use crate::header::SmartPacketHeader;
use crate::regions::{Portal, RegionId};
use crate::topology::VertexId;

fn drop(reason: DropReason, header: SmartPacketHeader) -> Vec<ForwardAction> {
    vec![ForwardAction::Drop { reason, header }]
}

/// Region this switch acts for. A packet handed over across a boundary is
/// handled as the region it was handed to; a locally injected packet as the
/// home region of the sender nearest to the stack front.
pub fn acting_region(
    state: &SwitchState,
    header: &SmartPacketHeader,
    ctx: &RoutingContext<'_>,
) -> Option<RegionId> {
    if let Some(a) = ctx.arrived_as {
        if state.home_regions.contains(&a) {
            return Some(a);
        }
    }
    let mut candidates: Vec<RegionId> = state.home_regions.iter().copied().collect();
    if let Some(n) = ctx.from_node {
        let own: Vec<_> = candidates
            .iter()
            .copied()
            .filter(|r| ctx.decomp.full_region(*r).is_some_and(|f| f.contains(n)))
            .collect();
        if !own.is_empty() {
            candidates = own;
        }
    }
    let first = *candidates.first()?;
    let targets = header
        .region_stack
        .entries
        .first()
        .and_then(|&raw| resolve_targets(raw, first, ctx.decomp).ok());
    let Some(targets) = targets else {
        return Some(first);
    };
    candidates.into_iter().min_by_key(|&c| {
        let dist = ctx.rgraph.hop_distances(c);
        let d = targets
            .iter()
            .filter_map(|t| dist.get(t))
            .min()
            .copied()
            .unwrap_or(u32::MAX);
        (d, c)
    })
}

fn portal_for<'a>(
    ctx: &RoutingContext<'a>,
    acting: RegionId,
    s: &PathSuggestion,
) -> Option<&'a Portal> {
    let portals = ctx.rgraph.portals(acting, s.first());
    match s.instance {
        Some(tag) => portals.iter().find(|p| p.tag == tag),
        None => ctx.rgraph.best_portal(acting, s.first()),
    }
}

/// Process one packet at this switch.
///
/// Order: defense filter, redirects, intra-region fast path, arrival pop,
/// destination check, flow cache, suggestion and selection, RBS courtesy.
/// Routing failures come back as `Drop` actions.
pub fn handle_packet(
    state: &mut SwitchState,
    mut header: SmartPacketHeader,
    ctx: &RoutingContext<'_>,
) -> Vec<ForwardAction> {
    state.counters.handled += 1;
    let Some(acting) = acting_region(state, &header, ctx) else {
        return drop(DropReason::NotHome, header);
    };

    let origin = ctx.from_node.map(|_| acting);
    match filter_packet(state, &header, origin, ctx.now) {
        Verdict::Pass => {}
        Verdict::Block => {
            state.counters.blocked += 1;
            return drop(DropReason::Blocked, header);
        }
        Verdict::SecondScreen => {
            state.counters.screened += 1;
            return vec![ForwardAction::SecondScreen { header }];
        }
        Verdict::DivertToTrh(trh) => {
            state.counters.diverted += 1;
            let Some(region) = ctx.decomp.regions_of(trh).first().copied() else {
                return drop(DropReason::NoPath, header);
            };
            if let Some(ids) = header.ids.as_mut() {
                ids.receiver_nid = Some(trh.0);
            }
            header.region_stack.entries = vec![region.raw];
        }
    }

    for r in &state.redirects {
        if r.expires_at <= ctx.now {
            continue;
        }
        let target = r.notice.new_region_stack.last().map(|x| x.raw);
        if header.receiver() == Some(r.notice.moved_nid.0)
            && header.region_stack.entries.last().copied() != target
        {
            header = apply_redirect(&r.notice, header);
            state.counters.redirected += 1;
        }
    }

    if let Some(fid) = header.region_stack.intra_region_fid {
        if let Some(flow) = state.intra_flows.get(&fid).filter(|f| f.region == acting) {
            state.counters.fast_path += 1;
            let path = flow.path.clone();
            return vec![match flow.next_region {
                None => ForwardAction::DeliverToNode {
                    node: *path.last().unwrap_or(&state.switch_id),
                    path,
                    header,
                },
                Some(next) => ForwardAction::ForwardToSwitch(Hop {
                    path,
                    next_region: next,
                    region_path: vec![next],
                    header,
                }),
            }];
        }
    }

    let waypoints = match waypoint_targets(&header, acting, ctx.decomp) {
        Ok(w) => w,
        Err(e) => return drop(e.drop_reason(), header),
    };
    let mut i = 0;
    while header.region_stack.entries.len() > 1 && waypoints[i].contains(&acting) {
        header.region_stack.entries.remove(0);
        i += 1;
    }

    if header.region_stack.entries.len() == 1 && waypoints[i].contains(&acting) {
        match super::intra_region_resolve(state, acting, &header, ctx) {
            Ok(actions) => return actions,
            Err(RoutingError::ReceiverNotInRegion(r, _)) => {
                if let Some(actions) = transitional(state, acting, &mut header, VertexId(r), ctx) {
                    return actions;
                }
            }
            Err(e) => return drop(e.drop_reason(), header),
        }
    }

    route_onward(state, acting, header, ctx)
}

/// Receiver left the destination region. Returns the final actions, or
/// `None` when the header was re-targeted and should be routed on.
fn transitional(
    state: &mut SwitchState,
    acting: RegionId,
    header: &mut SmartPacketHeader,
    receiver: VertexId,
    ctx: &RoutingContext<'_>,
) -> Option<Vec<ForwardAction>> {
    let Some(g) = state
        .gestures
        .iter()
        .find(|g| g.moved_nid == receiver)
        .cloned()
    else {
        return Some(drop(DropReason::ReceiverNotInRegion, header.clone()));
    };
    if ctx.now <= g.inform_until {
        if let Some(s) = header.sender() {
            state.outbox.push(ControlOutput::InformSender {
                sender: VertexId(s),
                moved: g.moved_nid,
                new_region: g.new_region,
            });
        }
    }
    if ctx.now > g.forward_until || g.new_region == acting {
        return Some(drop(DropReason::GestureExpired, header.clone()));
    }
    state.counters.gesture_forwards += 1;
    header.region_stack.entries = vec![g.new_region.raw];
    None
}

fn route_onward(
    state: &mut SwitchState,
    acting: RegionId,
    mut header: SmartPacketHeader,
    ctx: &RoutingContext<'_>,
) -> Vec<ForwardAction> {
    let front = header.region_stack.entries[0];
    let key = FlowKey::of(&header);
    let k = header.fission();
    let live = |s: &PathSuggestion| portal_for(ctx, acting, s).is_some();

    let cached = key
        .and_then(|key| state.flow_cache.get(&key))
        .filter(|c| {
            c.acting == acting
                && c.front == front
                && c.expires_at > ctx.now
                && c.choices.len() == k
                && c.choices.iter().all(live)
        })
        .map(|c| c.choices.clone());
    let choices = match cached {
        Some(c) => {
            state.counters.cache_hits += 1;
            c
        }
        None => {
            state.counters.suggestions_computed += 1;
            let ranked = suggest_region_paths(state, acting, &header, state.config.effort, ctx)
                .and_then(|s| rank_paths(&s, header.qos.as_ref(), &state.degraded));
            let ranked = match ranked {
                Ok(r) => r,
                Err(e) => return drop(e.drop_reason(), header),
            };
            let chosen = pick(&ranked, k, live);
            if chosen.is_empty() {
                return drop(DropReason::NoPath, header);
            }
            state.counters.transactions += chosen.len() as u64;
            state.counters.fee_millis += chosen
                .iter()
                .map(|s| (s.cost * 1000.0).round() as u64)
                .sum::<u64>();
            if let Some(key) = key {
                state.flow_cache.insert(
                    key,
                    CachedDecision {
                        acting,
                        front,
                        choices: chosen.clone(),
                        expires_at: ctx.now.saturating_add(state.config.cache_ttl),
                    },
                );
            }
            chosen
        }
    };

    if let Some(rbs) = header.rbs.as_mut() {
        if state.config.rbs_courtesy {
            // A full RBS keeps its recorded prefix rather than failing the packet.
            let _ = rbs.append(acting.raw);
        } else {
            rbs.clear();
        }
    }
    header.region_stack.intra_region_fid = None;

    let mut seen = BTreeSet::new();
    let mut hops: Vec<Hop> = Vec::new();
    for s in &choices {
        let Some(portal) = portal_for(ctx, acting, s) else {
            continue;
        };
        let Some(mut path) = intra_path(state, acting, portal.sequence[0], &header, ctx) else {
            continue;
        };
        path.extend(portal.sequence.iter().skip(1));
        if !seen.insert((s.region_path.clone(), s.instance)) {
            continue;
        }
        hops.push(Hop {
            path,
            next_region: s.first(),
            region_path: s.region_path.clone(),
            header: header.clone(),
        });
    }
    match hops.len() {
        0 => drop(DropReason::NoPath, header),
        1 => vec![ForwardAction::ForwardToSwitch(hops.remove(0))],
        _ => {
            for h in &mut hops {
                if let Some(q) = h.header.qos.as_mut() {
                    q.fission_rate = Some(1);
                }
            }
            vec![ForwardAction::Replicate(hops)]
        }
    }
}
