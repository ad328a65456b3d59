use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::{Effort, PathSuggestion, RoutingContext, RoutingError, SwitchState};
use crate::header::{qos, QosSmartSF, SmartPacketHeader};
use crate::regions::{path_qos, resolve_rid, QosAnnotation, RegionDecomposition, RegionId};
use crate::topology::VertexId;

/// Full regions a raw stack entry stands for, resolved from `acting`'s scope.
pub(crate) fn resolve_targets(
    raw: u16,
    acting: RegionId,
    decomp: &RegionDecomposition,
) -> Result<BTreeSet<RegionId>, RoutingError> {
    let mut context = vec![acting];
    context.extend(decomp.ancestors(acting));
    let rid = resolve_rid(raw, &context, decomp)
        .map_err(|_| RoutingError::UnresolvableRid(raw))?
        .rid();
    let leaves = decomp.leaves(rid);
    if leaves.is_empty() {
        return Err(RoutingError::UnresolvableRid(raw));
    }
    Ok(leaves)
}

/// Target set of every stack entry, front first. A high-level destination
/// narrows to the receiver's own region when the receiver is known.
pub(crate) fn waypoint_targets(
    header: &SmartPacketHeader,
    acting: RegionId,
    decomp: &RegionDecomposition,
) -> Result<Vec<BTreeSet<RegionId>>, RoutingError> {
    let entries = &header.region_stack.entries;
    if entries.is_empty() {
        return Err(RoutingError::EmptyStack);
    }
    let mut out = entries
        .iter()
        .map(|&raw| resolve_targets(raw, acting, decomp))
        .collect::<Result<Vec<_>, _>>()?;
    if let (Some(last), Some(r)) = (out.last_mut(), header.receiver()) {
        if last.len() > 1 {
            let own: BTreeSet<_> = decomp.regions_of(VertexId(r)).into_iter().collect();
            let narrowed: BTreeSet<_> = last.intersection(&own).copied().collect();
            if !narrowed.is_empty() {
                *last = narrowed;
            }
        }
    }
    Ok(out)
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn by_qos_then_rid(a: &PathSuggestion, b: &PathSuggestion) -> Ordering {
    a.qos
        .path_latency
        .cmp(&b.qos.path_latency)
        .then_with(|| cmp_f64(a.qos.path_loss, b.qos.path_loss))
        .then_with(|| cmp_f64(a.cost, b.cost))
        .then_with(|| a.region_path.cmp(&b.region_path))
        .then_with(|| a.instance.cmp(&b.instance))
}

/// Region paths for a packet handled on behalf of `acting`.
///
/// Minimal effort answers with single immediate regions from the region map,
/// folding node-path instances. Maximal effort answers with every minimum-hop
/// region path through all stacked waypoints, one row per node path into the
/// first region when configured per path.
pub fn suggest_region_paths(
    state: &SwitchState,
    acting: RegionId,
    header: &SmartPacketHeader,
    effort: Effort,
    ctx: &RoutingContext<'_>,
) -> Result<Vec<PathSuggestion>, RoutingError> {
    let waypoints = waypoint_targets(header, acting, ctx.decomp)?;
    if waypoints[0].contains(&acting) {
        return Err(RoutingError::AtDestination);
    }
    let front = header.region_stack.entries[0];
    let fee = state.config.region_fee;
    let mut out = match effort {
        Effort::Minimal => {
            let map = state
                .region_maps
                .get(&acting)
                .ok_or(RoutingError::NoMap(acting))?;
            let rows: Vec<_> = map
                .entries
                .iter()
                .filter(|e| waypoints[0].contains(&e.destination))
                .collect();
            let Some(hops) = rows.iter().map(|e| e.hops).min() else {
                return Err(RoutingError::NotInMap(front));
            };
            let mut folded: BTreeMap<RegionId, QosAnnotation> = BTreeMap::new();
            for e in rows.into_iter().filter(|e| e.hops == hops) {
                folded
                    .entry(e.immediate)
                    .and_modify(|q| {
                        q.path_latency = q.path_latency.min(e.qos.path_latency);
                        q.path_loss = q.path_loss.min(e.qos.path_loss);
                        q.hop_latency = q.hop_latency.min(e.qos.hop_latency);
                        q.hop_loss = q.hop_loss.min(e.qos.hop_loss);
                    })
                    .or_insert(e.qos);
            }
            folded
                .into_iter()
                .map(|(imm, qos)| PathSuggestion {
                    region_path: vec![imm],
                    instance: None,
                    qos,
                    cost: fee * f64::from(hops),
                })
                .collect::<Vec<_>>()
        }
        Effort::Maximal => {
            let cap = state.config.suggestion_cap.max(1);
            let mut partial: Vec<Vec<RegionId>> = vec![Vec::new()];
            for targets in &waypoints {
                let mut next = Vec::new();
                for p in &partial {
                    let start = p.last().copied().unwrap_or(acting);
                    let segs = ctx
                        .rgraph
                        .min_hop_paths(start, targets, cap)
                        .map_err(|_| RoutingError::NoPath(front))?;
                    for seg in segs {
                        if next.len() >= cap {
                            break;
                        }
                        let mut full = p.clone();
                        full.extend(seg);
                        next.push(full);
                    }
                }
                partial = next;
            }
            let mut rows = Vec::new();
            for path in partial.into_iter().filter(|p| !p.is_empty()) {
                let portals = ctx.rgraph.portals(acting, path[0]);
                let cost = fee * path.len() as f64;
                match state.config.multiplicity {
                    crate::regions::Multiplicity::PerPath => {
                        for portal in portals {
                            rows.push(PathSuggestion {
                                qos: path_qos(ctx.rgraph, &path, portal),
                                region_path: path.clone(),
                                instance: Some(portal.tag),
                                cost,
                            });
                        }
                    }
                    crate::regions::Multiplicity::Aggregate => {
                        if let Some(best) = ctx.rgraph.best_portal(acting, path[0]) {
                            let mut qos = path_qos(ctx.rgraph, &path, best);
                            for p in portals {
                                let q = path_qos(ctx.rgraph, &path, p);
                                qos.path_loss = qos.path_loss.min(q.path_loss);
                                qos.hop_loss = qos.hop_loss.min(q.hop_loss);
                            }
                            rows.push(PathSuggestion {
                                region_path: path,
                                instance: None,
                                qos,
                                cost,
                            });
                        }
                    }
                }
            }
            rows
        }
    };
    if out.is_empty() {
        return Err(RoutingError::NoPath(front));
    }
    out.sort_by(by_qos_then_rid);
    Ok(out)
}

fn within_budgets(s: &PathSuggestion, budget: Option<&QosSmartSF>) -> bool {
    let Some(b) = budget else {
        return true;
    };
    let lat_ok = |level: Option<u8>, v: u64| level.is_none_or(|l| v <= qos::latency_budget(l));
    let loss_ok =
        |level: Option<u8>, v: f64| level.is_none_or(|l| v <= qos::loss_budget(l) + 1e-12);
    lat_ok(b.path_latency, s.qos.path_latency)
        && lat_ok(b.single_hop_latency, s.qos.hop_latency)
        && loss_ok(b.path_loss, s.qos.path_loss)
        && loss_ok(b.single_hop_loss, s.qos.hop_loss)
}

/// Every suggestion that meets the budgets, best first. Paths through a
/// degraded region rank after all others.
pub fn rank_paths(
    suggestions: &[PathSuggestion],
    budget: Option<&QosSmartSF>,
    degraded: &BTreeSet<RegionId>,
) -> Result<Vec<PathSuggestion>, RoutingError> {
    if suggestions.is_empty() {
        return Err(RoutingError::NoSuggestions);
    }
    let mut survivors: Vec<_> = suggestions
        .iter()
        .filter(|s| within_budgets(s, budget))
        .cloned()
        .collect();
    if survivors.is_empty() {
        return Err(RoutingError::AllFiltered);
    }
    let touches = |s: &PathSuggestion| s.region_path.iter().any(|r| degraded.contains(r));
    survivors.sort_by(|a, b| {
        touches(a)
            .cmp(&touches(b))
            .then_with(|| by_qos_then_rid(a, b))
    });
    Ok(survivors)
}

/// Take `k` from a ranked list: distinct first regions first, then any
/// remaining distinct rows. `usable` rejects rows that cannot be forwarded.
pub(crate) fn pick(
    ranked: &[PathSuggestion],
    k: usize,
    usable: impl Fn(&PathSuggestion) -> bool,
) -> Vec<PathSuggestion> {
    let mut chosen: Vec<PathSuggestion> = Vec::new();
    let mut firsts = BTreeSet::new();
    for s in ranked.iter().filter(|s| usable(s)) {
        if chosen.len() == k {
            return chosen;
        }
        if firsts.insert(s.first()) {
            chosen.push(s.clone());
        }
    }
    for s in ranked.iter().filter(|s| usable(s)) {
        if chosen.len() == k {
            break;
        }
        if !chosen.contains(s) {
            chosen.push(s.clone());
        }
    }
    chosen
}

pub fn select_paths(
    suggestions: &[PathSuggestion],
    budget: Option<&QosSmartSF>,
) -> Result<Vec<PathSuggestion>, RoutingError> {
    select_paths_with(suggestions, budget, &BTreeSet::new())
}

/// `fissionRate` best suggestions (default 1), preferring distinct first regions.
pub fn select_paths_with(
    suggestions: &[PathSuggestion],
    budget: Option<&QosSmartSF>,
    degraded: &BTreeSet<RegionId>,
) -> Result<Vec<PathSuggestion>, RoutingError> {
    let ranked = rank_paths(suggestions, budget, degraded)?;
    let k = budget.map_or(1, |b| b.fission());
    Ok(pick(&ranked, k, |_| true))
}
