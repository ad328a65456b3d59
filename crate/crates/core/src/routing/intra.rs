use super::{DropReason, ForwardAction, IntraStrategy, RoutingContext, RoutingError, SwitchState};
use crate::header::SmartPacketHeader;
use crate::regions::RegionId;
use crate::topology::VertexId;

/// Node path inside `region` from this switch to `to`. `to` may sit just
/// outside the region (a linked entry vertex of a neighbour).
pub(crate) fn intra_path(
    state: &SwitchState,
    region: RegionId,
    to: VertexId,
    header: &SmartPacketHeader,
    ctx: &RoutingContext<'_>,
) -> Option<Vec<VertexId>> {
    let members = ctx.decomp.full_region(region)?.members();
    match state.config.intra {
        IntraStrategy::ShortestPath => {
            ctx.graph
                .shortest_path_within(state.switch_id, to, &members)
        }
        IntraStrategy::Ecmp => {
            let mut paths = ctx
                .graph
                .shortest_paths_within(state.switch_id, to, &members, 8);
            if paths.is_empty() {
                return None;
            }
            let pid = header.ids.as_ref().and_then(|i| i.packet_pid).unwrap_or(0);
            let i = usize::from(pid) % paths.len();
            Some(paths.swap_remove(i))
        }
    }
}

/// Deliver inside the destination region. A missing receiver means every
/// node of the region, each exactly once. The QoS SuperField plays no part.
pub fn intra_region_resolve(
    state: &SwitchState,
    acting: RegionId,
    header: &SmartPacketHeader,
    ctx: &RoutingContext<'_>,
) -> Result<Vec<ForwardAction>, RoutingError> {
    let region = ctx
        .decomp
        .full_region(acting)
        .ok_or(RoutingError::UnresolvableRid(acting.raw))?;
    let targets: Vec<VertexId> = match header.receiver() {
        Some(r) => {
            if !region.nodes.contains(&VertexId(r)) {
                return Err(RoutingError::ReceiverNotInRegion(r, acting));
            }
            vec![VertexId(r)]
        }
        None => region.nodes.iter().copied().collect(),
    };
    Ok(targets
        .into_iter()
        .map(|node| match intra_path(state, acting, node, header, ctx) {
            Some(path) => ForwardAction::DeliverToNode {
                path,
                node,
                header: header.clone(),
            },
            None => ForwardAction::Drop {
                reason: DropReason::NoPath,
                header: header.clone(),
            },
        })
        .collect())
}
