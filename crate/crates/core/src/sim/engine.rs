use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{FlowReport, MetricsReport, PacketTrace, SwitchTotals};
use super::scenario::{ConfigScope, ScenarioScript, SendSpec, Verb};
use super::SimError;
use crate::defense::{alert_schedule, update_scores, DdosAlert, ScoreBook};
use crate::dynamics::{
    edge_changes, handle_event, pull_region_maps, redirect_flood, relocate, ChangeKind,
    EventIssuer, EventPacket, EventState, ExplorerRounds, ForwardingGesture, InstalledRedirect,
    MapDirectory, PullConfig, RedirectNotice,
};
use crate::header::qos::{quantize_latency, quantize_loss};
use crate::header::{
    decode, encode, prepend_stack, IdsSF, QosSmartSF, RbsSF, RegionStackSF, SmartPacketHeader,
};
use crate::regions::{
    build_decomposition, build_region_graph, compute_region_map, enumerate_full_regions,
    load_decomposition, Multiplicity, RegionDecomposition, RegionGraph, RegionId, RegionMap,
};
use crate::routing::{
    acting_region, handle_packet, ControlOutput, DropReason, FlowKey, ForwardAction, Hop,
    RoutingConfig, RoutingContext, SwitchState,
};
use crate::topology::{fixtures, load_topology, NetworkGraph, TopologyFormat, VertexId};

/// Receivers treat a repeated (flow, pid) within this many ticks as a copy.
const DEDUP_WINDOW: u64 = 1000;

/// Opaque stand-in for a legacy IPv4 header.
const LEGACY_STUB: [u8; 4] = [0x45, 0x00, 0x00, 0x14];

pub struct World {
    pub graph: NetworkGraph,
    pub decomp: RegionDecomposition,
    pub rgraph: RegionGraph,
}

fn read_ref(script: &ScenarioScript, reference: &str) -> Result<String, SimError> {
    let path = script.resolve(reference);
    fs::read_to_string(&path).map_err(|e| SimError::Load(format!("{}: {e}", path.display())))
}

/// Build the topology, decomposition and region graph a script names.
/// Builtin fixture names win over paths.
pub fn load_world(script: &ScenarioScript) -> Result<World, SimError> {
    let load = |e: &dyn std::fmt::Display| SimError::Load(e.to_string());
    let mut graph = match fixtures::source(&script.topology) {
        Some(text) => load_topology(text.as_bytes(), TopologyFormat::Text).map_err(|e| load(&e))?,
        None => {
            let text = read_ref(script, &script.topology)?;
            let format = if text.trim_start().starts_with('{') {
                TopologyFormat::Json
            } else {
                TopologyFormat::Text
            };
            load_topology(text.as_bytes(), format).map_err(|e| load(&e))?
        }
    };
    if let Some(p) = script.link_loss {
        graph.set_uniform_loss(p).map_err(|e| load(&e))?;
    }
    let regions = match script.regions.as_deref() {
        Some(r) => r.to_string(),
        None if fixtures::decomposition_source(&script.topology).is_some() => {
            script.topology.clone()
        }
        None => "all".to_string(),
    };
    let decomp = if regions == "all" {
        let full = enumerate_full_regions(&graph).map_err(|e| load(&e))?;
        build_decomposition(&graph, full, Vec::new()).map_err(|e| load(&e))?
    } else {
        let text = match fixtures::decomposition_source(&regions) {
            Some(t) => t.to_string(),
            None => read_ref(script, &regions)?,
        };
        load_decomposition(&text, &graph).map_err(|e| load(&e))?
    };
    let rgraph = build_region_graph(&decomp, &graph);
    Ok(World {
        graph,
        decomp,
        rgraph,
    })
}

#[derive(Debug, Clone)]
enum Event {
    Verb(usize),
    Send {
        verb: usize,
        k: u32,
    },
    AttackTick {
        verb: usize,
        acc: f64,
    },
    ExplorerRound,
    Arrive {
        copy: u64,
        switch: VertexId,
        header: SmartPacketHeader,
        arrived_as: Option<RegionId>,
        from_node: Option<VertexId>,
    },
    Deliver {
        copy: u64,
        node: VertexId,
        header: SmartPacketHeader,
    },
    Lost {
        copy: u64,
    },
    InstallAlert {
        region: RegionId,
        alert: DdosAlert,
    },
    InstallRedirect {
        region: RegionId,
        redirect: InstalledRedirect,
    },
    Inform {
        sender: VertexId,
        moved: VertexId,
        new_region: RegionId,
    },
    RegionEvent {
        at: RegionId,
        pkt: EventPacket,
    },
    TrhEmit {
        hub: VertexId,
    },
}

enum Outcome {
    Delivered(VertexId),
    Duplicate(VertexId),
    Dropped(DropReason),
    Screened,
}

struct Packet {
    flow: Option<FlowKey>,
    receiver: Option<u16>,
    sent_at: u64,
    live: u32,
    spawned: u64,
    first_delivery: Option<u64>,
    blocked: bool,
    screened: bool,
    last_drop: Option<String>,
}

struct CopyState {
    packet: u64,
    index: u64,
    trace: Vec<RegionId>,
    handlings: u32,
    rbs: Option<Vec<u16>>,
}

struct Sim<'s> {
    script: &'s ScenarioScript,
    world: World,
    switches: BTreeMap<VertexId, SwitchState>,
    views: BTreeMap<RegionId, EventState>,
    issuer: EventIssuer,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    now: u64,
    rng: ChaCha8Rng,
    packets: BTreeMap<u64, Packet>,
    copies: BTreeMap<u64, CopyState>,
    next_packet: u64,
    next_copy: u64,
    send_stacks: BTreeMap<usize, Vec<u16>>,
    overrides: BTreeMap<(u16, u16), Vec<u16>>,
    last_sent: BTreeMap<(u16, u16), u64>,
    seen: BTreeMap<(u16, FlowKey, u16), u64>,
    hubs: BTreeSet<VertexId>,
    trh_queue: BTreeMap<VertexId, VecDeque<(u64, SmartPacketHeader)>>,
    book: ScoreBook,
    report: MetricsReport,
    flows: BTreeMap<FlowKey, FlowReport>,
    converged: bool,
}

fn map_for(world: &World, owner: RegionId, script: &ScenarioScript) -> Option<RegionMap> {
    compute_region_map(
        owner,
        &world.rgraph,
        script.horizon,
        Multiplicity::Aggregate,
    )
    .ok()
}

fn config_for(
    script: &ScenarioScript,
    switch: VertexId,
    homes: &BTreeSet<RegionId>,
) -> RoutingConfig {
    let mut cfg = RoutingConfig::default();
    for rule in &script.configs {
        let hit = match rule.scope {
            ConfigScope::All => true,
            ConfigScope::Region(r) => homes.iter().any(|h| h.raw == r),
            ConfigScope::Switch(s) => s == switch.0,
        };
        if hit {
            rule.patch.apply(&mut cfg);
        }
    }
    cfg
}

impl<'s> Sim<'s> {
    fn new(script: &'s ScenarioScript, world: World) -> Self {
        let mut switches = BTreeMap::new();
        for s in world.graph.switches() {
            let homes: BTreeSet<RegionId> = world.decomp.regions_of(s).into_iter().collect();
            if homes.is_empty() {
                continue;
            }
            let maps = homes
                .iter()
                .filter_map(|&h| map_for(&world, h, script).map(|m| (h, m)))
                .collect();
            let cfg = config_for(script, s, &homes);
            switches.insert(s, SwitchState::new(s, homes, maps, cfg));
        }
        let views = world
            .rgraph
            .regions()
            .map(|r| (r, EventState::new(world.rgraph.clone())))
            .collect();
        Sim {
            script,
            world,
            switches,
            views,
            issuer: EventIssuer::default(),
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(script.seed),
            packets: BTreeMap::new(),
            copies: BTreeMap::new(),
            next_packet: 0,
            next_copy: 0,
            send_stacks: BTreeMap::new(),
            overrides: BTreeMap::new(),
            last_sent: BTreeMap::new(),
            seen: BTreeMap::new(),
            hubs: BTreeSet::new(),
            trh_queue: BTreeMap::new(),
            book: ScoreBook::new(script.score_window),
            report: MetricsReport {
                seed: script.seed,
                duration: script.duration,
                ..Default::default()
            },
            flows: BTreeMap::new(),
            converged: true,
        }
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.queue.insert((at, self.seq), ev);
    }

    fn run(mut self) -> Result<MetricsReport, SimError> {
        for i in 0..self.script.verbs.len() {
            self.schedule(self.script.verbs[i].at, Event::Verb(i));
        }
        if let Some(p) = self.script.explorer_period {
            self.schedule(p, Event::ExplorerRound);
        }
        while let Some((&(at, _), _)) = self.queue.first_key_value() {
            if at > self.script.duration {
                break;
            }
            let (_, ev) = self.queue.pop_first().expect("non-empty");
            if at > self.now {
                self.check_conservation()?;
                self.now = at;
            }
            self.dispatch(ev)?;
        }
        self.now = self.script.duration;
        self.check_conservation()?;
        Ok(self.finish_report())
    }

    fn check_conservation(&mut self) -> Result<(), SimError> {
        self.report.conservation_checks += 1;
        let t = &self.report.totals;
        let open = self.packets.len() as u64;
        if t.sent != t.delivered + t.dropped + open {
            return Err(SimError::Invariant(format!(
                "tick {}: sent {} != delivered {} + dropped {} + in flight {}",
                self.now, t.sent, t.delivered, t.dropped, open
            )));
        }
        let live: u64 = self.packets.values().map(|p| u64::from(p.live)).sum();
        if live != self.copies.len() as u64 {
            return Err(SimError::Invariant(format!(
                "tick {}: {live} live copies recorded but {} tracked",
                self.now,
                self.copies.len()
            )));
        }
        Ok(())
    }

    fn dispatch(&mut self, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::Verb(i) => self.on_verb(i)?,
            Event::Send { verb, k } => self.on_send(verb, k)?,
            Event::AttackTick { verb, acc } => self.on_attack_tick(verb, acc)?,
            Event::ExplorerRound => self.on_explorer_round(),
            Event::Arrive {
                copy,
                switch,
                header,
                arrived_as,
                from_node,
            } => self.on_arrive(copy, switch, header, arrived_as, from_node),
            Event::Deliver { copy, node, header } => self.on_deliver(copy, node, header),
            Event::Lost { copy } => self.finish_copy(copy, Outcome::Dropped(DropReason::LinkLoss)),
            Event::InstallAlert { region, alert } => {
                for st in self.switches.values_mut() {
                    if st.home_regions.contains(&region) {
                        st.install_alert(alert.clone());
                    }
                }
            }
            Event::InstallRedirect { region, redirect } => {
                for st in self.switches.values_mut() {
                    if st.home_regions.contains(&region) {
                        st.redirects
                            .retain(|r| r.notice.moved_nid != redirect.notice.moved_nid);
                        st.redirects.push(redirect.clone());
                    }
                }
            }
            Event::Inform {
                sender,
                moved,
                new_region,
            } => {
                self.overrides
                    .insert((sender.0, moved.0), vec![new_region.raw]);
            }
            Event::RegionEvent { at, pkt } => self.on_region_event(at, pkt),
            Event::TrhEmit { hub } => self.on_trh_emit(hub),
        }
        Ok(())
    }

    fn script_err(&self, verb: usize, message: impl Into<String>) -> SimError {
        SimError::Script {
            line: self.script.verbs[verb].line,
            message: message.into(),
        }
    }

    fn on_verb(&mut self, i: usize) -> Result<(), SimError> {
        let script = self.script;
        match &script.verbs[i].verb {
            Verb::Send(_) => self.on_send(i, 0)?,
            Verb::Move { nid, to } => self.on_move(i, VertexId(*nid), RegionId::new(*to))?,
            Verb::FailLink { a, b } => {
                self.world
                    .graph
                    .remove_link(VertexId(*a), VertexId(*b))
                    .map_err(|e| self.script_err(i, e.to_string()))?;
                let fresh = build_region_graph(&self.world.decomp, &self.world.graph);
                let old = std::mem::replace(&mut self.world.rgraph, fresh);
                self.propagate_changes(&old);
            }
            Verb::Attack { from_region, .. } => {
                let rid = RegionId::new(*from_region);
                if self
                    .world
                    .decomp
                    .full_region(rid)
                    .is_none_or(|r| r.nodes.is_empty())
                {
                    return Err(
                        self.script_err(i, format!("region {rid} has no nodes to attack from"))
                    );
                }
                self.on_attack_tick(i, 0.0)?;
            }
            Verb::Alert {
                target,
                rogue,
                ttl,
                trh,
            } => {
                let alert = DdosAlert {
                    target_nid: VertexId(*target),
                    rogue_regions: rogue.iter().map(|&r| RegionId::new(r)).collect(),
                    issued_at: self.now,
                    ttl: *ttl,
                    trh_nid: trh.map(VertexId),
                };
                let plan = alert_schedule(
                    &alert,
                    &self.world.decomp,
                    &self.world.rgraph,
                    script.hop_delay,
                )
                .map_err(|e| self.script_err(i, e.to_string()))?;
                if let Some(h) = alert.trh_nid {
                    self.hubs.insert(h);
                }
                for (region, at) in plan {
                    self.schedule(
                        at,
                        Event::InstallAlert {
                            region,
                            alert: alert.clone(),
                        },
                    );
                }
            }
        }
        Ok(())
    }

    fn destination_stack(&mut self, verb: usize, spec: &SendSpec) -> Result<Vec<u16>, SimError> {
        if let Some(to) = spec.to {
            if let Some(s) = self.overrides.get(&(spec.from, to)) {
                return Ok(s.clone());
            }
        }
        if let Some(s) = self.send_stacks.get(&verb) {
            return Ok(s.clone());
        }
        let stack = if let Some(s) = &spec.stack {
            s.clone()
        } else if let Some(r) = spec.region {
            vec![r]
        } else {
            let to = spec.to.expect("parser requires a receiver or a region");
            let host = self.world.decomp.regions_of(VertexId(to));
            let Some(r) = host.first() else {
                return Err(self.script_err(verb, format!("receiver {to} is in no region")));
            };
            vec![r.raw]
        };
        self.send_stacks.insert(verb, stack.clone());
        Ok(stack)
    }

    fn on_send(&mut self, verb: usize, k: u32) -> Result<(), SimError> {
        let script = self.script;
        let Verb::Send(spec) = &script.verbs[verb].verb else {
            unreachable!("send event for a non-send verb");
        };
        let stack = self.destination_stack(verb, spec)?;
        let header = if spec.legacy {
            prepend_stack(LEGACY_STUB.to_vec(), RegionStackSF::new(stack))
                .map_err(|e| self.script_err(verb, e.to_string()))?
        } else {
            let mut ids = IdsSF::new(spec.from, spec.to);
            ids.packet_pid = Some((k % 4096) as u16);
            ids.flow_fid = spec.fid;
            let mut h = SmartPacketHeader::new(RegionStackSF::new(stack), ids);
            let wants_qos = spec.fission.is_some()
                || spec.path_latency.is_some()
                || spec.hop_latency.is_some()
                || spec.path_loss.is_some()
                || spec.hop_loss.is_some();
            if wants_qos {
                h = h.with_qos(QosSmartSF {
                    single_hop_latency: spec.hop_latency.map(quantize_latency),
                    path_latency: spec.path_latency.map(quantize_latency),
                    single_hop_loss: spec.hop_loss.map(quantize_loss),
                    path_loss: spec.path_loss.map(quantize_loss),
                    fission_rate: spec.fission,
                });
            }
            if spec.rbs {
                h = h.with_rbs(RbsSF::default());
            }
            h
        };
        if let Some(to) = spec.to {
            self.last_sent.insert((spec.from, to), self.now);
        }
        self.inject(VertexId(spec.from), header, Some(verb))?;
        if k + 1 < spec.count {
            self.schedule(self.now + spec.every, Event::Send { verb, k: k + 1 });
        }
        Ok(())
    }

    fn on_attack_tick(&mut self, verb: usize, mut acc: f64) -> Result<(), SimError> {
        let script = self.script;
        let Verb::Attack {
            from_region,
            to,
            rate,
            until,
        } = &script.verbs[verb].verb
        else {
            unreachable!("attack event for a non-attack verb");
        };
        if self.now >= until.unwrap_or(script.duration) {
            return Ok(());
        }
        let region = RegionId::new(*from_region);
        let Some(attacker) = self
            .world
            .decomp
            .full_region(region)
            .and_then(|r| r.nodes.iter().next().copied())
        else {
            return Ok(());
        };
        let Some(dest) = self.world.decomp.regions_of(VertexId(*to)).first().copied() else {
            return Err(self.script_err(verb, format!("target {to} is in no region")));
        };
        acc += rate;
        while acc >= 1.0 {
            acc -= 1.0;
            let mut ids = IdsSF::new(attacker.0, Some(*to));
            ids.packet_pid = Some((self.next_packet % 4096) as u16);
            let h = SmartPacketHeader::new(RegionStackSF::new([dest.raw]), ids)
                .with_rbs(RbsSF::default());
            self.inject(attacker, h, Some(verb))?;
        }
        self.schedule(self.now + 1, Event::AttackTick { verb, acc });
        Ok(())
    }

    fn attach_switch(&self, node: VertexId) -> Option<VertexId> {
        self.world
            .decomp
            .regions_of(node)
            .into_iter()
            .filter_map(|r| self.world.decomp.full_region(r))
            .flat_map(|r| r.switches.iter().copied())
            .find(|&s| self.world.graph.adjacent(s, node))
    }

    fn inject(
        &mut self,
        node: VertexId,
        header: SmartPacketHeader,
        verb: Option<usize>,
    ) -> Result<(), SimError> {
        let bytes = encode(&header).map_err(|e| SimError::Script {
            line: verb.map_or(0, |v| self.script.verbs[v].line),
            message: format!("header does not encode: {e}"),
        })?;
        let back = decode(&bytes)
            .map_err(|e| SimError::Invariant(format!("encoded header fails to decode: {e}")))?;
        if back != header {
            return Err(SimError::Invariant(
                "header changed across encode and decode".into(),
            ));
        }
        let flow = FlowKey::of(&header);
        let pid = self.next_packet;
        self.next_packet += 1;
        self.report.totals.sent += 1;
        if let Some(f) = flow {
            let entry = self.flows.entry(f).or_insert_with(|| FlowReport {
                flow: f,
                ..Default::default()
            });
            entry.sent += 1;
        }
        self.packets.insert(
            pid,
            Packet {
                flow,
                receiver: header.receiver(),
                sent_at: self.now,
                live: 1,
                spawned: 1,
                first_delivery: None,
                blocked: false,
                screened: false,
                last_drop: None,
            },
        );
        let cid = self.next_copy;
        self.next_copy += 1;
        self.copies.insert(
            cid,
            CopyState {
                packet: pid,
                index: 0,
                trace: Vec::new(),
                handlings: 0,
                rbs: None,
            },
        );
        self.enter_network(cid, node, header);
        Ok(())
    }

    fn enter_network(&mut self, cid: u64, node: VertexId, header: SmartPacketHeader) {
        match self.attach_switch(node) {
            Some(sw) => self.transmit(
                cid,
                &[node, sw],
                Event::Arrive {
                    copy: cid,
                    switch: sw,
                    header,
                    arrived_as: None,
                    from_node: Some(node),
                },
            ),
            None => self.finish_copy(cid, Outcome::Dropped(DropReason::NotHome)),
        }
    }

    /// Walk `path` link by link, sampling loss per link, and schedule `then`
    /// after the summed latency.
    fn transmit(&mut self, cid: u64, path: &[VertexId], then: Event) {
        let mut t = 0u64;
        for w in path.windows(2) {
            let Some(link) = self.world.graph.link(w[0], w[1]) else {
                self.finish_copy(cid, Outcome::Dropped(DropReason::NoPath));
                return;
            };
            t += u64::from(link.latency);
            if link.loss > 0.0 && self.rng.gen_bool(link.loss.min(1.0)) {
                self.schedule(self.now + t, Event::Lost { copy: cid });
                return;
            }
        }
        self.schedule(self.now + t, then);
    }

    fn fork(&mut self, cid: u64) -> u64 {
        let src = &self.copies[&cid];
        let packet = src.packet;
        let trace = src.trace.clone();
        let handlings = src.handlings;
        let p = self.packets.get_mut(&packet).expect("live packet");
        p.live += 1;
        let index = p.spawned;
        p.spawned += 1;
        let new = self.next_copy;
        self.next_copy += 1;
        self.copies.insert(
            new,
            CopyState {
                packet,
                index,
                trace,
                handlings,
                rbs: None,
            },
        );
        new
    }

    fn directory(&self) -> MapDirectory {
        let mut dir = MapDirectory::new();
        for st in self.switches.values() {
            for (r, m) in &st.region_maps {
                dir.entry(*r).or_insert_with(|| m.clone());
            }
        }
        dir
    }

    fn on_arrive(
        &mut self,
        cid: u64,
        switch: VertexId,
        header: SmartPacketHeader,
        arrived_as: Option<RegionId>,
        from_node: Option<VertexId>,
    ) {
        let Some(c) = self.copies.get_mut(&cid) else {
            return;
        };
        c.handlings += 1;
        if c.handlings > self.script.hop_ttl {
            self.finish_copy(cid, Outcome::Dropped(DropReason::TtlExceeded));
            return;
        }
        c.rbs = header.rbs.as_ref().map(|r| r.traversed.clone());
        let Some(state) = self.switches.get_mut(&switch) else {
            self.finish_copy(cid, Outcome::Dropped(DropReason::NotHome));
            return;
        };
        let ctx = RoutingContext {
            now: self.now,
            graph: &self.world.graph,
            decomp: &self.world.decomp,
            rgraph: &self.world.rgraph,
            arrived_as,
            from_node,
        };
        let acting = acting_region(state, &header, &ctx);
        if let Some(a) = acting {
            if c.trace.last() != Some(&a) {
                c.trace.push(a);
            }
        }
        let mut actions = handle_packet(state, header, &ctx);

        if let (
            Some(a),
            [ForwardAction::Drop {
                reason: DropReason::NotInMap,
                header: h,
            }],
        ) = (acting, actions.as_slice())
        {
            if let Some(&front) = h.region_stack.entries.first() {
                let h = h.clone();
                let dir = self.directory();
                let cfg = PullConfig {
                    horizon: self.world.rgraph.diameter().max(1),
                    retain: true,
                };
                let state = self.switches.get_mut(&switch).expect("checked above");
                let before = state.region_maps.get(&a).cloned();
                if let Ok(out) = pull_region_maps(state, a, RegionId::new(front), &dir, cfg) {
                    self.report.pull_queries += out.queries as u64;
                    state.set_region_map(out.map);
                    let ctx = RoutingContext {
                        now: self.now,
                        graph: &self.world.graph,
                        decomp: &self.world.decomp,
                        rgraph: &self.world.rgraph,
                        arrived_as,
                        from_node,
                    };
                    actions = handle_packet(state, h, &ctx);
                    if !self.script.pull_retain {
                        if let Some(m) = before {
                            state.set_region_map(m);
                        }
                    }
                }
            }
        }

        let state = self.switches.get_mut(&switch).expect("checked above");
        let outbox = std::mem::take(&mut state.outbox);
        for msg in outbox {
            let ControlOutput::InformSender {
                sender,
                moved,
                new_region,
            } = msg;
            self.schedule(
                self.now + self.script.hop_delay,
                Event::Inform {
                    sender,
                    moved,
                    new_region,
                },
            );
        }

        let mut blocked = false;
        let mut units: Vec<ForwardAction> = Vec::new();
        for a in actions {
            match a {
                ForwardAction::Replicate(hops) => {
                    units.extend(hops.into_iter().map(ForwardAction::ForwardToSwitch))
                }
                other => units.push(other),
            }
        }
        if units.is_empty() {
            self.finish_copy(cid, Outcome::Dropped(DropReason::NoPath));
            return;
        }
        let ids: Vec<u64> = (0..units.len())
            .map(|i| if i == 0 { cid } else { self.fork(cid) })
            .collect();
        for (id, unit) in ids.into_iter().zip(units) {
            match unit {
                ForwardAction::ForwardToSwitch(Hop {
                    path,
                    next_region,
                    header,
                    ..
                }) => {
                    let entry = *path.last().expect("hop path ends at the entry switch");
                    self.transmit(
                        id,
                        &path,
                        Event::Arrive {
                            copy: id,
                            switch: entry,
                            header,
                            arrived_as: Some(next_region),
                            from_node: None,
                        },
                    );
                }
                ForwardAction::DeliverToNode { path, node, header } => {
                    self.transmit(
                        id,
                        &path,
                        Event::Deliver {
                            copy: id,
                            node,
                            header,
                        },
                    );
                }
                ForwardAction::Drop { reason, header } => {
                    if reason == DropReason::Blocked {
                        blocked = true;
                        if let Some(s) = header.sender() {
                            if let Some(r) = self.world.decomp.regions_of(VertexId(s)).first() {
                                update_scores(&mut self.book, &[(*r, self.now)]);
                            }
                        }
                    }
                    self.finish_copy(id, Outcome::Dropped(reason));
                }
                ForwardAction::SecondScreen { .. } => self.finish_copy(id, Outcome::Screened),
                ForwardAction::Replicate(_) => unreachable!("flattened above"),
            }
        }
        if blocked {
            let degraded = self.book.degraded(self.now);
            for st in self.switches.values_mut() {
                if st.degraded != degraded {
                    st.degraded = degraded.clone();
                    st.flow_cache.clear();
                }
            }
        }
    }

    fn on_deliver(&mut self, cid: u64, node: VertexId, header: SmartPacketHeader) {
        let Some(c) = self.copies.get(&cid) else {
            return;
        };
        let original = self.packets[&c.packet].receiver;
        if self.hubs.contains(&node)
            && header.receiver() == Some(node.0)
            && original != Some(node.0)
        {
            let q = self.trh_queue.entry(node).or_default();
            q.push_back((cid, header));
            if q.len() == 1 {
                self.schedule(self.now, Event::TrhEmit { hub: node });
            }
            return;
        }
        if let (Some(flow), Some(pid)) = (
            FlowKey::of(&header),
            header.ids.as_ref().and_then(|i| i.packet_pid),
        ) {
            let key = (node.0, flow, pid);
            if let Some(&t) = self.seen.get(&key) {
                if self.now.saturating_sub(t) < DEDUP_WINDOW {
                    self.finish_copy(cid, Outcome::Duplicate(node));
                    return;
                }
            }
            self.seen.insert(key, self.now);
        }
        self.finish_copy(cid, Outcome::Delivered(node));
    }

    /// A regulator hub re-emits diverted traffic toward the original
    /// receiver, rate limited, with itself as sender.
    fn on_trh_emit(&mut self, hub: VertexId) {
        let rate = self.script.trh_rate.max(1) as usize;
        let mut batch = Vec::new();
        if let Some(q) = self.trh_queue.get_mut(&hub) {
            for _ in 0..rate {
                match q.pop_front() {
                    Some(x) => batch.push(x),
                    None => break,
                }
            }
        }
        for (cid, mut header) in batch {
            let Some(c) = self.copies.get(&cid) else {
                continue;
            };
            let original = self.packets[&c.packet].receiver;
            let dest =
                original.and_then(|r| self.world.decomp.regions_of(VertexId(r)).first().copied());
            let (Some(receiver), Some(dest)) = (original, dest) else {
                self.finish_copy(cid, Outcome::Dropped(DropReason::ReceiverNotInRegion));
                continue;
            };
            if let Some(ids) = header.ids.as_mut() {
                ids.sender_nid = hub.0;
                ids.receiver_nid = Some(receiver);
            }
            header.region_stack = RegionStackSF::new([dest.raw]);
            if let Some(rbs) = header.rbs.as_mut() {
                rbs.clear();
            }
            self.enter_network(cid, hub, header);
        }
        if self.trh_queue.get(&hub).is_some_and(|q| !q.is_empty()) {
            self.schedule(self.now + 1, Event::TrhEmit { hub });
        }
    }

    fn finish_copy(&mut self, cid: u64, outcome: Outcome) {
        let Some(c) = self.copies.remove(&cid) else {
            return;
        };
        let now = self.now;
        let p = self
            .packets
            .get_mut(&c.packet)
            .expect("copy of a live packet");
        p.live -= 1;
        let flow = p.flow.and_then(|f| self.flows.get_mut(&f));
        let (label, delivered_to) = match outcome {
            Outcome::Delivered(n) => {
                p.first_delivery.get_or_insert(now);
                self.report.totals.deliveries += 1;
                if let Some(f) = flow {
                    f.deliveries += 1;
                }
                ("delivered".to_string(), Some(n.0))
            }
            Outcome::Duplicate(n) => {
                self.report.totals.duplicates += 1;
                if let Some(f) = flow {
                    f.duplicates += 1;
                }
                ("duplicate".to_string(), Some(n.0))
            }
            Outcome::Dropped(r) => {
                p.blocked |= r == DropReason::Blocked;
                p.last_drop = Some(r.as_str().to_string());
                (r.as_str().to_string(), None)
            }
            Outcome::Screened => {
                p.screened = true;
                p.last_drop = Some("second-screen".into());
                ("second-screen".to_string(), None)
            }
        };
        self.report.traces.push(PacketTrace {
            flow: p.flow,
            packet: c.packet,
            copy: c.index,
            regions: c.trace,
            sent_at: p.sent_at,
            finished_at: now,
            outcome: label,
            delivered_to,
            rbs: c.rbs,
        });
        if p.live > 0 {
            return;
        }
        let p = self.packets.remove(&c.packet).expect("present");
        let t = &mut self.report.totals;
        let flow = p.flow.and_then(|f| self.flows.get_mut(&f));
        match p.first_delivery {
            Some(at) => {
                t.delivered += 1;
                if let Some(f) = flow {
                    let lat = at - p.sent_at;
                    f.delivered += 1;
                    f.latency_sum += lat;
                    f.latency_max = f.latency_max.max(lat);
                }
            }
            None => {
                t.dropped += 1;
                t.blocked += u64::from(p.blocked);
                t.screened += u64::from(p.screened && !p.blocked);
                if let Some(f) = flow {
                    f.dropped += 1;
                    f.blocked += u64::from(p.blocked);
                    f.screened += u64::from(p.screened && !p.blocked);
                    let reason = p.last_drop.unwrap_or_else(|| "unknown".into());
                    *f.drop_reasons.entry(reason).or_insert(0) += 1;
                }
            }
        }
    }

    fn on_move(&mut self, verb: usize, nid: VertexId, to: RegionId) -> Result<(), SimError> {
        let mobility = self.script.mobility;
        let Some(from) = self.world.decomp.regions_of(nid).first().copied() else {
            return Err(self.script_err(verb, format!("node {nid} is in no region")));
        };
        if from == to {
            return Ok(());
        }
        let gesture = ForwardingGesture::new(nid, to, self.now, &mobility)
            .map_err(|e| self.script_err(verb, e.to_string()))?;
        let (graph, decomp) = relocate(&self.world.graph, &self.world.decomp, nid, from, to)
            .map_err(|e| self.script_err(verb, e.to_string()))?;
        let rgraph = build_region_graph(&decomp, &graph);
        self.world.graph = graph;
        self.world.decomp = decomp;
        let old = std::mem::replace(&mut self.world.rgraph, rgraph);

        for (&id, st) in self.switches.iter_mut() {
            let homes: BTreeSet<RegionId> = self.world.decomp.regions_of(id).into_iter().collect();
            st.region_maps.retain(|r, _| homes.contains(r));
            st.home_regions = homes;
            if st.home_regions.contains(&from) {
                st.gestures.retain(|g| g.moved_nid != nid);
                st.gestures.push(gesture.clone());
            }
        }

        let horizon = mobility.inform_for;
        let senders: Vec<u16> = self
            .last_sent
            .iter()
            .filter(|(&(_, r), &t)| r == nid.0 && self.now.saturating_sub(t) <= horizon)
            .map(|(&(s, _), _)| s)
            .collect();
        if !senders.is_empty() {
            let notice = RedirectNotice::new(nid, vec![to], mobility.redirect_ttl)
                .map_err(|e| self.script_err(verb, e.to_string()))?;
            let redirect = InstalledRedirect {
                notice,
                expires_at: self.now + mobility.forward_for,
            };
            for (region, d) in redirect_flood(&self.world.rgraph, to, mobility.redirect_ttl) {
                self.report.redirect_notices += 1;
                self.schedule(
                    self.now + u64::from(d) * self.script.hop_delay,
                    Event::InstallRedirect {
                        region,
                        redirect: redirect.clone(),
                    },
                );
            }
            let dist = self.world.rgraph.hop_distances(from);
            for s in senders {
                let d = self
                    .world
                    .decomp
                    .regions_of(VertexId(s))
                    .iter()
                    .filter_map(|r| dist.get(r))
                    .min()
                    .copied()
                    .unwrap_or(1);
                self.schedule(
                    self.now + u64::from(d) * self.script.hop_delay,
                    Event::Inform {
                        sender: VertexId(s),
                        moved: nid,
                        new_region: to,
                    },
                );
            }
        }
        self.propagate_changes(&old);
        Ok(())
    }

    /// Compare the region graph before and after a change and start event
    /// floods from the regions at either end of each changed edge.
    fn propagate_changes(&mut self, old: &RegionGraph) {
        let new = self.world.rgraph.clone();
        let mut started = Vec::new();
        for r in new
            .regions()
            .filter(|r| !old.contains(*r))
            .collect::<Vec<_>>()
        {
            self.views.insert(r, EventState::new(new.clone()));
            started.push((
                r,
                self.issuer.issue(r, ChangeKind::RegionJoin, r, None, None),
            ));
        }
        for r in old
            .regions()
            .filter(|r| !new.contains(*r))
            .collect::<Vec<_>>()
        {
            self.views.remove(&r);
            let pkt = self.issuer.issue(r, ChangeKind::RegionLeave, r, None, None);
            for n in old.neighbors(r).filter(|n| new.contains(*n)) {
                started.push((n, pkt.clone()));
            }
        }
        for (kind, a, b, portals) in edge_changes(old, &new) {
            for end in [a, b] {
                if new.contains(end) {
                    let pkt = self.issuer.issue(end, kind, a, Some(b), portals.clone());
                    started.push((end, pkt));
                }
            }
        }
        if started.is_empty() {
            return;
        }
        self.converged = false;
        self.report.map_convergence_tick = None;
        for (at, pkt) in started {
            self.schedule(self.now, Event::RegionEvent { at, pkt });
        }
    }

    fn install_map(&mut self, owner: RegionId, map: RegionMap) {
        for st in self.switches.values_mut() {
            if st.home_regions.contains(&owner) && st.region_maps.get(&owner) != Some(&map) {
                st.set_region_map(map.clone());
            }
        }
    }

    fn on_region_event(&mut self, at: RegionId, pkt: EventPacket) {
        let Some(view) = self.views.get_mut(&at) else {
            return;
        };
        self.report.event_messages += 1;
        let step = handle_event(view, at, &pkt);
        if step.view_changed {
            if let Ok(map) =
                compute_region_map(at, &view.view, self.script.horizon, Multiplicity::Aggregate)
            {
                self.install_map(at, map);
            }
        }
        for (n, p) in step.forwards {
            self.schedule(
                self.now + self.script.hop_delay,
                Event::RegionEvent { at: n, pkt: p },
            );
        }
        self.check_convergence();
    }

    fn on_explorer_round(&mut self) {
        let horizon = self.script.horizon;
        let hop_limit = self.world.rgraph.diameter().max(1);
        let mut rounds = ExplorerRounds::new(&self.world.rgraph, hop_limit);
        while !rounds.is_idle() {
            rounds.step();
        }
        self.report.explorer_messages += rounds.messages;
        let owners: Vec<RegionId> = self.world.rgraph.regions().collect();
        let maps: Vec<RegionMap> = owners
            .iter()
            .map(|&r| {
                let mut m = rounds.map_of(r);
                m.entries.retain(|e| horizon.admits(e.hops));
                m.horizon = horizon;
                m
            })
            .collect();
        for (r, m) in owners.into_iter().zip(maps) {
            self.install_map(r, m);
            if let Some(v) = self.views.get_mut(&r) {
                v.view = self.world.rgraph.clone();
            }
        }
        self.check_convergence();
        if let Some(p) = self.script.explorer_period {
            self.schedule(self.now + p, Event::ExplorerRound);
        }
    }

    fn check_convergence(&mut self) {
        if self.converged {
            return;
        }
        let all = self.world.rgraph.regions().all(|r| {
            let expected = map_for(&self.world, r, self.script);
            self.switches
                .values()
                .filter(|st| st.home_regions.contains(&r))
                .all(|st| st.region_maps.get(&r) == expected.as_ref())
        });
        if all {
            self.converged = true;
            self.report.map_convergence_tick = Some(self.now);
        }
    }

    fn finish_report(mut self) -> MetricsReport {
        let mut sw = SwitchTotals::default();
        for st in self.switches.values() {
            let c = &st.counters;
            sw.cache_hits += c.cache_hits;
            sw.suggestions_computed += c.suggestions_computed;
            sw.fast_path += c.fast_path;
            sw.redirected += c.redirected;
            sw.gesture_forwards += c.gesture_forwards;
            sw.diverted += c.diverted;
            sw.transactions += c.transactions;
            sw.fee_millis += c.fee_millis;
        }
        self.report.switches = sw;
        self.report.totals.in_flight = self.packets.len() as u64;
        self.report.flows = std::mem::take(&mut self.flows).into_values().collect();
        self.report.region_scores = self.book.scores_at(self.now);
        self.report
    }
}

/// Run a scenario to completion and collect its metrics.
pub fn run_scenario(script: &ScenarioScript) -> Result<MetricsReport, SimError> {
    let world = load_world(script)?;
    Sim::new(script, world).run()
}
