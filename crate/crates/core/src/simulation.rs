//! One simulation run: the event loop wiring UEs, the data plane and the
//! controller together, plus metric sampling and invariant sweeps.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::control::acpf::{baseline_legacy_select, SelectionPolicy};
use crate::control::messages::{ControlMessage, ControllerFn, Endpoint, FlowMod, Message, MsgIds, PacketIn, PacketInBody};
use crate::control::trace::{TraceKind, TraceRecord};
use crate::control::{Action, Controller, ControllerConfig, ControllerStats, ControllerTimer, Note, PRIMARY_FLOW};
use crate::dataplane::{Cause, DataPlane, FlowStart};
use crate::metrics::{MetricsCollector, MetricsReport, RateSample, SliceInfo};
use crate::radio::{self, RadioError, RadioParams};
use crate::sim::{Event, EventQueue, SimError, SimTime};
use crate::slicing::{Overcommit, ServiceClass, SliceDescriptor, SliceError, SliceManager};
use crate::topology::{NodeId, Point, Rat, Topology};
use crate::types::{QosClass, SliceId, UeId};
use crate::workload::{generate_arrivals, Arrival, Placement, WorkloadConfig, WorkloadError};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Fixed delays of the model, s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// Control-message delay per hop.
    pub hop_delay_s: f64,
    /// LTE scheduling plus air-interface latency.
    pub lte_access_latency_s: f64,
    /// dBS→GW wired hop.
    pub gw_hop_latency_s: f64,
    pub measurement_period_s: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            hop_delay_s: 0.001,
            lte_access_latency_s: 0.005,
            gw_hop_latency_s: 0.001,
            measurement_period_s: 1.0,
        }
    }
}

/// Parameters of the WLAN queueing-delay estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub packet_bits: f64,
    /// Offered load is capped at this utilisation; the AP buffer is finite,
    /// so excess demand is dropped rather than queued without bound.
    pub max_utilization: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            packet_bits: 12_000.0,
            max_utilization: 0.95,
        }
    }
}

/// Straight-line movement of data UEs away from the WLAN AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    pub speed_mps: f64,
    /// UEs start uniformly within this distance of the AP.
    pub start_radius_m: f64,
    /// Distance covered before the UE stops.
    pub travel_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub radio: RadioParams,
    pub controller: ControllerConfig,
    pub policy: SelectionPolicy,
    pub slices: Vec<SliceDescriptor>,
    pub workload: WorkloadConfig,
    pub timing: Timing,
    pub latency: LatencyModel,
    /// Where UEs appear; `None` means uniformly over the WLAN coverage disc.
    pub placement: Option<Placement>,
    pub mobility: Option<MobilityModel>,
    pub record_trace: bool,
}

/// One best-effort slice over the whole of both dBSs.
pub fn single_data_slice() -> Vec<SliceDescriptor> {
    vec![SliceDescriptor {
        name: "data".into(),
        service_class: ServiceClass::BestEffortData,
        members: [(NodeId::lte(0), 1.0), (NodeId::wlan(0), 1.0)].into_iter().collect(),
    }]
}

/// A video slice holding `video_share` of LTE; data gets the rest of LTE
/// and all of WLAN.
pub fn video_and_data_slices(video_share: f64) -> Vec<SliceDescriptor> {
    vec![
        SliceDescriptor {
            name: "video".into(),
            service_class: ServiceClass::RealTimeVideo,
            members: [(NodeId::lte(0), video_share)].into_iter().collect(),
        },
        SliceDescriptor {
            name: "data".into(),
            service_class: ServiceClass::BestEffortData,
            members: [(NodeId::lte(0), 1.0 - video_share), (NodeId::wlan(0), 1.0)].into_iter().collect(),
        },
    ]
}

impl SimConfig {
    pub fn new(policy: SelectionPolicy, slices: Vec<SliceDescriptor>, workload: WorkloadConfig) -> Self {
        let radio = RadioParams::default();
        Self {
            controller: ControllerConfig::from_radio(&radio),
            radio,
            policy,
            slices,
            workload,
            timing: Timing::default(),
            latency: LatencyModel::default(),
            placement: None,
            mobility: None,
            record_trace: true,
        }
    }

    /// RAT selection experiment: data only, one slice.
    pub fn scenario_one(policy: SelectionPolicy, lambda_d: f64, seed: u64) -> Self {
        let workload = WorkloadConfig {
            lambda_d,
            lambda_v: 0.0,
            seed,
            ..Default::default()
        };
        Self::new(policy, single_data_slice(), workload)
    }

    /// Slicing experiment: 30% of LTE reserved for video.
    pub fn scenario_two(lambda_d: f64, lambda_v: f64, seed: u64) -> Self {
        let workload = WorkloadConfig {
            lambda_d,
            lambda_v,
            seed,
            ..Default::default()
        };
        Self::new(SelectionPolicy::SdnHeuristic, video_and_data_slices(0.3), workload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeLifetime {
    pub ue: UeId,
    pub qos: QosClass,
    pub auth_transitions: u32,
    pub handovers: u32,
    pub admitted: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldStats {
    pub events: u64,
    pub overcommit_violations: u64,
    pub first_overcommit: Option<Overcommit>,
    /// UE messages a dBS could not relay (no radio link or signaling bearer).
    pub dropped_relays: u64,
    /// Controller instructions a node refused, e.g. for a departed UE.
    pub config_rejected: u64,
    pub handovers_completed: u64,
    pub handovers_aborted: u64,
    /// Post-handover scans that found stale or duplicated state.
    pub handover_audit_failures: u64,
    /// Departed UEs some node still held state for at the end of the run.
    pub orphaned_ues: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Vec<TraceRecord>,
    pub stats: WorldStats,
    pub controller: ControllerStats,
    pub lifetimes: Vec<UeLifetime>,
}

#[derive(Debug, Clone)]
enum WorldEvent {
    Arrival(usize),
    Departure(UeId),
    Deliver(ControlMessage),
    /// Downlink message reaching the relaying dBS.
    Downlink { via: NodeId, msg: ControlMessage },
    Timer(ControllerTimer),
    Measure(UeId),
    HandoverAudit { ue: UeId, source: NodeId, target: NodeId },
}

#[derive(Debug, Clone)]
struct UeAgent {
    qos: QosClass,
    arrival: SimTime,
    start: Point,
    /// Unit direction and speed, if mobile.
    motion: Option<((f64, f64), f64)>,
    travel_m: f64,
    serving: Option<NodeId>,
    associating: Option<NodeId>,
    flow_started: bool,
    admitted: bool,
}

impl UeAgent {
    fn position(&self, now: SimTime) -> Point {
        match self.motion {
            Some(((dx, dy), speed)) => {
                let d = (speed * (now - self.arrival)).min(self.travel_m);
                Point::new(self.start.x + dx * d, self.start.y + dy * d)
            }
            None => self.start,
        }
    }
}

pub struct World {
    cfg: SimConfig,
    queue: EventQueue<WorldEvent>,
    controller: Controller,
    dataplane: DataPlane,
    arrivals: Vec<Arrival>,
    agents: BTreeMap<UeId, UeAgent>,
    ids: MsgIds,
    metrics: MetricsCollector,
    trace: Vec<TraceRecord>,
    stats: WorldStats,
    lifetimes: Vec<UeLifetime>,
    departed: Vec<(UeId, SimTime)>,
    data_slices: Vec<SliceId>,
}

impl World {
    pub fn new(cfg: SimConfig) -> Result<Self, SimulationError> {
        let topology = Topology::two_rat(&cfg.radio);
        let placement = default_placement(&cfg, &topology);
        let arrivals = generate_arrivals(&cfg.workload, &placement)?;
        Self::with_arrivals(cfg, arrivals)
    }

    /// Run over a given arrival list instead of a generated one.
    pub fn with_arrivals(cfg: SimConfig, mut arrivals: Vec<Arrival>) -> Result<Self, SimulationError> {
        cfg.radio.validate()?;
        cfg.workload.validate()?;
        arrivals.sort_by(|a, b| a.time.total_cmp(&b.time));
        let topology = Topology::two_rat(&cfg.radio);
        let mut slices = SliceManager::for_topology(&topology);
        let mut dataplane = DataPlane::new(&topology);
        let mut infos = Vec::new();
        let mut data_slices = Vec::new();
        for desc in &cfg.slices {
            let id = slices.create_slice(desc.clone())?;
            for node in desc.members.keys() {
                dataplane.join_slice(*node, id).map_err(|_| SliceError::UnknownNode(*node))?;
            }
            let qos = match desc.service_class {
                ServiceClass::RealTimeVideo => QosClass::RealTimeVideo,
                ServiceClass::BestEffortData => QosClass::BestEffort,
            };
            if qos == QosClass::BestEffort {
                data_slices.push(id);
            }
            infos.push(SliceInfo {
                id,
                name: desc.name.clone(),
                qos,
            });
        }
        let metrics = MetricsCollector::new(cfg.workload.warmup, cfg.workload.duration, infos);
        let controller = Controller::new(topology, slices, cfg.controller);
        let mut queue = EventQueue::new();
        if let Some(first) = arrivals.first() {
            queue.schedule(first.time, WorldEvent::Arrival(0))?;
        }
        Ok(Self {
            cfg,
            queue,
            controller,
            dataplane,
            arrivals,
            agents: BTreeMap::new(),
            ids: MsgIds::default(),
            metrics,
            trace: Vec::new(),
            stats: WorldStats::default(),
            lifetimes: Vec::new(),
            departed: Vec::new(),
            data_slices,
        })
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn dataplane(&self) -> &DataPlane {
        &self.dataplane
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn stats(&self) -> &WorldStats {
        &self.stats
    }

    pub fn lifetimes(&self) -> &[UeLifetime] {
        &self.lifetimes
    }

    pub fn is_present(&self, ue: UeId) -> bool {
        self.agents.contains_key(&ue)
    }

    pub fn serving(&self, ue: UeId) -> Option<NodeId> {
        self.agents.get(&ue).and_then(|a| a.serving)
    }

    /// Process every event up to and including `t`.
    pub fn run_until(&mut self, t: SimTime) {
        while let Some(ev) = self.queue.pop_until(t) {
            self.dispatch(ev);
        }
    }

    /// Process the next event if it falls within the run; returns its time.
    pub fn step(&mut self) -> Option<SimTime> {
        let ev = self.queue.pop_until(self.cfg.workload.duration)?;
        let t = ev.time;
        self.dispatch(ev);
        Some(t)
    }

    pub fn run(mut self) -> RunOutput {
        let end = self.cfg.workload.duration;
        self.run_until(end);
        let sample = self.sample();
        self.metrics.advance(end, sample);
        // Allow in-flight teardown a few hops to land before auditing.
        let settle = 10.0 * self.cfg.timing.hop_delay_s;
        self.stats.orphaned_ues = self
            .departed
            .iter()
            .filter(|(_, t)| *t + settle < end)
            .filter(|(ue, _)| !self.dataplane.nodes_referencing(*ue).is_empty())
            .count() as u64;
        RunOutput {
            report: self.metrics.report(),
            trace: self.trace,
            stats: self.stats,
            controller: self.controller.stats().clone(),
            lifetimes: self.lifetimes,
        }
    }

    fn schedule_in(&mut self, delay: SimTime, ev: WorldEvent) {
        self.queue.schedule_in(delay, ev).expect("delays are finite and non-negative");
    }

    fn hop(&self) -> SimTime {
        self.cfg.timing.hop_delay_s
    }

    fn dispatch(&mut self, ev: Event<WorldEvent>) {
        let now = ev.time;
        self.stats.events += 1;
        match ev.payload {
            WorldEvent::Arrival(i) => self.on_arrival(now, i),
            WorldEvent::Departure(ue) => {
                if self.agents.contains_key(&ue) {
                    self.ue_leaves(now, ue);
                }
            }
            WorldEvent::Deliver(msg) => self.deliver(now, msg),
            WorldEvent::Downlink { via, msg } => {
                let ue = msg.ue().expect("downlink messages name a UE");
                if self.dataplane.is_attached(via, ue) {
                    let hop = self.hop();
                    self.schedule_in(hop, WorldEvent::Deliver(msg));
                } else {
                    self.stats.dropped_relays += 1;
                }
            }
            WorldEvent::Timer(t) => {
                let actions = self.controller.on_timer(t);
                self.apply(now, actions);
            }
            WorldEvent::Measure(ue) => self.on_measure(now, ue),
            WorldEvent::HandoverAudit { ue, source, target } => self.audit_handover(ue, source, target),
        }
        if let Err(o) = self.controller.slices().check_no_overcommit() {
            self.stats.overcommit_violations += 1;
            self.stats.first_overcommit.get_or_insert(o);
        }
        let sample = self.sample();
        self.metrics.advance(now, sample);
    }

    fn path_latency(&self, node: NodeId, flows: usize) -> f64 {
        let gw = self.cfg.timing.gw_hop_latency_s;
        match node.rat() {
            Some(Rat::Wlan) => {
                let capacity = self
                    .controller
                    .topology()
                    .node(node)
                    .map_or(1.0, |d| d.capacity_mbps);
                let demand = flows as f64 * self.cfg.controller.plan.data_mbps;
                let offered = demand.min(self.cfg.latency.max_utilization * capacity);
                radio::wlan_mean_latency(offered, capacity, self.cfg.latency.packet_bits).unwrap_or(f64::INFINITY) + gw
            }
            _ => self.cfg.timing.lte_access_latency_s + gw,
        }
    }

    fn sample(&self) -> RateSample {
        let slices = self.controller.slices();
        let slice_rates = slices
            .slice_ids()
            .map(|id| (id, slices.slice_throughput(id).unwrap_or(0.0)))
            .collect();
        let mut latency_weighted = 0.0;
        let mut data_rate = 0.0;
        for &slice in &self.data_slices {
            for node in self.controller.topology().dbs_nodes().map(|d| d.id) {
                let Ok(flows) = slices.flows_at(slice, node) else { continue };
                if flows.is_empty() {
                    continue;
                }
                let latency = self.path_latency(node, flows.len());
                for (_, rate) in flows {
                    latency_weighted += rate * latency;
                    data_rate += rate;
                }
            }
        }
        RateSample {
            slice_rates,
            latency_weighted,
            data_rate,
        }
    }

    fn record(&mut self, now: SimTime, kind: TraceKind, msg: &ControlMessage) {
        if self.cfg.record_trace {
            self.trace.push(TraceRecord {
                time: now,
                kind,
                src: msg.src,
                dst: msg.dst,
                ue: msg.ue(),
                id: Some(msg.id),
            });
        }
    }

    fn send(&mut self, now: SimTime, delay: SimTime, msg: ControlMessage) {
        self.record(now, TraceKind::Message(msg.kind()), &msg);
        self.schedule_in(delay, WorldEvent::Deliver(msg));
    }

    fn send_from_ue(&mut self, now: SimTime, ue: UeId, node: NodeId, body: Message) {
        let msg = self.ids.make(Endpoint::Ue(ue), Endpoint::Node(node), body);
        let hop = self.hop();
        self.send(now, hop, msg);
    }

    fn on_arrival(&mut self, now: SimTime, index: usize) {
        if let Some(next) = self.arrivals.get(index + 1) {
            let t = next.time;
            self.queue.schedule(t, WorldEvent::Arrival(index + 1)).expect("arrivals are sorted");
        }
        let a = self.arrivals[index];
        let ue = a.ue;
        let motion = match (self.cfg.mobility, a.qos) {
            (Some(m), QosClass::BestEffort) => {
                let ap = self
                    .controller
                    .topology()
                    .first_of(Rat::Wlan)
                    .and_then(|n| self.controller.topology().node(n).ok())
                    .map_or(Point::default(), |d| d.position);
                let (dx, dy) = (a.position.x - ap.x, a.position.y - ap.y);
                let len = dx.hypot(dy);
                let dir = if len > 1e-9 { (dx / len, dy / len) } else { (1.0, 0.0) };
                Some((dir, m.speed_mps, m.travel_m))
            }
            _ => None,
        };
        self.agents.insert(
            ue,
            UeAgent {
                qos: a.qos,
                arrival: now,
                start: a.position,
                motion: motion.map(|(d, s, _)| (d, s)),
                travel_m: motion.map_or(0.0, |(_, _, t)| t),
                serving: None,
                associating: None,
                flow_started: false,
                admitted: false,
            },
        );
        self.metrics.record_arrival(a.qos, now);
        self.controller.register_ue(ue, a.qos, a.position);
        self.schedule_in(a.hold, WorldEvent::Departure(ue));

        let topology = self.controller.topology();
        let covering = topology.covering(&a.position);
        let signals = topology.signals_at(&a.position);
        let target = match (self.cfg.policy, a.qos) {
            (SelectionPolicy::SdnHeuristic, qos) => self.controller.steer(ue, qos, &covering),
            (_, QosClass::RealTimeVideo) => covering.iter().copied().find(|n| n.rat() == Some(Rat::Lte)),
            (policy, QosClass::BestEffort) => baseline_legacy_select(policy, &signals),
        };
        let attached = target.filter(|node| self.dataplane.attach_radio(*node, ue, &a.position).is_ok());
        let Some(node) = attached else {
            self.metrics.record_blocked(a.qos, now);
            self.ue_leaves(now, ue);
            return;
        };
        if let Some(agent) = self.agents.get_mut(&ue) {
            agent.associating = Some(node);
        }
        let body = association_request(node, ue, a.qos, false);
        self.send_from_ue(now, ue, node, body);
        if motion.is_some() {
            let period = self.cfg.timing.measurement_period_s;
            self.schedule_in(period, WorldEvent::Measure(ue));
        }
    }

    fn on_measure(&mut self, now: SimTime, ue: UeId) {
        let Some(agent) = self.agents.get(&ue) else { return };
        let position = agent.position(now);
        if let (Some(serving), None) = (agent.serving, agent.associating) {
            self.controller.update_position(ue, position);
            let measurements = self.controller.topology().signals_at(&position);
            let body = Message::MeasurementReport(crate::control::messages::MeasurementReport {
                ue,
                serving,
                measurements,
            });
            self.send_from_ue(now, ue, serving, body);
        }
        let period = self.cfg.timing.measurement_period_s;
        self.schedule_in(period, WorldEvent::Measure(ue));
    }

    fn deliver(&mut self, now: SimTime, msg: ControlMessage) {
        match (msg.dst, msg.src) {
            (Endpoint::Node(node), Endpoint::Ue(_)) => self.relay_uplink(node, msg),
            (Endpoint::Node(node), _) => self.apply_config(node, msg),
            (Endpoint::Ue(ue), _) => self.ue_receive(now, ue, msg),
            (Endpoint::Controller(_), _) => {
                let actions = self.controller.on_message(&msg);
                self.apply(now, actions);
            }
        }
    }

    /// A dBS forwards UE control traffic to the controller inside a
    /// packet-in. Only association requests may precede the signaling
    /// bearer.
    fn relay_uplink(&mut self, node: NodeId, msg: ControlMessage) {
        let Some(ue) = msg.ue() else { return };
        let common_channel = matches!(
            msg.body,
            Message::RrcConnectionRequest { .. } | Message::WlanAssocRequest { .. }
        );
        if !self.dataplane.is_attached(node, ue) || (!common_channel && !self.dataplane.has_signaling_bearer(node, ue)) {
            self.stats.dropped_relays += 1;
            return;
        }
        let wrapped = self.ids.make(
            Endpoint::Node(node),
            Endpoint::Controller(ControllerFn::Dcif),
            Message::PacketIn(PacketIn {
                origin: node,
                body: PacketInBody::Control(Box::new(msg.body)),
            }),
        );
        let hop = self.hop();
        self.schedule_in(hop, WorldEvent::Deliver(wrapped));
    }

    fn apply_config(&mut self, node: NodeId, msg: ControlMessage) {
        let cause = Cause::Controller(msg.id);
        let ok = match msg.body {
            Message::FlowMod(FlowMod::Add(rule)) => {
                if node.is_dbs() && !self.dataplane.is_attached(node, rule.matcher.ue) {
                    false
                } else {
                    self.dataplane.install_flow_rule(node, rule, cause).is_ok()
                }
            }
            Message::FlowMod(FlowMod::RemoveFlow { ue, flow }) => {
                self.dataplane.remove_flow_rules(node, ue, flow, cause).is_ok()
            }
            Message::FlowMod(FlowMod::ReleaseUe { ue }) => self.dataplane.release_ue(node, ue, cause).is_ok(),
            Message::BearerSetup(b) => self.dataplane.create_bearer(node, b, cause).is_ok(),
            _ => false,
        };
        if !ok {
            self.stats.config_rejected += 1;
        }
    }

    fn ue_receive(&mut self, now: SimTime, ue: UeId, msg: ControlMessage) {
        let Some(agent) = self.agents.get_mut(&ue) else { return };
        match msg.body {
            Message::RrcConnectionSetup { .. } | Message::WlanAssocResponse { accepted: true, .. } => {
                if let Some(node) = agent.associating {
                    self.send_from_ue(now, ue, node, Message::AttachRequest { ue });
                }
            }
            Message::RrcConnectionReject { .. } | Message::WlanAssocResponse { accepted: false, .. } => {
                let serving = agent.serving;
                if let Some(node) = agent.associating.take() {
                    let _ = self.dataplane.detach_radio(node, ue);
                }
                if serving.is_none() {
                    self.ue_leaves(now, ue);
                }
            }
            Message::AttachAccept { .. } => {
                let Some(node) = agent.associating.take() else { return };
                agent.serving = Some(node);
                if !agent.flow_started {
                    agent.flow_started = true;
                    let qos = agent.qos;
                    if let Ok(FlowStart::PuntedToController(pkt)) =
                        self.dataplane.handle_flow_start(node, ue, PRIMARY_FLOW, qos)
                    {
                        let msg = self.ids.make(
                            Endpoint::Node(node),
                            Endpoint::Controller(ControllerFn::Dcif),
                            Message::PacketIn(PacketIn {
                                origin: node,
                                body: PacketInBody::TableMiss(pkt),
                            }),
                        );
                        let hop = self.hop();
                        self.send(now, hop, msg);
                    }
                }
            }
            Message::HandoverCommand { target, .. } => {
                if agent.serving.is_none() || agent.associating.is_some() {
                    return;
                }
                let (qos, position) = (agent.qos, agent.position(now));
                if self.dataplane.attach_radio(target, ue, &position).is_ok() {
                    if let Some(agent) = self.agents.get_mut(&ue) {
                        agent.associating = Some(target);
                    }
                    let body = association_request(target, ue, qos, true);
                    self.send_from_ue(now, ue, target, body);
                }
            }
            _ => {}
        }
    }

    fn apply(&mut self, now: SimTime, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Send { from, to, via, body } => {
                    let msg = self.ids.make(Endpoint::Controller(from), to, body);
                    let hop = self.hop();
                    match (to, via) {
                        (Endpoint::Ue(_), Some(via)) => {
                            self.record(now, TraceKind::Message(msg.kind()), &msg);
                            self.schedule_in(hop, WorldEvent::Downlink { via, msg });
                        }
                        _ => self.send(now, hop, msg),
                    }
                }
                Action::Internal { from, to, body } => {
                    let msg = self
                        .ids
                        .make(Endpoint::Controller(from), Endpoint::Controller(to), body);
                    self.record(now, TraceKind::Message(msg.kind()), &msg);
                }
                Action::AuthStarted { ue, rat } => {
                    if self.cfg.record_trace {
                        self.trace.push(TraceRecord {
                            time: now,
                            kind: TraceKind::AuthTransition,
                            src: Endpoint::Controller(ControllerFn::Raf(rat)),
                            dst: Endpoint::Ue(ue),
                            ue: Some(ue),
                            id: None,
                        });
                    }
                }
                Action::Timer { delay, timer } => self.schedule_in(delay, WorldEvent::Timer(timer)),
                Action::Note(note) => self.on_note(note),
            }
        }
    }

    fn on_note(&mut self, note: Note) {
        match note {
            Note::Admitted { ue, qos, .. } => {
                if let Some(a) = self.agents.get_mut(&ue) {
                    a.admitted = true;
                    self.metrics.record_admitted(qos, a.arrival);
                }
            }
            Note::Blocked { ue, qos } => {
                if let Some(a) = self.agents.get(&ue) {
                    self.metrics.record_blocked(qos, a.arrival);
                }
            }
            Note::HandoverCompleted { ue, source, target } => {
                self.stats.handovers_completed += 1;
                if let Some(a) = self.agents.get_mut(&ue) {
                    a.serving = Some(target);
                }
                let settle = 5.0 * self.hop();
                self.schedule_in(settle, WorldEvent::HandoverAudit { ue, source, target });
            }
            Note::HandoverAborted { .. } => self.stats.handovers_aborted += 1,
        }
    }

    /// After a handover settles: nothing left at the source, and exactly one
    /// uplink and one downlink rule per flow at the target and the gateway.
    fn audit_handover(&mut self, ue: UeId, source: NodeId, target: NodeId) {
        let Some(ctx) = self.controller.ues().get(ue) else { return };
        if ctx.handover.is_some() || !self.agents.contains_key(&ue) {
            return;
        }
        let flows = ctx.flows.len();
        let rules_at = |node: NodeId| {
            self.dataplane
                .node(node)
                .map_or(usize::MAX, |s| s.flow_table.iter().filter(|r| r.matcher.ue == ue).count())
        };
        let gw = self.controller.topology().gateway();
        let source_clean = self.dataplane.node(source).is_ok_and(|s| !s.references(ue));
        let clean = source_clean && flows <= 1 && rules_at(target) == 2 * flows && rules_at(gw) == 2 * flows;
        if !clean {
            self.stats.handover_audit_failures += 1;
        }
    }

    fn ue_leaves(&mut self, now: SimTime, ue: UeId) {
        let Some(agent) = self.agents.remove(&ue) else { return };
        let nodes: Vec<NodeId> = self.controller.topology().dbs_nodes().map(|d| d.id).collect();
        for node in nodes {
            if self.dataplane.is_attached(node, ue) {
                let _ = self.dataplane.detach_radio(node, ue);
            }
        }
        let (actions, ctx) = self.controller.handle_departure(ue);
        self.apply(now, actions);
        // A rejected UE's context is already gone; it never authenticated.
        self.lifetimes.push(UeLifetime {
            ue,
            qos: agent.qos,
            auth_transitions: ctx.as_ref().map_or(0, |c| c.auth_transitions),
            handovers: ctx.as_ref().map_or(0, |c| c.handovers),
            admitted: agent.admitted,
        });
        self.departed.push((ue, now));
    }
}

fn default_placement(cfg: &SimConfig, topology: &Topology) -> Placement {
    let wlan = topology
        .first_of(Rat::Wlan)
        .and_then(|n| topology.node(n).ok())
        .map(|d| (d.position, d.range_m))
        .unwrap_or((Point::default(), 100.0));
    match (cfg.mobility, cfg.placement) {
        (Some(m), _) => Placement {
            center: wlan.0,
            radius_m: m.start_radius_m,
        },
        (None, Some(p)) => p,
        (None, None) => Placement {
            center: wlan.0,
            radius_m: wlan.1,
        },
    }
}

fn association_request(node: NodeId, ue: UeId, qos: QosClass, handover: bool) -> Message {
    match node.rat() {
        Some(Rat::Wlan) => Message::WlanAssocRequest { ue, qos, handover },
        _ => Message::RrcConnectionRequest { ue, qos, handover },
    }
}

/// Build and run one simulation.
pub fn run(cfg: SimConfig) -> Result<RunOutput, SimulationError> {
    Ok(World::new(cfg)?.run())
}
