//! The multi-RAT controller: DCIF, per-RAT RAFs, the RAT-agnostic FCF with
//! its UE Manager, and the ACPF control applications.
//!
//! The controller is a deterministic state machine. It consumes control
//! messages delivered to it and returns [`Action`]s for the event loop to
//! carry out; it never touches data-plane state directly.

pub mod acpf;
pub mod messages;
pub mod raf;
pub mod trace;
pub mod ue;

use std::collections::BTreeMap;

use thiserror::Error;

use self::acpf::{acpf_admission, acpf_mobility, acpf_select_rat, LoadSnapshot, NodeLoad, RatePlan};
use self::messages::{
    AdmissionRequest, AdmissionResponse, ControlMessage, ControllerFn, Endpoint, FlowMod, Message, MessageKind,
    PacketIn, PacketInBody,
};
use self::raf::{raf_translate, RafRegistry, RatFlowConfig};
use self::ue::{AttachmentState, FlowSpec, HandoverState, UeContext, UeManager};
use crate::dataplane::{
    Bearer, BearerEndpoints, BearerId, BearerKind, FlowAction, FlowMatch, FlowRule, PacketContext, RuleId,
};
use crate::radio::{self, RadioParams};
use crate::sim::SimTime;
use crate::slicing::{GrantOutcome, ServiceClass, SliceError, SliceManager};
use crate::topology::{NodeId, Point, Rat, Topology};
use crate::types::{Direction, FlowId, FlowKey, QosClass, SliceId, UeId};

/// Each UE carries one flow; its resources are reserved under this id at
/// admission time.
pub const PRIMARY_FLOW: FlowId = FlowId(0);

const RULE_PRIORITY: u16 = 10;

/// Recorded errors kept for diagnostics; later ones are only counted.
const MAX_KEPT_ERRORS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("{kind} is not a valid message for the {rat} RAF")]
    Malformed { rat: Rat, kind: MessageKind },
    #[error("{qos} traffic is not eligible on {rat}")]
    NotEligible { rat: Rat, qos: QosClass },
    #[error("a RAF for {0} is already registered")]
    DuplicateRaf(Rat),
    #[error("no RAF registered for {0}")]
    UnsupportedRat(Rat),
    #[error("packet-in from unknown node {0}")]
    UnknownOrigin(NodeId),
    #[error("no context for {0}")]
    UnknownUe(UeId),
    #[error("{kind} from {ue} at {node} out of order")]
    ProtocolOrder { ue: UeId, kind: MessageKind, node: NodeId },
    #[error("RAT-specific {0} reached the FCF")]
    LayerViolation(MessageKind),
    #[error("{0} addressed to the controller outside a packet-in")]
    Misrouted(MessageKind),
    #[error(transparent)]
    Slice(#[from] SliceError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Serving-to-target signal margin before a handover, dB.
    pub hysteresis_db: f64,
    /// Duration of the abstract authentication step, s.
    pub auth_delay_s: f64,
    /// Best-effort users WLAN takes before the heuristic turns to LTE.
    pub wlan_threshold: u32,
    /// Time a handover command may stay unanswered before it is dropped, s.
    pub handover_timeout_s: f64,
    pub plan: RatePlan,
}

impl ControllerConfig {
    /// Defaults derived from the radio parameters: WLAN takes users while
    /// each still gets the LTE per-user rate.
    pub fn from_radio(radio: &RadioParams) -> Self {
        Self {
            hysteresis_db: 3.0,
            auth_delay_s: 0.010,
            wlan_threshold: radio::fit_count(radio::wlan_effective_capacity(radio), radio.lte_per_user_rate),
            handover_timeout_s: 1.0,
            plan: RatePlan {
                data_mbps: radio.lte_per_user_rate,
                video_mbps: radio.video_rate_mbps(),
            },
        }
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self::from_radio(&RadioParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerTimer {
    AuthComplete { ue: UeId, node: NodeId },
    HandoverExpiry { ue: UeId, target: NodeId },
}

/// Outcomes the event loop reports to metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Note {
    /// The UE's flow has a complete data path.
    Admitted { ue: UeId, qos: QosClass, node: NodeId },
    Blocked { ue: UeId, qos: QosClass },
    HandoverCompleted { ue: UeId, source: NodeId, target: NodeId },
    HandoverAborted { ue: UeId, target: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Message from a controller function to a node, or to a UE relayed by
    /// the dBS `via`.
    Send {
        from: ControllerFn,
        to: Endpoint,
        via: Option<NodeId>,
        body: Message,
    },
    /// Message between controller functions. Already handled; recorded for
    /// the trace only.
    Internal {
        from: ControllerFn,
        to: ControllerFn,
        body: Message,
    },
    /// The abstract authentication step started for `ue`.
    AuthStarted { ue: UeId, rat: Rat },
    Timer { delay: SimTime, timer: ControllerTimer },
    Note(Note),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerStats {
    pub protocol_errors: u64,
    /// Messages about UEs that had already departed.
    pub stale_messages: u64,
    pub layer_violations: u64,
    pub duplicate_punts: u64,
    pub admissions_accepted: u64,
    pub admissions_rejected: u64,
    pub auth_transitions: u64,
    pub handovers: u64,
    pub handovers_aborted: u64,
    pub errors: Vec<ControlError>,
}

/// Inputs allowed across the RAF→FCF boundary. Only generic kinds exist here.
#[derive(Debug, Clone, PartialEq)]
pub enum FcfInput {
    Admission(AdmissionRequest),
    TableMiss(PacketContext),
}

impl FcfInput {
    pub fn kind(&self) -> MessageKind {
        match self {
            FcfInput::Admission(_) => MessageKind::AdmissionRequest,
            FcfInput::TableMiss(_) => MessageKind::PacketIn,
        }
    }
}

#[derive(Debug)]
pub struct Controller {
    cfg: ControllerConfig,
    topology: Topology,
    rafs: RafRegistry,
    slices: SliceManager,
    ues: UeManager,
    /// UEs pointed at a node by the heuristic whose admission is pending.
    steered: BTreeMap<UeId, NodeId>,
    next_rule: u64,
    next_bearer: u64,
    stats: ControllerStats,
}

impl Controller {
    pub fn new(topology: Topology, slices: SliceManager, cfg: ControllerConfig) -> Self {
        let wlan_capacity = topology
            .first_of(Rat::Wlan)
            .and_then(|n| topology.node(n).ok())
            .map_or(1.0, |d| d.capacity_mbps);
        Self {
            cfg,
            topology,
            rafs: RafRegistry::standard(wlan_capacity),
            slices,
            ues: UeManager::default(),
            steered: BTreeMap::new(),
            next_rule: 0,
            next_bearer: 0,
            stats: ControllerStats::default(),
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn slices(&self) -> &SliceManager {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut SliceManager {
        &mut self.slices
    }

    pub fn ues(&self) -> &UeManager {
        &self.ues
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.stats
    }

    fn record(&mut self, err: ControlError) {
        // Messages still in flight when their UE left are expected.
        if matches!(err, ControlError::UnknownUe(_)) {
            self.stats.stale_messages += 1;
            return;
        }
        self.stats.protocol_errors += 1;
        if self.stats.errors.len() < MAX_KEPT_ERRORS {
            self.stats.errors.push(err);
        }
    }

    /// Create the controller-side context for a newly arrived UE.
    pub fn register_ue(&mut self, ue: UeId, qos: QosClass, position: Point) {
        self.ues.get_or_insert(ue, qos, position).position = position;
    }

    pub fn update_position(&mut self, ue: UeId, position: Point) {
        if let Some(ctx) = self.ues.get_mut(ue) {
            ctx.position = position;
        }
    }

    /// Load of the given nodes as the RAT-selection heuristic sees it:
    /// granted best-effort flows plus UEs already steered there.
    pub fn load_snapshot(&self, lte: Option<NodeId>, wlan: Option<NodeId>) -> LoadSnapshot {
        let users = |node: NodeId| -> u32 {
            let granted = self
                .slices
                .slice_for(QosClass::BestEffort, node)
                .and_then(|s| self.slices.flows_at(s, node).ok())
                .map_or(0, |f| f.len());
            let pending = self.steered.values().filter(|n| **n == node).count();
            (granted + pending) as u32
        };
        let lte_limit = |node: NodeId| -> u32 {
            self.slices
                .slice_for(QosClass::BestEffort, node)
                .and_then(|s| self.slices.limit(s, node).ok())
                .map_or(0, |limit| radio::fit_count(limit, self.cfg.plan.data_mbps))
        };
        LoadSnapshot {
            wlan: wlan.map(|node| NodeLoad {
                node,
                users: users(node),
                limit: self.cfg.wlan_threshold,
            }),
            lte: lte.map(|node| NodeLoad {
                node,
                users: users(node),
                limit: lte_limit(node),
            }),
        }
    }

    /// Global-view RAT selection for an arriving UE covered by `covering`.
    /// Video is only served by LTE.
    pub fn steer(&mut self, ue: UeId, qos: QosClass, covering: &[NodeId]) -> Option<NodeId> {
        let lte = covering.iter().copied().find(|n| n.rat() == Some(Rat::Lte));
        let wlan = covering.iter().copied().find(|n| n.rat() == Some(Rat::Wlan));
        let target = match qos {
            QosClass::RealTimeVideo => lte,
            QosClass::BestEffort => acpf_select_rat(&self.load_snapshot(lte, wlan)),
        };
        if let Some(node) = target {
            self.steered.insert(ue, node);
        }
        target
    }

    /// Entry point for messages delivered to the controller.
    pub fn on_message(&mut self, msg: &ControlMessage) -> Vec<Action> {
        let mut out = Vec::new();
        match &msg.body {
            Message::PacketIn(p) => self.dcif_ingress(p, &mut out),
            other => self.record(ControlError::Misrouted(other.kind())),
        }
        out
    }

    /// DCIF: unwrap a packet-in and route it by the origin node's RAT.
    pub fn dcif_ingress(&mut self, p: &PacketIn, out: &mut Vec<Action>) {
        let rat = match p.origin.rat() {
            Some(rat) if self.topology.contains(p.origin) => rat,
            _ => return self.record(ControlError::UnknownOrigin(p.origin)),
        };
        let result = match &p.body {
            PacketInBody::Control(inner) => self.raf_dispatch(rat, p.origin, inner, out),
            PacketInBody::TableMiss(ctx) => self.fcf_handle(FcfInput::TableMiss(*ctx), out).map(|_| ()),
        };
        if let Err(e) = result {
            self.record(e);
        }
    }

    fn raf_dispatch(&mut self, rat: Rat, node: NodeId, msg: &Message, out: &mut Vec<Action>) -> Result<(), ControlError> {
        match *msg {
            Message::RrcConnectionRequest { .. } | Message::WlanAssocRequest { .. } => {
                self.raf_handle_association(rat, node, msg, out)
            }
            Message::AttachRequest { ue } => self.raf_complete_attach(rat, node, ue, out),
            Message::MeasurementReport(_) => self.raf_measurement(rat, node, msg, out),
            ref other => Err(ControlError::Malformed {
                rat,
                kind: other.kind(),
            }),
        }
    }

    /// RAF: association request → generic admission → RAT-specific reply.
    pub fn raf_handle_association(
        &mut self,
        rat: Rat,
        node: NodeId,
        msg: &Message,
        out: &mut Vec<Action>,
    ) -> Result<(), ControlError> {
        let intent = self.rafs.get(rat)?.decode_association(msg)?;
        let ue = intent.ue;
        if self.steered.get(&ue) == Some(&node) {
            self.steered.remove(&ue);
        }
        let ctx = self.ues.get_or_insert(ue, intent.qos, Point::default());
        let expected_handover = ctx.handover.is_some_and(|h| h.target == node);
        if ctx.attachments.contains_key(&node) || intent.handover != expected_handover {
            return Err(ControlError::ProtocolOrder {
                ue,
                kind: msg.kind(),
                node,
            });
        }
        let flows = if intent.handover {
            ctx.flows.iter().map(|f| f.flow).collect()
        } else {
            Vec::new()
        };
        if let Some(h) = ctx.handover.as_mut() {
            h.executing = intent.handover;
        }
        ctx.attachments.insert(node, AttachmentState::Admitting);
        let req = AdmissionRequest {
            ue,
            qos: ctx.qos,
            node,
            flows,
            handover: intent.handover,
        };
        out.push(Action::Internal {
            from: ControllerFn::Raf(rat),
            to: ControllerFn::Fcf,
            body: Message::AdmissionRequest(req.clone()),
        });
        let resp = self
            .fcf_handle(FcfInput::Admission(req.clone()), out)?
            .expect("admission input yields a response");
        out.push(Action::Internal {
            from: ControllerFn::Fcf,
            to: ControllerFn::Raf(rat),
            body: Message::AdmissionResponse(resp.clone()),
        });
        let reply = self.rafs.get(rat)?.association_reply(ue, resp.accepted);
        out.push(Action::Send {
            from: ControllerFn::Raf(rat),
            to: Endpoint::Ue(ue),
            via: Some(node),
            body: reply,
        });
        let ctx = self.ues.get_mut(ue).expect("inserted above");
        if resp.accepted {
            let bearer = Bearer {
                id: BearerId(self.next_bearer),
                ue,
                kind: BearerKind::Signaling,
                endpoints: BearerEndpoints::Radio { ue, node },
                rate_mbps: 0.0,
            };
            self.next_bearer += 1;
            ctx.slice = resp.slice;
            ctx.bearers.push((node, bearer));
            ctx.attachments.insert(node, AttachmentState::SignalingReady);
            out.push(Action::Send {
                from: ControllerFn::Raf(rat),
                to: Endpoint::Node(node),
                via: None,
                body: Message::BearerSetup(bearer),
            });
        } else {
            ctx.attachments.remove(&node);
            if req.handover {
                ctx.handover = None;
                self.stats.handovers_aborted += 1;
                out.push(Action::Note(Note::HandoverAborted { ue, target: node }));
            } else {
                out.push(Action::Note(Note::Blocked { ue, qos: req.qos }));
                if ctx.attachments.is_empty() {
                    self.ues.remove(ue);
                }
            }
        }
        Ok(())
    }

    /// RAF: attach request over the signaling bearer. Authenticates once
    /// per UE lifetime, then accepts and sets up the default bearer.
    pub fn raf_complete_attach(
        &mut self,
        rat: Rat,
        node: NodeId,
        ue: UeId,
        out: &mut Vec<Action>,
    ) -> Result<(), ControlError> {
        let ctx = self.ues.get_mut(ue).ok_or(ControlError::UnknownUe(ue))?;
        if ctx.state_at(node) != Some(AttachmentState::SignalingReady) || !ctx.has_bearer(node, BearerKind::Signaling) {
            return Err(ControlError::ProtocolOrder {
                ue,
                kind: MessageKind::AttachRequest,
                node,
            });
        }
        if ctx.authenticated {
            self.accept_attach(rat, node, ue, out);
        } else {
            ctx.attachments.insert(node, AttachmentState::Authenticating);
            out.push(Action::AuthStarted { ue, rat });
            out.push(Action::Timer {
                delay: self.cfg.auth_delay_s,
                timer: ControllerTimer::AuthComplete { ue, node },
            });
        }
        Ok(())
    }

    pub fn on_timer(&mut self, timer: ControllerTimer) -> Vec<Action> {
        let mut out = Vec::new();
        match timer {
            ControllerTimer::AuthComplete { ue, node } => {
                let Some(ctx) = self.ues.get_mut(ue) else {
                    return out;
                };
                if ctx.state_at(node) != Some(AttachmentState::Authenticating) || ctx.authenticated {
                    return out;
                }
                ctx.authenticated = true;
                ctx.auth_transitions += 1;
                self.stats.auth_transitions += 1;
                if let Some(rat) = node.rat() {
                    self.accept_attach(rat, node, ue, &mut out);
                }
            }
            ControllerTimer::HandoverExpiry { ue, target } => {
                if let Some(ctx) = self.ues.get_mut(ue) {
                    if ctx.handover.is_some_and(|h| h.target == target && !h.executing) {
                        ctx.handover = None;
                        self.stats.handovers_aborted += 1;
                        out.push(Action::Note(Note::HandoverAborted { ue, target }));
                    }
                }
            }
        }
        out
    }

    fn accept_attach(&mut self, rat: Rat, node: NodeId, ue: UeId, out: &mut Vec<Action>) {
        let Some(ctx) = self.ues.get_mut(ue) else {
            return;
        };
        ctx.attachments.insert(node, AttachmentState::Attached);
        // Elastic WLAN shares and video dedicated bearers are not carried on
        // the default bearer.
        let rate_mbps = match (ctx.qos, rat) {
            (QosClass::BestEffort, Rat::Lte) => self.cfg.plan.data_mbps,
            _ => 0.0,
        };
        let bearer = Bearer {
            id: BearerId(self.next_bearer),
            ue,
            kind: BearerKind::Default,
            endpoints: BearerEndpoints::Radio { ue, node },
            rate_mbps,
        };
        self.next_bearer += 1;
        ctx.bearers.push((node, bearer));
        out.push(Action::Send {
            from: ControllerFn::Raf(rat),
            to: Endpoint::Ue(ue),
            via: Some(node),
            body: Message::AttachAccept { ue },
        });
        out.push(Action::Send {
            from: ControllerFn::Raf(rat),
            to: Endpoint::Node(node),
            via: None,
            body: Message::BearerSetup(bearer),
        });
        if ctx.handover.is_some_and(|h| h.target == node && h.executing) {
            self.complete_handover(ue, out);
        }
    }

    /// FCF entry point. Only generic inputs are representable; the kind
    /// check is a runtime guard on top of that.
    pub fn fcf_handle(&mut self, input: FcfInput, out: &mut Vec<Action>) -> Result<Option<AdmissionResponse>, ControlError> {
        let kind = input.kind();
        if kind.is_rat_specific() {
            self.stats.layer_violations += 1;
            return Err(ControlError::LayerViolation(kind));
        }
        match input {
            FcfInput::Admission(req) => Ok(Some(self.fcf_admit(&req))),
            FcfInput::TableMiss(pkt) => self.fcf_setup_flow(pkt, out).map(|_| None),
        }
    }

    /// Ask admission control, then reserve the grant for the UE's flows so
    /// that later requests see it.
    fn fcf_admit(&mut self, req: &AdmissionRequest) -> AdmissionResponse {
        let mut resp = acpf_admission(&self.slices, &self.cfg.plan, req);
        if let (true, Some(slice)) = (resp.accepted, resp.slice) {
            let flows = if req.flows.is_empty() {
                vec![PRIMARY_FLOW]
            } else {
                req.flows.clone()
            };
            let mut reserved = Vec::new();
            for flow in flows {
                let key = FlowKey::new(req.ue, flow);
                if self.reserve(slice, req.node, key, req.qos) {
                    reserved.push(key);
                } else {
                    for k in reserved.drain(..) {
                        self.release_grant(slice, req.node, k);
                    }
                    resp.accepted = false;
                    resp.slice = None;
                    break;
                }
            }
        }
        if resp.accepted {
            self.stats.admissions_accepted += 1;
        } else {
            self.stats.admissions_rejected += 1;
        }
        resp
    }

    fn is_elastic(&self, slice: SliceId, node: NodeId) -> bool {
        node.rat() == Some(Rat::Wlan)
            && self
                .slices
                .descriptor(slice)
                .is_ok_and(|d| d.service_class == ServiceClass::BestEffortData)
    }

    fn fair_share(&self, limit: f64, flows: usize) -> f64 {
        (limit / flows.max(1) as f64).min(self.cfg.plan.data_mbps)
    }

    /// Grant `key` at `node`, reusing an existing grant. Elastic slices
    /// rebalance to equal shares capped at the per-user demand.
    fn reserve(&mut self, slice: SliceId, node: NodeId, key: FlowKey, qos: QosClass) -> bool {
        if self.slices.granted_rate(slice, node, key).is_some() {
            return true;
        }
        if self.is_elastic(slice, node) {
            let Ok(limit) = self.slices.limit(slice, node) else {
                return false;
            };
            let existing = self.slices.flows_at(slice, node).unwrap_or_default();
            let share = self.fair_share(limit, existing.len() + 1);
            if !(share > 0.0) {
                return false;
            }
            for (k, rate) in &existing {
                if *rate > share {
                    let _ = self.slices.adjust(slice, node, *k, share);
                }
            }
            let granted = self.slices.grant(slice, node, key, share) == Ok(GrantOutcome::Granted);
            self.rebalance(slice, node);
            granted
        } else {
            let Some(rate) = self.cfg.plan.demand_at(qos, node) else {
                return false;
            };
            self.slices.grant(slice, node, key, rate) == Ok(GrantOutcome::Granted)
        }
    }

    fn release_grant(&mut self, slice: SliceId, node: NodeId, key: FlowKey) {
        if self.slices.release(slice, node, key).is_ok() && self.is_elastic(slice, node) {
            self.rebalance(slice, node);
        }
    }

    /// Equalise an elastic slice's flows at `node` and mirror the rates into
    /// the flow specs.
    fn rebalance(&mut self, slice: SliceId, node: NodeId) {
        let Ok(limit) = self.slices.limit(slice, node) else {
            return;
        };
        let flows = self.slices.flows_at(slice, node).unwrap_or_default();
        let share = self.fair_share(limit, flows.len());
        // Shrink first so that growing never trips the limit.
        for (k, rate) in &flows {
            if *rate > share {
                let _ = self.slices.adjust(slice, node, *k, share);
            }
        }
        for (k, rate) in &flows {
            if *rate < share {
                let _ = self.slices.adjust(slice, node, *k, share);
            }
        }
        for (k, _) in &flows {
            let rate = self.slices.granted_rate(slice, node, *k).unwrap_or(0.0);
            if let Some(spec) = self.ues.get_mut(k.ue).and_then(|c| c.flow_mut(k.flow)) {
                if spec.path.first() == Some(&node) {
                    spec.rate_mbps = rate;
                }
            }
        }
    }

    /// FCF: classify a table-miss punt and complete the data path through
    /// the serving dBS and the gateway.
    pub fn fcf_setup_flow(&mut self, pkt: PacketContext, out: &mut Vec<Action>) -> Result<(), ControlError> {
        let (ue, node) = (pkt.ue, pkt.node);
        let ctx = self.ues.get(ue).ok_or(ControlError::UnknownUe(ue))?;
        if ctx.state_at(node) != Some(AttachmentState::Attached) || !ctx.authenticated {
            return Err(ControlError::ProtocolOrder {
                ue,
                kind: MessageKind::PacketIn,
                node,
            });
        }
        if ctx.flow(pkt.flow).is_some_and(|f| f.path.first() == Some(&node)) {
            self.stats.duplicate_punts += 1;
            return Ok(());
        }
        let rat = node.rat().ok_or(ControlError::UnknownOrigin(node))?;
        // Classification is a lookup on the packet's QoS marking.
        let Some(slice) = self.slices.slice_for(pkt.qos, node) else {
            out.push(Action::Note(Note::Blocked { ue, qos: pkt.qos }));
            return Err(ControlError::NotEligible { rat, qos: pkt.qos });
        };
        let key = FlowKey::new(ue, pkt.flow);
        if !self.reserve(slice, node, key, pkt.qos) {
            out.push(Action::Note(Note::Blocked { ue, qos: pkt.qos }));
            return Ok(());
        }
        let spec = FlowSpec {
            flow: pkt.flow,
            ue,
            qos: pkt.qos,
            rate_mbps: self.slices.granted_rate(slice, node, key).unwrap_or(0.0),
            path: vec![node, self.topology.gateway()],
        };
        let config = match raf_translate(&self.rafs, &spec, rat) {
            Ok(c) => c,
            Err(e) => {
                self.release_grant(slice, node, key);
                out.push(Action::Note(Note::Blocked { ue, qos: pkt.qos }));
                return Err(e);
            }
        };
        self.install_path(&spec, config, out);
        let ctx = self.ues.get_mut(ue).expect("checked above");
        ctx.flows.retain(|f| f.flow != spec.flow);
        ctx.flows.push(spec);
        out.push(Action::Note(Note::Admitted { ue, qos: pkt.qos, node }));
        Ok(())
    }

    fn next_rule_id(&mut self) -> RuleId {
        let id = RuleId(self.next_rule);
        self.next_rule += 1;
        id
    }

    fn install_path(&mut self, spec: &FlowSpec, config: RatFlowConfig, out: &mut Vec<Action>) {
        let (dbs, gw) = (spec.path[0], spec.path[spec.path.len() - 1]);
        let hops = [
            (dbs, Direction::Uplink, FlowAction::ForwardTo(gw)),
            (dbs, Direction::Downlink, FlowAction::Deliver),
            (gw, Direction::Uplink, FlowAction::Deliver),
            (gw, Direction::Downlink, FlowAction::ForwardTo(dbs)),
        ];
        for (node, direction, action) in hops {
            let rule = FlowRule {
                id: self.next_rule_id(),
                matcher: FlowMatch {
                    ue: spec.ue,
                    flow: spec.flow,
                    direction,
                },
                action,
                priority: RULE_PRIORITY,
            };
            out.push(Action::Send {
                from: ControllerFn::Fcf,
                to: Endpoint::Node(node),
                via: None,
                body: Message::FlowMod(FlowMod::Add(rule)),
            });
        }
        if let RatFlowConfig::LteBearer {
            kind: BearerKind::Dedicated,
            rate_mbps,
        } = config
        {
            let bearer = Bearer {
                id: BearerId(self.next_bearer),
                ue: spec.ue,
                kind: BearerKind::Dedicated,
                endpoints: BearerEndpoints::Wired { from: dbs, to: gw },
                rate_mbps,
            };
            self.next_bearer += 1;
            if let Some(ctx) = self.ues.get_mut(spec.ue) {
                ctx.bearers.push((dbs, bearer));
            }
            out.push(Action::Send {
                from: ControllerFn::Raf(Rat::Lte),
                to: Endpoint::Node(dbs),
                via: None,
                body: Message::BearerSetup(bearer),
            });
        }
    }

    fn raf_measurement(&mut self, rat: Rat, node: NodeId, msg: &Message, out: &mut Vec<Action>) -> Result<(), ControlError> {
        let report = self.rafs.get(rat)?.decode_measurement(msg)?;
        let ue = report.ue;
        let ctx = self.ues.get_mut(ue).ok_or(ControlError::UnknownUe(ue))?;
        ctx.last_measurements = report.measurements.iter().copied().collect();
        if ctx.handover.is_some() || ctx.serving() != Some(report.serving) || report.serving != node {
            return Ok(());
        }
        if ctx.flows.is_empty() {
            return Ok(());
        }
        let (qos, flows): (QosClass, Vec<FlowId>) = (ctx.qos, ctx.flows.iter().map(|f| f.flow).collect());
        let target = acpf_mobility(&report, self.cfg.hysteresis_db, |candidate| {
            let req = AdmissionRequest {
                ue,
                qos,
                node: candidate,
                flows: flows.clone(),
                handover: true,
            };
            acpf_admission(&self.slices, &self.cfg.plan, &req).accepted
        });
        if let Some(target) = target {
            let ctx = self.ues.get_mut(ue).expect("checked above");
            ctx.handover = Some(HandoverState {
                source: node,
                target,
                executing: false,
            });
            out.push(Action::Send {
                from: ControllerFn::Raf(rat),
                to: Endpoint::Ue(ue),
                via: Some(node),
                body: self.rafs.get(rat)?.handover_command(ue, target),
            });
            out.push(Action::Timer {
                delay: self.cfg.handover_timeout_s,
                timer: ControllerTimer::HandoverExpiry { ue, target },
            });
        }
        Ok(())
    }

    /// Move the UE's flows onto the handover target and release the source.
    fn complete_handover(&mut self, ue: UeId, out: &mut Vec<Action>) {
        let Some(ctx) = self.ues.get_mut(ue) else {
            return;
        };
        let Some(h) = ctx.handover.take() else {
            return;
        };
        let gw = self.topology.gateway();
        let old_flows = std::mem::take(&mut ctx.flows);
        let mut moved = Vec::with_capacity(old_flows.len());
        for old in &old_flows {
            out.push(Action::Send {
                from: ControllerFn::Fcf,
                to: Endpoint::Node(gw),
                via: None,
                body: Message::FlowMod(FlowMod::RemoveFlow { ue, flow: old.flow }),
            });
            let key = old.key();
            let rate = self
                .slices
                .slice_for(old.qos, h.target)
                .and_then(|s| self.slices.granted_rate(s, h.target, key))
                .unwrap_or(0.0);
            let spec = FlowSpec {
                rate_mbps: rate,
                path: vec![h.target, gw],
                ..old.clone()
            };
            let Some(rat) = h.target.rat() else { continue };
            match raf_translate(&self.rafs, &spec, rat) {
                Ok(config) => {
                    self.install_path(&spec, config, out);
                    moved.push(spec);
                }
                Err(e) => self.record(e),
            }
        }
        out.push(Action::Send {
            from: ControllerFn::Fcf,
            to: Endpoint::Node(h.source),
            via: None,
            body: Message::FlowMod(FlowMod::ReleaseUe { ue }),
        });
        for old in &old_flows {
            if let Some(slice) = self.slices.slice_for(old.qos, h.source) {
                self.release_grant(slice, h.source, old.key());
            }
        }
        let ctx = self.ues.get_mut(ue).expect("present above");
        ctx.flows = moved;
        ctx.forget_node(h.source);
        ctx.handovers += 1;
        self.stats.handovers += 1;
        out.push(Action::Note(Note::HandoverCompleted {
            ue,
            source: h.source,
            target: h.target,
        }));
        // Rates at the target may have changed while the path was set up.
        for (slice, node, _) in self.slices.grants_of(ue) {
            if self.is_elastic(slice, node) {
                self.rebalance(slice, node);
            }
        }
    }

    /// The UE has left the network: free its grants and clear every node
    /// that may hold state for it. Returns the context for bookkeeping.
    pub fn handle_departure(&mut self, ue: UeId) -> (Vec<Action>, Option<UeContext>) {
        let mut out = Vec::new();
        self.steered.remove(&ue);
        for (slice, node, key) in self.slices.grants_of(ue) {
            self.release_grant(slice, node, key);
        }
        let Some(ctx) = self.ues.remove(ue) else {
            return (out, None);
        };
        let mut nodes: Vec<NodeId> = ctx.attachments.keys().copied().collect();
        nodes.extend(ctx.bearers.iter().map(|(n, _)| *n));
        nodes.extend(ctx.flows.iter().flat_map(|f| f.path.iter().copied()));
        nodes.push(self.topology.gateway());
        nodes.sort();
        nodes.dedup();
        for node in nodes {
            out.push(Action::Send {
                from: ControllerFn::Fcf,
                to: Endpoint::Node(node),
                via: None,
                body: Message::FlowMod(FlowMod::ReleaseUe { ue }),
            });
        }
        (out, Some(ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicing::SliceDescriptor;

    const LTE: NodeId = NodeId::lte(0);
    const WLAN: NodeId = NodeId::wlan(0);

    fn controller(video_share: f64) -> Controller {
        let radio = RadioParams::default();
        let topology = Topology::two_rat(&radio);
        let mut slices = SliceManager::for_topology(&topology);
        if video_share > 0.0 {
            slices
                .create_slice(SliceDescriptor {
                    name: "video".into(),
                    service_class: ServiceClass::RealTimeVideo,
                    members: [(LTE, video_share)].into_iter().collect(),
                })
                .unwrap();
        }
        slices
            .create_slice(SliceDescriptor {
                name: "data".into(),
                service_class: ServiceClass::BestEffortData,
                members: [(LTE, 1.0 - video_share), (WLAN, 1.0)].into_iter().collect(),
            })
            .unwrap();
        Controller::new(topology, slices, ControllerConfig::from_radio(&radio))
    }

    fn packet_in(origin: NodeId, body: Message) -> ControlMessage {
        ControlMessage {
            id: crate::types::MsgId(0),
            src: Endpoint::Node(origin),
            dst: Endpoint::Controller(ControllerFn::Dcif),
            body: Message::PacketIn(PacketIn {
                origin,
                body: PacketInBody::Control(Box::new(body)),
            }),
        }
    }

    fn kinds(actions: &[Action]) -> Vec<MessageKind> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Send { body, .. } | Action::Internal { body, .. } => Some(body.kind()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn default_threshold_is_five() {
        assert_eq!(ControllerConfig::default().wlan_threshold, 5);
    }

    #[test]
    fn lte_association_accept_and_reject() {
        let mut c = controller(0.3);
        let req = Message::RrcConnectionRequest {
            ue: UeId(1),
            qos: QosClass::RealTimeVideo,
            handover: false,
        };
        let out = c.on_message(&packet_in(LTE, req));
        assert_eq!(
            kinds(&out),
            vec![
                MessageKind::AdmissionRequest,
                MessageKind::AdmissionResponse,
                MessageKind::RrcConnectionSetup,
                MessageKind::BearerSetup
            ]
        );
        // Fill the video slice, then the next request is rejected with no
        // bearer.
        for i in 2..=37 {
            let r = Message::RrcConnectionRequest {
                ue: UeId(i),
                qos: QosClass::RealTimeVideo,
                handover: false,
            };
            c.on_message(&packet_in(LTE, r));
        }
        let r = Message::RrcConnectionRequest {
            ue: UeId(99),
            qos: QosClass::RealTimeVideo,
            handover: false,
        };
        let out = c.on_message(&packet_in(LTE, r));
        assert_eq!(
            kinds(&out),
            vec![
                MessageKind::AdmissionRequest,
                MessageKind::AdmissionResponse,
                MessageKind::RrcConnectionReject
            ]
        );
        assert!(out.contains(&Action::Note(Note::Blocked {
            ue: UeId(99),
            qos: QosClass::RealTimeVideo
        })));
        assert!(c.ues().get(UeId(99)).is_none());
    }

    #[test]
    fn attach_before_setup_is_protocol_error() {
        let mut c = controller(0.0);
        c.register_ue(UeId(1), QosClass::BestEffort, Point::default());
        let out = c.on_message(&packet_in(LTE, Message::AttachRequest { ue: UeId(1) }));
        assert!(out.is_empty());
        assert_eq!(c.stats().protocol_errors, 1);
        assert!(matches!(c.stats().errors[0], ControlError::ProtocolOrder { .. }));
    }

    #[test]
    fn unknown_origin_counted() {
        let mut c = controller(0.0);
        let out = c.on_message(&packet_in(NodeId::lte(7), Message::AttachRequest { ue: UeId(1) }));
        assert!(out.is_empty());
        assert_eq!(c.stats().errors, vec![ControlError::UnknownOrigin(NodeId::lte(7))]);
    }

    #[test]
    fn fcf_rejects_rat_specific_kinds_by_construction() {
        let generic = [
            FcfInput::Admission(AdmissionRequest {
                ue: UeId(0),
                qos: QosClass::BestEffort,
                node: LTE,
                flows: vec![],
                handover: false,
            })
            .kind(),
            FcfInput::TableMiss(PacketContext {
                node: LTE,
                ue: UeId(0),
                flow: PRIMARY_FLOW,
                direction: Direction::Uplink,
                qos: QosClass::BestEffort,
            })
            .kind(),
        ];
        assert!(generic.iter().all(|k| !k.is_rat_specific()));
    }

    #[test]
    fn wlan_shares_rebalance() {
        let mut c = controller(0.0);
        for i in 0..8 {
            let r = Message::WlanAssocRequest {
                ue: UeId(i),
                qos: QosClass::BestEffort,
                handover: false,
            };
            c.on_message(&packet_in(WLAN, r));
        }
        let data = c.slices().slice_for(QosClass::BestEffort, WLAN).unwrap();
        let flows = c.slices().flows_at(data, WLAN).unwrap();
        assert_eq!(flows.len(), 8);
        for (_, rate) in &flows {
            assert!((rate - 29.7 / 8.0).abs() < 1e-9);
        }
        let (actions, ctx) = c.handle_departure(UeId(0));
        assert!(ctx.is_some());
        assert!(!actions.is_empty());
        let flows = c.slices().flows_at(data, WLAN).unwrap();
        assert_eq!(flows.len(), 7);
        for (_, rate) in &flows {
            assert!((rate - 29.7 / 7.0).abs() < 1e-9);
        }
        for _ in 1..6 {
            let ue = c.slices().flows_at(data, WLAN).unwrap()[0].0.ue;
            c.handle_departure(ue);
        }
        for (_, rate) in c.slices().flows_at(data, WLAN).unwrap() {
            assert_eq!(rate, 5.0);
        }
        assert!(c.slices().check_no_overcommit().is_ok());
    }

    #[test]
    fn steering_counts_pending_ues() {
        let mut c = controller(0.0);
        let both = [LTE, WLAN];
        let picks: Vec<_> = (0..17).map(|i| c.steer(UeId(i), QosClass::BestEffort, &both)).collect();
        assert!(picks[..5].iter().all(|p| *p == Some(WLAN)));
        assert!(picks[5..15].iter().all(|p| *p == Some(LTE)));
        assert!(picks[15..].iter().all(|p| *p == Some(WLAN)));
        assert_eq!(c.steer(UeId(50), QosClass::RealTimeVideo, &both), Some(LTE));
        assert_eq!(c.steer(UeId(51), QosClass::RealTimeVideo, &[WLAN]), None);
    }
}
