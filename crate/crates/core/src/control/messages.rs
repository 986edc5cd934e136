//! Control-plane messages exchanged between UEs, data-plane nodes and the
//! controller's internal functions.

use std::fmt;

use crate::dataplane::{Bearer, FlowRule, PacketContext};
use crate::topology::{NodeId, Rat};
use crate::types::{FlowId, MsgId, QosClass, SliceId, UeId};

/// Layers inside the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerFn {
    Dcif,
    Raf(Rat),
    Fcf,
    Acpf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Ue(UeId),
    Node(NodeId),
    Controller(ControllerFn),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Ue(ue) => write!(f, "{ue}"),
            Endpoint::Node(n) => write!(f, "{n}"),
            Endpoint::Controller(ControllerFn::Dcif) => f.write_str("ctrl:dcif"),
            Endpoint::Controller(ControllerFn::Raf(rat)) => write!(f, "ctrl:raf-{rat}"),
            Endpoint::Controller(ControllerFn::Fcf) => f.write_str("ctrl:fcf"),
            Endpoint::Controller(ControllerFn::Acpf) => f.write_str("ctrl:acpf"),
        }
    }
}

/// RAT-independent admission query from a RAF.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionRequest {
    pub ue: UeId,
    pub qos: QosClass,
    pub node: NodeId,
    /// Flows to carry over; empty for a fresh association.
    pub flows: Vec<FlowId>,
    pub handover: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionResponse {
    pub ue: UeId,
    pub node: NodeId,
    pub accepted: bool,
    pub slice: Option<SliceId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementReport {
    pub ue: UeId,
    pub serving: NodeId,
    /// Received power per dBS, dBm.
    pub measurements: Vec<(NodeId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PacketInBody {
    /// UE control message relayed by the dBS.
    Control(Box<Message>),
    /// Data packet with no matching rule.
    TableMiss(PacketContext),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketIn {
    pub origin: NodeId,
    pub body: PacketInBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowMod {
    Add(FlowRule),
    RemoveFlow { ue: UeId, flow: FlowId },
    /// Drop every rule and bearer of the UE, and its radio attachment.
    ReleaseUe { ue: UeId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    RrcConnectionRequest {
        ue: UeId,
        qos: QosClass,
        handover: bool,
    },
    RrcConnectionSetup {
        ue: UeId,
    },
    RrcConnectionReject {
        ue: UeId,
    },
    AttachRequest {
        ue: UeId,
    },
    AttachAccept {
        ue: UeId,
    },
    AdmissionRequest(AdmissionRequest),
    AdmissionResponse(AdmissionResponse),
    MeasurementReport(MeasurementReport),
    HandoverCommand {
        ue: UeId,
        target: NodeId,
    },
    PacketIn(PacketIn),
    FlowMod(FlowMod),
    BearerSetup(Bearer),
    WlanAssocRequest {
        ue: UeId,
        qos: QosClass,
        handover: bool,
    },
    WlanAssocResponse {
        ue: UeId,
        accepted: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    RrcConnectionRequest,
    RrcConnectionSetup,
    RrcConnectionReject,
    AttachRequest,
    AttachAccept,
    AdmissionRequest,
    AdmissionResponse,
    MeasurementReport,
    HandoverCommand,
    PacketIn,
    FlowMod,
    BearerSetup,
    WlanAssocRequest,
    WlanAssocResponse,
}

impl MessageKind {
    pub const ALL: [MessageKind; 14] = [
        MessageKind::RrcConnectionRequest,
        MessageKind::RrcConnectionSetup,
        MessageKind::RrcConnectionReject,
        MessageKind::AttachRequest,
        MessageKind::AttachAccept,
        MessageKind::AdmissionRequest,
        MessageKind::AdmissionResponse,
        MessageKind::MeasurementReport,
        MessageKind::HandoverCommand,
        MessageKind::PacketIn,
        MessageKind::FlowMod,
        MessageKind::BearerSetup,
        MessageKind::WlanAssocRequest,
        MessageKind::WlanAssocResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::RrcConnectionRequest => "RrcConnectionRequest",
            MessageKind::RrcConnectionSetup => "RrcConnectionSetup",
            MessageKind::RrcConnectionReject => "RrcConnectionReject",
            MessageKind::AttachRequest => "AttachRequest",
            MessageKind::AttachAccept => "AttachAccept",
            MessageKind::AdmissionRequest => "AdmissionRequest",
            MessageKind::AdmissionResponse => "AdmissionResponse",
            MessageKind::MeasurementReport => "MeasurementReport",
            MessageKind::HandoverCommand => "HandoverCommand",
            MessageKind::PacketIn => "PacketIn",
            MessageKind::FlowMod => "FlowMod",
            MessageKind::BearerSetup => "BearerSetup",
            MessageKind::WlanAssocRequest => "WlanAssocRequest",
            MessageKind::WlanAssocResponse => "WlanAssocResponse",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Kinds only the RAFs (and UEs / dBSs) may handle. The FCF and ACPF
    /// see only the generic ones.
    pub fn is_rat_specific(self) -> bool {
        matches!(
            self,
            MessageKind::RrcConnectionRequest
                | MessageKind::RrcConnectionSetup
                | MessageKind::RrcConnectionReject
                | MessageKind::AttachRequest
                | MessageKind::AttachAccept
                | MessageKind::MeasurementReport
                | MessageKind::HandoverCommand
                | MessageKind::WlanAssocRequest
                | MessageKind::WlanAssocResponse
        )
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::RrcConnectionRequest { .. } => MessageKind::RrcConnectionRequest,
            Message::RrcConnectionSetup { .. } => MessageKind::RrcConnectionSetup,
            Message::RrcConnectionReject { .. } => MessageKind::RrcConnectionReject,
            Message::AttachRequest { .. } => MessageKind::AttachRequest,
            Message::AttachAccept { .. } => MessageKind::AttachAccept,
            Message::AdmissionRequest(_) => MessageKind::AdmissionRequest,
            Message::AdmissionResponse(_) => MessageKind::AdmissionResponse,
            Message::MeasurementReport(_) => MessageKind::MeasurementReport,
            Message::HandoverCommand { .. } => MessageKind::HandoverCommand,
            Message::PacketIn(_) => MessageKind::PacketIn,
            Message::FlowMod(_) => MessageKind::FlowMod,
            Message::BearerSetup(_) => MessageKind::BearerSetup,
            Message::WlanAssocRequest { .. } => MessageKind::WlanAssocRequest,
            Message::WlanAssocResponse { .. } => MessageKind::WlanAssocResponse,
        }
    }

    /// UE this message concerns, if any.
    pub fn ue(&self) -> Option<UeId> {
        match self {
            Message::RrcConnectionRequest { ue, .. }
            | Message::RrcConnectionSetup { ue }
            | Message::RrcConnectionReject { ue }
            | Message::AttachRequest { ue }
            | Message::AttachAccept { ue }
            | Message::HandoverCommand { ue, .. }
            | Message::WlanAssocRequest { ue, .. }
            | Message::WlanAssocResponse { ue, .. } => Some(*ue),
            Message::AdmissionRequest(r) => Some(r.ue),
            Message::AdmissionResponse(r) => Some(r.ue),
            Message::MeasurementReport(r) => Some(r.ue),
            Message::PacketIn(p) => match &p.body {
                PacketInBody::Control(inner) => inner.ue(),
                PacketInBody::TableMiss(ctx) => Some(ctx.ue),
            },
            Message::FlowMod(FlowMod::Add(rule)) => Some(rule.matcher.ue),
            Message::FlowMod(FlowMod::RemoveFlow { ue, .. } | FlowMod::ReleaseUe { ue }) => Some(*ue),
            Message::BearerSetup(b) => Some(b.ue),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlMessage {
    pub id: MsgId,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub body: Message,
}

impl ControlMessage {
    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }

    pub fn ue(&self) -> Option<UeId> {
        self.body.ue()
    }
}

/// Hands out message ids in emission order.
#[derive(Debug, Clone, Default)]
pub struct MsgIds {
    next: u64,
}

impl MsgIds {
    pub fn next_id(&mut self) -> MsgId {
        let id = MsgId(self.next);
        self.next += 1;
        id
    }

    pub fn make(&mut self, src: Endpoint, dst: Endpoint, body: Message) -> ControlMessage {
        ControlMessage {
            id: self.next_id(),
            src,
            dst,
            body,
        }
    }
}
