//! RAT abstraction functions. Each RAF decodes its RAT's UE signaling into
//! generic intents and translates generic flow configuration back into RAT
//! parameters. Nothing RAT-specific leaves this module upward.

use std::collections::BTreeMap;
use std::fmt::Debug;

use super::acpf::SignalReport;
use super::messages::Message;
use super::ue::FlowSpec;
use super::ControlError;
use crate::dataplane::BearerKind;
use crate::topology::{NodeId, Rat};
use crate::types::{QosClass, UeId};

/// Generic form of an association-initiating message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssociationIntent {
    pub ue: UeId,
    pub qos: QosClass,
    pub handover: bool,
}

/// RAT-specific realisation of a generic flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatFlowConfig {
    LteBearer { kind: BearerKind, rate_mbps: f64 },
    WlanAssociation { airtime_share: f64, rate_mbps: f64 },
}

impl RatFlowConfig {
    pub fn rate_mbps(&self) -> f64 {
        match *self {
            RatFlowConfig::LteBearer { rate_mbps, .. } => rate_mbps,
            RatFlowConfig::WlanAssociation { rate_mbps, .. } => rate_mbps,
        }
    }
}

pub trait Raf: Debug + Send + Sync {
    fn rat(&self) -> Rat;

    /// Decode an association-initiating message of this RAT.
    fn decode_association(&self, msg: &Message) -> Result<AssociationIntent, ControlError>;

    /// Downlink answer to an association once admission has decided.
    fn association_reply(&self, ue: UeId, accepted: bool) -> Message;

    fn translate(&self, flow: &FlowSpec) -> Result<RatFlowConfig, ControlError>;

    fn decode_measurement(&self, msg: &Message) -> Result<SignalReport, ControlError> {
        match msg {
            Message::MeasurementReport(r) => Ok(SignalReport {
                ue: r.ue,
                serving: r.serving,
                measurements: r.measurements.clone(),
            }),
            other => Err(ControlError::Malformed {
                rat: self.rat(),
                kind: other.kind(),
            }),
        }
    }

    fn handover_command(&self, ue: UeId, target: NodeId) -> Message {
        Message::HandoverCommand { ue, target }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LteRaf;

impl Raf for LteRaf {
    fn rat(&self) -> Rat {
        Rat::Lte
    }

    fn decode_association(&self, msg: &Message) -> Result<AssociationIntent, ControlError> {
        match *msg {
            Message::RrcConnectionRequest { ue, qos, handover } => Ok(AssociationIntent { ue, qos, handover }),
            ref other => Err(ControlError::Malformed {
                rat: Rat::Lte,
                kind: other.kind(),
            }),
        }
    }

    fn association_reply(&self, ue: UeId, accepted: bool) -> Message {
        if accepted {
            Message::RrcConnectionSetup { ue }
        } else {
            Message::RrcConnectionReject { ue }
        }
    }

    fn translate(&self, flow: &FlowSpec) -> Result<RatFlowConfig, ControlError> {
        let kind = match flow.qos {
            QosClass::BestEffort => BearerKind::Default,
            QosClass::RealTimeVideo => BearerKind::Dedicated,
        };
        Ok(RatFlowConfig::LteBearer {
            kind,
            rate_mbps: flow.rate_mbps,
        })
    }
}

#[derive(Debug, Clone)]
pub struct WlanRaf {
    /// Effective capacity used to express rates as airtime, Mbps.
    pub capacity_mbps: f64,
}

impl Raf for WlanRaf {
    fn rat(&self) -> Rat {
        Rat::Wlan
    }

    fn decode_association(&self, msg: &Message) -> Result<AssociationIntent, ControlError> {
        match *msg {
            Message::WlanAssocRequest { ue, qos, handover } => Ok(AssociationIntent { ue, qos, handover }),
            ref other => Err(ControlError::Malformed {
                rat: Rat::Wlan,
                kind: other.kind(),
            }),
        }
    }

    fn association_reply(&self, ue: UeId, accepted: bool) -> Message {
        Message::WlanAssocResponse { ue, accepted }
    }

    fn translate(&self, flow: &FlowSpec) -> Result<RatFlowConfig, ControlError> {
        match flow.qos {
            QosClass::BestEffort => Ok(RatFlowConfig::WlanAssociation {
                airtime_share: (flow.rate_mbps / self.capacity_mbps).min(1.0),
                rate_mbps: flow.rate_mbps,
            }),
            QosClass::RealTimeVideo => Err(ControlError::NotEligible {
                rat: Rat::Wlan,
                qos: flow.qos,
            }),
        }
    }
}

/// One RAF per supported RAT.
#[derive(Debug, Default)]
pub struct RafRegistry {
    rafs: BTreeMap<Rat, Box<dyn Raf>>,
}

impl RafRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// LTE and WLAN RAFs.
    pub fn standard(wlan_capacity_mbps: f64) -> Self {
        let mut r = Self::new();
        r.register(Box::new(LteRaf)).expect("empty registry");
        r.register(Box::new(WlanRaf {
            capacity_mbps: wlan_capacity_mbps,
        }))
        .expect("distinct RATs");
        r
    }

    pub fn register(&mut self, raf: Box<dyn Raf>) -> Result<(), ControlError> {
        let rat = raf.rat();
        if self.rafs.contains_key(&rat) {
            return Err(ControlError::DuplicateRaf(rat));
        }
        self.rafs.insert(rat, raf);
        Ok(())
    }

    pub fn get(&self, rat: Rat) -> Result<&dyn Raf, ControlError> {
        self.rafs
            .get(&rat)
            .map(|b| b.as_ref())
            .ok_or(ControlError::UnsupportedRat(rat))
    }

    pub fn rats(&self) -> impl Iterator<Item = Rat> + '_ {
        self.rafs.keys().copied()
    }
}

/// Translate a generic flow for `rat`.
pub fn raf_translate(registry: &RafRegistry, flow: &FlowSpec, rat: Rat) -> Result<RatFlowConfig, ControlError> {
    registry.get(rat)?.translate(flow)
}
