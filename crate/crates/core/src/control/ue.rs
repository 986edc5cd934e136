//! UE Manager: controller-side per-UE context and flow descriptions.

use std::collections::BTreeMap;

use crate::dataplane::{Bearer, BearerKind};
use crate::topology::{NodeId, Point};
use crate::types::{FlowId, FlowKey, QosClass, SliceId, UeId};

/// RAT-agnostic flow description.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub flow: FlowId,
    pub ue: UeId,
    pub qos: QosClass,
    /// Mbps currently allotted.
    pub rate_mbps: f64,
    /// Ordered data path, dBS first.
    pub path: Vec<NodeId>,
}

impl FlowSpec {
    pub fn key(&self) -> FlowKey {
        FlowKey::new(self.ue, self.flow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttachmentState {
    /// Association request received, admission pending.
    Admitting,
    /// Signaling bearer set up; waiting for the attach request.
    SignalingReady,
    Authenticating,
    Attached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandoverState {
    pub source: NodeId,
    pub target: NodeId,
    /// The target association is underway (command acknowledged by the UE).
    pub executing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeContext {
    pub ue: UeId,
    /// Service the UE subscribes to.
    pub qos: QosClass,
    pub attachments: BTreeMap<NodeId, AttachmentState>,
    pub authenticated: bool,
    /// Times the abstract authentication ran; never more than one.
    pub auth_transitions: u32,
    pub slice: Option<SliceId>,
    pub bearers: Vec<(NodeId, Bearer)>,
    pub flows: Vec<FlowSpec>,
    pub position: Point,
    /// Latest received power per dBS, dBm.
    pub last_measurements: BTreeMap<NodeId, f64>,
    pub handover: Option<HandoverState>,
    /// Completed handovers.
    pub handovers: u32,
}

impl UeContext {
    pub fn new(ue: UeId, qos: QosClass, position: Point) -> Self {
        Self {
            ue,
            qos,
            attachments: BTreeMap::new(),
            authenticated: false,
            auth_transitions: 0,
            slice: None,
            bearers: Vec::new(),
            flows: Vec::new(),
            position,
            last_measurements: BTreeMap::new(),
            handover: None,
            handovers: 0,
        }
    }

    /// Fully attached node, preferring the handover source while one runs.
    pub fn serving(&self) -> Option<NodeId> {
        if let Some(h) = self.handover {
            if self.attachments.get(&h.source) == Some(&AttachmentState::Attached) {
                return Some(h.source);
            }
        }
        self.attachments
            .iter()
            .find(|(_, s)| **s == AttachmentState::Attached)
            .map(|(n, _)| *n)
    }

    pub fn state_at(&self, node: NodeId) -> Option<AttachmentState> {
        self.attachments.get(&node).copied()
    }

    pub fn has_bearer(&self, node: NodeId, kind: BearerKind) -> bool {
        self.bearers.iter().any(|(n, b)| *n == node && b.kind == kind)
    }

    pub fn flow(&self, flow: FlowId) -> Option<&FlowSpec> {
        self.flows.iter().find(|f| f.flow == flow)
    }

    pub fn flow_mut(&mut self, flow: FlowId) -> Option<&mut FlowSpec> {
        self.flows.iter_mut().find(|f| f.flow == flow)
    }

    /// Drop all attachment state at `node`; returns removed bearer count.
    pub fn forget_node(&mut self, node: NodeId) -> usize {
        self.attachments.remove(&node);
        let before = self.bearers.len();
        self.bearers.retain(|(n, _)| *n != node);
        before - self.bearers.len()
    }

    /// Non-signaling bearers only exist while some attachment exists.
    pub fn bearers_consistent(&self) -> bool {
        let data_bearers = self
            .bearers
            .iter()
            .any(|(_, b)| b.kind != BearerKind::Signaling);
        !data_bearers || !self.attachments.is_empty()
    }
}

/// Stores the context of every connected UE.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UeManager {
    contexts: BTreeMap<UeId, UeContext>,
}

impl UeManager {
    pub fn get(&self, ue: UeId) -> Option<&UeContext> {
        self.contexts.get(&ue)
    }

    pub fn get_mut(&mut self, ue: UeId) -> Option<&mut UeContext> {
        self.contexts.get_mut(&ue)
    }

    pub fn get_or_insert(&mut self, ue: UeId, qos: QosClass, position: Point) -> &mut UeContext {
        self.contexts
            .entry(ue)
            .or_insert_with(|| UeContext::new(ue, qos, position))
    }

    pub fn remove(&mut self, ue: UeId) -> Option<UeContext> {
        self.contexts.remove(&ue)
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UeContext> {
        self.contexts.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataplane::{BearerEndpoints, BearerId};

    #[test]
    fn serving_prefers_handover_source() {
        let mut ctx = UeContext::new(UeId(1), QosClass::BestEffort, Point::default());
        ctx.attachments.insert(NodeId::wlan(0), AttachmentState::Attached);
        ctx.attachments.insert(NodeId::lte(0), AttachmentState::Attached);
        ctx.handover = Some(HandoverState {
            source: NodeId::wlan(0),
            target: NodeId::lte(0),
            executing: true,
        });
        assert_eq!(ctx.serving(), Some(NodeId::wlan(0)));
        ctx.handover = None;
        assert_eq!(ctx.serving(), Some(NodeId::lte(0)));
    }

    #[test]
    fn forget_node_drops_bearers() {
        let mut ctx = UeContext::new(UeId(1), QosClass::BestEffort, Point::default());
        let node = NodeId::lte(0);
        ctx.attachments.insert(node, AttachmentState::Attached);
        ctx.bearers.push((
            node,
            Bearer {
                id: BearerId(1),
                ue: UeId(1),
                kind: BearerKind::Default,
                endpoints: BearerEndpoints::Radio { ue: UeId(1), node },
                rate_mbps: 5.0,
            },
        ));
        assert!(ctx.bearers_consistent());
        assert_eq!(ctx.forget_node(node), 1);
        assert!(ctx.bearers_consistent());
        assert_eq!(ctx.serving(), None);
    }
}
