//! Forwarding-only data-plane nodes: LTE dBS, WLAN dBS and gateway.
//!
//! Nodes keep flow tables, bearers and the set of radio-attached UEs. They
//! make no admission, mobility or resource decisions; every mutation carries
//! a [`Cause`] naming the controller message or UE radio event behind it.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::topology::{NodeId, Point, Rat, Topology};
use crate::types::{Direction, FlowId, MsgId, QosClass, SliceId, UeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataPlaneError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{ue} is not attached at {node}")]
    NotAttached { node: NodeId, ue: UeId },
    #[error("{ue} is already attached at {node}")]
    AlreadyAttached { node: NodeId, ue: UeId },
    #[error("{ue} is {distance_m:.1} m from {node}, beyond its {range_m:.1} m range")]
    OutOfCoverage {
        node: NodeId,
        ue: UeId,
        distance_m: f64,
        range_m: f64,
    },
    #[error("{0} is not a base station")]
    NotADbs(NodeId),
    #[error("rule for {matcher:?} at priority {priority} already installed on {node}")]
    InstallConflict {
        node: NodeId,
        matcher: FlowMatch,
        priority: u16,
    },
    #[error("{ue} already has a {kind:?} bearer at {node}")]
    DuplicateBearer {
        node: NodeId,
        ue: UeId,
        kind: BearerKind,
    },
    #[error("bearer {0:?} already exists")]
    DuplicateBearerId(BearerId),
    #[error("bearer endpoints {endpoints:?} invalid for a {kind:?} bearer at {node}")]
    BadBearerEndpoints {
        node: NodeId,
        kind: BearerKind,
        endpoints: BearerEndpoints,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BearerId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowMatch {
    pub ue: UeId,
    pub flow: FlowId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowAction {
    ForwardTo(NodeId),
    /// Hand to the local endpoint (UE radio bearer or external network).
    Deliver,
    PuntToController,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowRule {
    pub id: RuleId,
    pub matcher: FlowMatch,
    pub action: FlowAction,
    pub priority: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BearerKind {
    Signaling,
    Default,
    Dedicated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BearerEndpoints {
    Radio { ue: UeId, node: NodeId },
    Wired { from: NodeId, to: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearer {
    pub id: BearerId,
    pub ue: UeId,
    pub kind: BearerKind,
    pub endpoints: BearerEndpoints,
    /// Mbps; zero for signaling.
    pub rate_mbps: f64,
}

/// Why a node changed state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cause {
    Controller(MsgId),
    Radio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    Attached,
    Detached,
    RuleInstalled(RuleId),
    RuleRemoved(RuleId),
    BearerCreated(BearerId),
    BearerRemoved(BearerId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mutation {
    pub ue: UeId,
    pub kind: MutationKind,
    pub cause: Cause,
}

/// First-packet context carried by a table-miss punt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketContext {
    pub node: NodeId,
    pub ue: UeId,
    pub flow: FlowId,
    pub direction: Direction,
    /// Marking on the packet; the controller classifies on it.
    pub qos: QosClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStart {
    Forwarded { next_hop: NodeId },
    Delivered,
    PuntedToController(PacketContext),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Teardown {
    pub rules: usize,
    pub bearers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbsState {
    pub node: NodeId,
    pub rat: Option<Rat>,
    position: Point,
    range_m: f64,
    pub attached: BTreeSet<UeId>,
    pub flow_table: Vec<FlowRule>,
    pub bearers: Vec<Bearer>,
    pub slices: BTreeSet<SliceId>,
    /// Flows forwarded per next hop.
    pub forwarded: BTreeMap<NodeId, u64>,
    pub delivered: u64,
    pub log: Vec<Mutation>,
}

impl DbsState {
    fn new(node: NodeId, position: Point, range_m: f64) -> Self {
        Self {
            node,
            rat: node.rat(),
            position,
            range_m,
            attached: BTreeSet::new(),
            flow_table: Vec::new(),
            bearers: Vec::new(),
            slices: BTreeSet::new(),
            forwarded: BTreeMap::new(),
            delivered: 0,
            log: Vec::new(),
        }
    }

    /// Highest-priority rule matching `m`.
    pub fn lookup(&self, m: &FlowMatch) -> Option<&FlowRule> {
        self.flow_table
            .iter()
            .filter(|r| r.matcher == *m)
            .max_by_key(|r| r.priority)
    }

    /// Sum of non-signaling bearer rates, Mbps.
    pub fn allocated_rate(&self) -> f64 {
        self.bearers
            .iter()
            .filter(|b| b.kind != BearerKind::Signaling)
            .map(|b| b.rate_mbps)
            .sum()
    }

    pub fn has_bearer(&self, ue: UeId, kind: BearerKind) -> bool {
        self.bearers.iter().any(|b| b.ue == ue && b.kind == kind)
    }

    pub fn references(&self, ue: UeId) -> bool {
        self.attached.contains(&ue)
            || self.flow_table.iter().any(|r| r.matcher.ue == ue)
            || self.bearers.iter().any(|b| b.ue == ue)
    }

    /// Node state with counters and the mutation log stripped; used to
    /// compare "before" and "after" snapshots.
    pub fn forwarding_state(&self) -> (BTreeSet<UeId>, Vec<FlowRule>, Vec<Bearer>) {
        (
            self.attached.clone(),
            self.flow_table.clone(),
            self.bearers.clone(),
        )
    }

    fn remove_ue(&mut self, ue: UeId, cause: Cause) -> Teardown {
        let mut out = Teardown::default();
        let log = &mut self.log;
        self.flow_table.retain(|r| {
            let keep = r.matcher.ue != ue;
            if !keep {
                log.push(Mutation {
                    ue,
                    kind: MutationKind::RuleRemoved(r.id),
                    cause,
                });
                out.rules += 1;
            }
            keep
        });
        self.bearers.retain(|b| {
            let keep = b.ue != ue;
            if !keep {
                log.push(Mutation {
                    ue,
                    kind: MutationKind::BearerRemoved(b.id),
                    cause,
                });
                out.bearers += 1;
            }
            keep
        });
        out
    }
}

/// All data-plane nodes of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPlane {
    nodes: BTreeMap<NodeId, DbsState>,
}

impl DataPlane {
    pub fn new(topology: &Topology) -> Self {
        let nodes = topology
            .nodes()
            .map(|d| (d.id, DbsState::new(d.id, d.position, d.range_m)))
            .collect();
        Self { nodes }
    }

    pub fn node(&self, id: NodeId) -> Result<&DbsState, DataPlaneError> {
        self.nodes.get(&id).ok_or(DataPlaneError::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut DbsState, DataPlaneError> {
        self.nodes.get_mut(&id).ok_or(DataPlaneError::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &DbsState> {
        self.nodes.values()
    }

    pub fn join_slice(&mut self, node: NodeId, slice: SliceId) -> Result<(), DataPlaneError> {
        self.node_mut(node)?.slices.insert(slice);
        Ok(())
    }

    pub fn install_flow_rule(
        &mut self,
        node: NodeId,
        rule: FlowRule,
        cause: Cause,
    ) -> Result<RuleId, DataPlaneError> {
        let state = self.node_mut(node)?;
        if state
            .flow_table
            .iter()
            .any(|r| r.matcher == rule.matcher && r.priority == rule.priority)
        {
            return Err(DataPlaneError::InstallConflict {
                node,
                matcher: rule.matcher,
                priority: rule.priority,
            });
        }
        state.flow_table.push(rule);
        state.log.push(Mutation {
            ue: rule.matcher.ue,
            kind: MutationKind::RuleInstalled(rule.id),
            cause,
        });
        Ok(rule.id)
    }

    /// Remove every rule for `(ue, flow)` on `node`; returns how many went.
    pub fn remove_flow_rules(
        &mut self,
        node: NodeId,
        ue: UeId,
        flow: FlowId,
        cause: Cause,
    ) -> Result<usize, DataPlaneError> {
        let state = self.node_mut(node)?;
        let before = state.flow_table.len();
        let log = &mut state.log;
        state.flow_table.retain(|r| {
            let hit = r.matcher.ue == ue && r.matcher.flow == flow;
            if hit {
                log.push(Mutation {
                    ue,
                    kind: MutationKind::RuleRemoved(r.id),
                    cause,
                });
            }
            !hit
        });
        Ok(before - state.flow_table.len())
    }

    /// First uplink packet of a flow arrives at `node`.
    pub fn handle_flow_start(
        &mut self,
        node: NodeId,
        ue: UeId,
        flow: FlowId,
        qos: QosClass,
    ) -> Result<FlowStart, DataPlaneError> {
        let state = self.node_mut(node)?;
        if state.rat.is_some() && !state.attached.contains(&ue) {
            return Err(DataPlaneError::NotAttached { node, ue });
        }
        let m = FlowMatch {
            ue,
            flow,
            direction: Direction::Uplink,
        };
        let punt = PacketContext {
            node,
            ue,
            flow,
            direction: Direction::Uplink,
            qos,
        };
        Ok(match state.lookup(&m).map(|r| r.action) {
            Some(FlowAction::ForwardTo(next_hop)) => {
                *state.forwarded.entry(next_hop).or_default() += 1;
                FlowStart::Forwarded { next_hop }
            }
            Some(FlowAction::Deliver) => {
                state.delivered += 1;
                FlowStart::Delivered
            }
            Some(FlowAction::PuntToController) | None => FlowStart::PuntedToController(punt),
        })
    }

    pub fn create_bearer(
        &mut self,
        node: NodeId,
        bearer: Bearer,
        cause: Cause,
    ) -> Result<BearerId, DataPlaneError> {
        let state = self.node_mut(node)?;
        let endpoints_ok = match (bearer.kind, bearer.endpoints) {
            (BearerKind::Dedicated, BearerEndpoints::Wired { from, to }) => {
                from == node && from.is_dbs() && !to.is_dbs()
            }
            (BearerKind::Dedicated, BearerEndpoints::Radio { .. }) => false,
            (_, BearerEndpoints::Radio { ue, node: at }) => ue == bearer.ue && at == node,
            (_, BearerEndpoints::Wired { .. }) => false,
        };
        if !endpoints_ok || state.rat.is_none() {
            return Err(DataPlaneError::BadBearerEndpoints {
                node,
                kind: bearer.kind,
                endpoints: bearer.endpoints,
            });
        }
        if !state.attached.contains(&bearer.ue) {
            return Err(DataPlaneError::NotAttached { node, ue: bearer.ue });
        }
        if state.bearers.iter().any(|b| b.id == bearer.id) {
            return Err(DataPlaneError::DuplicateBearerId(bearer.id));
        }
        if matches!(bearer.kind, BearerKind::Signaling | BearerKind::Default)
            && state.has_bearer(bearer.ue, bearer.kind)
        {
            return Err(DataPlaneError::DuplicateBearer {
                node,
                ue: bearer.ue,
                kind: bearer.kind,
            });
        }
        state.bearers.push(bearer);
        state.log.push(Mutation {
            ue: bearer.ue,
            kind: MutationKind::BearerCreated(bearer.id),
            cause,
        });
        Ok(bearer.id)
    }

    /// Whether `node` can relay a non-RRC control message from `ue`.
    pub fn has_signaling_bearer(&self, node: NodeId, ue: UeId) -> bool {
        self.nodes
            .get(&node)
            .is_some_and(|s| s.has_bearer(ue, BearerKind::Signaling))
    }

    /// Radio-level attach; precedes any signaling.
    pub fn attach_radio(&mut self, node: NodeId, ue: UeId, at: &Point) -> Result<(), DataPlaneError> {
        let state = self.node_mut(node)?;
        if state.rat.is_none() {
            return Err(DataPlaneError::NotADbs(node));
        }
        let distance_m = state.position.distance_m(at);
        if distance_m > state.range_m {
            return Err(DataPlaneError::OutOfCoverage {
                node,
                ue,
                distance_m,
                range_m: state.range_m,
            });
        }
        if !state.attached.insert(ue) {
            return Err(DataPlaneError::AlreadyAttached { node, ue });
        }
        state.log.push(Mutation {
            ue,
            kind: MutationKind::Attached,
            cause: Cause::Radio,
        });
        Ok(())
    }

    /// Radio-level detach; tears down the UE's bearers and rules at `node`.
    pub fn detach_radio(&mut self, node: NodeId, ue: UeId) -> Result<Teardown, DataPlaneError> {
        self.detach_with(node, ue, Cause::Radio)
    }

    fn detach_with(&mut self, node: NodeId, ue: UeId, cause: Cause) -> Result<Teardown, DataPlaneError> {
        let state = self.node_mut(node)?;
        if !state.attached.remove(&ue) {
            return Err(DataPlaneError::NotAttached { node, ue });
        }
        let out = state.remove_ue(ue, cause);
        state.log.push(Mutation {
            ue,
            kind: MutationKind::Detached,
            cause,
        });
        Ok(out)
    }

    /// Controller-ordered release of everything `ue` holds at `node`,
    /// including the radio attachment if present.
    pub fn release_ue(&mut self, node: NodeId, ue: UeId, cause: Cause) -> Result<Teardown, DataPlaneError> {
        let attached = self.node(node)?.attached.contains(&ue);
        if attached {
            self.detach_with(node, ue, cause)
        } else {
            Ok(self.node_mut(node)?.remove_ue(ue, cause))
        }
    }

    pub fn is_attached(&self, node: NodeId, ue: UeId) -> bool {
        self.nodes.get(&node).is_some_and(|s| s.attached.contains(&ue))
    }

    /// Nodes still holding any state for `ue`.
    pub fn nodes_referencing(&self, ue: UeId) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|s| s.references(ue))
            .map(|s| s.node)
            .collect()
    }
}
