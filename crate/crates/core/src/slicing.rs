//! Slice manager: partitions node capacity into isolated slices and keeps
//! per-flow rate accounting for each slice at each member node.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::CAPACITY_EPSILON;
use crate::topology::{NodeId, Topology};
use crate::types::{FlowKey, QosClass, SliceId, UeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SliceError {
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{node} is not a member of {slice}")]
    NotAMember { slice: SliceId, node: NodeId },
    #[error("shares at {node} would total {total:.3} > 1")]
    Oversubscribed { node: NodeId, total: f64 },
    #[error("share {share} at {node} outside [0, 1]")]
    InvalidShare { node: NodeId, share: f64 },
    #[error("flow {flow:?} is not granted in {slice} at {node}")]
    UnknownFlow {
        slice: SliceId,
        node: NodeId,
        flow: FlowKey,
    },
    #[error("flow {flow:?} already granted in {slice} at {node}")]
    AlreadyGranted {
        slice: SliceId,
        node: NodeId,
        flow: FlowKey,
    },
    #[error("rate must be non-negative, got {0}")]
    NegativeRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ServiceClass {
    RealTimeVideo,
    BestEffortData,
}

impl ServiceClass {
    pub fn serves(self, qos: QosClass) -> bool {
        matches!(
            (self, qos),
            (ServiceClass::RealTimeVideo, QosClass::RealTimeVideo)
                | (ServiceClass::BestEffortData, QosClass::BestEffort)
        )
    }
}

impl From<QosClass> for ServiceClass {
    fn from(q: QosClass) -> Self {
        match q {
            QosClass::BestEffort => ServiceClass::BestEffortData,
            QosClass::RealTimeVideo => ServiceClass::RealTimeVideo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDescriptor {
    pub name: String,
    pub service_class: ServiceClass,
    /// Fraction of each member node's capacity.
    pub members: BTreeMap<NodeId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantOutcome {
    Granted,
    Denied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeOutcome {
    Ok,
    /// Already-admitted flows exceed the new share; it applies to new
    /// admissions now and is committed once they drain.
    Deferred,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overcommit {
    pub slice: SliceId,
    pub node: NodeId,
    pub admitted: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct SliceState {
    desc: SliceDescriptor,
    /// Committed shares; these count towards the per-node share sum.
    committed: BTreeMap<NodeId, f64>,
    /// Pending smaller shares awaiting drain.
    pending: BTreeMap<NodeId, f64>,
    admitted: BTreeMap<NodeId, BTreeMap<FlowKey, f64>>,
}

impl SliceState {
    fn admission_share(&self, node: NodeId) -> Option<f64> {
        self.pending
            .get(&node)
            .or_else(|| self.committed.get(&node))
            .copied()
    }

    fn admitted_sum(&self, node: NodeId) -> f64 {
        self.admitted.get(&node).map_or(0.0, |m| m.values().sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceManager {
    capacities: BTreeMap<NodeId, f64>,
    slices: BTreeMap<SliceId, SliceState>,
    next_id: u16,
    grants: u64,
    releases: u64,
}

impl SliceManager {
    pub fn new(capacities: impl IntoIterator<Item = (NodeId, f64)>) -> Self {
        Self {
            capacities: capacities.into_iter().collect(),
            slices: BTreeMap::new(),
            next_id: 0,
            grants: 0,
            releases: 0,
        }
    }

    /// Capacities of every dBS in `topology`.
    pub fn for_topology(topology: &Topology) -> Self {
        Self::new(topology.dbs_nodes().map(|n| (n.id, n.capacity_mbps)))
    }

    fn share_sum(&self, node: NodeId, excluding: Option<SliceId>) -> f64 {
        self.slices
            .iter()
            .filter(|(id, _)| Some(**id) != excluding)
            .filter_map(|(_, s)| s.committed.get(&node))
            .sum()
    }

    pub fn capacity(&self, node: NodeId) -> Result<f64, SliceError> {
        self.capacities
            .get(&node)
            .copied()
            .ok_or(SliceError::UnknownNode(node))
    }

    pub fn create_slice(&mut self, desc: SliceDescriptor) -> Result<SliceId, SliceError> {
        for (&node, &share) in &desc.members {
            self.capacity(node)?;
            if !(0.0..=1.0).contains(&share) {
                return Err(SliceError::InvalidShare { node, share });
            }
            let total = self.share_sum(node, None) + share;
            if total > 1.0 + CAPACITY_EPSILON {
                return Err(SliceError::Oversubscribed { node, total });
            }
        }
        let id = SliceId(self.next_id);
        self.next_id += 1;
        self.slices.insert(
            id,
            SliceState {
                committed: desc.members.clone(),
                pending: BTreeMap::new(),
                admitted: BTreeMap::new(),
                desc,
            },
        );
        Ok(id)
    }

    fn slice(&self, id: SliceId) -> Result<&SliceState, SliceError> {
        self.slices.get(&id).ok_or(SliceError::UnknownSlice(id))
    }

    fn slice_mut(&mut self, id: SliceId) -> Result<&mut SliceState, SliceError> {
        self.slices.get_mut(&id).ok_or(SliceError::UnknownSlice(id))
    }

    pub fn descriptor(&self, id: SliceId) -> Result<&SliceDescriptor, SliceError> {
        Ok(&self.slice(id)?.desc)
    }

    pub fn slice_ids(&self) -> impl Iterator<Item = SliceId> + '_ {
        self.slices.keys().copied()
    }

    /// The slice serving `qos` that includes `node`, lowest id first.
    pub fn slice_for(&self, qos: QosClass, node: NodeId) -> Option<SliceId> {
        self.slices
            .iter()
            .find(|(_, s)| s.desc.service_class.serves(qos) && s.committed.contains_key(&node))
            .map(|(id, _)| *id)
    }

    /// Rate limit for new admissions of `slice` at `node`, Mbps.
    pub fn limit(&self, slice: SliceId, node: NodeId) -> Result<f64, SliceError> {
        let s = self.slice(slice)?;
        let share = s
            .admission_share(node)
            .ok_or(SliceError::NotAMember { slice, node })?;
        Ok(share * self.capacity(node)?)
    }

    pub fn admitted_sum(&self, slice: SliceId, node: NodeId) -> Result<f64, SliceError> {
        Ok(self.slice(slice)?.admitted_sum(node))
    }

    /// Total admitted rate of `slice` across all its nodes, Mbps.
    pub fn slice_throughput(&self, slice: SliceId) -> Result<f64, SliceError> {
        let s = self.slice(slice)?;
        Ok(s.admitted.values().flat_map(|m| m.values()).sum())
    }

    pub fn flows_at(&self, slice: SliceId, node: NodeId) -> Result<Vec<(FlowKey, f64)>, SliceError> {
        let s = self.slice(slice)?;
        Ok(s.admitted
            .get(&node)
            .map(|m| m.iter().map(|(k, v)| (*k, *v)).collect())
            .unwrap_or_default())
    }

    pub fn granted_rate(&self, slice: SliceId, node: NodeId, flow: FlowKey) -> Option<f64> {
        self.slices
            .get(&slice)?
            .admitted
            .get(&node)?
            .get(&flow)
            .copied()
    }

    /// Would `grant` succeed right now? Accounting is left untouched.
    pub fn can_grant(&self, slice: SliceId, node: NodeId, rate: f64) -> Result<bool, SliceError> {
        let limit = self.limit(slice, node)?;
        Ok(self.admitted_sum(slice, node)? + rate <= limit + CAPACITY_EPSILON)
    }

    pub fn grant(
        &mut self,
        slice: SliceId,
        node: NodeId,
        flow: FlowKey,
        rate: f64,
    ) -> Result<GrantOutcome, SliceError> {
        if !(rate >= 0.0) {
            return Err(SliceError::NegativeRate(rate));
        }
        if !self.can_grant(slice, node, rate)? {
            return Ok(GrantOutcome::Denied);
        }
        let s = self.slice_mut(slice)?;
        let flows = s.admitted.entry(node).or_default();
        if flows.contains_key(&flow) {
            return Err(SliceError::AlreadyGranted { slice, node, flow });
        }
        flows.insert(flow, rate);
        self.grants += 1;
        Ok(GrantOutcome::Granted)
    }

    /// Change the rate of an already-granted flow. Decreases always succeed.
    pub fn adjust(
        &mut self,
        slice: SliceId,
        node: NodeId,
        flow: FlowKey,
        rate: f64,
    ) -> Result<GrantOutcome, SliceError> {
        if !(rate >= 0.0) {
            return Err(SliceError::NegativeRate(rate));
        }
        let current = self
            .granted_rate(slice, node, flow)
            .ok_or(SliceError::UnknownFlow { slice, node, flow })?;
        if rate > current {
            let limit = self.limit(slice, node)?;
            let others = self.admitted_sum(slice, node)? - current;
            if others + rate > limit + CAPACITY_EPSILON {
                return Ok(GrantOutcome::Denied);
            }
        }
        let s = self.slice_mut(slice)?;
        *s.admitted
            .get_mut(&node)
            .and_then(|m| m.get_mut(&flow))
            .expect("checked above") = rate;
        Ok(GrantOutcome::Granted)
    }

    /// Returns the released rate.
    pub fn release(&mut self, slice: SliceId, node: NodeId, flow: FlowKey) -> Result<f64, SliceError> {
        let capacity = self.capacity(node)?;
        let s = self.slice_mut(slice)?;
        let rate = s
            .admitted
            .get_mut(&node)
            .and_then(|m| m.remove(&flow))
            .ok_or(SliceError::UnknownFlow { slice, node, flow })?;
        if let Some(&target) = s.pending.get(&node) {
            if s.admitted_sum(node) <= target * capacity + CAPACITY_EPSILON {
                s.pending.remove(&node);
                s.committed.insert(node, target);
            }
        }
        self.releases += 1;
        Ok(rate)
    }

    pub fn resize_slice(
        &mut self,
        slice: SliceId,
        node: NodeId,
        new_share: f64,
    ) -> Result<ResizeOutcome, SliceError> {
        if !(0.0..=1.0).contains(&new_share) {
            return Err(SliceError::InvalidShare {
                node,
                share: new_share,
            });
        }
        let capacity = self.capacity(node)?;
        let total = self.share_sum(node, Some(slice)) + new_share;
        if total > 1.0 + CAPACITY_EPSILON {
            return Err(SliceError::Oversubscribed { node, total });
        }
        let s = self.slice_mut(slice)?;
        if !s.committed.contains_key(&node) {
            return Err(SliceError::NotAMember { slice, node });
        }
        s.pending.remove(&node);
        if s.admitted_sum(node) <= new_share * capacity + CAPACITY_EPSILON {
            s.committed.insert(node, new_share);
            s.desc.members.insert(node, new_share);
            Ok(ResizeOutcome::Ok)
        } else {
            s.pending.insert(node, new_share);
            s.desc.members.insert(node, new_share);
            Ok(ResizeOutcome::Deferred)
        }
    }

    /// Every slice at every node stays within its committed share.
    pub fn check_no_overcommit(&self) -> Result<(), Overcommit> {
        for (&slice, s) in &self.slices {
            for (&node, &share) in &s.committed {
                let limit = share * self.capacities[&node];
                let admitted = s.admitted_sum(node);
                if admitted > limit + CAPACITY_EPSILON {
                    return Err(Overcommit {
                        slice,
                        node,
                        admitted,
                        limit,
                    });
                }
            }
        }
        Ok(())
    }

    /// Every grant held by `ue`, in slice then node order.
    pub fn grants_of(&self, ue: UeId) -> Vec<(SliceId, NodeId, FlowKey)> {
        let mut out = Vec::new();
        for (&slice, s) in &self.slices {
            for (&node, flows) in &s.admitted {
                out.extend(flows.keys().filter(|k| k.ue == ue).map(|k| (slice, node, *k)));
            }
        }
        out
    }

    /// (grants issued, releases issued, flows currently granted)
    pub fn ledger(&self) -> (u64, u64, usize) {
        let active = self
            .slices
            .values()
            .flat_map(|s| s.admitted.values())
            .map(|m| m.len())
            .sum();
        (self.grants, self.releases, active)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FlowId;
    use proptest::prelude::*;

    const LTE: NodeId = NodeId::lte(0);
    const WLAN: NodeId = NodeId::wlan(0);

    fn manager() -> SliceManager {
        SliceManager::new([(LTE, 50.0), (WLAN, 29.7)])
    }

    fn desc(name: &str, class: ServiceClass, members: &[(NodeId, f64)]) -> SliceDescriptor {
        SliceDescriptor {
            name: name.into(),
            service_class: class,
            members: members.iter().copied().collect(),
        }
    }

    fn key(i: u32) -> FlowKey {
        FlowKey::new(UeId(i), FlowId(0))
    }

    fn two_slices() -> (SliceManager, SliceId, SliceId) {
        let mut m = manager();
        let v = m
            .create_slice(desc("video", ServiceClass::RealTimeVideo, &[(LTE, 0.3)]))
            .unwrap();
        let d = m
            .create_slice(desc("data", ServiceClass::BestEffortData, &[(LTE, 0.7), (WLAN, 1.0)]))
            .unwrap();
        (m, v, d)
    }

    /// Exhaustive oracle: fill a slice at `unit` granularity and count.
    fn oracle_slots(budget: f64, unit: f64) -> usize {
        let mut used = 0.0;
        let mut n = 0;
        while used + unit <= budget + 1e-9 {
            used += unit;
            n += 1;
        }
        n
    }

    #[test]
    fn paper_slices_accepted_third_rejected() {
        let (mut m, _, _) = two_slices();
        let err = m
            .create_slice(desc("extra", ServiceClass::BestEffortData, &[(LTE, 0.1)]))
            .unwrap_err();
        assert!(matches!(err, SliceError::Oversubscribed { node: LTE, .. }));
    }

    #[test]
    fn empty_slice_admits_nothing() {
        let mut m = manager();
        let s = m.create_slice(desc("empty", ServiceClass::BestEffortData, &[])).unwrap();
        assert!(matches!(
            m.grant(s, LTE, key(0), 1.0),
            Err(SliceError::NotAMember { .. })
        ));
        assert_eq!(m.slice_throughput(s).unwrap(), 0.0);
    }

    #[test]
    fn video_slice_fills_at_37() {
        let (mut m, v, _) = two_slices();
        assert_eq!(oracle_slots(15.0, 0.4), 37);
        let mut granted = 0;
        for i in 0..50 {
            if m.grant(v, LTE, key(i), 0.4).unwrap() == GrantOutcome::Granted {
                granted += 1;
            }
        }
        assert_eq!(granted, 37);
    }

    #[test]
    fn grant_boundary_examples() {
        // 14.8 used + 0.4 > 15 -> denied; 14.4 used + 0.4 = 14.8 -> granted.
        let (mut m, v, _) = two_slices();
        for i in 0..36 {
            assert_eq!(m.grant(v, LTE, key(i), 0.4).unwrap(), GrantOutcome::Granted);
        }
        assert!((m.admitted_sum(v, LTE).unwrap() - 14.4).abs() < 1e-9);
        assert_eq!(m.grant(v, LTE, key(36), 0.4).unwrap(), GrantOutcome::Granted);
        assert!((m.admitted_sum(v, LTE).unwrap() - 14.8).abs() < 1e-9);
        assert_eq!(m.grant(v, LTE, key(37), 0.4).unwrap(), GrantOutcome::Denied);
        assert!(matches!(
            m.grant(v, WLAN, key(99), 0.4),
            Err(SliceError::NotAMember { .. })
        ));
        assert!(m.grant(SliceId(9), LTE, key(1), 0.4).is_err());
    }

    #[test]
    fn release_round_trip_and_errors() {
        let (mut m, v, _) = two_slices();
        let before = m.admitted_sum(v, LTE).unwrap();
        m.grant(v, LTE, key(1), 0.4).unwrap();
        assert_eq!(m.release(v, LTE, key(1)).unwrap(), 0.4);
        assert_eq!(m.admitted_sum(v, LTE).unwrap(), before);
        assert!(matches!(
            m.release(v, LTE, key(1)),
            Err(SliceError::UnknownFlow { .. })
        ));
        assert!(m.release(v, LTE, key(77)).is_err());
    }

    #[test]
    fn resize_examples() {
        let (mut m, _, d) = two_slices();
        for i in 0..4 {
            m.grant(d, LTE, key(i), 5.0).unwrap();
        }
        assert_eq!(m.admitted_sum(d, LTE).unwrap(), 20.0);
        // 0.5 * 50 = 25 >= 20
        assert_eq!(m.resize_slice(d, LTE, 0.5).unwrap(), ResizeOutcome::Ok);
        // 0.3 * 50 = 15 < 20
        assert_eq!(m.resize_slice(d, LTE, 0.3).unwrap(), ResizeOutcome::Deferred);
        // New admissions see the 15 Mbps limit immediately.
        assert_eq!(m.grant(d, LTE, key(10), 5.0).unwrap(), GrantOutcome::Denied);
        assert!(m.check_no_overcommit().is_ok());
        m.release(d, LTE, key(0)).unwrap();
        assert_eq!(m.limit(d, LTE).unwrap(), 15.0);
    }

    #[test]
    fn grow_past_share_sum_rejected() {
        let (mut m, v, _) = two_slices();
        assert!(matches!(
            m.resize_slice(v, LTE, 0.4),
            Err(SliceError::Oversubscribed { .. })
        ));
    }

    #[test]
    fn adjust_increase_checked() {
        let (mut m, _, d) = two_slices();
        m.grant(d, WLAN, key(0), 20.0).unwrap();
        m.grant(d, WLAN, key(1), 9.7).unwrap();
        assert_eq!(m.adjust(d, WLAN, key(0), 21.0).unwrap(), GrantOutcome::Denied);
        assert_eq!(m.adjust(d, WLAN, key(1), 5.0).unwrap(), GrantOutcome::Granted);
        assert_eq!(m.adjust(d, WLAN, key(0), 24.7).unwrap(), GrantOutcome::Granted);
        assert!(m.adjust(d, WLAN, key(5), 1.0).is_err());
    }

    #[test]
    fn slice_lookup_by_class() {
        let (m, v, d) = two_slices();
        assert_eq!(m.slice_for(QosClass::RealTimeVideo, LTE), Some(v));
        assert_eq!(m.slice_for(QosClass::RealTimeVideo, WLAN), None);
        assert_eq!(m.slice_for(QosClass::BestEffort, WLAN), Some(d));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Grant(u32, bool, u8),
        Release(u32, bool),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u32..30, any::<bool>(), 1u8..12).prop_map(|(f, v, r)| Op::Grant(f, v, r)),
            (0u32..30, any::<bool>()).prop_map(|(f, v)| Op::Release(f, v)),
        ]
    }

    proptest! {
        #[test]
        fn no_overcommit_and_isolation(ops in prop::collection::vec(op(), 1..300)) {
            let (mut m, v, d) = two_slices();
            let (mut solo, v2, _) = two_slices();
            let mut video_trace = Vec::new();
            let mut solo_trace = Vec::new();
            for o in &ops {
                match *o {
                    Op::Grant(f, video, r) => {
                        let (slice, rate) = if video { (v, 0.4) } else { (d, f64::from(r)) };
                        let _ = m.grant(slice, LTE, key(f), rate);
                        if video {
                            let _ = solo.grant(v2, LTE, key(f), 0.4);
                        }
                    }
                    Op::Release(f, video) => {
                        let slice = if video { v } else { d };
                        let _ = m.release(slice, LTE, key(f));
                        if video {
                            let _ = solo.release(v2, LTE, key(f));
                        }
                    }
                }
                prop_assert!(m.check_no_overcommit().is_ok());
                prop_assert!(m.admitted_sum(d, LTE).unwrap() >= 0.0);
                video_trace.push(m.admitted_sum(v, LTE).unwrap());
                solo_trace.push(solo.admitted_sum(v2, LTE).unwrap());
            }
            // Video accounting is unaffected by data-slice activity.
            prop_assert_eq!(video_trace, solo_trace);
            let (g, r, active) = m.ledger();
            prop_assert_eq!(g - r, active as u64);
        }
    }
}
