//! Control applications: admission control, RAT selection and mobility.
//!
//! These functions see only RAT-agnostic inputs: load snapshots, slice
//! accounting, generic admission requests and signal reports.

use serde::{Deserialize, Serialize};

use super::messages::{AdmissionRequest, AdmissionResponse};
use crate::slicing::SliceManager;
use crate::topology::{NodeId, Rat};
use crate::types::{QosClass, UeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// Controller heuristic over the global load view.
    SdnHeuristic,
    /// RAT-local choice: WLAN whenever it is in range.
    LegacyWlanFirst,
    /// RAT-local choice: strongest received power.
    LegacySignalBased,
}

impl SelectionPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SelectionPolicy::SdnHeuristic => "sdn-heuristic",
            SelectionPolicy::LegacyWlanFirst => "legacy-wlan-first",
            SelectionPolicy::LegacySignalBased => "legacy-signal-based",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            SelectionPolicy::SdnHeuristic,
            SelectionPolicy::LegacyWlanFirst,
            SelectionPolicy::LegacySignalBased,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

impl std::fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Best-effort users at a node against the number it should take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLoad {
    pub node: NodeId,
    pub users: u32,
    /// WLAN: the association threshold. LTE: data-slice capacity in users.
    pub limit: u32,
}

/// Load of the dBSs covering an arriving UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadSnapshot {
    pub wlan: Option<NodeLoad>,
    pub lte: Option<NodeLoad>,
}

/// WLAN up to its threshold, then LTE up to its data capacity, then WLAN
/// as overflow. `None` when nothing covers the UE.
pub fn acpf_select_rat(snapshot: &LoadSnapshot) -> Option<NodeId> {
    if let Some(w) = snapshot.wlan {
        if w.users < w.limit {
            return Some(w.node);
        }
    }
    if let Some(l) = snapshot.lte {
        if l.users < l.limit {
            return Some(l.node);
        }
    }
    snapshot.wlan.map(|w| w.node)
}

/// UE-local selection without any load information.
pub fn baseline_legacy_select(policy: SelectionPolicy, signals: &[(NodeId, f64)]) -> Option<NodeId> {
    match policy {
        SelectionPolicy::LegacyWlanFirst => signals
            .iter()
            .find(|(n, _)| n.rat() == Some(Rat::Wlan))
            .or_else(|| signals.iter().find(|(n, _)| n.rat() == Some(Rat::Lte)))
            .map(|(n, _)| *n),
        SelectionPolicy::LegacySignalBased | SelectionPolicy::SdnHeuristic => strongest(signals),
    }
}

fn strongest(signals: &[(NodeId, f64)]) -> Option<NodeId> {
    signals
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(n, _)| n)
}

/// Rates the applications plan with, Mbps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePlan {
    /// Best-effort demand; the LTE per-user rate.
    pub data_mbps: f64,
    pub video_mbps: f64,
}

impl RatePlan {
    /// Rate a new flow of `qos` asks for at `node`, or `None` if the flow is
    /// not eligible there. WLAN best-effort flows are elastic and take a fair
    /// share, so they ask for nothing up front.
    pub fn demand_at(&self, qos: QosClass, node: NodeId) -> Option<f64> {
        match (qos, node.rat()?) {
            (QosClass::BestEffort, Rat::Lte) => Some(self.data_mbps),
            (QosClass::BestEffort, Rat::Wlan) => Some(0.0),
            (QosClass::RealTimeVideo, Rat::Lte) => Some(self.video_mbps),
            (QosClass::RealTimeVideo, Rat::Wlan) => None,
        }
    }
}

/// Accept iff the slice serving the request's class at the target node can
/// grant the requested rate (per carried flow on handover).
pub fn acpf_admission(slices: &SliceManager, plan: &RatePlan, req: &AdmissionRequest) -> AdmissionResponse {
    let reject = AdmissionResponse {
        ue: req.ue,
        node: req.node,
        accepted: false,
        slice: None,
    };
    let Some(slice) = slices.slice_for(req.qos, req.node) else {
        return reject;
    };
    let Some(per_flow) = plan.demand_at(req.qos, req.node) else {
        return reject;
    };
    let flows = req.flows.len().max(1) as f64;
    let fits = match slices.limit(slice, req.node) {
        // Elastic flows only need a non-empty share.
        Ok(limit) if per_flow == 0.0 => limit > 0.0,
        Ok(_) => slices
            .can_grant(slice, req.node, per_flow * flows)
            .unwrap_or(false),
        Err(_) => false,
    };
    AdmissionResponse {
        ue: req.ue,
        node: req.node,
        accepted: fits,
        slice: fits.then_some(slice),
    }
}

/// RAT-neutral measurement report.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalReport {
    pub ue: UeId,
    pub serving: NodeId,
    pub measurements: Vec<(NodeId, f64)>,
}

/// Best non-serving node whose signal beats the serving one by at least
/// `hysteresis_db` and which `admits` the UE. Ties favour the lower node id.
pub fn acpf_mobility(report: &SignalReport, hysteresis_db: f64, admits: impl Fn(NodeId) -> bool) -> Option<NodeId> {
    let serving_rx = report
        .measurements
        .iter()
        .find(|(n, _)| *n == report.serving)
        .map(|(_, rx)| *rx)?;
    let candidates: Vec<(NodeId, f64)> = report
        .measurements
        .iter()
        .copied()
        .filter(|(n, rx)| *n != report.serving && *rx - serving_rx >= hysteresis_db)
        .collect();
    let best = strongest(&candidates)?;
    admits(best).then_some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicing::{ServiceClass, SliceDescriptor};
    use crate::types::{FlowId, FlowKey};
    use proptest::prelude::*;

    const LTE: NodeId = NodeId::lte(0);
    const WLAN: NodeId = NodeId::wlan(0);

    fn snap(wlan: Option<(u32, u32)>, lte: Option<(u32, u32)>) -> LoadSnapshot {
        LoadSnapshot {
            wlan: wlan.map(|(users, limit)| NodeLoad {
                node: WLAN,
                users,
                limit,
            }),
            lte: lte.map(|(users, limit)| NodeLoad { node: LTE, users, limit }),
        }
    }

    #[test]
    fn heuristic_examples() {
        assert_eq!(acpf_select_rat(&snap(Some((0, 5)), Some((0, 10)))), Some(WLAN));
        assert_eq!(acpf_select_rat(&snap(Some((5, 5)), Some((3, 10)))), Some(LTE));
        assert_eq!(acpf_select_rat(&snap(Some((5, 5)), Some((10, 10)))), Some(WLAN));
        assert_eq!(acpf_select_rat(&snap(None, Some((10, 10)))), None);
        assert_eq!(acpf_select_rat(&snap(None, Some((2, 10)))), Some(LTE));
        assert_eq!(acpf_select_rat(&LoadSnapshot::default()), None);
    }

    #[test]
    fn overflow_beats_rejection() {
        // Brute force: with LTE full, compare total carried rate if the
        // arrival overflows onto WLAN versus being rejected.
        let (cap, per_user, n_w, lte_slots) = (29.7, 5.0, 5u32, 10u32);
        let wlan_rate = |k: u32| (f64::from(k) * per_user).min(cap);
        for k in n_w..n_w + 8 {
            let lte = f64::from(lte_slots) * per_user;
            let overflow = wlan_rate(k + 1) + lte;
            let reject = wlan_rate(k) + lte;
            assert!(overflow >= reject);
            assert_eq!(
                acpf_select_rat(&snap(Some((k, n_w)), Some((lte_slots, lte_slots)))),
                Some(WLAN)
            );
        }
    }

    #[test]
    fn legacy_examples() {
        let both = [(LTE, -82.1), (WLAN, -105.1)];
        assert_eq!(baseline_legacy_select(SelectionPolicy::LegacyWlanFirst, &both), Some(WLAN));
        assert_eq!(baseline_legacy_select(SelectionPolicy::LegacySignalBased, &both), Some(LTE));
        let lte_only = [(LTE, -90.0)];
        assert_eq!(baseline_legacy_select(SelectionPolicy::LegacyWlanFirst, &lte_only), Some(LTE));
        assert_eq!(baseline_legacy_select(SelectionPolicy::LegacySignalBased, &lte_only), Some(LTE));
        assert_eq!(baseline_legacy_select(SelectionPolicy::LegacySignalBased, &[]), None);
    }

    #[test]
    fn policy_names() {
        for p in [
            SelectionPolicy::SdnHeuristic,
            SelectionPolicy::LegacyWlanFirst,
            SelectionPolicy::LegacySignalBased,
        ] {
            assert_eq!(SelectionPolicy::from_name(p.name()), Some(p));
        }
    }

    fn video_slices() -> SliceManager {
        let mut m = SliceManager::new([(LTE, 50.0), (WLAN, 29.7)]);
        m.create_slice(SliceDescriptor {
            name: "video".into(),
            service_class: ServiceClass::RealTimeVideo,
            members: [(LTE, 0.3)].into_iter().collect(),
        })
        .unwrap();
        m.create_slice(SliceDescriptor {
            name: "data".into(),
            service_class: ServiceClass::BestEffortData,
            members: [(LTE, 0.7), (WLAN, 1.0)].into_iter().collect(),
        })
        .unwrap();
        m
    }

    fn req(ue: u32, qos: QosClass, node: NodeId) -> AdmissionRequest {
        AdmissionRequest {
            ue: UeId(ue),
            qos,
            node,
            flows: vec![],
            handover: false,
        }
    }

    const PLAN: RatePlan = RatePlan {
        data_mbps: 5.0,
        video_mbps: 0.4,
    };

    #[test]
    fn video_admission_boundary() {
        // floor(0.3 * 50 / 0.4) = 37 slots; count them exhaustively.
        let mut m = video_slices();
        let video = m.slice_for(QosClass::RealTimeVideo, LTE).unwrap();
        let mut slots = 0u32;
        while m.can_grant(video, LTE, 0.4).unwrap() {
            m.grant(video, LTE, FlowKey::new(UeId(slots), FlowId(0)), 0.4).unwrap();
            slots += 1;
        }
        assert_eq!(slots, 37);
        m.release(video, LTE, FlowKey::new(UeId(0), FlowId(0))).unwrap();
        // 36 of 37 used
        assert!(acpf_admission(&m, &PLAN, &req(100, QosClass::RealTimeVideo, LTE)).accepted);
        m.grant(video, LTE, FlowKey::new(UeId(0), FlowId(0)), 0.4).unwrap();
        // 37 of 37 used
        let resp = acpf_admission(&m, &PLAN, &req(100, QosClass::RealTimeVideo, LTE));
        assert!(!resp.accepted);
        assert_eq!(resp.slice, None);
    }

    #[test]
    fn data_admission_on_wlan_and_video_ineligible() {
        let m = video_slices();
        let r = acpf_admission(&m, &PLAN, &req(1, QosClass::BestEffort, WLAN));
        assert!(r.accepted);
        assert_eq!(r.slice, m.slice_for(QosClass::BestEffort, WLAN));
        assert!(!acpf_admission(&m, &PLAN, &req(1, QosClass::RealTimeVideo, WLAN)).accepted);
    }

    #[test]
    fn mobility_examples() {
        let report = |target_rx: f64| SignalReport {
            ue: UeId(1),
            serving: WLAN,
            measurements: vec![(WLAN, -70.0), (LTE, target_rx)],
        };
        assert_eq!(acpf_mobility(&report(-65.0), 3.0, |_| true), Some(LTE));
        assert_eq!(acpf_mobility(&report(-69.0), 3.0, |_| true), None);
        assert_eq!(acpf_mobility(&report(-65.0), 3.0, |_| false), None);
    }

    proptest! {
        #[test]
        fn selection_scale_invariant(
            wu in 0u32..20, wl in 0u32..20, lu in 0u32..20, ll in 0u32..20,
            has_w in any::<bool>(), has_l in any::<bool>(), c in 1u32..8,
        ) {
            let base = snap(has_w.then_some((wu, wl)), has_l.then_some((lu, ll)));
            let scaled = snap(has_w.then_some((wu * c, wl * c)), has_l.then_some((lu * c, ll * c)));
            prop_assert_eq!(acpf_select_rat(&base), acpf_select_rat(&scaled));
        }

        #[test]
        fn mobility_matches_brute_force(
            serving_rx in -110.0f64..-40.0,
            others in prop::collection::vec(-110.0f64..-40.0, 1..5),
            h in 0.0f64..6.0,
        ) {
            let mut measurements = vec![(NodeId::wlan(0), serving_rx)];
            for (i, rx) in others.iter().enumerate() {
                measurements.push((NodeId::lte(i as u16), *rx));
            }
            let report = SignalReport { ue: UeId(0), serving: NodeId::wlan(0), measurements: measurements.clone() };
            let got = acpf_mobility(&report, h, |_| true);
            // Brute force: best-signal node overall; hand over iff it is not
            // the serving node and clears the hysteresis.
            let mut best = measurements[0];
            for m in &measurements[1..] {
                if m.1 > best.1 || (m.1 == best.1 && m.0 < best.0) {
                    best = *m;
                }
            }
            let expected = (best.0 != NodeId::wlan(0) && best.1 - serving_rx >= h).then_some(best.0);
            prop_assert_eq!(got, expected);
        }
    }
}
