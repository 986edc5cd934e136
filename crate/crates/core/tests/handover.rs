use multirat_core::control::acpf::SelectionPolicy;
use multirat_core::control::messages::{Endpoint, MessageKind};
use multirat_core::control::trace::{records_for, TraceKind};
use multirat_core::simulation::{run, single_data_slice, MobilityModel, RunOutput, SimConfig};
use multirat_core::topology::NodeId;
use multirat_core::workload::WorkloadConfig;

fn mobile(seed: u64, duration: f64) -> SimConfig {
    let mut cfg = SimConfig::new(
        SelectionPolicy::SdnHeuristic,
        single_data_slice(),
        WorkloadConfig {
            lambda_d: 0.3,
            lambda_v: 0.0,
            mean_hold: 15.0,
            duration,
            warmup: 0.0,
            seed,
        },
    );
    // Walk from near the AP to just inside its edge; the LTE signal wins by
    // the hysteresis margin before the UE leaves WLAN coverage.
    cfg.mobility = Some(MobilityModel {
        speed_mps: 10.0,
        start_radius_m: 10.0,
        travel_m: 95.0,
    });
    cfg
}

fn handed_over(out: &RunOutput) -> impl Iterator<Item = &multirat_core::simulation::UeLifetime> {
    out.lifetimes.iter().filter(|l| l.handovers > 0)
}

#[test]
fn handover_keeps_the_authenticated_context() {
    let out = run(mobile(21, 1500.0)).unwrap();
    assert!(handed_over(&out).count() > 100);
    for l in &out.lifetimes {
        if l.admitted {
            assert_eq!(l.auth_transitions, 1, "{l:?}");
        }
    }
    assert_eq!(out.stats.handover_audit_failures, 0);
    assert_eq!(out.controller.protocol_errors, 0, "{:?}", out.controller.errors);
    assert_eq!(out.stats.overcommit_violations, 0);
}

#[test]
fn handover_call_flow_skips_authentication() {
    let out = run(mobile(22, 800.0)).unwrap();
    use MessageKind as K;
    let mut to_lte = 0;
    for l in handed_over(&out) {
        let recs = records_for(&out.trace, l.ue);
        let command = recs
            .iter()
            .position(|r| r.kind == TraceKind::Message(K::HandoverCommand))
            .expect("command traced");
        let after: Vec<TraceKind> = recs[command..].iter().map(|r| r.kind).collect();
        assert!(!after.contains(&TraceKind::AuthTransition), "{}", l.ue);
        let (request, setup, source_request) = match recs[command + 1].dst {
            Endpoint::Node(n) if n == NodeId::lte(0) => {
                to_lte += 1;
                (K::RrcConnectionRequest, K::RrcConnectionSetup, K::WlanAssocRequest)
            }
            Endpoint::Node(n) if n == NodeId::wlan(0) => {
                (K::WlanAssocRequest, K::WlanAssocResponse, K::RrcConnectionRequest)
            }
            other => panic!("handover request sent to {other}"),
        };
        let expected: Vec<TraceKind> = [
            K::HandoverCommand,
            request,
            K::AdmissionRequest,
            K::AdmissionResponse,
            setup,
            K::BearerSetup,
            K::AttachRequest,
            K::AttachAccept,
            K::BearerSetup,
        ]
        .into_iter()
        .map(TraceKind::Message)
        .collect();
        assert_eq!(&after[..expected.len()], &expected[..], "{}", l.ue);
        assert_eq!(recs[0].kind, TraceKind::Message(source_request));
    }
    assert!(to_lte > 50, "{to_lte}");
}

#[test]
fn static_users_never_hand_over() {
    let mut cfg = mobile(23, 600.0);
    cfg.mobility = None;
    let out = run(cfg).unwrap();
    assert_eq!(out.controller.handovers, 0);
    assert!(!out
        .trace
        .iter()
        .any(|r| r.kind == TraceKind::Message(MessageKind::MeasurementReport)));
}
