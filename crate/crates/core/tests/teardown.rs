use multirat_core::control::acpf::SelectionPolicy;
use multirat_core::simulation::{MobilityModel, SimConfig, World};
use multirat_core::topology::Point;
use multirat_core::types::UeId;
use multirat_core::workload::{generate_arrivals, Placement};

fn check_teardown(cfg: SimConfig) -> usize {
    let settle = 10.0 * cfg.timing.hop_delay_s;
    let mut world = World::new(cfg).unwrap();
    let mut seen = 0;
    let mut pending: Vec<(UeId, f64)> = Vec::new();
    let mut checked = 0;
    while let Some(now) = world.step() {
        for l in &world.lifetimes()[seen..] {
            // Radio state at the dBSs goes with the link.
            for node in world.dataplane().nodes_referencing(l.ue) {
                assert!(!node.is_dbs(), "{} left state at {node}", l.ue);
            }
            pending.push((l.ue, now));
        }
        seen = world.lifetimes().len();
        pending.retain(|&(ue, left)| {
            if now < left + settle {
                return true;
            }
            assert!(world.dataplane().nodes_referencing(ue).is_empty(), "{ue} not torn down");
            assert!(world.controller().ues().get(ue).is_none());
            assert!(world.controller().slices().grants_of(ue).is_empty());
            checked += 1;
            false
        });
    }
    checked
}

#[test]
fn departures_leave_nothing_behind() {
    for policy in [
        SelectionPolicy::SdnHeuristic,
        SelectionPolicy::LegacyWlanFirst,
        SelectionPolicy::LegacySignalBased,
    ] {
        let mut cfg = SimConfig::scenario_one(policy, 0.2, 31);
        cfg.workload.duration = 1200.0;
        assert!(check_teardown(cfg) > 100);
    }
    let mut cfg = SimConfig::scenario_two(0.3, 0.8, 32);
    cfg.workload.duration = 1200.0;
    assert!(check_teardown(cfg) > 100);
}

#[test]
fn departures_after_handover_leave_nothing_behind() {
    let mut cfg = SimConfig::scenario_two(0.3, 0.2, 33);
    cfg.workload.duration = 1200.0;
    cfg.workload.mean_hold = 15.0;
    cfg.mobility = Some(MobilityModel {
        speed_mps: 10.0,
        start_radius_m: 10.0,
        travel_m: 95.0,
    });
    assert!(check_teardown(cfg) > 100);
}

#[test]
fn quiescent_network_is_empty() {
    let mut cfg = SimConfig::scenario_two(0.2, 0.2, 34);
    cfg.workload.duration = 500.0;
    cfg.workload.warmup = 0.0;
    let placement = Placement {
        center: Point::new(200.0, 0.0),
        radius_m: 100.0,
    };
    let arrivals = generate_arrivals(&cfg.workload, &placement).unwrap();
    // Nobody arrives after 500 s; by 5000 s everyone has left.
    cfg.workload.duration = 5000.0;
    let mut world = World::with_arrivals(cfg, arrivals.clone()).unwrap();
    world.run_until(5000.0);
    assert_eq!(world.lifetimes().len(), arrivals.len());
    for node in world.dataplane().nodes() {
        assert!(node.attached.is_empty() && node.flow_table.is_empty() && node.bearers.is_empty(), "{}", node.node);
    }
    let (grants, releases, active) = world.controller().slices().ledger();
    assert!(grants > 0);
    assert_eq!((grants, active), (releases, 0));
    assert!(world.controller().ues().is_empty());
}
