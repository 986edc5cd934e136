use multirat_core::simulation::{SimConfig, World};
use multirat_core::topology::{NodeId, Point};
use multirat_core::types::{QosClass, SliceId};
use multirat_core::workload::{generate_arrivals, Arrival, Placement};

fn video_accounting(cfg: &SimConfig, arrivals: Vec<Arrival>) -> Vec<(u64, u64)> {
    let mut world = World::with_arrivals(cfg.clone(), arrivals).unwrap();
    let video = SliceId(0);
    let mut out = Vec::new();
    let mut last = 0.0;
    while let Some(t) = world.step() {
        let sum = world.controller().slices().admitted_sum(video, NodeId::lte(0)).unwrap();
        if sum != last {
            out.push((t.to_bits(), sum.to_bits()));
            last = sum;
        }
    }
    out
}

#[test]
fn video_accounting_ignores_data_traffic() {
    for (lambda_d, seed) in [(0.4, 41), (1.0, 42)] {
        let mut cfg = SimConfig::scenario_two(lambda_d, 0.6, seed);
        cfg.workload.duration = 2000.0;
        cfg.workload.warmup = 0.0;
        let placement = Placement {
            center: Point::new(200.0, 0.0),
            radius_m: 100.0,
        };
        let all = generate_arrivals(&cfg.workload, &placement).unwrap();
        let video_only: Vec<Arrival> = all.iter().copied().filter(|a| a.qos == QosClass::RealTimeVideo).collect();
        assert!(all.len() > video_only.len() + 500);
        let with_data = video_accounting(&cfg, all);
        assert!(with_data.len() > 100);
        assert_eq!(with_data, video_accounting(&cfg, video_only));
    }
}
