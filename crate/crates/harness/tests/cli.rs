use std::path::Path;
use std::process::Command;

use multirat_harness::config::ScenarioConfig;
use multirat_harness::plots::{emit_plots, PlotError};
use multirat_harness::scenario::{run_scenario, CSV_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multirat-sim"))
}

fn repo_config(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_match_presets() {
    for (file, preset) in [
        ("scenario1.toml", ScenarioConfig::scenario_one()),
        ("scenario2.toml", ScenarioConfig::scenario_two()),
    ] {
        let cfg = ScenarioConfig::load(&repo_config(file)).unwrap();
        let points = cfg.points();
        assert_eq!(points, preset.points(), "{file}");
        for p in &points {
            assert_eq!(cfg.sim_config(p), preset.sim_config(p), "{file}");
        }
    }
}

#[test]
fn cli_writes_results_trace_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        r#"
scenario = 1
policies = ["sdn-heuristic", "legacy-wlan-first"]
seeds = [1]
[[sweep]]
lambda_d = [0.05, 0.1]
lambda_v = [0.0]
[run]
duration = 600.0
warmup = 60.0
[[slices]]
name = "data"
class = "data"
lte = 1.0
wlan = 1.0
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--plots")
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(std::fs::read_to_string(out.join("trace.log")).unwrap().lines().count() > 10);
    for f in ["fig_a.svg", "fig_b.svg"] {
        assert!(std::fs::read_to_string(out.join(f)).unwrap().starts_with("<svg"));
    }
    assert!(!out.join("fig_c.svg").exists());
}

#[test]
fn policy_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "scenario = 1\npolicies = [\"sdn-heuristic\"]\nseeds = [1]\n[[sweep]]\nlambda_d = [0.05]\nlambda_v = [0.0]\n[run]\nduration = 300.0\nwarmup = 0.0\n[[slices]]\nname = \"data\"\nclass = \"data\"\nlte = 1.0\nwlan = 1.0\n",
    )
    .unwrap();
    let status = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--policy", "legacy-signal-based", "--seeds", "4,5", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("1,legacy-signal-based,0.05,0,")));
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "scenario = 1\npolicies = []\nseeds = [1]\nsweep = []\nslices = []\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no policies"));

    let out = bin().args(["--scenario", "1", "--policy", "random"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn slicing_plots_and_video_constancy() {
    let mut cfg = ScenarioConfig::scenario_two();
    cfg.seeds = vec![1, 2];
    cfg.run.duration = 1500.0;
    cfg.run.warmup = 100.0;
    cfg.sweeps[0].lambda_d = vec![0.05, 0.2, 0.6];
    cfg.sweeps[1].lambda_v = vec![0.1, 0.5, 1.0];
    let res = run_scenario(&cfg).unwrap();
    let csv = res.csv();
    // Video throughput is the same at every data rate for a given seed, up
    // to summation order; (0.1, 0.1) comes from the second sweep.
    for seed in [1, 2] {
        let video: Vec<f64> = res
            .rows()
            .filter(|r| r.seed == seed && r.slice == "video" && r.lambda_v == 0.1)
            .map(|r| r.throughput_mbps)
            .collect();
        assert_eq!(video.len(), 4);
        assert!(video.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-9 * w[0]), "{video:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let written = emit_plots(&csv, dir.path()).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["fig_c.svg", "fig_d.svg"]);
    // Plotting does not touch the numbers.
    let before = std::fs::read(&written[0]).unwrap();
    emit_plots(&csv, dir.path()).unwrap();
    assert_eq!(before, std::fs::read(&written[0]).unwrap());
    assert!(matches!(emit_plots("", dir.path()), Err(PlotError::MissingColumn("scenario"))));
    assert!(matches!(emit_plots(&format!("{CSV_HEADER}\n"), dir.path()), Err(PlotError::Empty)));
}
