use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use multirat_core::control::acpf::SelectionPolicy;
use multirat_harness::config::{Scenario, ScenarioConfig};
use multirat_harness::plots;
use multirat_harness::scenario;

#[derive(Debug, Parser)]
#[command(name = "multirat-sim", about = "Run LTE + WLAN controller experiments")]
struct Args {
    /// Built-in experiment to run when no config file is given.
    #[arg(long, value_parser = ["1", "2"])]
    scenario: Option<String>,
    /// TOML experiment description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, replacing the configured ones.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only this selection policy.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<SelectionPolicy>,
    /// Also write the figures.
    #[arg(long)]
    plots: bool,
}

fn parse_policy(s: &str) -> Result<SelectionPolicy, String> {
    SelectionPolicy::from_name(s)
        .ok_or_else(|| format!("unknown policy {s:?}; expected sdn-heuristic, legacy-wlan-first or legacy-signal-based"))
}

fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(n)) => ScenarioConfig::preset(Scenario::try_from(n.parse::<u8>()?)?),
        (None, None) => return Err("give --config or --scenario".into()),
    };
    if let Some(n) = &args.scenario {
        if args.config.is_some() && n.parse::<u8>()? != cfg.scenario.number() {
            return Err(format!("--scenario {n} does not match the config's scenario {}", cfg.scenario.number()).into());
        }
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    if let Some(policy) = args.policy {
        cfg.policies = vec![policy];
    }
    if let Some(out) = args.out {
        cfg.output = out;
    }
    cfg.validate()?;
    let points = cfg.points().len();
    eprintln!("running {points} simulations");
    let result = scenario::run_scenario(&cfg)?;
    result.write_to(&cfg.output)?;
    eprintln!("wrote {}", cfg.output.join("results.csv").display());
    if args.plots {
        for path in plots::emit_plots(&result.csv(), &cfg.output)? {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
