//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use multirat_core::control::acpf::SelectionPolicy;
use multirat_core::control::ControllerConfig;
use multirat_core::radio::RadioParams;
use multirat_core::simulation::{MobilityModel, SimConfig};
use multirat_core::slicing::{ServiceClass, SliceDescriptor};
use multirat_core::topology::NodeId;
use multirat_core::workload::WorkloadConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scenario {
    /// RAT selection against the legacy baselines.
    One,
    /// Video and data slices.
    Two,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

impl TryFrom<u8> for Scenario {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        match n {
            1 => Ok(Scenario::One),
            2 => Ok(Scenario::Two),
            _ => Err(format!("scenario must be 1 or 2, got {n}")),
        }
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.number()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceClass {
    Video,
    Data,
}

/// A slice as written in the config: shares of the LTE and WLAN dBS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub name: String,
    pub class: SliceClass,
    #[serde(default)]
    pub lte: f64,
    #[serde(default)]
    pub wlan: f64,
}

impl SliceSpec {
    pub fn to_descriptor(&self) -> SliceDescriptor {
        let members: BTreeMap<NodeId, f64> = [(NodeId::lte(0), self.lte), (NodeId::wlan(0), self.wlan)]
            .into_iter()
            .filter(|(_, share)| *share > 0.0)
            .collect();
        SliceDescriptor {
            name: self.name.clone(),
            service_class: match self.class {
                SliceClass::Video => ServiceClass::RealTimeVideo,
                SliceClass::Data => ServiceClass::BestEffortData,
            },
            members,
        }
    }
}

/// One line of the experiment: every combination of the listed rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub lambda_d: Vec<f64>,
    pub lambda_v: Vec<f64>,
}

/// Optional controller overrides; unset fields keep the radio-derived
/// defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub wlan_threshold: Option<u32>,
    pub hysteresis_db: Option<f64>,
    pub auth_delay_s: Option<f64>,
    pub handover_timeout_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySpec {
    pub speed_mps: f64,
    pub start_radius_m: f64,
    pub travel_m: f64,
}

/// Holding time, run length and warm-up shared by all points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunLength {
    pub mean_hold: f64,
    pub duration: f64,
    pub warmup: f64,
}

impl Default for RunLength {
    fn default() -> Self {
        let w = WorkloadConfig::default();
        Self {
            mean_hold: w.mean_hold,
            duration: w.duration,
            warmup: w.warmup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub policies: Vec<SelectionPolicy>,
    pub seeds: Vec<u64>,
    #[serde(rename = "sweep")]
    pub sweeps: Vec<Sweep>,
    #[serde(default)]
    pub run: RunLength,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default)]
    pub controller: ControllerSpec,
    pub slices: Vec<SliceSpec>,
    #[serde(default)]
    pub mobility: Option<MobilitySpec>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A single simulation in the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPoint {
    pub lambda_d: f64,
    pub lambda_v: f64,
    pub seed: u64,
    pub policy: SelectionPolicy,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Default RAT selection experiment.
    pub fn scenario_one() -> Self {
        Self {
            scenario: Scenario::One,
            policies: vec![
                SelectionPolicy::SdnHeuristic,
                SelectionPolicy::LegacyWlanFirst,
                SelectionPolicy::LegacySignalBased,
            ],
            seeds: (1..=5).collect(),
            sweeps: vec![Sweep {
                lambda_d: vec![0.02, 0.05, 0.08, 0.11, 0.14, 0.17, 0.20],
                lambda_v: vec![0.0],
            }],
            run: RunLength::default(),
            radio: RadioParams::default(),
            controller: ControllerSpec::default(),
            slices: vec![SliceSpec {
                name: "data".into(),
                class: SliceClass::Data,
                lte: 1.0,
                wlan: 1.0,
            }],
            mobility: None,
            output: default_output(),
        }
    }

    /// Default slicing experiment: a data-rate sweep at fixed video load and
    /// a video-rate sweep at fixed data load.
    pub fn scenario_two() -> Self {
        Self {
            scenario: Scenario::Two,
            policies: vec![SelectionPolicy::SdnHeuristic],
            seeds: (1..=5).collect(),
            sweeps: vec![
                Sweep {
                    lambda_d: vec![0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
                    lambda_v: vec![0.1],
                },
                Sweep {
                    lambda_d: vec![0.1],
                    lambda_v: (1..=10).map(|i| f64::from(i) / 10.0).collect(),
                },
            ],
            run: RunLength::default(),
            radio: RadioParams::default(),
            controller: ControllerSpec::default(),
            slices: vec![
                SliceSpec {
                    name: "video".into(),
                    class: SliceClass::Video,
                    lte: 0.3,
                    wlan: 0.0,
                },
                SliceSpec {
                    name: "data".into(),
                    class: SliceClass::Data,
                    lte: 0.7,
                    wlan: 1.0,
                },
            ],
            mobility: None,
            output: default_output(),
        }
    }

    pub fn preset(scenario: Scenario) -> Self {
        match scenario {
            Scenario::One => Self::scenario_one(),
            Scenario::Two => Self::scenario_two(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.policies.is_empty() {
            return invalid("no policies listed".into());
        }
        if self.seeds.is_empty() {
            return invalid("no seeds listed".into());
        }
        if self.sweeps.is_empty() || self.sweeps.iter().any(|s| s.lambda_d.is_empty() || s.lambda_v.is_empty()) {
            return invalid("every sweep needs at least one lambda_d and one lambda_v".into());
        }
        if self.slices.is_empty() {
            return invalid("no slices defined".into());
        }
        for p in self.points() {
            let w = self.workload(&p);
            w.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.radio.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for s in &self.slices {
            if !(0.0..=1.0).contains(&s.lte) || !(0.0..=1.0).contains(&s.wlan) || s.lte + s.wlan == 0.0 {
                return invalid(format!("slice {:?} needs shares in [0, 1], not both zero", s.name));
            }
        }
        for (rat, total) in [
            ("lte", self.slices.iter().map(|s| s.lte).sum::<f64>()),
            ("wlan", self.slices.iter().map(|s| s.wlan).sum::<f64>()),
        ] {
            if total > 1.0 + 1e-9 {
                return invalid(format!("slice shares at {rat} sum to {total} > 1"));
            }
        }
        if let Some(m) = self.mobility {
            if !(m.speed_mps > 0.0 && m.start_radius_m > 0.0 && m.travel_m >= 0.0) {
                return invalid("mobility needs positive speed and start radius".into());
            }
        }
        Ok(())
    }

    /// Every run, ordered by rates, then seed, then policy. Points shared by
    /// several sweeps are run once.
    pub fn points(&self) -> Vec<RunPoint> {
        let mut rates: Vec<(f64, f64)> = self
            .sweeps
            .iter()
            .flat_map(|s| {
                s.lambda_d
                    .iter()
                    .flat_map(move |&d| s.lambda_v.iter().map(move |&v| (d, v)))
            })
            .collect();
        rates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        rates.dedup();
        let mut out = Vec::new();
        for (lambda_d, lambda_v) in rates {
            for &seed in &self.seeds {
                for &policy in &self.policies {
                    out.push(RunPoint {
                        lambda_d,
                        lambda_v,
                        seed,
                        policy,
                    });
                }
            }
        }
        out
    }

    fn workload(&self, p: &RunPoint) -> WorkloadConfig {
        WorkloadConfig {
            lambda_d: p.lambda_d,
            lambda_v: p.lambda_v,
            mean_hold: self.run.mean_hold,
            duration: self.run.duration,
            warmup: self.run.warmup,
            seed: p.seed,
        }
    }

    pub fn sim_config(&self, p: &RunPoint) -> SimConfig {
        let slices = self.slices.iter().map(SliceSpec::to_descriptor).collect();
        let mut cfg = SimConfig::new(p.policy, slices, self.workload(p));
        cfg.radio = self.radio;
        let mut ctrl = ControllerConfig::from_radio(&self.radio);
        let o = self.controller;
        ctrl.wlan_threshold = o.wlan_threshold.unwrap_or(ctrl.wlan_threshold);
        ctrl.hysteresis_db = o.hysteresis_db.unwrap_or(ctrl.hysteresis_db);
        ctrl.auth_delay_s = o.auth_delay_s.unwrap_or(ctrl.auth_delay_s);
        ctrl.handover_timeout_s = o.handover_timeout_s.unwrap_or(ctrl.handover_timeout_s);
        cfg.controller = ctrl;
        cfg.mobility = self.mobility.map(|m| MobilityModel {
            speed_mps: m.speed_mps,
            start_radius_m: m.start_radius_m,
            travel_m: m.travel_m,
        });
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ScenarioConfig::scenario_one().validate().unwrap();
        ScenarioConfig::scenario_two().validate().unwrap();
    }

    #[test]
    fn point_order_and_dedup() {
        let cfg = ScenarioConfig::scenario_two();
        let pts = cfg.points();
        // 8 data rates plus 10 video rates, sharing (0.1, 0.1), times 5 seeds.
        assert_eq!(pts.len(), 17 * 5);
        assert!(pts
            .windows(2)
            .all(|w| (w[0].lambda_d, w[0].lambda_v, w[0].seed) <= (w[1].lambda_d, w[1].lambda_v, w[1].seed)));
    }

    #[test]
    fn scenario_one_row_count() {
        let cfg = ScenarioConfig::scenario_one();
        assert_eq!(cfg.points().len(), 3 * 7 * 5);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ScenarioConfig::scenario_two();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::scenario_two();
        cfg.slices[0].lte = 0.5;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(m)) if m.contains("lte")));
        let mut cfg = ScenarioConfig::scenario_one();
        cfg.run.warmup = cfg.run.duration;
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::from_toml("scenario = 3").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::scenario_two();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    }
}
