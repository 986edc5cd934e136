//! Poisson user arrivals with exponential holding times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RandomStream, SimError, SimTime};
use crate::topology::Point;
use crate::types::{QosClass, UeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("{name} must be a finite non-negative rate, got {value}")]
    BadRate { name: &'static str, value: f64 },
    #[error("need duration > warmup >= 0, got duration {duration} and warmup {warmup}")]
    BadWindow { duration: f64, warmup: f64 },
    #[error("mean holding time must be positive, got {0}")]
    BadHold(f64),
    #[error("placement radius must be positive, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Data user arrivals per second.
    pub lambda_d: f64,
    /// Video user arrivals per second.
    pub lambda_v: f64,
    /// Mean holding time, s.
    pub mean_hold: f64,
    /// Simulated time, s.
    pub duration: f64,
    /// Initial interval excluded from metrics, s.
    pub warmup: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            lambda_d: 0.1,
            lambda_v: 0.1,
            mean_hold: 60.0,
            duration: 10_000.0,
            warmup: 500.0,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        for (name, value) in [("lambda_d", self.lambda_d), ("lambda_v", self.lambda_v)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(WorkloadError::BadRate { name, value });
            }
        }
        if !(self.mean_hold > 0.0) || !self.mean_hold.is_finite() {
            return Err(WorkloadError::BadHold(self.mean_hold));
        }
        if !(self.warmup >= 0.0 && self.duration > self.warmup && self.duration.is_finite()) {
            return Err(WorkloadError::BadWindow {
                duration: self.duration,
                warmup: self.warmup,
            });
        }
        Ok(())
    }

    pub fn rate(&self, qos: QosClass) -> f64 {
        match qos {
            QosClass::BestEffort => self.lambda_d,
            QosClass::RealTimeVideo => self.lambda_v,
        }
    }
}

/// Where arriving users are placed: uniformly over a disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub center: Point,
    pub radius_m: f64,
}

impl Placement {
    fn sample(&self, stream: &mut RandomStream) -> Point {
        let r = self.radius_m * stream.uniform().sqrt();
        let theta = std::f64::consts::TAU * stream.uniform();
        Point::new(self.center.x + r * theta.cos(), self.center.y + r * theta.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub ue: UeId,
    pub time: SimTime,
    pub qos: QosClass,
    pub hold: SimTime,
    pub position: Point,
}

impl Arrival {
    pub fn departure(&self) -> SimTime {
        self.time + self.hold
    }
}

fn class_label(qos: QosClass) -> &'static str {
    match qos {
        QosClass::BestEffort => "data",
        QosClass::RealTimeVideo => "video",
    }
}

fn class_arrivals(cfg: &WorkloadConfig, qos: QosClass, placement: &Placement) -> Result<Vec<Arrival>, WorkloadError> {
    let rate = cfg.rate(qos);
    let mut out = Vec::new();
    if rate == 0.0 {
        return Ok(out);
    }
    let label = class_label(qos);
    let mut gaps = RandomStream::new(cfg.seed, &format!("arrivals-{label}"));
    let mut holds = RandomStream::new(cfg.seed, &format!("hold-{label}"));
    let mut places = RandomStream::new(cfg.seed, &format!("position-{label}"));
    let mut t = 0.0;
    loop {
        t += gaps.sample_exp(1.0 / rate)?;
        if t > cfg.duration {
            break;
        }
        out.push(Arrival {
            ue: UeId(0),
            time: t,
            qos,
            hold: holds.sample_exp(cfg.mean_hold)?,
            position: placement.sample(&mut places),
        });
    }
    Ok(out)
}

/// All arrivals in `[0, duration]`, in time order with UE ids assigned in
/// that order. Each class draws from its own streams.
pub fn generate_arrivals(cfg: &WorkloadConfig, placement: &Placement) -> Result<Vec<Arrival>, WorkloadError> {
    cfg.validate()?;
    if !(placement.radius_m > 0.0) {
        return Err(WorkloadError::BadRadius(placement.radius_m));
    }
    let mut all = class_arrivals(cfg, QosClass::BestEffort, placement)?;
    all.extend(class_arrivals(cfg, QosClass::RealTimeVideo, placement)?);
    // Stable sort keeps data ahead of video on exact ties.
    all.sort_by(|a, b| a.time.total_cmp(&b.time));
    for (i, a) in all.iter_mut().enumerate() {
        a.ue = UeId(i as u32);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc() -> Placement {
        Placement {
            center: Point::new(200.0, 0.0),
            radius_m: 100.0,
        }
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        let cfg = WorkloadConfig {
            lambda_d: 0.1,
            lambda_v: 0.0,
            duration: 1e5,
            warmup: 0.0,
            ..Default::default()
        };
        let n = generate_arrivals(&cfg, &disc()).unwrap().len() as f64;
        // Poisson mean 1e4, sd 100.
        assert!((n - 1e4).abs() <= 300.0, "{n}");
    }

    #[test]
    fn zero_rate_zero_events() {
        let cfg = WorkloadConfig {
            lambda_d: 0.0,
            lambda_v: 0.0,
            ..Default::default()
        };
        assert!(generate_arrivals(&cfg, &disc()).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_class_independent() {
        let cfg = WorkloadConfig::default();
        let a = generate_arrivals(&cfg, &disc()).unwrap();
        assert_eq!(a, generate_arrivals(&cfg, &disc()).unwrap());
        // Changing the data rate leaves the video arrivals untouched.
        let more_data = WorkloadConfig { lambda_d: 0.5, ..cfg };
        let video = |v: &[Arrival]| -> Vec<(f64, f64)> {
            v.iter()
                .filter(|x| x.qos == QosClass::RealTimeVideo)
                .map(|x| (x.time, x.hold))
                .collect()
        };
        assert_eq!(video(&a), video(&generate_arrivals(&more_data, &disc()).unwrap()));
    }

    #[test]
    fn positions_inside_disc_and_times_sorted() {
        let a = generate_arrivals(&WorkloadConfig::default(), &disc()).unwrap();
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(a.iter().all(|x| x.position.distance_m(&disc().center) <= 100.0));
        assert!(a.iter().all(|x| x.hold > 0.0));
    }

    #[test]
    fn invalid_configs() {
        let bad = WorkloadConfig {
            duration: 10.0,
            warmup: 20.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(WorkloadError::BadWindow { .. })));
        let bad = WorkloadConfig {
            lambda_v: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
