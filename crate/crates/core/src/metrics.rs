//! Time-weighted metric collection and the loss-system oracles.

use std::collections::BTreeMap;

use crate::sim::SimTime;
use crate::types::{QosClass, SliceId};

/// Erlang-B blocking probability by the standard recursion.
pub fn erlang_b(offered_load: f64, servers: u32) -> f64 {
    assert!(offered_load >= 0.0, "offered load must be non-negative");
    let mut b = 1.0;
    for c in 1..=servers {
        let ab = offered_load * b;
        b = ab / (f64::from(c) + ab);
    }
    b
}

/// Blocking of an M/M/C/C system from its stationary distribution, solved
/// as the linear system `pi Q = 0, sum(pi) = 1` by Gaussian elimination.
pub fn ctmc_blocking_oracle(lambda: f64, mean_hold: f64, servers: u32) -> f64 {
    assert!(servers <= 64, "oracle is meant for small systems");
    assert!(lambda >= 0.0 && mean_hold > 0.0);
    let n = servers as usize + 1;
    if n == 1 {
        return 1.0;
    }
    let mu = 1.0 / mean_hold;
    // Generator Q: birth at rate lambda below C, death at k * mu.
    let mut q = vec![vec![0.0; n]; n];
    for k in 0..n {
        if k + 1 < n {
            q[k][k + 1] = lambda;
        }
        if k > 0 {
            q[k][k - 1] = k as f64 * mu;
        }
        q[k][k] = -q[k].iter().sum::<f64>();
    }
    // Rows of the system are columns of Q; the last equation is replaced by
    // normalisation.
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().take(n).enumerate() {
            *cell = if i == n - 1 { 1.0 } else { q[j][i] };
        }
        row[n] = if i == n - 1 { 1.0 } else { 0.0 };
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        a.swap(col, pivot);
        let p = a[col][col];
        for x in &mut a[col][col..] {
            *x /= p;
        }
        let pivot_row = a[col].clone();
        for (i, row) in a.iter_mut().enumerate() {
            let f = row[col];
            if i != col && f != 0.0 {
                for (x, &y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * y;
                }
            }
        }
    }
    a[n - 1][n]
}

/// Normal-approximation 95% confidence interval for a binomial proportion.
pub fn binomial_ci95(p: f64, n: u64) -> (f64, f64) {
    let half = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
    (p - half, p + half)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub arrivals: u64,
    pub admitted: u64,
    pub blocked: u64,
}

impl ClassCounts {
    /// `None` when nothing arrived.
    pub fn blocking_prob(&self) -> Option<f64> {
        (self.arrivals > 0).then(|| self.blocked as f64 / self.arrivals as f64)
    }
}

/// Instantaneous state the collector integrates between events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateSample {
    /// Admitted rate per slice, Mbps.
    pub slice_rates: Vec<(SliceId, f64)>,
    /// Sum over data flows of rate times path latency.
    pub latency_weighted: f64,
    /// Sum of data flow rates, Mbps.
    pub data_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceInfo {
    pub id: SliceId,
    pub name: String,
    pub qos: QosClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    pub id: SliceId,
    pub name: String,
    pub qos: QosClass,
    /// Time-average admitted rate, Mbps.
    pub throughput_mbps: f64,
    /// Traffic-weighted mean path latency, s; data slices only.
    pub mean_latency_s: Option<f64>,
    pub blocking_prob: Option<f64>,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub window_s: f64,
    pub slices: Vec<SliceReport>,
    pub classes: BTreeMap<QosClass, ClassCounts>,
}

impl MetricsReport {
    pub fn slice(&self, name: &str) -> Option<&SliceReport> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn total_throughput(&self) -> f64 {
        self.slices.iter().map(|s| s.throughput_mbps).sum()
    }

    pub fn blocking(&self, qos: QosClass) -> Option<f64> {
        self.classes.get(&qos).and_then(ClassCounts::blocking_prob)
    }
}

/// Integrates piecewise-constant rates over `[warmup, end]` and counts
/// per-class outcomes for users arriving inside that window.
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    warmup: SimTime,
    end: SimTime,
    last_t: SimTime,
    current: RateSample,
    slice_integral: BTreeMap<SliceId, f64>,
    latency_integral: f64,
    data_integral: f64,
    classes: BTreeMap<QosClass, ClassCounts>,
    slices: Vec<SliceInfo>,
}

impl MetricsCollector {
    pub fn new(warmup: SimTime, end: SimTime, slices: Vec<SliceInfo>) -> Self {
        Self {
            warmup,
            end,
            last_t: 0.0,
            current: RateSample::default(),
            slice_integral: slices.iter().map(|s| (s.id, 0.0)).collect(),
            latency_integral: 0.0,
            data_integral: 0.0,
            classes: [QosClass::BestEffort, QosClass::RealTimeVideo]
                .into_iter()
                .map(|q| (q, ClassCounts::default()))
                .collect(),
            slices,
        }
    }

    fn in_window(&self, t: SimTime) -> bool {
        t >= self.warmup && t <= self.end
    }

    /// Account for the interval since the last update at the old rates, then
    /// switch to `sample`.
    pub fn advance(&mut self, now: SimTime, sample: RateSample) {
        let lo = self.last_t.max(self.warmup);
        let hi = now.min(self.end);
        if hi > lo {
            let dt = hi - lo;
            for (id, rate) in &self.current.slice_rates {
                *self.slice_integral.entry(*id).or_default() += rate * dt;
            }
            self.latency_integral += self.current.latency_weighted * dt;
            self.data_integral += self.current.data_rate * dt;
        }
        self.last_t = self.last_t.max(now);
        self.current = sample;
    }

    pub fn record_arrival(&mut self, qos: QosClass, arrived: SimTime) {
        if self.in_window(arrived) {
            self.classes.entry(qos).or_default().arrivals += 1;
        }
    }

    pub fn record_admitted(&mut self, qos: QosClass, arrived: SimTime) {
        if self.in_window(arrived) {
            self.classes.entry(qos).or_default().admitted += 1;
        }
    }

    pub fn record_blocked(&mut self, qos: QosClass, arrived: SimTime) {
        if self.in_window(arrived) {
            self.classes.entry(qos).or_default().blocked += 1;
        }
    }

    pub fn counts(&self, qos: QosClass) -> ClassCounts {
        self.classes.get(&qos).copied().unwrap_or_default()
    }

    pub fn report(&self) -> MetricsReport {
        let window = (self.end - self.warmup).max(0.0);
        let per_time = |x: f64| if window > 0.0 { x / window } else { 0.0 };
        let slices = self
            .slices
            .iter()
            .map(|info| {
                let counts = self.counts(info.qos);
                let mean_latency_s = match info.qos {
                    QosClass::BestEffort if self.data_integral > 0.0 => {
                        Some(self.latency_integral / self.data_integral)
                    }
                    _ => None,
                };
                SliceReport {
                    id: info.id,
                    name: info.name.clone(),
                    qos: info.qos,
                    throughput_mbps: per_time(self.slice_integral.get(&info.id).copied().unwrap_or(0.0)),
                    mean_latency_s,
                    blocking_prob: counts.blocking_prob(),
                    counts,
                }
            })
            .collect();
        MetricsReport {
            window_s: window,
            slices,
            classes: self.classes.clone(),
        }
    }
}
