//! Analytic radio abstractions: path loss, received power, LTE capacity
//! accounting and WLAN effective capacity / contention latency.
//!
//! There is no PHY simulation here. Received power only gates coverage and
//! feeds handover measurements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("distance must be positive, got {0} km")]
    NonPositiveDistance(f64),
    #[error("invalid radio parameter `{name}`: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("reserved fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("offered load must be non-negative, got {0} Mbps")]
    NegativeLoad(f64),
}

/// Slack for floating-point capacity arithmetic (e.g. `0.3 * 50.0`).
pub const CAPACITY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// dBm
    pub lte_tx_power: f64,
    /// dBm
    pub wlan_tx_power: f64,
    /// dBm
    pub ue_tx_power: f64,
    /// Mbps. Not a published value; 50 Mbps gives ten concurrent 5 Mbps users.
    pub lte_cell_capacity: f64,
    /// Mbps
    pub lte_per_user_rate: f64,
    /// Mbps
    pub wlan_phy_rate: f64,
    /// Fraction of the PHY rate left after MAC overhead, in (0, 1].
    pub wlan_mac_efficiency: f64,
    /// kbps
    pub video_rate: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            lte_tx_power: 46.0,
            wlan_tx_power: 23.0,
            ue_tx_power: 23.0,
            lte_cell_capacity: 50.0,
            lte_per_user_rate: 5.0,
            wlan_phy_rate: 54.0,
            wlan_mac_efficiency: 0.55,
            video_rate: 400.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        let rates = [
            ("lte_cell_capacity", self.lte_cell_capacity),
            ("lte_per_user_rate", self.lte_per_user_rate),
            ("wlan_phy_rate", self.wlan_phy_rate),
            ("video_rate", self.video_rate),
        ];
        for (name, value) in rates {
            if !(value > 0.0) || !value.is_finite() {
                return Err(RadioError::InvalidParam { name, value });
            }
        }
        let eff = self.wlan_mac_efficiency;
        if !(eff > 0.0 && eff <= 1.0) {
            return Err(RadioError::InvalidParam {
                name: "wlan_mac_efficiency",
                value: eff,
            });
        }
        for (name, value) in [
            ("lte_tx_power", self.lte_tx_power),
            ("wlan_tx_power", self.wlan_tx_power),
            ("ue_tx_power", self.ue_tx_power),
        ] {
            if !value.is_finite() {
                return Err(RadioError::InvalidParam { name, value });
            }
        }
        Ok(())
    }

    /// Video stream rate in Mbps.
    pub fn video_rate_mbps(&self) -> f64 {
        self.video_rate / 1000.0
    }
}

/// `loss(R) = constant + slope * log10(R)`, R in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossModel {
    pub constant: f64,
    pub slope: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            constant: 128.1,
            slope: 37.6,
        }
    }
}

impl PathLossModel {
    pub fn loss_db(&self, distance_km: f64) -> Result<f64, RadioError> {
        if !(distance_km > 0.0) {
            return Err(RadioError::NonPositiveDistance(distance_km));
        }
        Ok(self.constant + self.slope * distance_km.log10())
    }

    pub fn rx_power_dbm(&self, tx_dbm: f64, distance_km: f64) -> Result<f64, RadioError> {
        Ok(tx_dbm - self.loss_db(distance_km)?)
    }
}

/// Path loss with the default macro-cell model.
pub fn path_loss_db(distance_km: f64) -> Result<f64, RadioError> {
    PathLossModel::default().loss_db(distance_km)
}

pub fn rx_power_dbm(tx_dbm: f64, distance_km: f64) -> Result<f64, RadioError> {
    PathLossModel::default().rx_power_dbm(tx_dbm, distance_km)
}

/// Number of `per_user` Mbps flows that fit in `reserved_fraction` of the
/// LTE cell.
pub fn lte_capacity_users(
    params: &RadioParams,
    reserved_fraction: f64,
    per_user: f64,
) -> Result<u32, RadioError> {
    if !(0.0..=1.0).contains(&reserved_fraction) {
        return Err(RadioError::FractionOutOfRange(reserved_fraction));
    }
    if !(per_user > 0.0) {
        return Err(RadioError::InvalidParam {
            name: "per_user",
            value: per_user,
        });
    }
    Ok(fit_count(params.lte_cell_capacity * reserved_fraction, per_user))
}

/// `floor(budget / unit)` with a little slack so `15.000000000000002 / 0.4`
/// and `14.999999999999998 / 0.4` agree.
pub fn fit_count(budget: f64, unit: f64) -> u32 {
    ((budget + CAPACITY_EPSILON) / unit).floor().max(0.0) as u32
}

/// Usable WLAN throughput after MAC overhead, Mbps.
pub fn wlan_effective_capacity(params: &RadioParams) -> f64 {
    params.wlan_phy_rate * params.wlan_mac_efficiency
}

/// M/M/1 packet delay on a WLAN effective-capacity server.
///
/// Returns `f64::INFINITY` once utilisation reaches 1.
pub fn wlan_mean_latency(
    offered_load_mbps: f64,
    capacity_mbps: f64,
    packet_bits: f64,
) -> Result<f64, RadioError> {
    if offered_load_mbps < 0.0 || offered_load_mbps.is_nan() {
        return Err(RadioError::NegativeLoad(offered_load_mbps));
    }
    if !(capacity_mbps > 0.0) {
        return Err(RadioError::InvalidParam {
            name: "capacity",
            value: capacity_mbps,
        });
    }
    if !(packet_bits > 0.0) {
        return Err(RadioError::InvalidParam {
            name: "packet_bits",
            value: packet_bits,
        });
    }
    let rho = offered_load_mbps / capacity_mbps;
    if rho >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let service = packet_bits / (capacity_mbps * 1e6);
    Ok(service / (1.0 - rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn path_loss_reference_points() {
        assert!(close(path_loss_db(1.0).unwrap(), 128.1, 1e-12));
        assert!(close(path_loss_db(0.1).unwrap(), 90.5, 1e-12));
        assert!(close(path_loss_db(10.0).unwrap(), 165.7, 1e-12));
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-1.0).is_err());
    }

    #[test]
    fn rx_power_reference_points() {
        assert!(close(rx_power_dbm(46.0, 1.0).unwrap(), -82.1, 1e-12));
        assert!(close(rx_power_dbm(23.0, 1.0).unwrap(), -105.1, 1e-12));
        assert!(close(rx_power_dbm(46.0, 0.1).unwrap(), -44.5, 1e-12));
        assert!(rx_power_dbm(46.0, 0.0).is_err());
    }

    #[test]
    fn lte_capacity_examples() {
        let p = RadioParams::default();
        assert_eq!(lte_capacity_users(&p, 1.0, 5.0).unwrap(), 10);
        assert_eq!(lte_capacity_users(&p, 0.3, 0.4).unwrap(), 37);
        assert_eq!(lte_capacity_users(&p, 0.7, 5.0).unwrap(), 7);
        assert_eq!(lte_capacity_users(&p, 0.0, 5.0).unwrap(), 0);
        assert!(lte_capacity_users(&p, 1.2, 5.0).is_err());
        assert!(lte_capacity_users(&p, 0.5, 0.0).is_err());
    }

    #[test]
    fn wlan_capacity_examples() {
        let mut p = RadioParams::default();
        assert!(close(wlan_effective_capacity(&p), 29.7, 1e-12));
        p.wlan_mac_efficiency = 1.0;
        assert!(close(wlan_effective_capacity(&p), 54.0, 1e-12));
        p.wlan_mac_efficiency = 0.5;
        assert!(close(wlan_effective_capacity(&p), 27.0, 1e-12));
    }

    #[test]
    fn wlan_latency_examples() {
        let idle = wlan_mean_latency(0.0, 29.7, 12_000.0).unwrap();
        assert!(close(idle, 12_000.0 / 29.7e6, 1e-15));
        assert!(close(idle, 4.04e-4, 1e-6));
        let half = wlan_mean_latency(29.7 / 2.0, 29.7, 12_000.0).unwrap();
        assert!(close(half, 2.0 * idle, 1e-15));
        assert!(wlan_mean_latency(29.7, 29.7, 12_000.0).unwrap().is_infinite());
        assert!(wlan_mean_latency(40.0, 29.7, 12_000.0).unwrap().is_infinite());
        assert!(wlan_mean_latency(-1.0, 29.7, 12_000.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(RadioParams::default().validate().is_ok());
        let bad = RadioParams {
            wlan_mac_efficiency: 0.0,
            ..RadioParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = RadioParams {
            lte_per_user_rate: -5.0,
            ..RadioParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn loss_monotone(a in 0.001f64..50.0, b in 0.001f64..50.0) {
            prop_assume!(a < b);
            prop_assert!(path_loss_db(a).unwrap() < path_loss_db(b).unwrap());
            prop_assert!(rx_power_dbm(46.0, a).unwrap() > rx_power_dbm(46.0, b).unwrap());
        }

        #[test]
        fn latency_nondecreasing(a in 0.0f64..40.0, b in 0.0f64..40.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let l1 = wlan_mean_latency(lo, 29.7, 12_000.0).unwrap();
            let l2 = wlan_mean_latency(hi, 29.7, 12_000.0).unwrap();
            prop_assert!(l1 <= l2);
        }

        #[test]
        fn floor_split_guard(f1 in 0.0f64..0.5, f2 in 0.0f64..0.5, per_user in 0.1f64..10.0) {
            let p = RadioParams::default();
            let a = lte_capacity_users(&p, f1, per_user).unwrap();
            let b = lte_capacity_users(&p, f2, per_user).unwrap();
            let ab = lte_capacity_users(&p, f1 + f2, per_user).unwrap();
            prop_assert!(a + b <= ab + 1);
        }
    }
}
