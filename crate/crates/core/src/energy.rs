//! Vehicle power curves, battery capacities and recharge rates.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::scenario::VehicleKind;

/// UGV battery capacity in joules.
pub const UGV_CAPACITY_J: f64 = 25.01e6;
/// UAV battery capacity in joules.
pub const UAV_CAPACITY_J: f64 = 287.7e3;

const OVERHEAD: f64 = 1.05;
const UGV_POWER: [f64; 2] = [464.8, 356.3];
const UAV_POWER: [f64; 4] = [0.0461, -0.5834, -1.8761, 229.6];

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("speed must be non-negative, got {0}")]
pub struct NegativeSpeed(pub f64);

fn horner<T: Scalar>(coeffs: &[f64], v: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * v + T::lit(c))
}

/// Ground vehicle power draw in watts at speed `v` (m/s).
pub fn power_ugv<T: Scalar>(v: T) -> Result<T, NegativeSpeed> {
    if v < T::zero() {
        return Err(NegativeSpeed(v.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(T::lit(OVERHEAD) * horner(&UGV_POWER, v))
}

/// Aerial vehicle power draw in watts at speed `v` (m/s).
pub fn power_uav<T: Scalar>(v: T) -> Result<T, NegativeSpeed> {
    if v < T::zero() {
        return Err(NegativeSpeed(v.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(T::lit(OVERHEAD) * horner(&UAV_POWER, v))
}

/// Piecewise-linear recharge rate: `fast_w` below `knee` of capacity,
/// `slow_w` above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RechargeCurve<T> {
    pub fast_w: T,
    pub slow_w: T,
    pub knee: T,
}

impl<T: Scalar> RechargeCurve<T> {
    pub fn rate(&self, energy: T, capacity: T) -> T {
        if energy < self.knee * capacity {
            self.fast_w
        } else {
            self.slow_w
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel<T> {
    pub ugv_capacity_j: T,
    pub uav_capacity_j: T,
    pub ugv_recharge: RechargeCurve<T>,
    pub uav_recharge: RechargeCurve<T>,
}

impl<T: Scalar> Default for EnergyModel<T> {
    fn default() -> Self {
        Self {
            ugv_capacity_j: T::lit(UGV_CAPACITY_J),
            uav_capacity_j: T::lit(UAV_CAPACITY_J),
            ugv_recharge: RechargeCurve {
                fast_w: T::lit(20_000.0),
                slow_w: T::lit(5_000.0),
                knee: T::lit(0.8),
            },
            uav_recharge: RechargeCurve {
                fast_w: T::lit(1_000.0),
                slow_w: T::lit(250.0),
                knee: T::lit(0.8),
            },
        }
    }
}

impl<T: Scalar> EnergyModel<T> {
    pub fn capacity(&self, kind: VehicleKind) -> T {
        match kind {
            VehicleKind::Ugv => self.ugv_capacity_j,
            VehicleKind::Uav => self.uav_capacity_j,
        }
    }

    pub fn power(&self, kind: VehicleKind, v: T) -> Result<T, NegativeSpeed> {
        match kind {
            VehicleKind::Ugv => power_ugv(v),
            VehicleKind::Uav => power_uav(v),
        }
    }

    pub fn recharge(&self, kind: VehicleKind) -> &RechargeCurve<T> {
        match kind {
            VehicleKind::Ugv => &self.ugv_recharge,
            VehicleKind::Uav => &self.uav_recharge,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        ((a - b) / b).abs() <= 1e-9
    }

    #[test]
    fn reference_powers() {
        // 1.05 * 356.3, 1.05 * 229.6 and 1.05 * (464.8 + 356.3).
        assert!(close(power_ugv(0.0f64).unwrap(), 374.115));
        assert!(close(power_uav(0.0f64).unwrap(), 241.08));
        assert!(close(power_ugv(1.0f64).unwrap(), 862.155));
    }

    #[test]
    fn single_precision_agrees() {
        let p = power_uav(3.0f32).unwrap() as f64;
        let q = power_uav(3.0f64).unwrap();
        assert!((p - q).abs() / q < 1e-6);
    }

    #[test]
    fn negative_speed_rejected() {
        assert!(power_ugv(-1.0f64).is_err());
        assert!(power_uav(-0.5f32).is_err());
    }

    #[test]
    fn uav_power_positive_over_range() {
        for i in 0..=400 {
            assert!(power_uav(i as f64 * 0.1).unwrap() > 0.0);
        }
    }

    #[test]
    fn default_capacities() {
        let m = EnergyModel::<f64>::default();
        assert_eq!(m.capacity(VehicleKind::Ugv), 25.01e6);
        assert_eq!(m.capacity(VehicleKind::Uav), 287.7e3);
    }
}
