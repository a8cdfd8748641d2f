//! Length-based vehicle classes and follower/leader pair classes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    PassengerCar,
    SuvLightTruck,
    HeavyVehicle,
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VehicleClass::PassengerCar => "passenger_car",
            VehicleClass::SuvLightTruck => "suv_light_truck",
            VehicleClass::HeavyVehicle => "heavy_vehicle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    CarFollowsCar,
    CarFollowsHeavy,
    HeavyFollowsCar,
    HeavyFollowsHeavy,
    /// Any pair with an SUV / light truck on either side.
    OtherPair,
}

impl PairClass {
    /// The four pairs reported in the summary tables, in report order.
    pub const REPORTED: [PairClass; 4] = [
        PairClass::CarFollowsHeavy,
        PairClass::CarFollowsCar,
        PairClass::HeavyFollowsCar,
        PairClass::HeavyFollowsHeavy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairClass::CarFollowsCar => "car_follows_car",
            PairClass::CarFollowsHeavy => "car_follows_heavy",
            PairClass::HeavyFollowsCar => "heavy_follows_car",
            PairClass::HeavyFollowsHeavy => "heavy_follows_heavy",
            PairClass::OtherPair => "other_pair",
        }
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("vehicle length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("classifier thresholds must satisfy 0 < car_max_m <= suv_max_m (got {car_max_m}, {suv_max_m})")]
    InvalidThresholds { car_max_m: f64, suv_max_m: f64 },
}

/// Length thresholds. Cars include `car_max_m`; SUVs / light trucks include
/// `suv_max_m`; anything longer is heavy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub car_max_m: f64,
    pub suv_max_m: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { car_max_m: 5.0, suv_max_m: 5.5 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.car_max_m > 0.0 && self.car_max_m <= self.suv_max_m && self.suv_max_m.is_finite() {
            Ok(())
        } else {
            Err(ClassifyError::InvalidThresholds { car_max_m: self.car_max_m, suv_max_m: self.suv_max_m })
        }
    }

    pub fn classify(&self, length: f64) -> Result<VehicleClass, ClassifyError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(ClassifyError::InvalidLength(length));
        }
        Ok(if length <= self.car_max_m {
            VehicleClass::PassengerCar
        } else if length <= self.suv_max_m {
            VehicleClass::SuvLightTruck
        } else {
            VehicleClass::HeavyVehicle
        })
    }
}

/// Classifies with the default 5.0 m / 5.5 m thresholds.
pub fn classify_by_length(length: f64) -> Result<VehicleClass, ClassifyError> {
    ClassifierConfig::default().classify(length)
}

pub fn pair_class(follower: VehicleClass, leader: VehicleClass) -> PairClass {
    use VehicleClass::*;
    match (follower, leader) {
        (PassengerCar, PassengerCar) => PairClass::CarFollowsCar,
        (PassengerCar, HeavyVehicle) => PairClass::CarFollowsHeavy,
        (HeavyVehicle, PassengerCar) => PairClass::HeavyFollowsCar,
        (HeavyVehicle, HeavyVehicle) => PairClass::HeavyFollowsHeavy,
        (SuvLightTruck, _) | (_, SuvLightTruck) => PairClass::OtherPair,
    }
}
