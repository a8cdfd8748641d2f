//! Unit constants and conversions.
//!
//! Everything inside the crate is SI (m, s, m/s, m/s²). Kilometres per hour
//! only appear when report rows are built.

use serde::{Deserialize, Serialize};

/// Exact international foot.
pub const FEET_TO_METERS: f64 = 0.3048;

/// Sampling interval of the trajectory data (10 Hz).
pub const FRAME_INTERVAL_S: f64 = 0.1;

/// Tolerance used when snapping a time onto the 0.1 s frame grid.
pub(crate) const GRID_EPS: f64 = 1e-6;

/// Unit system of an input file or cluster library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Feet,
    Meters,
}

impl LengthUnit {
    /// Factor that converts a length (or speed, or acceleration) in this unit to SI.
    pub fn to_meters(self) -> f64 {
        match self {
            LengthUnit::Feet => FEET_TO_METERS,
            LengthUnit::Meters => 1.0,
        }
    }
}

impl std::str::FromStr for LengthUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "feet" | "ft" | "foot" => Ok(LengthUnit::Feet),
            "meters" | "m" | "metres" | "si" => Ok(LengthUnit::Meters),
            other => Err(format!("unknown length unit `{other}` (expected feet or meters)")),
        }
    }
}

pub fn ms_to_kmh(v: f64) -> f64 {
    v * 3.6
}

pub fn kmh_to_ms(v: f64) -> f64 {
    v / 3.6
}

/// Time of a frame number on the 10 Hz grid.
pub fn frame_time(frame: i64) -> f64 {
    frame as f64 * FRAME_INTERVAL_S
}

/// Number of whole frames covering `seconds`, rounded to the nearest frame.
pub fn seconds_to_frames(seconds: f64) -> i64 {
    (seconds / FRAME_INTERVAL_S).round() as i64
}
