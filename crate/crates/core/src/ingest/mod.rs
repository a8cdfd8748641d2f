//! Trajectory ingestion: parsing delimited NGSIM-style files into SI vehicle
//! tracks, then validating them and (optionally) re-deriving kinematics.

mod derive;
mod parse;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use derive::{validate_and_derive, CorruptTrack, DerivePolicy, KinematicsSource, ValidationReport};
pub use parse::{parse_trajectory_file, ColumnSchema, Delimiter, IngestReport, ParsedDataset, RejectedRow};

pub type VehicleId = u64;

/// Default length of the monitored freeway segment.
pub const DEFAULT_SEGMENT_LENGTH_M: f64 = 400.0;
/// Default longitudinal position of the on-ramp merge.
pub const DEFAULT_MERGE_BOUNDARY_M: f64 = 120.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input contains no data rows")]
    Empty,
    #[error("no rows could be parsed; first offending line {line}: {reason}")]
    NoValidRows { line: usize, reason: String },
    #[error("duplicate sample for vehicle {vehicle_id} frame {frame} on lines {first_line} and {second_line}")]
    DuplicateFrame {
        vehicle_id: VehicleId,
        frame: i64,
        first_line: usize,
        second_line: usize,
    },
    #[error(
        "vehicle {vehicle_id} line {line}: {elapsed_ms} ms elapsed over {frames} frame(s); only 100 ms frames are supported"
    )]
    FrameInterval {
        vehicle_id: VehicleId,
        line: usize,
        elapsed_ms: f64,
        frames: i64,
    },
    #[error("invalid column schema: {0}")]
    Schema(String),
    #[error("invalid track for vehicle {vehicle_id}: {reason}")]
    InvalidTrack { vehicle_id: VehicleId, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One kinematic sample of one vehicle, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub vehicle_id: VehicleId,
    /// Frame number, 0.1 s ticks.
    pub frame: i64,
    pub t: f64,
    /// Longitudinal position along the direction of travel.
    pub y: f64,
    pub lane_id: u32,
    pub speed: f64,
    pub accel: f64,
    pub preceding_id: Option<VehicleId>,
    pub space_headway: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub vehicle_id: VehicleId,
    pub length: f64,
    pub width: f64,
    /// Class code reported by the source file. Kept for reference only;
    /// classification uses `length`.
    pub reported_class: Option<i64>,
    points: Vec<TrajectoryPoint>,
}

impl VehicleTrack {
    /// Builds a track, checking frame ordering and the point invariants.
    pub fn new(
        vehicle_id: VehicleId,
        length: f64,
        width: f64,
        points: Vec<TrajectoryPoint>,
    ) -> Result<Self, IngestError> {
        let invalid = |reason: String| IngestError::InvalidTrack { vehicle_id, reason };
        if !(length > 0.0 && length.is_finite()) {
            return Err(invalid(format!("length must be positive, got {length}")));
        }
        for pair in points.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(invalid(format!(
                    "frames not strictly increasing ({} then {})",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        for p in &points {
            if p.vehicle_id != vehicle_id {
                return Err(invalid(format!("point belongs to vehicle {}", p.vehicle_id)));
            }
            if p.lane_id < 1 {
                return Err(invalid(format!("lane id must be >= 1 at frame {}", p.frame)));
            }
            if !(p.speed >= 0.0) {
                return Err(invalid(format!("negative speed at frame {}", p.frame)));
            }
            if matches!(p.space_headway, Some(h) if !(h >= 0.0)) {
                return Err(invalid(format!("negative space headway at frame {}", p.frame)));
            }
        }
        Ok(Self {
            vehicle_id,
            length,
            width,
            reported_class: None,
            points,
        })
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub(crate) fn points_mut(&mut self) -> &mut [TrajectoryPoint] {
        &mut self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_frame(&self) -> Option<i64> {
        self.points.first().map(|p| p.frame)
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.points.last().map(|p| p.frame)
    }

    /// Index of the sample at `frame`, if the vehicle was observed then.
    pub fn index_of_frame(&self, frame: i64) -> Option<usize> {
        let first = self.first_frame()?;
        // Fast path for gap-free tracks.
        let guess = frame - first;
        if guess >= 0 && (guess as usize) < self.points.len() && self.points[guess as usize].frame == frame {
            return Some(guess as usize);
        }
        self.points.binary_search_by_key(&frame, |p| p.frame).ok()
    }

    pub fn point_at_frame(&self, frame: i64) -> Option<&TrajectoryPoint> {
        self.index_of_frame(frame).map(|i| &self.points[i])
    }

    /// Frames missing inside the observed span.
    pub fn missing_frames(&self) -> usize {
        match (self.first_frame(), self.last_frame()) {
            (Some(a), Some(b)) => (b - a + 1) as usize - self.points.len(),
            _ => 0,
        }
    }
}

/// A parsed and (usually) validated trajectory dataset.
///
/// Immutable after construction; downstream stages only read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    tracks: BTreeMap<VehicleId, VehicleTrack>,
    pub segment_length: f64,
    pub merge_boundary_y: f64,
    /// Whether speed and acceleration came from the source file.
    pub has_speed: bool,
    pub has_accel: bool,
}

impl Dataset {
    pub fn new(tracks: impl IntoIterator<Item = VehicleTrack>) -> Self {
        Self {
            tracks: tracks.into_iter().map(|t| (t.vehicle_id, t)).collect(),
            segment_length: DEFAULT_SEGMENT_LENGTH_M,
            merge_boundary_y: DEFAULT_MERGE_BOUNDARY_M,
            has_speed: true,
            has_accel: true,
        }
    }

    pub fn with_geometry(mut self, segment_length: f64, merge_boundary_y: f64) -> Self {
        self.segment_length = segment_length;
        self.merge_boundary_y = merge_boundary_y;
        self
    }

    pub fn track(&self, id: VehicleId) -> Option<&VehicleTrack> {
        self.tracks.get(&id)
    }

    /// Tracks in ascending vehicle id order.
    pub fn tracks(&self) -> impl ExactSizeIterator<Item = &VehicleTrack> + '_ {
        self.tracks.values()
    }

    pub fn vehicle_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn point_count(&self) -> usize {
        self.tracks.values().map(VehicleTrack::len).sum()
    }

    pub(crate) fn into_tracks(self) -> (BTreeMap<VehicleId, VehicleTrack>, DatasetMeta) {
        let meta = DatasetMeta {
            segment_length: self.segment_length,
            merge_boundary_y: self.merge_boundary_y,
            has_speed: self.has_speed,
            has_accel: self.has_accel,
        };
        (self.tracks, meta)
    }

    pub(crate) fn from_parts(tracks: BTreeMap<VehicleId, VehicleTrack>, meta: DatasetMeta) -> Self {
        Self {
            tracks,
            segment_length: meta.segment_length,
            merge_boundary_y: meta.merge_boundary_y,
            has_speed: meta.has_speed,
            has_accel: meta.has_accel,
        }
    }

    /// Preceding-vehicle ids referenced by some sample but absent from the dataset.
    pub fn unresolved_preceding(&self) -> BTreeSet<VehicleId> {
        self.tracks
            .values()
            .flat_map(|t| t.points.iter().filter_map(|p| p.preceding_id))
            .filter(|id| !self.tracks.contains_key(id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DatasetMeta {
    segment_length: f64,
    merge_boundary_y: f64,
    has_speed: bool,
    has_accel: bool,
}

impl DatasetMeta {
    pub(crate) fn has_speed_and_accel(&mut self) {
        self.has_speed = true;
        self.has_accel = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(frame: i64, y: f64) -> TrajectoryPoint {
        TrajectoryPoint {
            vehicle_id: 1,
            frame,
            t: frame as f64 * 0.1,
            y,
            lane_id: 1,
            speed: 1.0,
            accel: 0.0,
            preceding_id: None,
            space_headway: None,
        }
    }

    #[test]
    fn rejects_unordered_frames() {
        let err = VehicleTrack::new(1, 4.0, 2.0, vec![pt(2, 0.0), pt(2, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
    }

    #[test]
    fn rejects_nonpositive_length() {
        assert!(VehicleTrack::new(1, 0.0, 2.0, vec![pt(1, 0.0)]).is_err());
    }

    #[test]
    fn frame_lookup_handles_gaps() {
        let t = VehicleTrack::new(1, 4.0, 2.0, vec![pt(10, 0.0), pt(11, 1.0), pt(14, 2.0)]).unwrap();
        assert_eq!(t.index_of_frame(14), Some(2));
        assert_eq!(t.index_of_frame(12), None);
        assert_eq!(t.missing_frames(), 2);
    }

    #[test]
    fn unresolved_preceding_ids_are_reported() {
        let mut p = pt(1, 0.0);
        p.preceding_id = Some(99);
        let ds = Dataset::new([VehicleTrack::new(1, 4.0, 2.0, vec![p]).unwrap()]);
        assert_eq!(ds.unresolved_preceding().into_iter().collect::<Vec<_>>(), vec![99]);
    }
}
