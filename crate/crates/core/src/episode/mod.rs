//! Car-following episodes: extraction from a dataset, lane-change events and
//! splitting at the merge boundary.

mod extract;
mod lane_change;
mod segment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{PairClass, VehicleClass};
use crate::ingest::VehicleId;

pub use extract::{extract_episodes, ExtractionDiagnostics, ExtractionOutput};
pub use lane_change::{detect_lane_changes, lane_change_for_episode, LaneChangeEvent};
pub use segment::segment_by_position;

/// Matching window between an episode's last frame and the lane-change event
/// that ended it.
pub const LANE_CHANGE_MATCH_S: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("internal error: duplicate episode for follower {follower_id}, leader {leader_id}, start frame {start_frame}")]
    DuplicateEpisode {
        follower_id: VehicleId,
        leader_id: VehicleId,
        start_frame: i64,
    },
    #[error(transparent)]
    Classify(#[from] crate::classify::ClassifyError),
    #[error("invalid extraction config: {0}")]
    Config(String),
}

/// Reference points of the space headway column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadwayConvention {
    /// Front bumper to front bumper (the NGSIM definition).
    #[default]
    FrontToFront,
    /// Front bumper of the follower to rear bumper of the leader.
    FrontToRear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderSource {
    /// Nearest same-lane vehicle downstream; the preceding column is only
    /// cross-checked and disagreements are counted.
    #[default]
    Auto,
    /// Trust the preceding-vehicle column alone.
    PrecedingColumn,
    /// Ignore the preceding-vehicle column.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingSource {
    /// The space headway column when it refers to the chosen leader,
    /// otherwise the position difference.
    #[default]
    Auto,
    Positions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub min_duration_s: f64,
    pub gap_min_m: f64,
    pub gap_max_m: f64,
    /// A run must begin within this many frames of the follower's first
    /// in-segment frame to count as entering the segment while following.
    pub entry_grace_frames: u32,
    pub merge_boundary_y_m: f64,
    pub lane_change_window_s: f64,
    pub min_segment_duration_s: f64,
    pub headway_convention: HeadwayConvention,
    pub leader_source: LeaderSource,
    pub spacing_source: SpacingSource,
    /// Keep runs that form after the follower entered (flagged `late_forming`).
    pub include_late_forming: bool,
    /// A track ending within this distance of the segment end counts as
    /// leaving the segment.
    pub segment_exit_margin_m: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            min_duration_s: 25.0,
            gap_min_m: 4.5,
            gap_max_m: 76.0,
            entry_grace_frames: 10,
            merge_boundary_y_m: crate::ingest::DEFAULT_MERGE_BOUNDARY_M,
            lane_change_window_s: 5.0,
            min_segment_duration_s: 5.0,
            headway_convention: HeadwayConvention::FrontToFront,
            leader_source: LeaderSource::Auto,
            spacing_source: SpacingSource::Auto,
            include_late_forming: false,
            segment_exit_margin_m: 10.0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ExtractError> {
        let bad = |m: &str| Err(ExtractError::Config(m.to_string()));
        if !(self.min_duration_s >= 0.0) {
            return bad("min_duration_s must be >= 0");
        }
        if !(self.gap_min_m <= self.gap_max_m) {
            return bad("gap_min_m must not exceed gap_max_m");
        }
        if !(self.lane_change_window_s > 0.0) {
            return bad("lane_change_window_s must be > 0");
        }
        if !(self.min_segment_duration_s >= 0.0) {
            return bad("min_segment_duration_s must be >= 0");
        }
        if !(self.segment_exit_margin_m >= 0.0) {
            return bad("segment_exit_margin_m must be >= 0");
        }
        if !self.merge_boundary_y_m.is_finite() {
            return bad("merge_boundary_y_m must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    FollowerLaneChange,
    LeaderLaneChange,
    LeaderChanged,
    SegmentExit,
    DataEnd,
    /// Before-merge part of a split episode.
    MergeBoundary,
}

/// Which part of the monitored segment an episode covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    #[default]
    Full,
    BeforeMerge,
    AfterMerge,
}

/// One synchronized follower/leader sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFrame {
    pub frame: i64,
    pub t: f64,
    pub follower_y: f64,
    pub follower_speed: f64,
    pub follower_accel: f64,
    pub leader_y: f64,
    pub leader_speed: f64,
    /// Front-to-front spacing (Δx).
    pub space_headway: f64,
    /// Follower front to leader rear.
    pub gap: f64,
}

impl EpisodeFrame {
    /// Relative speed Δv, positive when the leader is faster.
    pub fn relative_speed(&self) -> f64 {
        self.leader_speed - self.follower_speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    /// Position in the `(follower_id, start_frame)`-sorted extraction output.
    pub id: u64,
    pub follower_id: VehicleId,
    pub leader_id: VehicleId,
    pub follower_class: VehicleClass,
    pub leader_class: VehicleClass,
    pub pair: PairClass,
    pub leader_length: f64,
    pub frames: Vec<EpisodeFrame>,
    pub end_reason: EndReason,
    pub avg_gap: f64,
    /// Mean follower speed.
    pub avg_speed: f64,
    pub negative_gap_frames: usize,
    pub late_forming: bool,
    pub section: Section,
}

impl Episode {
    pub fn start_frame(&self) -> i64 {
        self.frames.first().map_or(0, |f| f.frame)
    }

    pub fn start_t(&self) -> f64 {
        self.frames.first().map_or(0.0, |f| f.t)
    }

    pub fn end_t(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.t)
    }

    pub fn duration(&self) -> f64 {
        self.end_t() - self.start_t()
    }

    pub(crate) fn recompute_averages(&mut self) {
        let n = self.frames.len() as f64;
        self.avg_gap = self.frames.iter().map(|f| f.gap).sum::<f64>() / n;
        self.avg_speed = self.frames.iter().map(|f| f.follower_speed).sum::<f64>() / n;
        self.negative_gap_frames = self.frames.iter().filter(|f| f.gap < 0.0).count();
    }

    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            id: self.id,
            follower_id: self.follower_id,
            leader_id: self.leader_id,
            follower_class: self.follower_class,
            leader_class: self.leader_class,
            pair: self.pair,
            section: self.section,
            start_frame: self.start_frame(),
            n_frames: self.frames.len(),
            start_t: self.start_t(),
            end_t: self.end_t(),
            duration_s: self.duration(),
            end_reason: self.end_reason,
            avg_gap: self.avg_gap,
            avg_speed: self.avg_speed,
            negative_gap_frames: self.negative_gap_frames,
            late_forming: self.late_forming,
        }
    }
}

/// Frame-free view of an episode; what the statistics and reports consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub id: u64,
    pub follower_id: VehicleId,
    pub leader_id: VehicleId,
    pub follower_class: VehicleClass,
    pub leader_class: VehicleClass,
    pub pair: PairClass,
    pub section: Section,
    pub start_frame: i64,
    pub n_frames: usize,
    pub start_t: f64,
    pub end_t: f64,
    pub duration_s: f64,
    pub end_reason: EndReason,
    pub avg_gap: f64,
    pub avg_speed: f64,
    pub negative_gap_frames: usize,
    pub late_forming: bool,
}

/// A gap below zero: the trajectories overlap. The value is still usable.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("negative gap {gap} m (vehicles overlap)")]
pub struct NegativeGap {
    pub gap: f64,
}

/// Gap between follower front and leader rear from a front-to-front headway.
pub fn compute_gap(space_headway: f64, leader_length: f64) -> Result<f64, NegativeGap> {
    debug_assert!(leader_length > 0.0);
    let gap = space_headway - leader_length;
    if gap < 0.0 {
        Err(NegativeGap { gap })
    } else {
        Ok(gap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(compute_gap(20.0, 5.0), Ok(15.0));
        assert_eq!(compute_gap(16.5, 16.5), Ok(0.0));
        assert_eq!(compute_gap(10.0, 12.0), Err(NegativeGap { gap: -2.0 }));
    }

    #[test]
    fn config_validation() {
        assert!(ExtractionConfig::default().validate().is_ok());
        let bad = ExtractionConfig { gap_min_m: 80.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
