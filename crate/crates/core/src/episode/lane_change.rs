use serde::{Deserialize, Serialize};

use super::{EndReason, Episode, LANE_CHANGE_MATCH_S};
use crate::ingest::{VehicleId, VehicleTrack};
use crate::units::seconds_to_frames;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub vehicle_id: VehicleId,
    /// Time of the first sample in the new lane.
    pub t: f64,
    pub frame: i64,
    pub from_lane: u32,
    pub to_lane: u32,
    /// Mean speed over the window before the change.
    pub speed_before: f64,
    /// Mean speed over the window starting at the change.
    pub speed_after: f64,
}

impl LaneChangeEvent {
    pub fn speed_change(&self) -> f64 {
        self.speed_after - self.speed_before
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// One event per lane id transition in `track`.
///
/// Speeds are averaged over the samples within `window_s` on each side of
/// the transition frame, truncated at the ends of the track.
pub fn detect_lane_changes(track: &VehicleTrack, window_s: f64) -> Vec<LaneChangeEvent> {
    let window = seconds_to_frames(window_s).max(1);
    let pts = track.points();
    let mut events = Vec::new();
    for i in 1..pts.len() {
        let (prev, cur) = (&pts[i - 1], &pts[i]);
        if prev.lane_id == cur.lane_id {
            continue;
        }
        let before = pts[..i].iter().rev().take_while(|p| p.frame >= cur.frame - window);
        let after = pts[i..].iter().take_while(|p| p.frame < cur.frame + window);
        events.push(LaneChangeEvent {
            vehicle_id: track.vehicle_id,
            t: cur.t,
            frame: cur.frame,
            from_lane: prev.lane_id,
            to_lane: cur.lane_id,
            speed_before: mean(before.map(|p| p.speed)),
            speed_after: mean(after.map(|p| p.speed)),
        });
    }
    events
}

/// The follower lane change that terminated `episode`, if it ended that way.
pub fn lane_change_for_episode<'a>(episode: &Episode, events: &'a [LaneChangeEvent]) -> Option<&'a LaneChangeEvent> {
    if episode.end_reason != EndReason::FollowerLaneChange {
        return None;
    }
    let end = episode.end_t();
    events
        .iter()
        .find(|e| e.vehicle_id == episode.follower_id && e.t >= end && e.t - end <= LANE_CHANGE_MATCH_S + 1e-9)
}
