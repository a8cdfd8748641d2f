use serde::{Deserialize, Serialize};

use super::{Dataset, TrajectoryPoint, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KinematicsSource {
    /// Use the speed/acceleration columns when the file has them.
    #[default]
    Provided,
    /// Always differentiate positions.
    Recompute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DerivePolicy {
    pub kinematics: KinematicsSource,
    /// Largest backwards jump in `y` between consecutive samples before the
    /// track is treated as corrupt.
    pub max_backward_step_m: f64,
}

impl Default for DerivePolicy {
    fn default() -> Self {
        Self {
            kinematics: KinematicsSource::Provided,
            max_backward_step_m: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptTrack {
    pub vehicle_id: VehicleId,
    pub frame: i64,
    /// Size of the backwards step that triggered the exclusion.
    pub backward_step_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tracks_in: usize,
    pub tracks_out: usize,
    pub dropped_short: Vec<VehicleId>,
    pub corrupt: Vec<CorruptTrack>,
    /// `(vehicle, missing frame count)` for tracks with holes in their span.
    pub missing_frames: Vec<(VehicleId, usize)>,
    pub recomputed_kinematics: bool,
    /// Differentiated speeds below zero that were clamped.
    pub clamped_speeds: usize,
}

/// Central differences on interior samples, one-sided at both ends.
///
/// Uses the actual sample times so holes in a track widen the stencil
/// instead of corrupting the derivative.
fn differentiate(t: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert!(n >= 2);
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (x[b] - x[a]) / (t[b] - t[a])
        })
        .collect()
}

fn recompute(points: &mut [TrajectoryPoint]) -> usize {
    let t: Vec<f64> = points.iter().map(|p| p.t).collect();
    let y: Vec<f64> = points.iter().map(|p| p.y).collect();
    let mut clamped = 0;
    let speed: Vec<f64> = differentiate(&t, &y)
        .into_iter()
        .map(|v| {
            if v < 0.0 {
                clamped += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    let accel = differentiate(&t, &speed);
    for ((p, v), a) in points.iter_mut().zip(speed).zip(accel) {
        p.speed = v;
        p.accel = a;
    }
    clamped
}

/// Drops degenerate and corrupt tracks and fills in kinematics when needed.
pub fn validate_and_derive(dataset: Dataset, policy: &DerivePolicy) -> (Dataset, ValidationReport) {
    let (tracks, mut meta) = dataset.into_tracks();
    let recompute_all =
        policy.kinematics == KinematicsSource::Recompute || !meta.has_speed || !meta.has_accel;
    let mut report = ValidationReport {
        tracks_in: tracks.len(),
        recomputed_kinematics: recompute_all,
        ..Default::default()
    };

    let mut kept = std::collections::BTreeMap::new();
    for (id, mut track) in tracks {
        if track.len() < 2 {
            report.dropped_short.push(id);
            continue;
        }
        let backward = track
            .points()
            .windows(2)
            .map(|w| (w[1].frame, w[0].y - w[1].y))
            .find(|&(_, drop)| drop > policy.max_backward_step_m);
        if let Some((frame, backward_step_m)) = backward {
            report.corrupt.push(CorruptTrack { vehicle_id: id, frame, backward_step_m });
            continue;
        }
        let missing = track.missing_frames();
        if missing > 0 {
            report.missing_frames.push((id, missing));
        }
        if recompute_all {
            report.clamped_speeds += recompute(track.points_mut());
        }
        kept.insert(id, track);
    }
    report.tracks_out = kept.len();
    if recompute_all {
        meta.has_speed_and_accel();
    }
    (Dataset::from_parts(kept, meta), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::VehicleTrack;

    fn track(id: VehicleId, ys: &[f64]) -> VehicleTrack {
        let points = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| TrajectoryPoint {
                vehicle_id: id,
                frame: i as i64,
                t: i as f64 * 0.1,
                y,
                lane_id: 1,
                speed: 99.0,
                accel: 99.0,
                preceding_id: None,
                space_headway: None,
            })
            .collect();
        VehicleTrack::new(id, 4.5, 1.8, points).unwrap()
    }

    fn recompute_policy() -> DerivePolicy {
        DerivePolicy { kinematics: KinematicsSource::Recompute, ..Default::default() }
    }

    #[test]
    fn central_difference_speed() {
        let (ds, _) = validate_and_derive(Dataset::new([track(1, &[0.0, 1.0, 2.0])]), &recompute_policy());
        let p = ds.track(1).unwrap().points();
        assert!((p[1].speed - 10.0).abs() < 1e-12);
        // One-sided at the ends.
        assert!((p[0].speed - 10.0).abs() < 1e-12);
        assert!((p[2].speed - 10.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_vehicle_has_zero_kinematics() {
        let (ds, _) = validate_and_derive(Dataset::new([track(1, &[5.0; 6])]), &recompute_policy());
        assert!(ds.track(1).unwrap().points().iter().all(|p| p.speed == 0.0 && p.accel == 0.0));
    }

    #[test]
    fn single_frame_track_is_dropped() {
        let (ds, report) =
            validate_and_derive(Dataset::new([track(1, &[0.0]), track(2, &[0.0, 1.0])]), &Default::default());
        assert_eq!(report.dropped_short, vec![1]);
        assert_eq!(ds.vehicle_count(), 1);
    }

    #[test]
    fn large_backward_jump_marks_track_corrupt() {
        let (ds, report) = validate_and_derive(Dataset::new([track(3, &[10.0, 11.0, 7.5, 8.0])]), &Default::default());
        assert_eq!(report.corrupt.len(), 1);
        assert_eq!(report.corrupt[0].frame, 2);
        assert_eq!(ds.vehicle_count(), 0);

        let lenient = DerivePolicy { max_backward_step_m: 5.0, ..Default::default() };
        let (ds, _) = validate_and_derive(Dataset::new([track(3, &[10.0, 11.0, 7.5, 8.0])]), &lenient);
        assert_eq!(ds.vehicle_count(), 1);
    }

    #[test]
    fn provided_kinematics_are_kept_by_default() {
        let (ds, report) = validate_and_derive(Dataset::new([track(1, &[0.0, 1.0])]), &Default::default());
        assert!(!report.recomputed_kinematics);
        assert_eq!(ds.track(1).unwrap().points()[0].speed, 99.0);
    }

    #[test]
    fn constant_acceleration_track_matches_analytic_speed() {
        let a = 1.7;
        let ys: Vec<f64> = (0..200).map(|i| 0.5 * a * (i as f64 * 0.1).powi(2)).collect();
        let (ds, _) = validate_and_derive(Dataset::new([track(1, &ys)]), &recompute_policy());
        let p = ds.track(1).unwrap().points();
        for q in &p[1..p.len() - 1] {
            assert!((q.speed - a * q.t).abs() < 1e-6, "t={} v={}", q.t, q.speed);
        }
    }
}
