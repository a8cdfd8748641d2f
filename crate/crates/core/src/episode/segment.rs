use super::{EndReason, Episode, Section};

/// Splits an episode where the follower first reaches `boundary_y`.
///
/// Frames before the first one with `follower_y >= boundary_y` form the
/// before-merge part; the rest form the after-merge part. A part spanning
/// less than `min_duration_s` comes back as `None`. Both parts recompute
/// their mean gap and speed.
pub fn segment_by_position(
    episode: &Episode,
    boundary_y: f64,
    min_duration_s: f64,
) -> (Option<Episode>, Option<Episode>) {
    let split = episode
        .frames
        .iter()
        .position(|f| f.follower_y >= boundary_y)
        .unwrap_or(episode.frames.len());
    let (before, after) = episode.frames.split_at(split);

    let part = |frames: &[super::EpisodeFrame], section: Section, end_reason: EndReason| {
        let (first, last) = (frames.first()?, frames.last()?);
        if last.t - first.t + 1e-9 < min_duration_s {
            return None;
        }
        let mut ep = Episode {
            frames: frames.to_vec(),
            section,
            end_reason,
            ..episode.clone_without_frames()
        };
        ep.recompute_averages();
        Some(ep)
    };
    (
        part(before, Section::BeforeMerge, EndReason::MergeBoundary),
        part(after, Section::AfterMerge, episode.end_reason),
    )
}

impl Episode {
    fn clone_without_frames(&self) -> Episode {
        Episode {
            id: self.id,
            follower_id: self.follower_id,
            leader_id: self.leader_id,
            follower_class: self.follower_class,
            leader_class: self.leader_class,
            pair: self.pair,
            leader_length: self.leader_length,
            frames: Vec::new(),
            end_reason: self.end_reason,
            avg_gap: self.avg_gap,
            avg_speed: self.avg_speed,
            negative_gap_frames: self.negative_gap_frames,
            late_forming: self.late_forming,
            section: self.section,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{PairClass, VehicleClass};
    use crate::episode::EpisodeFrame;
    use proptest::prelude::*;

    fn episode(ys: impl Iterator<Item = f64>) -> Episode {
        let frames: Vec<EpisodeFrame> = ys
            .enumerate()
            .map(|(i, y)| EpisodeFrame {
                frame: i as i64,
                t: i as f64 * 0.1,
                follower_y: y,
                follower_speed: 10.0 + (i % 7) as f64,
                follower_accel: 0.0,
                leader_y: y + 30.0,
                leader_speed: 10.0,
                space_headway: 30.0,
                gap: 15.0 + (i % 5) as f64,
            })
            .collect();
        let mut ep = Episode {
            id: 4,
            follower_id: 1,
            leader_id: 2,
            follower_class: VehicleClass::PassengerCar,
            leader_class: VehicleClass::HeavyVehicle,
            pair: PairClass::CarFollowsHeavy,
            leader_length: 15.0,
            frames,
            end_reason: EndReason::SegmentExit,
            avg_gap: 0.0,
            avg_speed: 0.0,
            negative_gap_frames: 0,
            late_forming: false,
            section: Section::Full,
        };
        ep.recompute_averages();
        ep
    }

    #[test]
    fn full_span_splits_at_boundary() {
        // 0 -> 400 m at 10 m/s.
        let ep = episode((0..=400).map(|i| i as f64));
        let (before, after) = segment_by_position(&ep, 120.0, 5.0);
        let (before, after) = (before.unwrap(), after.unwrap());
        assert_eq!(before.frames.last().unwrap().follower_y, 119.0);
        assert_eq!(after.frames[0].follower_y, 120.0);
        assert_eq!(before.section, Section::BeforeMerge);
        assert_eq!(after.end_reason, EndReason::SegmentExit);
        assert_eq!(before.frames.len() + after.frames.len(), ep.frames.len());
    }

    #[test]
    fn entirely_after_boundary() {
        let ep = episode((0..300).map(|i| 130.0 + i as f64));
        let (before, after) = segment_by_position(&ep, 120.0, 5.0);
        assert!(before.is_none());
        assert_eq!(after.unwrap().frames, ep.frames);
    }

    #[test]
    fn short_before_part_is_absent() {
        // Crosses 120 m after 2 s.
        let ep = episode((0..300).map(|i| 100.0 + i as f64));
        let (before, after) = segment_by_position(&ep, 120.0, 5.0);
        assert!(before.is_none());
        assert!(after.is_some());
    }

    #[test]
    fn parts_recompute_averages() {
        let ep = episode((0..=400).map(|i| i as f64));
        let (before, _) = segment_by_position(&ep, 120.0, 5.0);
        let before = before.unwrap();
        let expected = before.frames.iter().map(|f| f.gap).sum::<f64>() / before.frames.len() as f64;
        assert_eq!(before.avg_gap, expected);
    }

    proptest! {
        #[test]
        fn parts_partition_the_frames(boundary in -10.0f64..450.0, n in 2usize..400) {
            let ep = episode((0..n).map(|i| i as f64));
            let (before, after) = segment_by_position(&ep, boundary, 0.0);
            let mut frames: Vec<i64> = before.iter().chain(after.iter()).flat_map(|e| e.frames.iter().map(|f| f.frame)).collect();
            let total = frames.len();
            frames.sort();
            frames.dedup();
            prop_assert_eq!(frames.len(), total);
            // With a zero minimum only an empty side can be missing.
            prop_assert_eq!(total, n);
        }
    }
}
