use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    compute_gap, EndReason, Episode, EpisodeFrame, ExtractError, ExtractionConfig, HeadwayConvention, LeaderSource,
    Section, SpacingSource,
};
use crate::classify::{pair_class, ClassifierConfig, VehicleClass};
use crate::ingest::{Dataset, TrajectoryPoint, VehicleId, VehicleTrack};

/// Counters describing what extraction saw and discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    pub followers_scanned: usize,
    pub runs_found: usize,
    pub discarded_short: usize,
    pub discarded_gap: usize,
    pub discarded_late_forming: usize,
    /// Frames whose preceding-vehicle id is not in the dataset (or not
    /// observed at that frame); skipped.
    pub unresolved_leader_frames: usize,
    /// Frames where the preceding column named a different vehicle than the
    /// nearest vehicle ahead; the geometric leader was used.
    pub leader_disagreement_frames: usize,
    /// Frames with a negative instantaneous gap inside emitted episodes.
    pub negative_gap_frames: usize,
}

impl ExtractionDiagnostics {
    fn absorb(&mut self, o: &ExtractionDiagnostics) {
        self.followers_scanned += o.followers_scanned;
        self.runs_found += o.runs_found;
        self.discarded_short += o.discarded_short;
        self.discarded_gap += o.discarded_gap;
        self.discarded_late_forming += o.discarded_late_forming;
        self.unresolved_leader_frames += o.unresolved_leader_frames;
        self.leader_disagreement_frames += o.leader_disagreement_frames;
        self.negative_gap_frames += o.negative_gap_frames;
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionOutput {
    /// Sorted by `(follower_id, start_frame)`; `id` is the position.
    pub episodes: Vec<Episode>,
    pub diagnostics: ExtractionDiagnostics,
}

#[derive(Clone, Copy)]
struct Entry {
    lane: u32,
    y: f64,
    track: u32,
}

/// Every sample bucketed by frame, each bucket sorted by `(lane, y)`.
struct FrameIndex {
    base: i64,
    offsets: Vec<usize>,
    entries: Vec<Entry>,
}

impl FrameIndex {
    fn build(tracks: &[&VehicleTrack]) -> Self {
        let frames = tracks.iter().flat_map(|t| t.first_frame().into_iter().chain(t.last_frame()));
        let (lo, hi) = frames.fold((i64::MAX, i64::MIN), |(lo, hi), f| (lo.min(f), hi.max(f)));
        if lo > hi {
            return Self { base: 0, offsets: vec![0], entries: Vec::new() };
        }
        let span = (hi - lo + 1) as usize;
        let mut offsets = vec![0usize; span + 1];
        for t in tracks {
            for p in t.points() {
                offsets[(p.frame - lo) as usize + 1] += 1;
            }
        }
        for i in 0..span {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![Entry { lane: 0, y: 0.0, track: 0 }; offsets[span]];
        for (ti, t) in tracks.iter().enumerate() {
            for p in t.points() {
                let slot = &mut cursor[(p.frame - lo) as usize];
                entries[*slot] = Entry { lane: p.lane_id, y: p.y, track: ti as u32 };
                *slot += 1;
            }
        }
        for i in 0..span {
            entries[offsets[i]..offsets[i + 1]].sort_unstable_by(|a, b| a.lane.cmp(&b.lane).then(a.y.total_cmp(&b.y)));
        }
        Self { base: lo, offsets, entries }
    }

    fn bucket(&self, frame: i64) -> &[Entry] {
        let i = frame - self.base;
        if i < 0 || i as usize + 1 >= self.offsets.len() {
            return &[];
        }
        &self.entries[self.offsets[i as usize]..self.offsets[i as usize + 1]]
    }

    /// Nearest vehicle strictly ahead of `p` in its lane.
    fn nearest_ahead(&self, p: &TrajectoryPoint) -> Option<usize> {
        let bucket = self.bucket(p.frame);
        let k = bucket.partition_point(|e| e.lane < p.lane_id || (e.lane == p.lane_id && e.y <= p.y));
        bucket.get(k).filter(|e| e.lane == p.lane_id).map(|e| e.track as usize)
    }
}

struct Context<'a> {
    tracks: Vec<&'a VehicleTrack>,
    classes: Vec<VehicleClass>,
    by_id: HashMap<VehicleId, usize>,
    index: FrameIndex,
    cfg: &'a ExtractionConfig,
    segment_length: f64,
}

enum Lookup {
    Leader(usize),
    NoLeader,
    Unresolved,
}

impl Context<'_> {
    fn lookup(&self, p: &TrajectoryPoint, diag: &mut ExtractionDiagnostics) -> Lookup {
        let from_column = |id: VehicleId| match self.by_id.get(&id) {
            Some(&li) if self.tracks[li].point_at_frame(p.frame).is_some() => Lookup::Leader(li),
            _ => Lookup::Unresolved,
        };
        match self.cfg.leader_source {
            LeaderSource::Geometric => self.index.nearest_ahead(p).map_or(Lookup::NoLeader, Lookup::Leader),
            LeaderSource::PrecedingColumn => p.preceding_id.map_or(Lookup::NoLeader, from_column),
            LeaderSource::Auto => match (self.index.nearest_ahead(p), p.preceding_id) {
                (Some(g), Some(id)) => {
                    if self.tracks[g].vehicle_id != id {
                        diag.leader_disagreement_frames += 1;
                    }
                    Lookup::Leader(g)
                }
                (Some(g), None) => Lookup::Leader(g),
                (None, Some(id)) if !self.by_id.contains_key(&id) => Lookup::Unresolved,
                (None, _) => Lookup::NoLeader,
            },
        }
    }

    /// Leader of `p` when the follow relation holds: same lane, strictly ahead.
    fn valid_leader(&self, p: &TrajectoryPoint, diag: &mut ExtractionDiagnostics) -> Option<usize> {
        match self.lookup(p, diag) {
            Lookup::Leader(li) => {
                let lp = self.tracks[li].point_at_frame(p.frame)?;
                (lp.lane_id == p.lane_id && lp.y > p.y).then_some(li)
            }
            Lookup::Unresolved => {
                diag.unresolved_leader_frames += 1;
                None
            }
            Lookup::NoLeader => None,
        }
    }

    fn near_exit(&self, y: f64) -> bool {
        y >= self.segment_length - self.cfg.segment_exit_margin_m
    }

    fn end_reason(&self, follower: &VehicleTrack, last: usize, leader: usize) -> EndReason {
        let pts = follower.points();
        let cur = &pts[last];
        let leader_track = self.tracks[leader];
        let next = pts.get(last + 1).filter(|n| n.frame == cur.frame + 1);
        let Some(next) = next else {
            return if self.near_exit(cur.y) { EndReason::SegmentExit } else { EndReason::DataEnd };
        };
        if next.lane_id != cur.lane_id {
            return EndReason::FollowerLaneChange;
        }
        match leader_track.point_at_frame(next.frame) {
            None => {
                let leader_last_y = leader_track.point_at_frame(cur.frame).map_or(f64::NAN, |p| p.y);
                if self.near_exit(leader_last_y) {
                    EndReason::SegmentExit
                } else {
                    EndReason::DataEnd
                }
            }
            Some(lp) if lp.lane_id != cur.lane_id => EndReason::LeaderLaneChange,
            Some(_) => EndReason::LeaderChanged,
        }
    }

    fn spacing(&self, p: &TrajectoryPoint, lp: &TrajectoryPoint, leader: &VehicleTrack) -> f64 {
        if self.cfg.spacing_source == SpacingSource::Auto {
            if let (Some(h), Some(pid)) = (p.space_headway, p.preceding_id) {
                if pid == leader.vehicle_id && h > 0.0 {
                    return match self.cfg.headway_convention {
                        HeadwayConvention::FrontToFront => h,
                        HeadwayConvention::FrontToRear => h + leader.length,
                    };
                }
            }
        }
        // Positions are front-bumper references, so this is front-to-front.
        lp.y - p.y
    }

    fn build_episode(&self, fi: usize, li: usize, range: std::ops::RangeInclusive<usize>) -> Episode {
        let follower = self.tracks[fi];
        let leader = self.tracks[li];
        let frames: Vec<EpisodeFrame> = follower.points()[range]
            .iter()
            .map(|p| {
                let lp = leader.point_at_frame(p.frame).expect("leader observed on every run frame");
                let space_headway = self.spacing(p, lp, leader);
                let gap = compute_gap(space_headway, leader.length).unwrap_or_else(|neg| neg.gap);
                EpisodeFrame {
                    frame: p.frame,
                    t: p.t,
                    follower_y: p.y,
                    follower_speed: p.speed,
                    follower_accel: p.accel,
                    leader_y: lp.y,
                    leader_speed: lp.speed,
                    space_headway,
                    gap,
                }
            })
            .collect();
        let mut ep = Episode {
            id: 0,
            follower_id: follower.vehicle_id,
            leader_id: leader.vehicle_id,
            follower_class: self.classes[fi],
            leader_class: self.classes[li],
            pair: pair_class(self.classes[fi], self.classes[li]),
            leader_length: leader.length,
            frames,
            end_reason: EndReason::DataEnd,
            avg_gap: 0.0,
            avg_speed: 0.0,
            negative_gap_frames: 0,
            late_forming: false,
            section: Section::Full,
        };
        ep.recompute_averages();
        ep
    }

    fn extract_follower(&self, fi: usize) -> (Vec<Episode>, ExtractionDiagnostics) {
        let mut diag = ExtractionDiagnostics { followers_scanned: 1, ..Default::default() };
        let mut out = Vec::new();
        let follower = self.tracks[fi];
        let pts = follower.points();
        let Some(entry) = pts.iter().position(|p| p.y >= 0.0 && p.y <= self.segment_length) else {
            return (out, diag);
        };
        let leaders: Vec<Option<usize>> = pts.iter().map(|p| self.valid_leader(p, &mut diag)).collect();

        let mut i = 0;
        while i < pts.len() {
            let Some(li) = leaders[i] else {
                i += 1;
                continue;
            };
            let start = i;
            while i + 1 < pts.len() && pts[i + 1].frame == pts[i].frame + 1 && leaders[i + 1] == Some(li) {
                i += 1;
            }
            let last = i;
            i += 1;
            diag.runs_found += 1;

            if pts[last].t - pts[start].t + 1e-9 < self.cfg.min_duration_s {
                diag.discarded_short += 1;
                continue;
            }
            let late = pts[start].frame - pts[entry].frame > i64::from(self.cfg.entry_grace_frames);
            if late && !self.cfg.include_late_forming {
                diag.discarded_late_forming += 1;
                continue;
            }
            let mut ep = self.build_episode(fi, li, start..=last);
            if ep.avg_gap < self.cfg.gap_min_m || ep.avg_gap > self.cfg.gap_max_m {
                diag.discarded_gap += 1;
                continue;
            }
            ep.late_forming = late;
            ep.end_reason = self.end_reason(follower, last, li);
            diag.negative_gap_frames += ep.negative_gap_frames;
            out.push(ep);
        }
        (out, diag)
    }
}

/// Finds every car-following episode in `dataset`.
///
/// An episode is a maximal run of consecutive follower frames with one leader
/// in the same lane and strictly ahead. Runs shorter than
/// `cfg.min_duration_s`, with a mean gap outside `[gap_min_m, gap_max_m]`, or
/// (unless `include_late_forming`) starting more than `entry_grace_frames`
/// after the follower entered the segment are discarded.
pub fn extract_episodes(
    dataset: &Dataset,
    cfg: &ExtractionConfig,
    classifier: &ClassifierConfig,
) -> Result<ExtractionOutput, ExtractError> {
    cfg.validate()?;
    classifier.validate()?;
    let tracks: Vec<&VehicleTrack> = dataset.tracks().collect();
    let classes = tracks.iter().map(|t| classifier.classify(t.length)).collect::<Result<Vec<_>, _>>()?;
    let by_id = tracks.iter().enumerate().map(|(i, t)| (t.vehicle_id, i)).collect();
    let ctx = Context {
        index: FrameIndex::build(&tracks),
        tracks,
        classes,
        by_id,
        cfg,
        segment_length: dataset.segment_length,
    };

    let per_follower: Vec<(Vec<Episode>, ExtractionDiagnostics)> =
        (0..ctx.tracks.len()).into_par_iter().map(|fi| ctx.extract_follower(fi)).collect();

    let mut diagnostics = ExtractionDiagnostics::default();
    let mut episodes = Vec::new();
    for (eps, diag) in per_follower {
        diagnostics.absorb(&diag);
        episodes.extend(eps);
    }
    episodes.sort_by_key(|e| (e.follower_id, e.start_frame(), e.leader_id));
    for w in episodes.windows(2) {
        if (w[0].follower_id, w[0].leader_id, w[0].start_frame()) == (w[1].follower_id, w[1].leader_id, w[1].start_frame()) {
            return Err(ExtractError::DuplicateEpisode {
                follower_id: w[0].follower_id,
                leader_id: w[0].leader_id,
                start_frame: w[0].start_frame(),
            });
        }
    }
    for (i, ep) in episodes.iter_mut().enumerate() {
        ep.id = i as u64;
    }
    Ok(ExtractionOutput { episodes, diagnostics })
}
