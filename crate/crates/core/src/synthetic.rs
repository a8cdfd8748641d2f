//! Deterministic synthetic data: tracks, GHR-driven episodes and NGSIM-style
//! text, for tests, the self-test and benchmarks.

use std::f64::consts::TAU;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::classify::{pair_class, VehicleClass};
use crate::episode::{EndReason, Episode, EpisodeFrame, Section};
use crate::fit::{ClusterClass, ClusterLibrary};
use crate::ghr::{simulate_follower, warm_up_frames, GhrError, GhrParams, SimConfig, SimMode};
use crate::ingest::{Dataset, TrajectoryPoint, VehicleId, VehicleTrack};
use crate::units::{FEET_TO_METERS, FRAME_INTERVAL_S};

/// Seeded generator used by every synthetic routine.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A vehicle moving at piecewise-constant speed, with optional lane changes.
#[derive(Debug, Clone)]
pub struct TrackSpec {
    pub id: VehicleId,
    pub length: f64,
    pub first_frame: i64,
    pub n_frames: usize,
    pub y0: f64,
    pub speed: f64,
    pub lane: u32,
    /// `(frame, new_lane)` pairs in frame order.
    pub lane_changes: Vec<(i64, u32)>,
}

impl TrackSpec {
    pub fn new(id: VehicleId, length: f64, lane: u32) -> Self {
        Self { id, length, first_frame: 0, n_frames: 300, y0: 0.0, speed: 10.0, lane, lane_changes: Vec::new() }
    }

    pub fn frames(mut self, first_frame: i64, n_frames: usize) -> Self {
        self.first_frame = first_frame;
        self.n_frames = n_frames;
        self
    }

    /// Starting position and constant speed.
    pub fn motion(mut self, y0: f64, speed: f64) -> Self {
        self.y0 = y0;
        self.speed = speed;
        self
    }

    pub fn lane_change(mut self, frame: i64, lane: u32) -> Self {
        self.lane_changes.push((frame, lane));
        self
    }

    pub fn build(&self) -> VehicleTrack {
        let points = (0..self.n_frames)
            .map(|k| {
                let frame = self.first_frame + k as i64;
                let lane_id = self
                    .lane_changes
                    .iter()
                    .take_while(|(f, _)| *f <= frame)
                    .last()
                    .map_or(self.lane, |&(_, l)| l);
                TrajectoryPoint {
                    vehicle_id: self.id,
                    frame,
                    t: frame as f64 * FRAME_INTERVAL_S,
                    y: self.y0 + self.speed * k as f64 * FRAME_INTERVAL_S,
                    lane_id,
                    speed: self.speed,
                    accel: 0.0,
                    preceding_id: None,
                    space_headway: None,
                }
            })
            .collect();
        VehicleTrack::new(self.id, self.length, 1.8, points).expect("synthetic track is valid")
    }
}

/// Leader speed as a function of time since the episode start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeaderProfile {
    Constant { speed: f64 },
    /// Constant deceleration from `from` to `to`, then hold.
    Ramp { from: f64, to: f64, rate: f64 },
    /// Two superposed sinusoids around `mean`.
    Wave { mean: f64, amplitude: f64, period_s: f64 },
}

impl LeaderProfile {
    pub fn speed_at(&self, t: f64) -> f64 {
        match *self {
            LeaderProfile::Constant { speed } => speed,
            LeaderProfile::Ramp { from, to, rate } => {
                let v = from - rate * t;
                if from >= to {
                    v.max(to)
                } else {
                    (from + rate * t).min(to)
                }
            }
            LeaderProfile::Wave { mean, amplitude, period_s } => {
                mean + amplitude * (TAU * t / period_s).sin() + 0.5 * amplitude * (TAU * t / (0.37 * period_s)).sin()
            }
        }
    }
}

/// Layout of a simulated leader/follower episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpec {
    pub duration_s: f64,
    pub leader: LeaderProfile,
    /// Front-to-front spacing at the first frame.
    pub initial_spacing: f64,
    /// Follower speed held through the warm-up.
    pub initial_speed: f64,
    pub leader_length: f64,
    pub follower_class: VehicleClass,
    pub leader_class: VehicleClass,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            leader: LeaderProfile::Wave { mean: 15.0, amplitude: 2.0, period_s: 8.0 },
            initial_spacing: 25.0,
            initial_speed: 14.0,
            leader_length: 4.5,
            follower_class: VehicleClass::PassengerCar,
            leader_class: VehicleClass::PassengerCar,
        }
    }
}

/// An episode whose follower obeys the GHR law with `params` exactly.
///
/// The follower cruises at `initial_speed` through the warm-up, then is
/// integrated forward against the leader. Observed accelerations are the
/// model's, so a one-step fit with `params` reproduces them.
pub fn simulated_episode(id: u64, params: &GhrParams, spec: &EpisodeSpec) -> Result<Episode, GhrError> {
    let dt = FRAME_INTERVAL_S;
    let n = (spec.duration_s / dt).round() as usize + 1;
    let warm = warm_up_frames(params.tau, dt);

    let mut leader_y = Vec::with_capacity(n);
    let mut leader_v = Vec::with_capacity(n);
    let mut y = spec.initial_spacing;
    for k in 0..n {
        let v = spec.leader.speed_at(k as f64 * dt);
        leader_y.push(y);
        leader_v.push(v);
        y += v * dt;
    }

    let seed_frames: Vec<EpisodeFrame> = (0..n)
        .map(|k| {
            let observed = k <= warm;
            let fy = if observed { spec.initial_speed * k as f64 * dt } else { 0.0 };
            EpisodeFrame {
                frame: k as i64,
                t: k as f64 * dt,
                follower_y: fy,
                follower_speed: if observed { spec.initial_speed } else { 0.0 },
                follower_accel: 0.0,
                leader_y: leader_y[k],
                leader_speed: leader_v[k],
                space_headway: leader_y[k] - fy,
                gap: 0.0,
            }
        })
        .collect();
    let cfg = SimConfig { mode: SimMode::ForwardSimulation, ..SimConfig::default() };
    let traj = simulate_follower(&seed_frames, params, &cfg)?;

    let frames: Vec<EpisodeFrame> = traj
        .points
        .iter()
        .zip(&seed_frames)
        .map(|(p, f)| EpisodeFrame {
            follower_y: p.y,
            follower_speed: p.v,
            follower_accel: p.a,
            space_headway: f.leader_y - p.y,
            gap: f.leader_y - p.y - spec.leader_length,
            ..*f
        })
        .collect();
    let mut ep = Episode {
        id,
        follower_id: 2 * id + 1,
        leader_id: 2 * id + 2,
        follower_class: spec.follower_class,
        leader_class: spec.leader_class,
        pair: pair_class(spec.follower_class, spec.leader_class),
        leader_length: spec.leader_length,
        frames,
        end_reason: EndReason::DataEnd,
        avg_gap: 0.0,
        avg_speed: 0.0,
        negative_gap_frames: 0,
        late_forming: false,
        section: Section::Full,
    };
    ep.recompute_averages();
    Ok(ep)
}

/// Adds zero-mean Gaussian noise to the observed follower accelerations.
pub fn add_accel_noise(episode: &mut Episode, sigma: f64, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    for f in &mut episode.frames {
        f.follower_accel += normal.sample(rng);
    }
}

/// Episode a follower would produce in the scenario tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedEpisode {
    pub follower_id: VehicleId,
    pub leader_id: VehicleId,
    pub first_frame: i64,
    pub last_frame: i64,
    pub end_reason: EndReason,
    pub avg_gap: f64,
    /// Last frame of the before-merge part, if it survives the split.
    pub before_merge_last_frame: Option<i64>,
    /// First frame of the after-merge part, if it survives the split.
    pub after_merge_first_frame: Option<i64>,
}

/// Six vehicles at 8 m/s covering the main extraction rules.
///
/// * Lane 1: vehicle 1 follows car 2 at a 15.5 m gap for 30 s, entirely
///   downstream of the merge boundary.
/// * Lane 1: vehicle 3 follows vehicle 1 at a 65.5 m gap, crosses the merge
///   boundary at 7.5 s and moves to lane 3 at 28 s.
/// * Lane 2: vehicle 4 follows a 12 m truck (vehicle 5) at a 2 m gap.
/// * Lane 2: vehicle 6 follows vehicle 4 for only 10 s.
pub fn extraction_scenario() -> (Dataset, Vec<ExpectedEpisode>) {
    let v = 8.0;
    let tracks = [
        TrackSpec::new(1, 4.5, 1).frames(0, 300).motion(130.0, v),
        TrackSpec::new(2, 4.5, 1).frames(0, 300).motion(150.0, v),
        TrackSpec::new(3, 4.5, 1).frames(0, 300).motion(60.0, v).lane_change(280, 3),
        TrackSpec::new(4, 4.5, 2).frames(0, 300).motion(50.0, v),
        TrackSpec::new(5, 12.0, 2).frames(0, 300).motion(64.0, v),
        TrackSpec::new(6, 4.5, 2).frames(0, 100).motion(30.0, v),
    ];
    let dataset = Dataset::new(tracks.iter().map(TrackSpec::build));
    let expected = vec![
        ExpectedEpisode {
            follower_id: 1,
            leader_id: 2,
            first_frame: 0,
            last_frame: 299,
            end_reason: EndReason::DataEnd,
            avg_gap: 15.5,
            before_merge_last_frame: None,
            after_merge_first_frame: Some(0),
        },
        ExpectedEpisode {
            follower_id: 3,
            leader_id: 1,
            first_frame: 0,
            last_frame: 279,
            end_reason: EndReason::FollowerLaneChange,
            avg_gap: 65.5,
            before_merge_last_frame: Some(74),
            after_merge_first_frame: Some(75),
        },
    ];
    (dataset, expected)
}

/// Layout of a GHR-driven multi-pair dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDatasetSpec {
    pub pairs: usize,
    pub lanes: u32,
    /// Share of followers that leave for the auxiliary lane at the end.
    pub lane_change_share: f64,
    pub heavy_share: f64,
    /// Standard deviation of noise added to reported accelerations.
    pub accel_noise: f64,
    pub seed: u64,
}

impl Default for PairDatasetSpec {
    fn default() -> Self {
        Self { pairs: 60, lanes: 6, lane_change_share: 0.3, heavy_share: 0.25, accel_noise: 0.0, seed: 7 }
    }
}

/// Generating cluster of one synthetic follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTruth {
    pub follower_id: VehicleId,
    pub leader_id: VehicleId,
    pub class: ClusterClass,
    pub cluster_id: u32,
    pub lane_change: bool,
}

/// Independent leader/follower pairs whose followers obey clusters drawn
/// from `library`.
///
/// Pair `i` runs in lane `i % lanes + 1`, starting 30 s after the previous
/// pair in that lane, from the upstream end of the segment. A follower
/// picked for a lane change moves to lane `lanes + 1` and drives on for 3 s.
pub fn pair_dataset(spec: &PairDatasetSpec, library: &ClusterLibrary) -> (Dataset, Vec<PairTruth>) {
    let mut rng = rng(spec.seed);
    let lanes = spec.lanes.max(1);
    let mut tracks = Vec::with_capacity(2 * spec.pairs);
    let mut truth = Vec::with_capacity(spec.pairs);
    for i in 0..spec.pairs {
        let follower_heavy = rng.random_bool(spec.heavy_share);
        let leader_heavy = rng.random_bool(spec.heavy_share);
        let class = if follower_heavy { ClusterClass::Heavy } else { ClusterClass::Car };
        let group = library.group(class);
        let def = group[rng.random_range(0..group.len())];
        let mean: f64 = rng.random_range(4.0..12.0);
        let leader_length = if leader_heavy { rng.random_range(9.0..16.0) } else { rng.random_range(3.8..4.9) };
        let follower_length = if follower_heavy { rng.random_range(9.0..16.0) } else { rng.random_range(3.8..4.9) };
        let episode_spec = EpisodeSpec {
            duration_s: (340.0 / mean).clamp(26.0, 40.0),
            leader: LeaderProfile::Wave { mean, amplitude: 0.15 * mean, period_s: rng.random_range(6.0..14.0) },
            initial_spacing: leader_length + rng.random_range(8.0..40.0),
            initial_speed: mean * rng.random_range(0.85..1.0),
            leader_length,
            follower_class: if follower_heavy { VehicleClass::HeavyVehicle } else { VehicleClass::PassengerCar },
            leader_class: if leader_heavy { VehicleClass::HeavyVehicle } else { VehicleClass::PassengerCar },
        };
        let mut ep = simulated_episode(i as u64, &def.params, &episode_spec).expect("placeholder clusters simulate");
        if spec.accel_noise > 0.0 {
            add_accel_noise(&mut ep, spec.accel_noise, &mut rng);
        }
        let lane_change = rng.random_bool(spec.lane_change_share);
        let lane = i as u32 % lanes + 1;
        let offset = (i / lanes as usize) as i64 * 300 + 10;
        let (fid, lid) = (2 * i as u64 + 1, 2 * i as u64 + 2);
        let point = |vehicle_id, f: &EpisodeFrame, y: f64, lane_id: u32, speed: f64, accel: f64| TrajectoryPoint {
            vehicle_id,
            frame: f.frame + offset,
            t: (f.frame + offset) as f64 * FRAME_INTERVAL_S,
            y,
            lane_id,
            speed,
            accel,
            preceding_id: None,
            space_headway: None,
        };
        let leader: Vec<TrajectoryPoint> =
            ep.frames.iter().map(|f| point(lid, f, f.leader_y, lane, f.leader_speed, 0.0)).collect();
        let mut follower: Vec<TrajectoryPoint> = ep
            .frames
            .iter()
            .map(|f| TrajectoryPoint {
                preceding_id: Some(lid),
                space_headway: Some(f.space_headway),
                ..point(fid, f, f.follower_y, lane, f.follower_speed, f.follower_accel)
            })
            .collect();
        if lane_change {
            let last = *follower.last().expect("episodes are non-empty");
            for k in 1..=30 {
                follower.push(TrajectoryPoint {
                    frame: last.frame + k,
                    t: (last.frame + k) as f64 * FRAME_INTERVAL_S,
                    y: last.y + last.speed * k as f64 * FRAME_INTERVAL_S,
                    lane_id: lanes + 1,
                    accel: 0.0,
                    preceding_id: None,
                    space_headway: None,
                    ..last
                });
            }
        }
        tracks.push(VehicleTrack::new(lid, leader_length, 2.0, leader).expect("synthetic track is valid"));
        tracks.push(VehicleTrack::new(fid, follower_length, 2.0, follower).expect("synthetic track is valid"));
        truth.push(PairTruth { follower_id: fid, leader_id: lid, class, cluster_id: def.cluster_id, lane_change });
    }
    (Dataset::new(tracks), truth)
}

/// Shape of a generated NGSIM-format text file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgsimTextSpec {
    pub vehicles: usize,
    pub frames_per_vehicle: usize,
    pub lanes: u32,
    pub mean_speed: f64,
    pub heavy_share: f64,
    pub seed: u64,
}

impl Default for NgsimTextSpec {
    fn default() -> Self {
        Self { vehicles: 2900, frames_per_vehicle: 900, lanes: 6, mean_speed: 4.5, heavy_share: 0.08, seed: 1 }
    }
}

/// Writes platoons in the 16-column NGSIM layout (feet, ft/s).
///
/// Every lane shares a slowly varying speed wave, so spacings inside a
/// platoon stay constant. Rows are emitted frame-major like the public
/// files. Returns the number of rows written.
pub fn write_ngsim_text<W: Write>(spec: &NgsimTextSpec, out: W) -> io::Result<usize> {
    let mut out = io::BufWriter::with_capacity(1 << 20, out);
    let mut rng = rng(spec.seed);
    let dt = FRAME_INTERVAL_S;
    let lanes = spec.lanes.max(1) as usize;
    let wave = |t: f64, lane: usize| spec.mean_speed + 0.3 * spec.mean_speed * (TAU * t / 60.0 + lane as f64).sin();
    // Position along the lane's wave from absolute frame 0.
    let position = |frame: i64, lane: usize| -> f64 {
        let t = frame as f64 * dt;
        let w = TAU / 60.0;
        spec.mean_speed * t - 0.3 * spec.mean_speed / w * ((w * t + lane as f64).cos() - (lane as f64).cos())
    };

    struct Vehicle {
        id: u64,
        lane: usize,
        length: f64,
        first_frame: i64,
        entry: f64,
        preceding: u64,
    }
    let mut vehicles = Vec::with_capacity(spec.vehicles);
    let mut last_in_lane: Vec<Option<(u64, i64, f64)>> = vec![None; lanes];
    for i in 0..spec.vehicles {
        let lane = i % lanes;
        let heavy = rng.random_bool(spec.heavy_share);
        let length = if heavy { rng.random_range(9.0..16.0) } else { rng.random_range(3.8..5.0) };
        let (first_frame, preceding) = match last_in_lane[lane] {
            None => (rng.random_range(0..20), 0),
            Some((pid, pframe, plen)) => {
                let spacing = plen + rng.random_range(6.0..30.0);
                let mut f = pframe + 1;
                while position(f, lane) - position(pframe, lane) < spacing {
                    f += 1;
                }
                (f, pid)
            }
        };
        let id = i as u64 + 1;
        vehicles.push(Vehicle { id, lane, length, first_frame, entry: position(first_frame, lane), preceding });
        last_in_lane[lane] = Some((id, first_frame, length));
    }

    let n = spec.frames_per_vehicle as i64;
    let last_frame = vehicles.iter().map(|v| v.first_frame + n - 1).max().unwrap_or(0);
    let mut rows = 0usize;
    let ft = 1.0 / FEET_TO_METERS;
    // Every track has the same length, so ordering by entry frame also
    // orders exits and the active set is a sliding window.
    let mut order: Vec<&Vehicle> = vehicles.iter().collect();
    order.sort_by_key(|v| (v.first_frame, v.id));
    let mut lo = 0usize;
    for frame in 0..=last_frame {
        while lo < order.len() && order[lo].first_frame + n - 1 < frame {
            lo += 1;
        }
        for v in order[lo..].iter().take_while(|v| v.first_frame <= frame) {
            let t = frame as f64 * dt;
            let y = position(frame, v.lane) - v.entry;
            let speed = wave(t, v.lane);
            let accel = 0.3 * spec.mean_speed * TAU / 60.0 * (TAU * t / 60.0 + v.lane as f64).cos();
            let headway = if v.preceding == 0 {
                0.0
            } else {
                let p = &vehicles[v.preceding as usize - 1];
                if frame < p.first_frame + n {
                    (position(frame, p.lane) - p.entry) - y
                } else {
                    0.0
                }
            };
            let preceding = if headway > 0.0 { v.preceding } else { 0 };
            let class = if v.length > 5.5 { 3 } else { 2 };
            writeln!(
                out,
                "{} {} {} {} {:.3} {:.3} {:.1} {:.1} {} {:.2} {:.2} {} {} 0 {:.2} 0.00",
                v.id,
                frame,
                n,
                1_113_433_135_300i64 + frame * 100,
                6.0 + 12.0 * v.lane as f64,
                y * ft,
                v.length * ft,
                6.0,
                class,
                speed * ft,
                accel * ft,
                v.lane + 1,
                preceding,
                headway * ft,
            )?;
            rows += 1;
        }
    }
    out.flush()?;
    Ok(rows)
}
