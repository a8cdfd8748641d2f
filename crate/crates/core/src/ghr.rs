//! The Gazis–Herman–Rothery stimulus-response law
//!
//! ```text
//! a(t) = c · v(t)^m · Δv(t − τ) / Δx(t − τ)^l
//! ```
//!
//! where `v` is the follower's speed, `Δv` is leader speed minus follower
//! speed and `Δx` is the front-to-front spacing. The delayed terms are read
//! from the 10 Hz episode frames, interpolated when `τ` falls between
//! samples.
//!
//! Two evaluation modes exist. One-step prediction plugs observed delayed
//! states into the law frame by frame. Forward simulation integrates the
//! follower's own predicted state against the observed leader.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::EpisodeFrame;
use crate::units::{FRAME_INTERVAL_S, GRID_EPS};

/// Closest simulated spacing allowed before a simulation is cut short.
pub const COLLISION_SPACING_M: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GhrError {
    #[error("spacing must be positive, got {0} m")]
    NonPositiveSpacing(f64),
    #[error("zero follower speed with negative speed exponent {0} is singular")]
    SingularSpeed(f64),
    #[error("acceleration is not finite (v={v}, dv={dv}, dx={dx})")]
    NonFinite { v: f64, dv: f64, dx: f64 },
    #[error("negative follower speed {0}")]
    NegativeSpeed(f64),
    #[error("invalid GHR parameters: {0}")]
    InvalidParams(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// One `(c, m, l, τ)` behavioral parameter tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhrParams {
    /// Sensitivity coefficient.
    pub c: f64,
    /// Speed exponent.
    pub m: f64,
    /// Spacing exponent.
    pub l: f64,
    /// Perception-reaction time, seconds.
    pub tau: f64,
}

impl GhrParams {
    pub fn new(c: f64, m: f64, l: f64, tau: f64) -> Result<Self, GhrError> {
        let p = Self { c, m, l, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GhrError> {
        if ![self.c, self.m, self.l, self.tau].iter().all(|x| x.is_finite()) {
            return Err(GhrError::InvalidParams(format!("non-finite value in {self:?}")));
        }
        if self.tau < 0.0 {
            return Err(GhrError::InvalidParams(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    OneStepPrediction,
    ForwardSimulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayInterp {
    #[default]
    Linear,
    NearestFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Integration step; also the spacing of the episode samples.
    pub dt: f64,
    pub mode: SimMode,
    pub delay_interp: DelayInterp,
    pub min_speed_floor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: FRAME_INTERVAL_S,
            mode: SimMode::OneStepPrediction,
            delay_interp: DelayInterp::Linear,
            min_speed_floor: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), GhrError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GhrError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.min_speed_floor >= 0.0) {
            return Err(GhrError::InvalidConfig("min_speed_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Follower acceleration from the GHR law.
pub fn ghr_acceleration(v_n: f64, dv: f64, dx: f64, p: &GhrParams) -> Result<f64, GhrError> {
    if !(dx > 0.0) {
        return Err(GhrError::NonPositiveSpacing(dx));
    }
    if v_n < 0.0 {
        return Err(GhrError::NegativeSpeed(v_n));
    }
    if v_n == 0.0 && p.m < 0.0 {
        return Err(GhrError::SingularSpeed(p.m));
    }
    if dv == 0.0 || p.c == 0.0 {
        return Ok(0.0);
    }
    let a = p.c * v_n.powf(p.m) * dv / dx.powf(p.l);
    if a.is_finite() {
        Ok(a)
    } else {
        Err(GhrError::NonFinite { v: v_n, dv, dx })
    }
}

/// Analytic partial derivatives of the acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhrPartials {
    pub d_speed: f64,
    pub d_relative_speed: f64,
    pub d_spacing: f64,
}

/// Partials of [`ghr_acceleration`] with respect to its three inputs.
/// Requires `v_n > 0`.
pub fn ghr_partials(v_n: f64, dv: f64, dx: f64, p: &GhrParams) -> Result<GhrPartials, GhrError> {
    if v_n == 0.0 {
        return Err(GhrError::SingularSpeed(p.m));
    }
    let a = ghr_acceleration(v_n, dv, dx, p)?;
    Ok(GhrPartials {
        d_speed: p.m * a / v_n,
        d_relative_speed: p.c * v_n.powf(p.m) / dx.powf(p.l),
        d_spacing: -p.l * a / dx,
    })
}

/// Position of a delayed query on a uniform sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Tap {
    Exact(usize),
    Between { lo: usize, frac: f64 },
}

impl Tap {
    pub(crate) fn eval(self, series: impl Fn(usize) -> f64) -> f64 {
        match self {
            Tap::Exact(i) => series(i),
            Tap::Between { lo, frac } => {
                let (a, b) = (series(lo), series(lo + 1));
                a + frac * (b - a)
            }
        }
    }
}

/// Where `t_index · dt − tau` lands among `len` samples spaced `dt` apart.
/// `None` when it falls before the first sample.
pub(crate) fn delay_tap(t_index: f64, tau: f64, dt: f64, len: usize, interp: DelayInterp) -> Option<Tap> {
    let s = t_index - tau / dt;
    if s < -GRID_EPS || len == 0 {
        return None;
    }
    let nearest = s.round();
    if (s - nearest).abs() < GRID_EPS || interp == DelayInterp::NearestFrame {
        let i = nearest.max(0.0) as usize;
        return (i < len).then_some(Tap::Exact(i));
    }
    let lo = s.floor() as usize;
    (lo + 1 < len).then_some(Tap::Between { lo, frac: s - lo as f64 })
}

/// `Δv` and `Δx` evaluated at a delayed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayedState {
    pub dv: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("no observed state at t − tau = {query_t:.3} s (episode starts at {start_t:.3} s)")]
pub struct StateUnavailable {
    pub query_t: f64,
    pub start_t: f64,
}

/// Relative speed and spacing at `t − tau`.
///
/// `frames` must be consecutive 0.1 s samples. Linear mode interpolates
/// between the two bracketing samples; nearest-frame mode rounds.
pub fn delayed_state(
    frames: &[EpisodeFrame],
    t: f64,
    tau: f64,
    interp: DelayInterp,
) -> Result<DelayedState, StateUnavailable> {
    let start_t = frames.first().map_or(f64::NAN, |f| f.t);
    let unavailable = StateUnavailable { query_t: t - tau, start_t };
    let t_index = (t - start_t) / FRAME_INTERVAL_S;
    let tap = delay_tap(t_index, tau, FRAME_INTERVAL_S, frames.len(), interp).ok_or(unavailable)?;
    Ok(DelayedState {
        dv: tap.eval(|i| frames[i].relative_speed()),
        dx: tap.eval(|i| frames[i].space_headway),
    })
}

/// Number of leading frames without a delayed state.
pub fn warm_up_frames(tau: f64, dt: f64) -> usize {
    let s = tau / dt;
    let r = s.round();
    if (s - r).abs() < GRID_EPS {
        r as usize
    } else {
        s.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedPoint {
    /// Index into the episode frames.
    pub index: usize,
    pub t: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub points: Vec<PredictedPoint>,
    /// Frames skipped because `t − τ` precedes the episode.
    pub warm_up_frames: usize,
    /// Frames where the law was undefined (e.g. zero speed with `m < 0`).
    pub undefined_frames: usize,
}

impl PredictionSeries {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One-step predicted accelerations over an episode.
///
/// Every frame whose `t − τ` lies inside the episode is predicted from the
/// observed follower speed at `t` and the observed relative speed and
/// spacing at `t − τ`. Warm-up frames produce nothing; an episode no longer
/// than `τ` yields an empty series.
pub fn predict_accelerations(frames: &[EpisodeFrame], p: &GhrParams, cfg: &SimConfig) -> PredictionSeries {
    let warm = warm_up_frames(p.tau, cfg.dt).min(frames.len());
    let mut series = PredictionSeries { warm_up_frames: warm, ..Default::default() };
    for (k, frame) in frames.iter().enumerate().skip(warm) {
        let Some(tap) = delay_tap(k as f64, p.tau, cfg.dt, frames.len(), cfg.delay_interp) else {
            continue;
        };
        let dv = tap.eval(|i| frames[i].relative_speed());
        let dx = tap.eval(|i| frames[i].space_headway);
        match ghr_acceleration(frame.follower_speed, dv, dx, p) {
            Ok(a) => series.points.push(PredictedPoint { index: k, t: frame.t, accel: a }),
            Err(_) => series.undefined_frames += 1,
        }
    }
    series
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPoint {
    pub t: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrajectory {
    /// One point per episode frame until the end or truncation.
    pub points: Vec<SimPoint>,
    /// Frames copied from observations before the law takes over.
    pub warm_up_frames: usize,
    /// Set when the collision guard stopped the run.
    pub truncated: bool,
}

/// Integrates the follower forward against the observed leader.
///
/// States up to and including the first frame with a delayed state are the
/// observed ones. From there, acceleration comes from the law using the
/// simulated follower history, speed is advanced by `a·dt` and clamped at
/// `min_speed_floor`, and position by `v·dt`. The run stops early if the
/// simulated spacing drops to [`COLLISION_SPACING_M`].
pub fn simulate_follower(frames: &[EpisodeFrame], p: &GhrParams, cfg: &SimConfig) -> Result<SimulatedTrajectory, GhrError> {
    cfg.validate()?;
    p.validate()?;
    let n = frames.len();
    let warm = warm_up_frames(p.tau, cfg.dt);
    if warm >= n {
        return Ok(SimulatedTrajectory { points: Vec::new(), warm_up_frames: warm, truncated: false });
    }

    let mut y: Vec<f64> = Vec::with_capacity(n);
    let mut v: Vec<f64> = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for f in &frames[..warm] {
        y.push(f.follower_y);
        v.push(f.follower_speed);
        points.push(SimPoint { t: f.t, y: f.follower_y, v: f.follower_speed, a: f.follower_accel });
    }
    y.push(frames[warm].follower_y);
    v.push(frames[warm].follower_speed);

    // Spacing tracks the observed Δx, shifted by how far the simulated
    // follower has drifted from the observed one.
    let spacing = |i: usize, y_sim: f64| frames[i].space_headway + (frames[i].follower_y - y_sim);

    for k in warm..n {
        if spacing(k, y[k]) <= COLLISION_SPACING_M {
            return Ok(SimulatedTrajectory { points, warm_up_frames: warm, truncated: true });
        }
        let tap = delay_tap(k as f64, p.tau, cfg.dt, k + 1, cfg.delay_interp)
            .expect("frames past warm-up have a delayed state");
        let dv = tap.eval(|i| frames[i].leader_speed - v[i]);
        let dx = tap.eval(|i| spacing(i, y[i]));
        let a = ghr_acceleration(v[k], dv, dx, p)?;
        points.push(SimPoint { t: frames[k].t, y: y[k], v: v[k], a });
        if k + 1 < n {
            y.push(y[k] + v[k] * cfg.dt);
            v.push((v[k] + a * cfg.dt).max(cfg.min_speed_floor));
        }
    }
    Ok(SimulatedTrajectory { points, warm_up_frames: warm, truncated: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames_from(leader_v: &[f64], follower_v: &[f64], dx: &[f64]) -> Vec<EpisodeFrame> {
        (0..leader_v.len())
            .map(|i| EpisodeFrame {
                frame: i as i64,
                t: i as f64 * 0.1,
                follower_y: 0.0,
                follower_speed: follower_v[i],
                follower_accel: 0.0,
                leader_y: dx[i],
                leader_speed: leader_v[i],
                space_headway: dx[i],
                gap: dx[i] - 4.0,
            })
            .collect()
    }

    fn p(c: f64, m: f64, l: f64, tau: f64) -> GhrParams {
        GhrParams::new(c, m, l, tau).unwrap()
    }

    #[test]
    fn zero_relative_speed_gives_zero() {
        assert_eq!(ghr_acceleration(13.0, 0.0, 25.0, &p(1.55, 0.9, 1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn zero_exponents_reduce_to_c_dv() {
        assert_eq!(ghr_acceleration(7.0, 1.5, 30.0, &p(2.0, 0.0, 0.0, 0.0)).unwrap(), 3.0);
    }

    #[test]
    fn reference_point() {
        // 1.55 · 10^0.9 · (−2) / 20 = −1.2312088
        let a = ghr_acceleration(10.0, -2.0, 20.0, &p(1.55, 0.9, 1.0, 1.0)).unwrap();
        assert!((a - (-1.231_208_8)).abs() < 1e-6, "{a}");
    }

    #[test]
    fn domain_errors() {
        let q = p(1.0, -0.5, 1.0, 1.0);
        assert_eq!(ghr_acceleration(0.0, 1.0, 10.0, &q), Err(GhrError::SingularSpeed(-0.5)));
        assert!(matches!(ghr_acceleration(5.0, 1.0, 0.0, &q), Err(GhrError::NonPositiveSpacing(_))));
        assert!(matches!(ghr_acceleration(5.0, 1.0, -3.0, &q), Err(GhrError::NonPositiveSpacing(_))));
        assert!(GhrParams::new(1.0, 1.0, 1.0, -0.1).is_err());
        assert!(GhrParams::new(f64::NAN, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn zero_speed_with_positive_exponent_is_fine() {
        assert_eq!(ghr_acceleration(0.0, 1.0, 10.0, &p(1.0, 0.5, 1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn linear_delay_interpolation() {
        // Samples at t−1.4 (dv 1.0) and t−1.3 (dv 2.0); tau 1.31 → 1.9.
        let n = 30;
        let mut leader = vec![10.0; n];
        leader[10] = 11.0;
        leader[11] = 12.0;
        let frames = frames_from(&leader, &vec![10.0; n], &vec![20.0; n]);
        let t = frames[24].t;
        let s = delayed_state(&frames, t, 1.31, DelayInterp::Linear).unwrap();
        assert!((s.dv - 1.9).abs() < 1e-9, "{}", s.dv);
        let s = delayed_state(&frames, t, 1.31, DelayInterp::NearestFrame).unwrap();
        assert_eq!(s.dv, 2.0);
    }

    #[test]
    fn zero_delay_reads_current_frame() {
        let frames = frames_from(&[10.0, 12.0, 9.0], &[10.0, 10.0, 10.0], &[20.0, 21.0, 22.0]);
        let s = delayed_state(&frames, frames[2].t, 0.0, DelayInterp::Linear).unwrap();
        assert_eq!(s, DelayedState { dv: -1.0, dx: 22.0 });
    }

    #[test]
    fn delay_before_start_is_unavailable() {
        let frames = frames_from(&[10.0; 300], &[10.0; 300], &[20.0; 300]);
        assert!(delayed_state(&frames, frames[0].t + 1.0, 2.95, DelayInterp::Linear).is_err());
        assert!(delayed_state(&frames, frames[0].t + 2.95, 2.95, DelayInterp::Linear).is_ok());
    }

    #[test]
    fn warm_up_arithmetic() {
        assert_eq!(warm_up_frames(2.95, 0.1), 30);
        assert_eq!(warm_up_frames(1.3, 0.1), 13);
        assert_eq!(warm_up_frames(0.0, 0.1), 0);
        // 25 s episode (251 samples) with τ = 2.95: scored span 3.0 s .. 25.0 s.
        let frames = frames_from(&[11.0; 251], &[10.0; 251], &[20.0; 251]);
        let s = predict_accelerations(&frames, &p(1.0, 0.5, 1.0, 2.95), &SimConfig::default());
        assert_eq!(s.points.len(), 221);
        let span = s.points.last().unwrap().t - s.points[0].t;
        assert!((span - 22.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_is_zero_without_stimulus_or_gain() {
        let frames = frames_from(&[10.0; 100], &[10.0; 100], &[20.0; 100]);
        let s = predict_accelerations(&frames, &p(1.2, 0.8, 1.1, 1.0), &SimConfig::default());
        assert!(s.points.iter().all(|q| q.accel == 0.0));
        let frames = frames_from(&[14.0; 100], &[10.0; 100], &[20.0; 100]);
        let s = predict_accelerations(&frames, &p(0.0, 0.8, 1.1, 1.0), &SimConfig::default());
        assert!(s.points.iter().all(|q| q.accel == 0.0));
    }

    #[test]
    fn short_episode_gives_empty_series() {
        let frames = frames_from(&[10.0; 20], &[9.0; 20], &[20.0; 20]);
        let s = predict_accelerations(&frames, &p(1.0, 1.0, 1.0, 2.95), &SimConfig::default());
        assert!(s.is_empty());
        assert_eq!(s.warm_up_frames, 20);
    }

    #[test]
    fn undefined_frames_are_counted() {
        let frames = frames_from(&[10.0; 50], &[0.0; 50], &[20.0; 50]);
        let s = predict_accelerations(&frames, &p(1.0, -0.5, 1.0, 0.5), &SimConfig::default());
        assert!(s.is_empty());
        assert_eq!(s.undefined_frames, 45);
    }

    #[test]
    fn coasting_without_gain() {
        let n = 200;
        let leader: Vec<f64> = (0..n).map(|i| 15.0 - 0.02 * i as f64).collect();
        let mut frames = frames_from(&leader, &vec![12.0; n], &vec![30.0; n]);
        for (i, f) in frames.iter_mut().enumerate() {
            f.follower_y = 1.2 * i as f64;
            f.leader_y = f.follower_y + 30.0;
        }
        let sim = simulate_follower(&frames, &p(0.0, 0.9, 1.0, 1.0), &SimConfig::default()).unwrap();
        assert!(!sim.truncated);
        assert!(sim.points[10..].iter().all(|q| q.v == 12.0 && q.a == 0.0));
    }

    #[test]
    fn collision_guard_truncates() {
        // Observed follower brakes to a stop 10 m short of a stationary
        // leader; a near-zero gain barely brakes at all.
        let n = 300;
        let mut frames = frames_from(&vec![0.0; n], &vec![0.0; n], &vec![0.0; n]);
        for (i, f) in frames.iter_mut().enumerate() {
            let t = (i as f64 * 0.1).min(5.0);
            f.follower_y = 20.0 * t - 2.0 * t * t;
            f.follower_speed = 20.0 - 4.0 * t;
            f.leader_y = 60.0;
            f.space_headway = f.leader_y - f.follower_y;
        }
        let sim = simulate_follower(&frames, &p(0.01, 0.0, 0.0, 1.0), &SimConfig::default()).unwrap();
        assert!(sim.truncated);
        assert!(sim.points.len() < n);
        let last = sim.points.last().unwrap();
        assert!(last.y < 60.0 - COLLISION_SPACING_M + 1e-9 + 20.0 * 0.1);
    }

    #[test]
    fn forward_simulation_matches_reference_integrator() {
        // Leader decelerates at 1 m/s² from 15 to 5 m/s; τ = 1.0 s.
        let n = 250;
        let lv: Vec<f64> = (0..n).map(|i| (15.0 - 0.1 * i as f64).max(5.0)).collect();
        let mut ly = vec![40.0];
        for i in 1..n {
            ly.push(ly[i - 1] + lv[i - 1] * 0.1);
        }
        let mut frames = frames_from(&lv, &vec![15.0; n], &vec![0.0; n]);
        for (i, f) in frames.iter_mut().enumerate() {
            f.follower_y = 15.0 * i as f64 * 0.1;
            f.leader_y = ly[i];
            f.space_headway = ly[i] - f.follower_y;
        }
        let q = p(1.55, 0.9, 1.0, 1.0);
        let sim = simulate_follower(&frames, &q, &SimConfig::default()).unwrap();

        let mut y = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..=10 {
            y[i] = frames[i].follower_y;
            v[i] = frames[i].follower_speed;
        }
        for k in 10..n - 1 {
            let j = k - 10;
            let a = 1.55 * v[k].powf(0.9) * (lv[j] - v[j]) / (ly[j] - y[j]);
            y[k + 1] = y[k] + v[k] * 0.1;
            v[k + 1] = (v[k] + a * 0.1).max(0.0);
        }
        assert!(!sim.truncated);
        assert_eq!(sim.points.len(), n);
        for (k, pt) in sim.points.iter().enumerate() {
            assert!((pt.y - y[k]).abs() < 1e-9 && (pt.v - v[k]).abs() < 1e-9, "k={k}");
        }
        // The follower ends up slower than it started and behind the leader.
        assert!(v[n - 1] < 10.0);
        assert!(y[n - 1] < ly[n - 1]);
    }

    fn delayed_frames(n: usize) -> Vec<EpisodeFrame> {
        let lv: Vec<f64> = (0..n).map(|i| 12.0 + (i as f64 * 0.05).sin()).collect();
        let fv: Vec<f64> = (0..n).map(|i| 11.5 + (i as f64 * 0.03).cos()).collect();
        let dx: Vec<f64> = (0..n).map(|i| 25.0 + (i as f64 * 0.02).sin() * 5.0).collect();
        frames_from(&lv, &fv, &dx)
    }

    fn point() -> impl Strategy<Value = (f64, f64, f64, GhrParams)> {
        (0.5f64..40.0, -5.0f64..5.0, 2.0f64..120.0, 0.1f64..3.0, -1.0f64..2.0, -1.0f64..3.0, 0.0f64..3.0)
            .prop_map(|(v, dv, dx, c, m, l, tau)| (v, dv, dx, GhrParams { c, m, l, tau }))
    }

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    proptest! {
        #[test]
        fn spacing_scaling_law((v, dv, dx, q) in point(), k in 0.1f64..10.0) {
            let base = ghr_acceleration(v, dv, dx, &q).unwrap();
            let scaled = ghr_acceleration(v, dv, k * dx, &q).unwrap();
            prop_assert!(rel(scaled, base / k.powf(q.l)) < 1e-12);
        }

        #[test]
        fn speed_scaling_law((v, dv, dx, q) in point(), k in 0.1f64..10.0) {
            let base = ghr_acceleration(v, dv, dx, &q).unwrap();
            let scaled = ghr_acceleration(k * v, dv, dx, &q).unwrap();
            prop_assert!(rel(scaled, k.powf(q.m) * base) < 1e-12);
        }

        #[test]
        fn partials_match_finite_differences((v, dv, dx, q) in point()) {
            let a = ghr_acceleration(v, dv, dx, &q).unwrap();
            let fd = |f: &dyn Fn(f64) -> f64, x: f64| {
                let h = 1e-6 * x.abs().max(1.0);
                (f(x + h) - f(x - h)) / (2.0 * h)
            };
            let dv_fd = fd(&|z| ghr_acceleration(v, z, dx, &q).unwrap(), dv);
            let dx_fd = fd(&|z| ghr_acceleration(v, dv, z, &q).unwrap(), dx);
            let v_fd = fd(&|z| ghr_acceleration(z, dv, dx, &q).unwrap(), v);
            let d = ghr_partials(v, dv, dx, &q).unwrap();
            let scale = 1.0 + a.abs();
            prop_assert!((dv_fd - d.d_relative_speed).abs() < 1e-5 * scale.max(dv_fd.abs()));
            prop_assert!((dx_fd - d.d_spacing).abs() < 1e-5 * scale);
            prop_assert!((v_fd - d.d_speed).abs() < 1e-5 * scale.max(v_fd.abs()));
        }

        #[test]
        fn linear_equals_nearest_on_grid(k in 0u32..40, c in 0.2f64..2.5, m in -0.5f64..1.5, l in 0.0f64..2.5) {
            let tau = f64::from(k) * 0.1;
            let q = GhrParams { c, m, l, tau };
            let frames = delayed_frames(300);
            let lin = predict_accelerations(&frames, &q, &SimConfig::default());
            let near = predict_accelerations(&frames, &q, &SimConfig { delay_interp: DelayInterp::NearestFrame, ..Default::default() });
            prop_assert_eq!(&lin, &near);
            let lin = simulate_follower(&frames, &q, &SimConfig::default()).unwrap();
            let near = simulate_follower(&frames, &q, &SimConfig { delay_interp: DelayInterp::NearestFrame, ..Default::default() }).unwrap();
            prop_assert_eq!(lin, near);
        }

        #[test]
        fn sign_follows_c_times_dv((v, dv, dx, q) in point()) {
            let a = ghr_acceleration(v, dv, dx, &q).unwrap();
            prop_assert_eq!(a.signum() * (a != 0.0) as u8 as f64, (q.c * dv).signum() * (dv != 0.0) as u8 as f64);
        }
    }
}
