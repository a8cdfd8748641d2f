//! Scoring episodes against a library of GHR parameter clusters.
//!
//! Each episode is compared with every cluster of its follower's class and
//! labeled with the cluster of least root mean squared error.

mod library;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{PairClass, VehicleClass};
use crate::episode::{Episode, Section};
use crate::ghr::{predict_accelerations, simulate_follower, GhrParams, SimConfig, SimMode};

pub use library::{
    c_to_si, placeholder_csv, placeholder_library, ClusterClass, ClusterDefinition, ClusterLibrary, LibraryError,
    MAX_CLUSTERS_PER_CLASS, PLACEHOLDER_CSV,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("RMSE of an empty series")]
    EmptySeries,
    #[error("RMSE inputs differ in length ({predicted} predicted, {observed} observed)")]
    LengthMismatch { predicted: usize, observed: usize },
    #[error("episode {episode_id}: cluster library has no {class} group")]
    MissingGroup { episode_id: u64, class: &'static str },
    #[error("episode {episode_id}: no cluster could be scored")]
    Unscoreable { episode_id: u64 },
}

/// Root mean squared difference of two aligned series.
pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64, FitError> {
    if predicted.len() != observed.len() {
        return Err(FitError::LengthMismatch { predicted: predicted.len(), observed: observed.len() });
    }
    if predicted.is_empty() {
        return Err(FitError::EmptySeries);
    }
    let sum: f64 = predicted.iter().zip(observed).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok((sum / predicted.len() as f64).sqrt())
}

/// Quantity compared between model and observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    #[default]
    Accel,
    Speed,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub target: FitTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub episode_id: u64,
    pub follower_class: VehicleClass,
    pub pair: PairClass,
    pub section: Section,
    pub library: ClusterClass,
    /// An SUV or light truck scored against the car library.
    pub fallback: bool,
    pub best_cluster_id: u32,
    pub rmse: f64,
    /// One entry per cluster of the library group, in cluster id order.
    pub cluster_ids: Vec<u32>,
    pub per_cluster_rmse: Vec<f64>,
    /// Frames scored for the best cluster.
    pub n_frames_scored: usize,
    /// Clusters that scored infinite RMSE because their delay leaves
    /// nothing to score.
    pub unscoreable_clusters: usize,
}

/// Index of the smallest value; ties go to the earliest. `None` if nothing
/// is finite.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Model and observed series for one cluster, aligned by frame.
fn scored_series(episode: &Episode, p: &GhrParams, sim: &SimConfig, fit: &FitConfig) -> (Vec<f64>, Vec<f64>) {
    let frames = &episode.frames;
    let dt = sim.dt;
    match (sim.mode, fit.target) {
        (SimMode::OneStepPrediction, FitTarget::Accel) => predict_accelerations(frames, p, sim)
            .points
            .iter()
            .map(|q| (q.accel, frames[q.index].follower_accel))
            .unzip(),
        (SimMode::OneStepPrediction, FitTarget::Speed) => {
            // Observed speed one step earlier plus the predicted acceleration.
            let series = predict_accelerations(frames, p, sim);
            series
                .points
                .iter()
                .filter(|q| q.index + 1 < frames.len())
                .map(|q| (frames[q.index].follower_speed + q.accel * dt, frames[q.index + 1].follower_speed))
                .unzip()
        }
        (SimMode::ForwardSimulation, target) => {
            let Ok(traj) = simulate_follower(frames, p, sim) else {
                return (Vec::new(), Vec::new());
            };
            traj.points
                .iter()
                .enumerate()
                .skip(traj.warm_up_frames)
                .map(|(k, q)| match target {
                    FitTarget::Accel => (q.a, frames[k].follower_accel),
                    FitTarget::Speed => (q.v, frames[k].follower_speed),
                })
                .unzip()
        }
    }
}

/// Scores `episode` against every cluster of its follower's class.
///
/// A cluster whose delay is at least the episode duration, or whose model is
/// undefined on every frame, gets an infinite RMSE.
pub fn fit_episode(
    episode: &Episode,
    library: &ClusterLibrary,
    sim: &SimConfig,
    fit: &FitConfig,
) -> Result<FitResult, FitError> {
    let (class, fallback) = ClusterClass::for_follower(episode.follower_class);
    let group = library.group(class);
    if group.is_empty() {
        return Err(FitError::MissingGroup { episode_id: episode.id, class: class.as_str() });
    }
    let duration = episode.duration();
    let mut per_cluster_rmse = Vec::with_capacity(group.len());
    let mut scored = Vec::with_capacity(group.len());
    for def in group {
        let (r, n) = if def.params.tau >= duration {
            (f64::INFINITY, 0)
        } else {
            let (pred, obs) = scored_series(episode, &def.params, sim, fit);
            (rmse(&pred, &obs).unwrap_or(f64::INFINITY), pred.len())
        };
        per_cluster_rmse.push(if r.is_nan() { f64::INFINITY } else { r });
        scored.push(n);
    }
    let best = argmin(&per_cluster_rmse).ok_or(FitError::Unscoreable { episode_id: episode.id })?;
    Ok(FitResult {
        episode_id: episode.id,
        follower_class: episode.follower_class,
        pair: episode.pair,
        section: episode.section,
        library: class,
        fallback,
        best_cluster_id: group[best].cluster_id,
        rmse: per_cluster_rmse[best],
        cluster_ids: group.iter().map(|d| d.cluster_id).collect(),
        unscoreable_clusters: per_cluster_rmse.iter().filter(|r| r.is_infinite()).count(),
        per_cluster_rmse,
        n_frames_scored: scored[best],
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOutput {
    /// In input episode order.
    pub results: Vec<FitResult>,
    pub failures: Vec<FitFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub episode_id: u64,
    pub reason: String,
}

/// Fits every episode in parallel. Output order follows `episodes`.
pub fn fit_all(episodes: &[Episode], library: &ClusterLibrary, sim: &SimConfig, fit: &FitConfig) -> FitOutput {
    let fitted: Vec<_> = episodes.par_iter().map(|ep| fit_episode(ep, library, sim, fit)).collect();
    let mut out = FitOutput::default();
    for (ep, r) in episodes.iter().zip(fitted) {
        match r {
            Ok(r) => out.results.push(r),
            Err(e) => out.failures.push(FitFailure { episode_id: ep.id, reason: e.to_string() }),
        }
    }
    out
}

/// Best-cluster counts for one pair class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterHistogram {
    pub counts: BTreeMap<u32, usize>,
}

impl ClusterHistogram {
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Histogram of best clusters per pair class. Pairs with no results are
/// absent.
pub fn cluster_frequencies(results: &[FitResult]) -> BTreeMap<PairClass, ClusterHistogram> {
    let mut out: BTreeMap<PairClass, ClusterHistogram> = BTreeMap::new();
    for r in results {
        *out.entry(r.pair).or_default().counts.entry(r.best_cluster_id).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Pair,
    MergeSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRmse {
    pub group: String,
    pub n: usize,
    pub mean_rmse: f64,
}

/// Mean best-cluster RMSE per group, in group order. Empty groups are not
/// listed.
pub fn mean_rmse_by_group(results: &[FitResult], grouping: Grouping) -> Vec<GroupRmse> {
    let mut groups: BTreeMap<(u8, &'static str), (usize, f64)> = BTreeMap::new();
    for r in results {
        let key = match grouping {
            Grouping::Pair => (r.pair as u8, r.pair.as_str()),
            Grouping::MergeSide => match r.section {
                Section::Full => (0, "full"),
                Section::BeforeMerge => (1, "before_merge"),
                Section::AfterMerge => (2, "after_merge"),
            },
        };
        let g = groups.entry(key).or_default();
        g.0 += 1;
        g.1 += r.rmse;
    }
    groups
        .into_iter()
        .map(|((_, name), (n, sum))| GroupRmse { group: name.to_string(), n, mean_rmse: sum / n as f64 })
        .collect()
}

#[cfg(test)]
mod tests;
