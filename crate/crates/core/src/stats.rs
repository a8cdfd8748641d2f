//! Aggregate tables over episodes, lane-change events and fit results.
//!
//! Everything here is SI; conversion to km/h happens in [`crate::report`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::PairClass;
use crate::episode::{EndReason, EpisodeSummary, LaneChangeEvent};
use crate::fit::FitResult;
use crate::units::{kmh_to_ms, ms_to_kmh};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("speed bin boundaries must be positive and strictly increasing, got {0:?}")]
    InvalidBins(Vec<f64>),
    #[error("merge comparison needs fit results on both sides ({before} before, {after} after)")]
    EmptySide { before: usize, after: usize },
}

/// Speed bins tiling `[0, ∞)`, with boundaries in km/h.
///
/// A speed equal to a boundary falls in the upper bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpeedBins {
    boundaries_kmh: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SpeedBins {
    type Error = StatsError;

    fn try_from(v: Vec<f64>) -> Result<Self, StatsError> {
        Self::new(v)
    }
}

impl From<SpeedBins> for Vec<f64> {
    fn from(b: SpeedBins) -> Self {
        b.boundaries_kmh
    }
}

impl SpeedBins {
    pub fn new(boundaries_kmh: Vec<f64>) -> Result<Self, StatsError> {
        let ok = boundaries_kmh.iter().all(|b| b.is_finite() && *b > 0.0)
            && boundaries_kmh.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(Self { boundaries_kmh })
        } else {
            Err(StatsError::InvalidBins(boundaries_kmh))
        }
    }

    /// 20, 25, 30 and 40 mph.
    pub fn gap_bins() -> Self {
        Self { boundaries_kmh: vec![32.2, 40.25, 48.3, 64.4] }
    }

    pub fn lane_change_bins() -> Self {
        Self { boundaries_kmh: vec![20.0, 55.0] }
    }

    pub fn boundaries_kmh(&self) -> &[f64] {
        &self.boundaries_kmh
    }

    pub fn len(&self) -> usize {
        self.boundaries_kmh.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bin index of a speed in m/s.
    pub fn index(&self, speed_ms: f64) -> usize {
        let kmh = ms_to_kmh(speed_ms);
        self.boundaries_kmh.partition_point(|&b| b <= kmh)
    }

    /// Lower and upper bound of bin `i` in m/s; the last is unbounded.
    pub fn range_ms(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 { 0.0 } else { kmh_to_ms(self.boundaries_kmh[i - 1]) };
        let hi = self.boundaries_kmh.get(i).map_or(f64::INFINITY, |&b| kmh_to_ms(b));
        (lo, hi)
    }

    /// `<32.2`, `32.2-40.25`, …, `>64.4`.
    pub fn label(&self, i: usize) -> String {
        let b = &self.boundaries_kmh;
        match i {
            0 => format!("<{}", b.first().map_or(f64::INFINITY, |x| *x)),
            _ if i == b.len() => format!(">{}", b[i - 1]),
            _ => format!("{}-{}", b[i - 1], b[i]),
        }
    }
}

/// How episode values are combined into a group mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Each episode counts once.
    #[default]
    Episode,
    /// Each episode counts in proportion to its frame count.
    Frame,
}

#[derive(Debug, Default, Clone, Copy)]
struct Acc {
    n: usize,
    frames: usize,
    gap: f64,
    speed: f64,
    frame_gap: f64,
    frame_speed: f64,
}

impl Acc {
    fn add(&mut self, e: &EpisodeSummary) {
        let w = e.n_frames as f64;
        self.n += 1;
        self.frames += e.n_frames;
        self.gap += e.avg_gap;
        self.speed += e.avg_speed;
        self.frame_gap += w * e.avg_gap;
        self.frame_speed += w * e.avg_speed;
    }

    fn gap(&self, how: Averaging) -> Option<f64> {
        self.mean(self.gap, self.frame_gap, how)
    }

    fn speed(&self, how: Averaging) -> Option<f64> {
        self.mean(self.speed, self.frame_speed, how)
    }

    fn mean(&self, episode_sum: f64, frame_sum: f64, how: Averaging) -> Option<f64> {
        match how {
            _ if self.n == 0 => None,
            Averaging::Episode => Some(episode_sum / self.n as f64),
            Averaging::Frame => Some(frame_sum / self.frames as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummaryRow {
    pub pair: PairClass,
    pub n: usize,
    pub avg_gap: Option<f64>,
    /// Follower speed averaged per the configured averaging.
    pub avg_speed: Option<f64>,
    /// Follower speed averaged over all frames of the group.
    pub frame_mean_speed: Option<f64>,
}

/// One row per reported pair class.
pub fn pair_summary(episodes: &[EpisodeSummary], how: Averaging) -> Vec<PairSummaryRow> {
    PairClass::REPORTED
        .iter()
        .map(|&pair| {
            let mut acc = Acc::default();
            episodes.iter().filter(|e| e.pair == pair).for_each(|e| acc.add(e));
            PairSummaryRow {
                pair,
                n: acc.n,
                avg_gap: acc.gap(how),
                avg_speed: acc.speed(how),
                frame_mean_speed: acc.speed(Averaging::Frame),
            }
        })
        .collect()
}

/// Percent by which cars close up behind heavy vehicles relative to cars.
pub fn gap_decrease_pct(gap_cc: f64, gap_ch: f64) -> f64 {
    100.0 * (gap_cc - gap_ch) / gap_cc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCell {
    pub pair: PairClass,
    pub n: usize,
    pub avg_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBinRow {
    pub bin: String,
    pub lo_speed: f64,
    pub hi_speed: f64,
    /// In [`PairClass::REPORTED`] order.
    pub cells: Vec<PairCell>,
    /// Absent when the bin has no car-follows-car or car-follows-heavy episodes.
    pub gap_decrease_pct: Option<f64>,
}

impl GapBinRow {
    pub fn cell(&self, pair: PairClass) -> Option<&PairCell> {
        self.cells.iter().find(|c| c.pair == pair)
    }
}

/// Gaps per speed bin (by episode mean speed) and pair class.
pub fn gap_by_speed_bins(episodes: &[EpisodeSummary], bins: &SpeedBins, how: Averaging) -> Vec<GapBinRow> {
    let mut acc = vec![[Acc::default(); 4]; bins.len()];
    for e in episodes {
        if let Some(p) = PairClass::REPORTED.iter().position(|&p| p == e.pair) {
            acc[bins.index(e.avg_speed)][p].add(e);
        }
    }
    acc.iter()
        .enumerate()
        .map(|(i, cells)| {
            let cells: Vec<PairCell> = PairClass::REPORTED
                .iter()
                .zip(cells)
                .map(|(&pair, a)| PairCell { pair, n: a.n, avg_gap: a.gap(how) })
                .collect();
            let gap = |p| cells.iter().find(|c| c.pair == p).and_then(|c| c.avg_gap);
            let (lo_speed, hi_speed) = bins.range_ms(i);
            GapBinRow {
                bin: bins.label(i),
                lo_speed,
                hi_speed,
                gap_decrease_pct: gap(PairClass::CarFollowsCar)
                    .zip(gap(PairClass::CarFollowsHeavy))
                    .map(|(cc, ch)| gap_decrease_pct(cc, ch)),
                cells,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeRow {
    pub bin: String,
    pub n: usize,
    pub lane_changes: usize,
    pub rate_pct: f64,
    pub avg_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneChangeTable {
    /// Non-empty bins only.
    pub rows: Vec<LaneChangeRow>,
    pub overall: Option<LaneChangeRow>,
    pub empty_bins: Vec<String>,
}

/// Share of `pair` episodes that end with the follower changing lanes, per
/// speed bin.
pub fn lane_change_rates(episodes: &[EpisodeSummary], pair: PairClass, bins: &SpeedBins) -> LaneChangeTable {
    let row = |bin: String, group: &[&EpisodeSummary]| {
        let n = group.len();
        let lane_changes = group.iter().filter(|e| e.end_reason == EndReason::FollowerLaneChange).count();
        LaneChangeRow {
            bin,
            n,
            lane_changes,
            rate_pct: 100.0 * lane_changes as f64 / n as f64,
            avg_speed: group.iter().map(|e| e.avg_speed).sum::<f64>() / n as f64,
        }
    };
    let selected: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.pair == pair).collect();
    let mut table = LaneChangeTable::default();
    for i in 0..bins.len() {
        let group: Vec<&EpisodeSummary> = selected.iter().copied().filter(|e| bins.index(e.avg_speed) == i).collect();
        if group.is_empty() {
            table.empty_bins.push(bins.label(i));
        } else {
            table.rows.push(row(bins.label(i), &group));
        }
    }
    if !selected.is_empty() {
        table.overall = Some(row("all".into(), &selected));
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedChangeStats {
    pub n: usize,
    pub increased: usize,
    pub fraction_increased: Option<f64>,
    pub threshold_kmh: f64,
    pub n_below: usize,
    pub increased_below: usize,
    pub fraction_increased_below: Option<f64>,
}

/// How many lane changers sped up, overall and among those that started
/// below `threshold_kmh`.
pub fn post_lane_change_speed_stats<'a>(
    events: impl IntoIterator<Item = &'a LaneChangeEvent>,
    threshold_kmh: f64,
) -> SpeedChangeStats {
    let threshold = kmh_to_ms(threshold_kmh);
    let (mut n, mut inc, mut n_below, mut inc_below) = (0, 0, 0, 0);
    for e in events {
        let up = e.speed_after > e.speed_before;
        n += 1;
        inc += up as usize;
        if e.speed_before < threshold {
            n_below += 1;
            inc_below += up as usize;
        }
    }
    let frac = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    SpeedChangeStats {
        n,
        increased: inc,
        fraction_increased: frac(inc, n),
        threshold_kmh,
        n_below,
        increased_below: inc_below,
        fraction_increased_below: frac(inc_below, n_below),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeComparison {
    pub n_before: usize,
    pub n_after: usize,
    pub distinct_before: usize,
    pub distinct_after: usize,
    pub mean_rmse_before: f64,
    pub mean_rmse_after: f64,
    /// `mean_rmse_before / mean_rmse_after`.
    pub rmse_ratio: f64,
}

/// Cluster diversity and fit quality before versus after the merge boundary.
pub fn merge_comparison(before: &[FitResult], after: &[FitResult]) -> Result<MergeComparison, StatsError> {
    if before.is_empty() || after.is_empty() {
        return Err(StatsError::EmptySide { before: before.len(), after: after.len() });
    }
    let distinct = |rs: &[FitResult]| rs.iter().map(|r| (r.library, r.best_cluster_id)).collect::<BTreeSet<_>>().len();
    let mean = |rs: &[FitResult]| rs.iter().map(|r| r.rmse).sum::<f64>() / rs.len() as f64;
    let (mb, ma) = (mean(before), mean(after));
    Ok(MergeComparison {
        n_before: before.len(),
        n_after: after.len(),
        distinct_before: distinct(before),
        distinct_after: distinct(after),
        mean_rmse_before: mb,
        mean_rmse_after: ma,
        rmse_ratio: mb / ma,
    })
}
