//! Report tables and their CSV / JSON emission.
//!
//! Tables hold SI values; conversion to km/h and rounding happen only when
//! rows are written.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{PairClass, VehicleClass};
use crate::episode::{EndReason, EpisodeSummary, LaneChangeEvent, Section};
use crate::fit::{cluster_frequencies, mean_rmse_by_group, ClusterClass, ClusterHistogram, FitResult, GroupRmse, Grouping};
use crate::stats::{
    gap_by_speed_bins, lane_change_rates, merge_comparison, pair_summary, post_lane_change_speed_stats, Averaging,
    GapBinRow, LaneChangeTable, MergeComparison, PairSummaryRow, SpeedBins, SpeedChangeStats,
};
use crate::units::ms_to_kmh;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("output directory {path} is not writable: {source}")]
    Unwritable { path: PathBuf, source: io::Error },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("writing {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// Aggregation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub averaging: Averaging,
    pub gap_bins_kmh: SpeedBins,
    pub lane_change_bins_kmh: SpeedBins,
    /// Initial-speed cut for the "slow lane changers" share.
    pub lane_change_speed_threshold_kmh: f64,
    pub lane_change_pair: PairClass,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            averaging: Averaging::Episode,
            gap_bins_kmh: SpeedBins::gap_bins(),
            lane_change_bins_kmh: SpeedBins::lane_change_bins(),
            lane_change_speed_threshold_kmh: 20.0,
            lane_change_pair: PairClass::CarFollowsHeavy,
        }
    }
}

/// Fit results split at the merge boundary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergeFits {
    pub before: Vec<FitResult>,
    pub after: Vec<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRow {
    /// A pair class name, or `all`.
    pub group: String,
    #[serde(flatten)]
    pub comparison: MergeComparison,
}

/// Every table of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub episodes: Vec<EpisodeSummary>,
    pub pair_summary: Vec<PairSummaryRow>,
    pub gap_by_speed: Vec<GapBinRow>,
    pub lane_change: LaneChangeTable,
    pub lane_change_speed: Option<SpeedChangeStats>,
    pub fit_results: Vec<FitResult>,
    pub cluster_frequencies: BTreeMap<PairClass, ClusterHistogram>,
    pub mean_rmse: Vec<(Grouping, GroupRmse)>,
    pub merge_comparison: Option<Vec<MergeRow>>,
}

impl Report {
    /// Builds all tables.
    ///
    /// `events` are the follower lane changes that ended episodes. Fallback
    /// fits (SUV followers) stay in the fit listing but are left out of the
    /// frequency and error tables.
    pub fn build(
        episodes: Vec<EpisodeSummary>,
        events: &[LaneChangeEvent],
        fit_results: Vec<FitResult>,
        merge: Option<&MergeFits>,
        cfg: &StatsConfig,
    ) -> Self {
        let scored: Vec<FitResult> = fit_results.iter().filter(|r| !r.fallback).cloned().collect();
        let mut mean_rmse: Vec<(Grouping, GroupRmse)> =
            mean_rmse_by_group(&scored, Grouping::Pair).into_iter().map(|g| (Grouping::Pair, g)).collect();
        let merge_comparison = merge.map(|m| {
            let before: Vec<FitResult> = m.before.iter().filter(|r| !r.fallback).cloned().collect();
            let after: Vec<FitResult> = m.after.iter().filter(|r| !r.fallback).cloned().collect();
            let both: Vec<FitResult> = before.iter().chain(&after).cloned().collect();
            mean_rmse.extend(mean_rmse_by_group(&both, Grouping::MergeSide).into_iter().map(|g| (Grouping::MergeSide, g)));
            let mut rows = Vec::new();
            for pair in PairClass::REPORTED {
                let b: Vec<_> = before.iter().filter(|r| r.pair == pair).cloned().collect();
                let a: Vec<_> = after.iter().filter(|r| r.pair == pair).cloned().collect();
                if let Ok(c) = merge_comparison(&b, &a) {
                    rows.push(MergeRow { group: pair.as_str().to_string(), comparison: c });
                }
            }
            if let Ok(c) = merge_comparison(&before, &after) {
                rows.push(MergeRow { group: "all".into(), comparison: c });
            }
            rows
        });
        let lane_change_pair_events: Vec<&LaneChangeEvent> = events.iter().collect();
        Report {
            pair_summary: pair_summary(&episodes, cfg.averaging),
            gap_by_speed: gap_by_speed_bins(&episodes, &cfg.gap_bins_kmh, cfg.averaging),
            lane_change: lane_change_rates(&episodes, cfg.lane_change_pair, &cfg.lane_change_bins_kmh),
            lane_change_speed: Some(post_lane_change_speed_stats(
                lane_change_pair_events,
                cfg.lane_change_speed_threshold_kmh,
            )),
            cluster_frequencies: cluster_frequencies(&scored),
            mean_rmse,
            merge_comparison,
            episodes,
            fit_results,
        }
    }
}

fn round(x: f64, decimals: i32) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let k = 10f64.powi(decimals);
    let r = (x * k).round() / k;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn m(x: f64) -> f64 {
    round(x, 3)
}

fn kmh(x: f64) -> f64 {
    round(ms_to_kmh(x), 2)
}

fn pct(x: f64) -> f64 {
    round(x, 2)
}

fn err(x: f64) -> f64 {
    round(x, 6)
}

#[derive(Serialize)]
struct EpisodeRow {
    episode_id: u64,
    follower_id: u64,
    leader_id: u64,
    follower_class: VehicleClass,
    leader_class: VehicleClass,
    pair: PairClass,
    section: Section,
    start_frame: i64,
    n_frames: usize,
    duration_s: f64,
    end_reason: EndReason,
    avg_gap_m: f64,
    avg_speed_kmh: f64,
    negative_gap_frames: usize,
    late_forming: bool,
}

#[derive(Serialize)]
struct PairRow {
    pair: PairClass,
    n: usize,
    avg_gap_m: Option<f64>,
    avg_speed_kmh: Option<f64>,
    frame_mean_speed_kmh: Option<f64>,
}

#[derive(Serialize)]
struct GapRow {
    bin_kmh: String,
    n_cc: usize,
    gap_cc_m: Option<f64>,
    n_ch: usize,
    gap_ch_m: Option<f64>,
    n_hc: usize,
    gap_hc_m: Option<f64>,
    n_hh: usize,
    gap_hh_m: Option<f64>,
    gap_decrease_pct: Option<f64>,
}

#[derive(Serialize)]
struct LaneChangeOut {
    bin_kmh: String,
    n: usize,
    lane_changes: usize,
    rate_pct: f64,
    avg_speed_kmh: f64,
}

#[derive(Serialize)]
struct LaneChangeSpeedOut {
    n: usize,
    increased: usize,
    increased_pct: Option<f64>,
    threshold_kmh: f64,
    n_below: usize,
    increased_below: usize,
    increased_below_pct: Option<f64>,
}

#[derive(Serialize)]
struct FitRow {
    episode_id: u64,
    follower_class: VehicleClass,
    pair: PairClass,
    section: Section,
    library: ClusterClass,
    fallback: bool,
    best_cluster_id: u32,
    rmse: f64,
    n_frames_scored: usize,
    unscoreable_clusters: usize,
}

#[derive(Serialize)]
struct FrequencyRow {
    pair: PairClass,
    cluster_id: u32,
    count: usize,
    distinct_in_pair: usize,
}

#[derive(Serialize)]
struct MeanRmseRow {
    grouping: Grouping,
    group: String,
    n: usize,
    mean_rmse: f64,
}

#[derive(Serialize)]
struct MergeOut {
    group: String,
    n_before: usize,
    n_after: usize,
    distinct_before: usize,
    distinct_after: usize,
    mean_rmse_before: f64,
    mean_rmse_after: f64,
    rmse_ratio: f64,
}

/// A table ready to write: column names and rounded rows.
struct Table {
    name: &'static str,
    columns: Vec<String>,
    rows: Vec<Vec<serde_json::Value>>,
}

impl Table {
    fn from_rows<T: Serialize>(name: &'static str, rows: impl IntoIterator<Item = T>) -> Self {
        let mut columns = Vec::new();
        let rows = rows
            .into_iter()
            .map(|r| match serde_json::to_value(r).expect("row serializes") {
                serde_json::Value::Object(map) => {
                    if columns.is_empty() {
                        columns = map.keys().cloned().collect();
                    }
                    map.into_iter().map(|(_, v)| v).collect()
                }
                other => vec![other],
            })
            .collect();
        Table { name, columns, rows }
    }
}

/// Column-order-preserving object used for JSON output.
struct Ordered<'a>(&'a [String], &'a [serde_json::Value]);

impl Serialize for Ordered<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

fn cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Report {
    fn tables(&self) -> Vec<Table> {
        let mut tables = vec![
            Table::from_rows(
                "pair_summary",
                self.pair_summary.iter().map(|r| PairRow {
                    pair: r.pair,
                    n: r.n,
                    avg_gap_m: r.avg_gap.map(m),
                    avg_speed_kmh: r.avg_speed.map(kmh),
                    frame_mean_speed_kmh: r.frame_mean_speed.map(kmh),
                }),
            ),
            Table::from_rows(
                "gap_by_speed",
                self.gap_by_speed.iter().map(|r| {
                    let c = |p| r.cell(p).map_or((0, None), |c| (c.n, c.avg_gap.map(m)));
                    let (cc, ch, hc, hh) = (
                        c(PairClass::CarFollowsCar),
                        c(PairClass::CarFollowsHeavy),
                        c(PairClass::HeavyFollowsCar),
                        c(PairClass::HeavyFollowsHeavy),
                    );
                    GapRow {
                        bin_kmh: r.bin.clone(),
                        n_cc: cc.0,
                        gap_cc_m: cc.1,
                        n_ch: ch.0,
                        gap_ch_m: ch.1,
                        n_hc: hc.0,
                        gap_hc_m: hc.1,
                        n_hh: hh.0,
                        gap_hh_m: hh.1,
                        gap_decrease_pct: r.gap_decrease_pct.map(pct),
                    }
                }),
            ),
            Table::from_rows(
                "lane_change",
                self.lane_change.rows.iter().chain(&self.lane_change.overall).map(|r| LaneChangeOut {
                    bin_kmh: r.bin.clone(),
                    n: r.n,
                    lane_changes: r.lane_changes,
                    rate_pct: pct(r.rate_pct),
                    avg_speed_kmh: kmh(r.avg_speed),
                }),
            ),
            Table::from_rows(
                "lane_change_speed",
                self.lane_change_speed.iter().map(|s| LaneChangeSpeedOut {
                    n: s.n,
                    increased: s.increased,
                    increased_pct: s.fraction_increased.map(|f| pct(100.0 * f)),
                    threshold_kmh: s.threshold_kmh,
                    n_below: s.n_below,
                    increased_below: s.increased_below,
                    increased_below_pct: s.fraction_increased_below.map(|f| pct(100.0 * f)),
                }),
            ),
            Table::from_rows(
                "cluster_frequencies",
                self.cluster_frequencies.iter().flat_map(|(&pair, h)| {
                    h.counts.iter().map(move |(&cluster_id, &count)| FrequencyRow {
                        pair,
                        cluster_id,
                        count,
                        distinct_in_pair: h.distinct(),
                    })
                }),
            ),
            Table::from_rows(
                "mean_rmse",
                self.mean_rmse.iter().map(|(grouping, g)| MeanRmseRow {
                    grouping: *grouping,
                    group: g.group.clone(),
                    n: g.n,
                    mean_rmse: err(g.mean_rmse),
                }),
            ),
            Table::from_rows(
                "episodes",
                self.episodes.iter().map(|e| EpisodeRow {
                    episode_id: e.id,
                    follower_id: e.follower_id,
                    leader_id: e.leader_id,
                    follower_class: e.follower_class,
                    leader_class: e.leader_class,
                    pair: e.pair,
                    section: e.section,
                    start_frame: e.start_frame,
                    n_frames: e.n_frames,
                    duration_s: round(e.duration_s, 1),
                    end_reason: e.end_reason,
                    avg_gap_m: m(e.avg_gap),
                    avg_speed_kmh: kmh(e.avg_speed),
                    negative_gap_frames: e.negative_gap_frames,
                    late_forming: e.late_forming,
                }),
            ),
            Table::from_rows(
                "fit_results",
                self.fit_results.iter().map(|r| FitRow {
                    episode_id: r.episode_id,
                    follower_class: r.follower_class,
                    pair: r.pair,
                    section: r.section,
                    library: r.library,
                    fallback: r.fallback,
                    best_cluster_id: r.best_cluster_id,
                    rmse: err(r.rmse),
                    n_frames_scored: r.n_frames_scored,
                    unscoreable_clusters: r.unscoreable_clusters,
                }),
            ),
            self.wide_fit_table(),
        ];
        if let Some(rows) = &self.merge_comparison {
            tables.push(Table::from_rows(
                "merge_comparison",
                rows.iter().map(|r| {
                    let c = &r.comparison;
                    MergeOut {
                        group: r.group.clone(),
                        n_before: c.n_before,
                        n_after: c.n_after,
                        distinct_before: c.distinct_before,
                        distinct_after: c.distinct_after,
                        mean_rmse_before: err(c.mean_rmse_before),
                        mean_rmse_after: err(c.mean_rmse_after),
                        rmse_ratio: round(c.rmse_ratio, 4),
                    }
                }),
            ));
        }
        tables
    }

    /// Every cluster's RMSE per episode; unscored clusters are blank.
    fn wide_fit_table(&self) -> Table {
        let ids: BTreeSet<u32> = self.fit_results.iter().flat_map(|r| r.cluster_ids.iter().copied()).collect();
        let mut columns = vec!["episode_id".to_string(), "library".to_string()];
        columns.extend(ids.iter().map(|id| format!("cluster_{id}")));
        let rows = self
            .fit_results
            .iter()
            .map(|r| {
                let mut row = vec![r.episode_id.into(), r.library.as_str().into()];
                row.extend(ids.iter().map(|id| {
                    r.cluster_ids
                        .iter()
                        .position(|c| c == id)
                        .map(|i| r.per_cluster_rmse[i])
                        .filter(|x| x.is_finite())
                        .map_or(serde_json::Value::Null, |x| err(x).into())
                }));
                row
            })
            .collect();
        Table { name: "fit_results_wide", columns, rows }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub format: ReportFormat,
    pub config_hash: String,
    pub tables: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn probe_writable(dir: &Path) -> Result<(), ReportError> {
    let unwritable = |source| ReportError::Unwritable { path: dir.to_path_buf(), source };
    fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".write_probe");
    fs::File::create(&probe).and_then(|mut f| f.write_all(b"")).map_err(unwritable)?;
    fs::remove_file(&probe).map_err(unwritable)
}

/// Writes one file per table plus `manifest.json` into `out_dir`.
///
/// The directory is checked for writability before anything is written.
/// Output is a pure function of the report, format and hash.
pub fn emit_report(report: &Report, format: ReportFormat, out_dir: &Path, config_hash: &str) -> Result<Manifest, ReportError> {
    probe_writable(out_dir)?;
    let mut manifest = Manifest {
        generator: format!("carfollow {}", env!("CARGO_PKG_VERSION")),
        format,
        config_hash: config_hash.to_string(),
        tables: Vec::new(),
    };
    for table in report.tables() {
        let file = format!("{}.{}", table.name, format.extension());
        let path = out_dir.join(&file);
        match format {
            ReportFormat::Csv => {
                let csv_err = |source| ReportError::Csv { path: path.clone(), source };
                let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
                w.write_record(&table.columns).map_err(csv_err)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(cell)).map_err(csv_err)?;
                }
                w.flush().map_err(|source| ReportError::Io { path: path.clone(), source })?;
            }
            ReportFormat::Json => {
                let rows: Vec<Ordered> = table.rows.iter().map(|r| Ordered(&table.columns, r)).collect();
                let text = serde_json::to_string_pretty(&rows)
                    .map_err(|source| ReportError::Json { path: path.clone(), source })?;
                fs::write(&path, text + "\n").map_err(|source| ReportError::Io { path: path.clone(), source })?;
            }
        }
        manifest.tables.push(ManifestEntry { name: table.name.to_string(), file, rows: table.rows.len() });
    }
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| ReportError::Json { path: path.clone(), source })?;
    fs::write(&path, text + "\n").map_err(|source| ReportError::Io { path, source })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassifierConfig;
    use crate::episode::{extract_episodes, ExtractionConfig};
    use crate::fit::{fit_all, placeholder_library, FitConfig};
    use crate::ghr::SimConfig;
    use crate::synthetic::extraction_scenario;

    fn report() -> Report {
        let (ds, _) = extraction_scenario();
        let out = extract_episodes(&ds, &ExtractionConfig::default(), &ClassifierConfig::default()).unwrap();
        let fits = fit_all(&out.episodes, &placeholder_library(), &SimConfig::default(), &FitConfig::default());
        let summaries = out.episodes.iter().map(|e| e.summary()).collect();
        Report::build(summaries, &[], fits.results, None, &StatsConfig::default())
    }

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    #[test]
    fn pair_summary_has_header_and_four_rows() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = emit_report(&report(), ReportFormat::Csv, dir.path(), "abc").unwrap();
        let text = read(dir.path(), "pair_summary.csv");
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("pair,n,avg_gap_m,avg_speed_kmh,frame_mean_speed_kmh\n"));
        assert!(text.contains("car_follows_car,2,40.5,28.8,28.8"));
        let entry = manifest.tables.iter().find(|t| t.name == "pair_summary").unwrap();
        assert_eq!(entry.rows, 4);
        let on_disk: Manifest = serde_json::from_str(&read(dir.path(), MANIFEST_FILE)).unwrap();
        assert_eq!(on_disk, manifest);
        assert_eq!(on_disk.config_hash, "abc");
    }

    #[test]
    fn json_carries_same_values() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(), ReportFormat::Json, dir.path(), "abc").unwrap();
        let rows: Vec<serde_json::Value> = serde_json::from_str(&read(dir.path(), "pair_summary.json")).unwrap();
        assert_eq!(rows.len(), 4);
        let cc = rows.iter().find(|r| r["pair"] == "car_follows_car").unwrap();
        assert_eq!(cc["n"], 2);
        assert_eq!(cc["avg_gap_m"], 40.5);
        let ch = rows.iter().find(|r| r["pair"] == "car_follows_heavy").unwrap();
        assert!(ch["avg_gap_m"].is_null());
    }

    #[test]
    fn emission_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let r = report();
        emit_report(&r, ReportFormat::Csv, a.path(), "h").unwrap();
        emit_report(&r, ReportFormat::Csv, b.path(), "h").unwrap();
        let names = |d: &Path| {
            let mut v: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
            v.sort();
            v
        };
        assert_eq!(names(a.path()), names(b.path()));
        for n in names(a.path()) {
            assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap());
        }
    }

    #[test]
    fn unwritable_directory_fails_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let target = blocker.join("out");
        assert!(matches!(
            emit_report(&report(), ReportFormat::Csv, &target, "h"),
            Err(ReportError::Unwritable { .. })
        ));
    }

    #[test]
    fn wide_table_lists_every_cluster() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(), ReportFormat::Csv, dir.path(), "h").unwrap();
        let text = read(dir.path(), "fit_results_wide.csv");
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 32);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn rounding_normalizes_negative_zero() {
        assert_eq!(round(-0.0001, 2).to_string(), "0");
        assert_eq!(round(13.0434, 2), 13.04);
        assert!(round(f64::INFINITY, 2).is_infinite());
    }
}
