//! Stage wiring shared by the subcommands.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use carfollow::episode::{
    detect_lane_changes, extract_episodes, lane_change_for_episode, segment_by_position, Episode, EpisodeSummary,
    ExtractionDiagnostics, LaneChangeEvent,
};
use carfollow::fit::{fit_all, placeholder_library, ClusterLibrary, FitFailure, FitResult};
use carfollow::ingest::{parse_trajectory_file, validate_and_derive, Dataset, IngestReport, ValidationReport};
use carfollow::report::{emit_report, Manifest, MergeFits, Report, MANIFEST_FILE};
use carfollow::synthetic::{pair_dataset, PairDatasetSpec};
use serde::{Deserialize, Serialize};

use crate::cache;
use crate::config::PipelineConfig;
use crate::error::CliError;

/// Wall-clock time per stage, in execution order.
#[derive(Debug, Default)]
pub struct Timings(pub Vec<(&'static str, Duration)>);

impl Timings {
    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((stage, start.elapsed()));
        out
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(s, d)| format!("  {s:<10} {:>9.3} s\n", d.as_secs_f64())).collect()
    }
}

/// Where a dataset came from and what ingestion found.
#[derive(Debug)]
pub struct Loaded {
    pub dataset: Dataset,
    pub ingest: Option<IngestReport>,
    pub validation: ValidationReport,
}

pub fn load_library(cfg: &PipelineConfig) -> Result<ClusterLibrary, CliError> {
    match &cfg.library {
        None => Ok(placeholder_library()),
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            ClusterLibrary::from_csv(BufReader::new(file)).map_err(|e| CliError::library(path, e))
        }
    }
}

/// Reads the configured input (text, cache or built-in synthetic data),
/// then validates it and fills in kinematics.
pub fn load_dataset(cfg: &PipelineConfig, timings: &mut Timings) -> Result<Loaded, CliError> {
    let (dataset, ingest) = timings.time("ingest", || -> Result<_, CliError> {
        if cfg.synthetic.enabled {
            let spec = PairDatasetSpec {
                pairs: cfg.synthetic.pairs,
                accel_noise: cfg.synthetic.accel_noise,
                seed: cfg.seed,
                ..Default::default()
            };
            return Ok((pair_dataset(&spec, &load_library(cfg)?).0, None));
        }
        let path = cfg
            .input
            .path
            .as_deref()
            .ok_or_else(|| CliError::Config("no input: set input.path or use --synthetic".into()))?;
        if cache::is_cache(path) {
            return Ok((cache::read_cache(path)?, None));
        }
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let parsed = parse_trajectory_file(BufReader::with_capacity(1 << 20, file), &cfg.input.schema, cfg.input.units)
            .map_err(|e| CliError::ingest(path, e))?;
        Ok((parsed.dataset, Some(parsed.report)))
    })?;
    let dataset = dataset.with_geometry(cfg.segment.length_m, cfg.extract.merge_boundary_y_m);
    let (dataset, validation) = timings.time("validate", || validate_and_derive(dataset, &cfg.ingest));
    Ok(Loaded { dataset, ingest, validation })
}

/// Everything the report is built from; also the `fit` subcommand's output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Analysis {
    pub config_hash: String,
    pub episodes: Vec<EpisodeSummary>,
    /// Follower lane changes that ended an episode of the lane-change pair.
    pub lane_changes: Vec<LaneChangeEvent>,
    pub fits: Vec<FitResult>,
    pub fit_failures: Vec<FitFailure>,
    pub merge_before: Option<Vec<FitResult>>,
    pub merge_after: Option<Vec<FitResult>>,
    pub diagnostics: ExtractionDiagnostics,
}

fn lane_changes(dataset: &Dataset, episodes: &[Episode], cfg: &PipelineConfig) -> Vec<LaneChangeEvent> {
    episodes
        .iter()
        .filter(|e| e.pair == cfg.stats.lane_change_pair)
        .filter_map(|e| {
            let track = dataset.track(e.follower_id)?;
            let events = detect_lane_changes(track, cfg.extract.lane_change_window_s);
            lane_change_for_episode(e, &events).copied()
        })
        .collect()
}

pub fn analyze(
    cfg: &PipelineConfig,
    dataset: &Dataset,
    library: &ClusterLibrary,
    timings: &mut Timings,
) -> Result<Analysis, CliError> {
    let extracted = timings
        .time("extract", || extract_episodes(dataset, &cfg.extract, &cfg.classify))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let episodes = extracted.episodes;
    let events = timings.time("lanes", || lane_changes(dataset, &episodes, cfg));
    let fitted = timings.time("fit", || fit_all(&episodes, library, &cfg.ghr, &cfg.fit));
    let (merge_before, merge_after) = if cfg.segment.merge_split {
        let (before, after) = timings.time("merge", || {
            let (mut before, mut after) = (Vec::new(), Vec::new());
            for e in &episodes {
                let (b, a) = segment_by_position(e, cfg.extract.merge_boundary_y_m, cfg.extract.min_segment_duration_s);
                before.extend(b);
                after.extend(a);
            }
            (
                fit_all(&before, library, &cfg.ghr, &cfg.fit).results,
                fit_all(&after, library, &cfg.ghr, &cfg.fit).results,
            )
        });
        (Some(before), Some(after))
    } else {
        (None, None)
    };
    Ok(Analysis {
        config_hash: cfg.hash(),
        episodes: episodes.iter().map(Episode::summary).collect(),
        lane_changes: events,
        fits: fitted.results,
        fit_failures: fitted.failures,
        merge_before,
        merge_after,
        diagnostics: extracted.diagnostics,
    })
}

pub fn build_report(analysis: &Analysis, cfg: &PipelineConfig) -> Report {
    let merge = analysis
        .merge_before
        .as_ref()
        .zip(analysis.merge_after.as_ref())
        .map(|(b, a)| MergeFits { before: b.clone(), after: a.clone() });
    Report::build(analysis.episodes.clone(), &analysis.lane_changes, analysis.fits.clone(), merge.as_ref(), &cfg.stats)
}

/// Emits into a scratch directory next to `out_dir`, then swaps it into
/// place, so a failed run leaves no partial report behind.
pub fn write_report(report: &Report, cfg: &PipelineConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    if out_dir.exists() && !out_dir.join(MANIFEST_FILE).exists() && !is_empty_dir(out_dir) {
        return Err(CliError::Io(format!(
            "{}: exists and is not a report directory; refusing to replace it",
            out_dir.display()
        )));
    }
    let scratch = tempfile::Builder::new()
        .prefix(".carfollow-report-")
        .tempdir_in(&parent)
        .map_err(|e| CliError::io(&parent, e))?;
    let manifest = emit_report(report, cfg.output.format, scratch.path(), &cfg.hash())?;
    if out_dir.exists() {
        std::fs::remove_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    }
    let scratch = scratch.keep();
    std::fs::rename(&scratch, out_dir).map_err(|e| {
        let _ = std::fs::remove_dir_all(&scratch);
        CliError::io(out_dir, e)
    })?;
    Ok(manifest)
}

fn is_empty_dir(p: &Path) -> bool {
    std::fs::read_dir(p).is_ok_and(|mut d| d.next().is_none())
}

/// Summary printed by `run`.
pub struct RunOutcome {
    pub loaded_vehicles: usize,
    pub analysis: Analysis,
    pub manifest: Manifest,
    pub timings: Timings,
}

/// The whole pipeline: load, extract, fit, aggregate, emit.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let library = load_library(cfg)?;
    let mut timings = Timings::default();
    let loaded = load_dataset(cfg, &mut timings)?;
    let analysis = analyze(cfg, &loaded.dataset, &library, &mut timings)?;
    let report = timings.time("stats", || build_report(&analysis, cfg));
    let manifest = timings.time("emit", || write_report(&report, cfg, &cfg.output.dir))?;
    Ok(RunOutcome { loaded_vehicles: loaded.dataset.vehicle_count(), analysis, manifest, timings })
}
