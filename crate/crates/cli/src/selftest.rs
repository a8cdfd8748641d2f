//! Built-in checks against known answers, run by `carfollow selftest`.

use std::fmt;

use carfollow::classify::{pair_class, ClassifierConfig, PairClass, VehicleClass};
use carfollow::episode::{
    extract_episodes, segment_by_position, EndReason, EpisodeFrame, EpisodeSummary, ExtractionConfig, Section,
};
use carfollow::fit::{fit_episode, ClusterClass, ClusterDefinition, ClusterLibrary, FitConfig};
use carfollow::ghr::{ghr_acceleration, ghr_partials, predict_accelerations, simulate_follower, GhrParams, SimConfig, SimMode};
use carfollow::stats::{gap_by_speed_bins, gap_decrease_pct, lane_change_rates, pair_summary, Averaging, SpeedBins};
use carfollow::synthetic::{add_accel_noise, extraction_scenario, rng, simulated_episode, EpisodeSpec};
use rand::Rng;

use crate::config::PipelineConfig;
use crate::pipeline::{analyze, build_report, load_dataset, Timings};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name, passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "selftest {:<20} {status}  {}", self.name, self.detail)
    }
}

/// Follower and leader cruising at one speed: every prediction is exactly
/// zero and the simulated follower stays on its observed path.
pub fn ghr_fixed_point(library: &ClusterLibrary) -> Check {
    let (speed, spacing, n) = (15.0, 25.0, 600);
    let frames: Vec<EpisodeFrame> = (0..n)
        .map(|k| {
            let t = k as f64 * 0.1;
            let y = speed * t;
            EpisodeFrame {
                frame: k,
                t,
                follower_y: y,
                follower_speed: speed,
                follower_accel: 0.0,
                leader_y: y + spacing,
                leader_speed: speed,
                space_headway: spacing,
                gap: spacing - 4.5,
            }
        })
        .collect();
    let one_step = SimConfig::default();
    let forward = SimConfig { mode: SimMode::ForwardSimulation, ..SimConfig::default() };
    let mut nonzero = 0;
    let mut drift: f64 = 0.0;
    for def in library.iter() {
        let pred = predict_accelerations(&frames, &def.params, &one_step);
        nonzero += pred.points.iter().filter(|p| p.accel != 0.0).count();
        match simulate_follower(&frames, &def.params, &forward) {
            Ok(sim) => {
                for (p, f) in sim.points.iter().zip(&frames) {
                    drift = drift.max((p.y - f.follower_y).abs()).max((p.v - speed).abs());
                }
            }
            Err(_) => drift = f64::INFINITY,
        }
    }
    Check::new(
        "ghr_fixed_point",
        nonzero == 0 && drift < 1e-9,
        format!("clusters={} nonzero_accel={nonzero} max_drift={drift:.3e}", library.len()),
    )
}

/// Worst errors found by [`scaling_laws`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingErrors {
    /// Largest relative error of the speed, relative-speed and spacing
    /// scaling identities.
    pub scaling: f64,
    /// Largest error of an analytic partial against a central difference,
    /// relative to `max(|partial|, 1 + |a|)`.
    pub partials: f64,
}

pub fn scaling_errors(points: usize, seed: u64) -> ScalingErrors {
    let mut r = rng(seed);
    let mut worst = ScalingErrors { scaling: 0.0, partials: 0.0 };
    let bump = |x: f64| if x.is_nan() { f64::INFINITY } else { x };
    for _ in 0..points {
        let p = GhrParams::new(r.random_range(0.1..3.0), r.random_range(-1.0..2.0), r.random_range(0.0..3.0), 1.0)
            .expect("finite parameters");
        let (v, dv, dx) = (r.random_range(0.5..35.0), r.random_range(-8.0..8.0), r.random_range(2.0..120.0));
        let k: f64 = r.random_range(0.5..2.0);
        let a = |v, dv, dx| ghr_acceleration(v, dv, dx, &p).unwrap_or(f64::NAN);
        let base = a(v, dv, dx);
        for (scaled, expected) in [
            (a(k * v, dv, dx), k.powf(p.m) * base),
            (a(v, k * dv, dx), k * base),
            (a(v, dv, k * dx), k.powf(-p.l) * base),
        ] {
            let rel = if scaled == expected { 0.0 } else { (scaled - expected).abs() / expected.abs().max(scaled.abs()) };
            worst.scaling = worst.scaling.max(bump(rel));
        }
        let central = |f: &dyn Fn(f64) -> f64, x: f64| {
            let h = 1e-6 * x.abs().max(1.0);
            (f(x + h) - f(x - h)) / (2.0 * h)
        };
        let Ok(d) = ghr_partials(v, dv, dx, &p) else {
            worst.partials = f64::INFINITY;
            continue;
        };
        for (fd, analytic) in [
            (central(&|z| a(z, dv, dx), v), d.d_speed),
            (central(&|z| a(v, z, dx), dv), d.d_relative_speed),
            (central(&|z| a(v, dv, z), dx), d.d_spacing),
        ] {
            let err = (fd - analytic).abs() / analytic.abs().max(1.0 + base.abs());
            worst.partials = worst.partials.max(bump(err));
        }
    }
    worst
}

/// Homogeneity of the law in speed, relative speed and spacing, and its
/// analytic partials.
pub fn scaling_laws(points: usize, seed: u64) -> Check {
    let e = scaling_errors(points, seed);
    Check::new(
        "scaling_laws",
        e.scaling < 1e-12 && e.partials < 1e-5,
        format!("points={points} max_rel_err={:.3e} max_partial_err={:.3e}", e.scaling, e.partials),
    )
}

/// Counts of recovered car clusters, noise-free and noisy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    pub clusters: usize,
    pub exact: usize,
    pub worst_exact_rmse: f64,
    pub noisy: usize,
}

/// Simulates one episode per car cluster of `truth` and fits it against
/// `fit_library`.
pub fn round_trip(truth: &ClusterLibrary, fit_library: &ClusterLibrary, sigma: f64, seed: u64) -> RoundTrip {
    let (sim, fit) = (SimConfig::default(), FitConfig::default());
    let mut noise = rng(seed);
    let mut out = RoundTrip { clusters: 0, exact: 0, worst_exact_rmse: 0.0, noisy: 0 };
    for def in truth.group(ClusterClass::Car) {
        out.clusters += 1;
        let Ok(ep) = simulated_episode(def.cluster_id as u64, &def.params, &EpisodeSpec::default()) else {
            continue;
        };
        if let Ok(r) = fit_episode(&ep, fit_library, &sim, &fit) {
            if r.best_cluster_id == def.cluster_id && r.rmse < 1e-9 {
                out.exact += 1;
            }
            out.worst_exact_rmse = out.worst_exact_rmse.max(r.rmse);
        }
        let mut noisy = ep;
        add_accel_noise(&mut noisy, sigma, &mut noise);
        if fit_episode(&noisy, fit_library, &sim, &fit).is_ok_and(|r| r.best_cluster_id == def.cluster_id) {
            out.noisy += 1;
        }
    }
    out
}

pub fn round_trip_recovery(truth: &ClusterLibrary, fit_library: &ClusterLibrary) -> Check {
    let rt = round_trip(truth, fit_library, 0.05, 11);
    let need_noisy = rt.clusters.saturating_sub(2);
    Check::new(
        "round_trip_recovery",
        rt.clusters > 0 && rt.exact == rt.clusters && rt.noisy >= need_noisy,
        format!(
            "exact={}/{} noisy={}/{} (need {need_noisy}) worst_rmse={:.3e}",
            rt.exact, rt.clusters, rt.noisy, rt.clusters, rt.worst_exact_rmse
        ),
    )
}

/// The hand-built six-vehicle scenario yields exactly the expected episodes.
pub fn extraction_oracle() -> Check {
    let (dataset, expected) = extraction_scenario();
    let cfg = ExtractionConfig::default();
    let out = match extract_episodes(&dataset, &cfg, &ClassifierConfig::default()) {
        Ok(o) => o,
        Err(e) => return Check::new("extraction_oracle", false, e.to_string()),
    };
    let mut mismatches = Vec::new();
    if out.episodes.len() != expected.len() {
        mismatches.push(format!("episodes {} != {}", out.episodes.len(), expected.len()));
    }
    for (ep, ex) in out.episodes.iter().zip(&expected) {
        let (before, after) = segment_by_position(ep, cfg.merge_boundary_y_m, cfg.min_segment_duration_s);
        let ok = (ep.follower_id, ep.leader_id) == (ex.follower_id, ex.leader_id)
            && ep.start_frame() == ex.first_frame
            && ep.frames.last().map(|f| f.frame) == Some(ex.last_frame)
            && ep.end_reason == ex.end_reason
            && (ep.avg_gap - ex.avg_gap).abs() < 1e-9
            && before.and_then(|b| b.frames.last().map(|f| f.frame)) == ex.before_merge_last_frame
            && after.map(|a| a.start_frame()) == ex.after_merge_first_frame;
        if !ok {
            mismatches.push(format!("follower {}", ep.follower_id));
        }
    }
    let d = &out.diagnostics;
    if (d.discarded_gap, d.discarded_short) != (1, 1) {
        mismatches.push(format!("discards gap={} short={}", d.discarded_gap, d.discarded_short));
    }
    let detail = if mismatches.is_empty() {
        format!("episodes={} discarded_gap=1 discarded_short=1", out.episodes.len())
    } else {
        mismatches.join("; ")
    };
    Check::new("extraction_oracle", mismatches.is_empty(), detail)
}

/// Random episode summaries spread over all pair classes and speeds.
pub fn random_summaries(n: usize, seed: u64) -> Vec<EpisodeSummary> {
    let mut r = rng(seed);
    let classes = [VehicleClass::PassengerCar, VehicleClass::SuvLightTruck, VehicleClass::HeavyVehicle];
    (0..n)
        .map(|i| {
            let follower_class = classes[r.random_range(0..3)];
            let leader_class = classes[r.random_range(0..3)];
            let n_frames = r.random_range(250..900);
            let start_frame = r.random_range(0..10_000);
            let duration_s = (n_frames - 1) as f64 * 0.1;
            EpisodeSummary {
                id: i as u64,
                follower_id: 2 * i as u64 + 1,
                leader_id: 2 * i as u64 + 2,
                follower_class,
                leader_class,
                pair: pair_class(follower_class, leader_class),
                section: Section::Full,
                start_frame,
                n_frames,
                start_t: start_frame as f64 * 0.1,
                end_t: start_frame as f64 * 0.1 + duration_s,
                duration_s,
                end_reason: if r.random_bool(0.3) { EndReason::FollowerLaneChange } else { EndReason::DataEnd },
                avg_gap: r.random_range(4.5..76.0),
                avg_speed: r.random_range(0.5..25.0),
                negative_gap_frames: 0,
                late_forming: false,
            }
        })
        .collect()
}

/// Cross-checks of the summary tables on `episodes`; returns the failures.
pub fn table_inconsistencies(episodes: &[EpisodeSummary]) -> Vec<String> {
    let mut bad = Vec::new();
    let bins = SpeedBins::gap_bins();
    let summary = pair_summary(episodes, Averaging::Episode);
    let by_bin = gap_by_speed_bins(episodes, &bins, Averaging::Episode);
    let reported = episodes.iter().filter(|e| PairClass::REPORTED.contains(&e.pair)).count();
    let total: usize = summary.iter().map(|r| r.n).sum();
    if total != reported {
        bad.push(format!("pair counts sum to {total}, expected {reported}"));
    }
    for row in &summary {
        let cells: Vec<_> = by_bin.iter().filter_map(|b| b.cell(row.pair)).collect();
        let n: usize = cells.iter().map(|c| c.n).sum();
        if n != row.n {
            bad.push(format!("{}: binned count {n} != {}", row.pair, row.n));
        }
        let weighted: f64 = cells.iter().filter_map(|c| c.avg_gap.map(|g| g * c.n as f64)).sum();
        if let Some(gap) = row.avg_gap {
            let pooled = weighted / row.n as f64;
            if (pooled - gap).abs() > 1e-9 * gap.abs().max(1.0) {
                bad.push(format!("{}: pooled gap {pooled} != {gap}", row.pair));
            }
        }
    }
    for b in &by_bin {
        let gap = |p| b.cell(p).and_then(|c| c.avg_gap);
        let expected = gap(PairClass::CarFollowsCar).zip(gap(PairClass::CarFollowsHeavy)).map(|(cc, ch)| gap_decrease_pct(cc, ch));
        if expected != b.gap_decrease_pct {
            bad.push(format!("{}: gap decrease {:?} != {expected:?}", b.bin, b.gap_decrease_pct));
        }
    }
    for pair in PairClass::REPORTED {
        let lc = lane_change_rates(episodes, pair, &SpeedBins::lane_change_bins());
        let (n, changes) = lc.rows.iter().fold((0, 0), |(n, c), r| (n + r.n, c + r.lane_changes));
        let overall = lc.overall.as_ref().map_or((0, 0), |o| (o.n, o.lane_changes));
        if (n, changes) != overall {
            bad.push(format!("{pair}: lane-change rows {n}/{changes} != overall {overall:?}"));
        }
    }
    bad
}

pub fn table_consistency(n: usize, seed: u64) -> Check {
    let bad = table_inconsistencies(&random_summaries(n, seed));
    let detail = if bad.is_empty() { format!("episodes={n}") } else { bad.join("; ") };
    Check::new("table_consistency", bad.is_empty(), detail)
}

/// Emits the synthetic run twice and compares every file byte for byte.
pub fn report_determinism(cfg: &PipelineConfig, library: &ClusterLibrary) -> Check {
    let render = || -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut t = Timings::default();
        let loaded = load_dataset(cfg, &mut t).map_err(|e| e.to_string())?;
        let analysis = analyze(cfg, &loaded.dataset, library, &mut t).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = dir.path().join("report");
        crate::pipeline::write_report(&build_report(&analysis, cfg), cfg, &out).map_err(|e| e.to_string())?;
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|entry| {
                let p = entry.map_err(|e| e.to_string())?.path();
                let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                std::fs::read(&p).map(|b| (name, b)).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        files.sort();
        Ok(files)
    };
    match (render(), render()) {
        (Ok(a), Ok(b)) => {
            let same = a == b;
            let bytes: usize = a.iter().map(|(_, b)| b.len()).sum();
            Check::new("report_determinism", same, format!("files={} bytes={bytes} identical={same}", a.len()))
        }
        (Err(e), _) | (_, Err(e)) => Check::new("report_determinism", false, e),
    }
}

/// Shifts every cluster's parameters to its neighbour within each class, so
/// ids no longer match their parameters.
pub fn rotate_library(library: &ClusterLibrary) -> ClusterLibrary {
    let mut defs = Vec::with_capacity(library.len());
    for class in [ClusterClass::Car, ClusterClass::Heavy] {
        let group = library.group(class);
        for (i, def) in group.iter().enumerate() {
            defs.push(ClusterDefinition { params: group[(i + 1) % group.len()].params, ..*def });
        }
    }
    ClusterLibrary::new(defs).expect("same ids as a valid library")
}

/// Runs every check in a fixed order. `fit_library` is what the pipeline
/// would score against; `truth` generates the recovery episodes. `seed`
/// drives the random scenarios except the calibrated recovery noise.
pub fn run_all(truth: &ClusterLibrary, fit_library: &ClusterLibrary, seed: u64) -> Vec<Check> {
    let cfg = PipelineConfig {
        seed,
        synthetic: crate::config::SyntheticConfig { enabled: true, pairs: 24, accel_noise: 0.0 },
        segment: crate::config::SegmentConfig { merge_split: true, ..Default::default() },
        ..Default::default()
    };
    vec![
        ghr_fixed_point(fit_library),
        scaling_laws(1000, seed),
        round_trip_recovery(truth, fit_library),
        extraction_oracle(),
        table_consistency(500, seed),
        report_determinism(&cfg, fit_library),
    ]
}

#[cfg(test)]
mod tests {
    use carfollow::fit::placeholder_library;

    use super::*;

    #[test]
    fn all_checks_pass_on_the_shipped_library() {
        let lib = placeholder_library();
        for check in run_all(&lib, &lib, 7) {
            assert!(check.passed, "{check}");
        }
    }

    #[test]
    fn rotated_library_fails_recovery() {
        let lib = placeholder_library();
        let check = round_trip_recovery(&lib, &rotate_library(&lib));
        assert!(!check.passed, "{check}");
    }

    #[test]
    fn same_seed_same_log() {
        let lib = placeholder_library();
        let a: Vec<String> = run_all(&lib, &lib, 9).iter().map(ToString::to_string).collect();
        let b: Vec<String> = run_all(&lib, &lib, 9).iter().map(ToString::to_string).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn random_summaries_cover_every_reported_pair() {
        let eps = random_summaries(200, 1);
        for pair in PairClass::REPORTED {
            assert!(eps.iter().any(|e| e.pair == pair), "{pair}");
        }
        assert!(table_inconsistencies(&eps).is_empty());
    }
}
