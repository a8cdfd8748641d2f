//! The TOML run configuration and its hash.

use std::path::{Path, PathBuf};

use carfollow::classify::ClassifierConfig;
use carfollow::episode::ExtractionConfig;
use carfollow::fit::FitConfig;
use carfollow::ghr::SimConfig;
use carfollow::ingest::{ColumnSchema, DerivePolicy, DEFAULT_SEGMENT_LENGTH_M};
use carfollow::report::{ReportFormat, StatsConfig};
use carfollow::units::{LengthUnit, FRAME_INTERVAL_S};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    /// Trajectory text file or ingest cache.
    pub path: Option<PathBuf>,
    pub units: LengthUnit,
    pub schema: ColumnSchema,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { path: None, units: LengthUnit::Feet, schema: ColumnSchema::ngsim() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: ReportFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("report"), format: ReportFormat::Csv }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub length_m: f64,
    /// Also fit the parts before and after the merge boundary.
    pub merge_split: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { length_m: DEFAULT_SEGMENT_LENGTH_M, merge_split: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Use the built-in synthetic pair dataset instead of `input.path`.
    pub enabled: bool,
    pub pairs: usize,
    pub accel_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { enabled: false, pairs: 60, accel_noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input: InputConfig,
    /// Cluster library CSV; the bundled placeholder library when absent.
    pub library: Option<PathBuf>,
    pub output: OutputConfig,
    pub seed: u64,
    pub synthetic: SyntheticConfig,
    pub ingest: DerivePolicy,
    pub classify: ClassifierConfig,
    pub segment: SegmentConfig,
    pub extract: ExtractionConfig,
    pub ghr: SimConfig,
    pub fit: FitConfig,
    pub stats: StatsConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section before any stage runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.classify.validate() {
            return bad(format!("classify: {e}"));
        }
        if let Err(e) = self.extract.validate() {
            return bad(format!("extract: {e}"));
        }
        if let Err(e) = self.ghr.validate() {
            return bad(format!("ghr: {e}"));
        }
        if (self.ghr.dt - FRAME_INTERVAL_S).abs() > 1e-12 {
            return bad(format!("ghr.dt must equal the 0.1 s frame interval, got {}", self.ghr.dt));
        }
        if !(self.ingest.max_backward_step_m >= 0.0) {
            return bad("ingest.max_backward_step_m must be >= 0".into());
        }
        if !(self.segment.length_m > 0.0) {
            return bad("segment.length_m must be > 0".into());
        }
        if !(self.extract.merge_boundary_y_m > 0.0 && self.extract.merge_boundary_y_m < self.segment.length_m) {
            return bad("extract.merge_boundary_y_m must lie inside the segment".into());
        }
        if !(self.stats.lane_change_speed_threshold_kmh > 0.0) {
            return bad("stats.lane_change_speed_threshold_kmh must be > 0".into());
        }
        if !(self.synthetic.accel_noise >= 0.0) {
            return bad("synthetic.accel_noise must be >= 0".into());
        }
        if self.synthetic.enabled && self.synthetic.pairs == 0 {
            return bad("synthetic.pairs must be > 0".into());
        }
        if let Err(e) = self.input.schema.validate() {
            return bad(format!("input.schema: {e}"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
