use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carfollow::fit::placeholder_library;
use carfollow::ingest::{ColumnSchema, KinematicsSource};
use carfollow::report::ReportFormat;
use carfollow::units::LengthUnit;
use carfollow_cli::config::PipelineConfig;
use carfollow_cli::error::CliError;
use carfollow_cli::pipeline::{self, Analysis, Timings};
use carfollow_cli::{cache, selftest};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Car-following episode extraction, GHR cluster fitting and summary tables.
#[derive(Parser)]
#[command(name = "carfollow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a trajectory file into a binary cache.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Cache file to write.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Extract, fit, aggregate and write the report directory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Report directory (overrides output.dir).
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Extract and fit, writing the intermediate results as JSON.
    Fit {
        #[command(flatten)]
        common: Common,
        /// JSON file to write.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Build the report directory from the output of `fit`.
    Report {
        /// JSON file written by `fit`.
        analysis: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run the built-in checks; exits 1 if any fails.
    Selftest {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Cluster library to check instead of the built-in one.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_library: bool,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trajectory text file or cache (overrides input.path).
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Cluster library CSV (overrides library).
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, value_enum)]
    units: Option<Units>,
    /// TOML file with the column schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Differentiate positions instead of using the speed/accel columns.
    #[arg(long)]
    recompute_kinematics: bool,
    /// Also fit the before/after merge parts and compare them.
    #[arg(long)]
    merge_split: bool,
    /// Use the built-in GHR-driven dataset instead of an input file.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    Feet,
    Meters,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    path.map_or_else(|| Ok(PipelineConfig::default()), PipelineConfig::load)
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(p) = &self.input {
            cfg.input.path = Some(p.clone());
        }
        if let Some(p) = &self.library {
            cfg.library = Some(p.clone());
        }
        if let Some(u) = self.units {
            cfg.input.units = match u {
                Units::Feet => LengthUnit::Feet,
                Units::Meters => LengthUnit::Meters,
            };
        }
        if let Some(p) = &self.schema {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            cfg.input.schema = toml::from_str::<ColumnSchema>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        }
        if self.recompute_kinematics {
            cfg.ingest.kinematics = KinematicsSource::Recompute;
        }
        cfg.segment.merge_split |= self.merge_split;
        cfg.synthetic.enabled |= self.synthetic;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn cmd_ingest(common: &Common, output: &Path) -> Result<(), CliError> {
    let cfg = common.config()?;
    let mut timings = Timings::default();
    let loaded = pipeline::load_dataset(&cfg, &mut timings)?;
    timings.time("cache", || cache::write_cache_file(&loaded.dataset, output))?;
    if let Some(r) = &loaded.ingest {
        println!("rows read      {}", r.rows_read);
        println!("rows accepted  {}", r.rows_accepted);
        println!("rows rejected  {}", r.rows_rejected);
        for rej in &r.rejected {
            eprintln!("  line {}: {}", rej.line, rej.reason);
        }
    }
    println!("{} vehicles", loaded.dataset.vehicle_count());
    println!("{} points", loaded.dataset.point_count());
    println!("{} corrupt tracks dropped", loaded.validation.corrupt.len());
    println!("cache          {}", output.display());
    eprint!("timings\n{}", timings.render());
    Ok(())
}

fn cmd_run(common: &Common, output: Option<&Path>, format: Option<Format>) -> Result<(), CliError> {
    let mut cfg = common.config()?;
    if let Some(o) = output {
        cfg.output.dir = o.to_path_buf();
    }
    if let Some(f) = format {
        cfg.output.format = f.into();
    }
    let out = pipeline::run(&cfg)?;
    println!("{} vehicles", out.loaded_vehicles);
    println!("{} car-following episodes", out.analysis.episodes.len());
    println!("{} fitted, {} unscoreable", out.analysis.fits.len(), out.analysis.fit_failures.len());
    println!("report {} (config {})", cfg.output.dir.display(), &out.manifest.config_hash[..12]);
    eprint!("timings\n{}", out.timings.render());
    Ok(())
}

fn cmd_fit(common: &Common, output: &Path) -> Result<(), CliError> {
    let cfg = common.config()?;
    let library = pipeline::load_library(&cfg)?;
    let mut timings = Timings::default();
    let loaded = pipeline::load_dataset(&cfg, &mut timings)?;
    let analysis = pipeline::analyze(&cfg, &loaded.dataset, &library, &mut timings)?;
    let file = File::create(output).map_err(|e| CliError::io(output, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, &analysis).map_err(|e| CliError::Io(format!("{}: {e}", output.display())))?;
    w.flush().map_err(|e| CliError::io(output, e))?;
    println!("{} car-following episodes", analysis.episodes.len());
    println!("{} fitted, {} unscoreable", analysis.fits.len(), analysis.fit_failures.len());
    eprint!("timings\n{}", timings.render());
    Ok(())
}

fn cmd_report(
    analysis: &Path,
    config: Option<&Path>,
    output: Option<&Path>,
    format: Option<Format>,
) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    cfg.validate()?;
    if let Some(o) = output {
        cfg.output.dir = o.to_path_buf();
    }
    if let Some(f) = format {
        cfg.output.format = f.into();
    }
    let file = File::open(analysis).map_err(|e| CliError::io(analysis, e))?;
    let analysis: Analysis = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Format(format!("{}: {e}", analysis.display())))?;
    if analysis.config_hash != cfg.hash() {
        eprintln!("warning: fit results were produced under config {}", analysis.config_hash);
    }
    pipeline::write_report(&pipeline::build_report(&analysis, &cfg), &cfg, &cfg.output.dir)?;
    println!("report {}", cfg.output.dir.display());
    Ok(())
}

fn cmd_selftest(seed: u64, library: Option<&Path>, corrupt: bool) -> Result<(), CliError> {
    let truth = match library {
        None => placeholder_library(),
        Some(_) => pipeline::load_library(&PipelineConfig { library: library.map(Path::to_path_buf), ..Default::default() })?,
    };
    let fit_library = if corrupt { selftest::rotate_library(&truth) } else { truth.clone() };
    let checks = selftest::run_all(&truth, &fit_library, seed);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("selftest ok ({} checks)", checks.len());
        Ok(())
    } else {
        Err(CliError::SelfTest(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest { common, output } => cmd_ingest(common, output),
        Command::Run { common, output, format } => cmd_run(common, output.as_deref(), *format),
        Command::Fit { common, output } => cmd_fit(common, output),
        Command::Report { analysis, config, output, format } => {
            cmd_report(analysis, config.as_deref(), output.as_deref(), *format)
        }
        Command::Selftest { seed, library, corrupt_library } => cmd_selftest(*seed, library.as_deref(), *corrupt_library),
        Command::Config { config } => load_config(config.as_deref()).map(|c| print!("{}", c.to_toml())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
