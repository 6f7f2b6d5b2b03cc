//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{drop_sparse_rows, group_counts, load_csv, missing_profile, read_schema};
use crate::error::{Error, ErrorClass, Result};
use crate::runner::{emit, read_records, run_audit, summarize, write_summary, AuditConfig};
use crate::synth::{generate_with_missing, preset, write_dataset, SynthConfig, PRESETS};

#[derive(Debug, Parser)]
#[command(name = "fairaudit", version, about = "Audit how imputation and test-set construction shift group fairness gaps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (CSV + schema) from a config or preset.
    Generate(GenerateArgs),
    /// Validate a CSV against its schema and print a missing-data profile.
    Ingest(IngestArgs),
    /// Run an audit described by a JSON config.
    Audit(AuditArgs),
    /// Rebuild summary files and plot data from a records.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator config (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset instead of a config file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Rows for a preset.
    #[arg(long, default_value_t = 5000)]
    pub rows: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Drop rows missing more than this fraction of attributes.
    #[arg(long, default_value_t = 0.75)]
    pub sparse_threshold: f64,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override run.master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override run.trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override run.out_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run only these scenarios (label or kind name); repeatable.
    #[arg(long = "scenario")]
    pub scenarios: Vec<String>,
    /// Write into an existing, non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// records.csv written by `audit`.
    #[arg(long)]
    pub records: PathBuf,
    /// Output directory; defaults to the records file's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Validation => 1,
        ErrorClass::Runtime => 2,
        ErrorClass::Io => 3,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Ingest(a) => ingest(&a),
        Command::Audit(a) => audit(&a),
        Command::Report(a) => report(&a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let mut cfg: SynthConfig = match (&a.config, &a.preset) {
        (Some(path), _) => read_json(path)?,
        (None, Some(name)) => preset(name, a.rows, a.seed.unwrap_or(0))?,
        (None, None) => {
            return Err(Error::Config(format!(
                "give --config or --preset (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let ds = generate_with_missing(&cfg)?;
    write_dataset(&ds, &cfg, &a.out)?;
    info!(
        "wrote {} rows, {} missing cells to {}",
        ds.n_rows(),
        ds.n_missing(),
        a.out.display()
    );
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let schema = read_schema(&a.schema)?;
    let (ds, report) = load_csv(&a.csv, &schema)?;
    let (ds, sparse) = drop_sparse_rows(&ds, a.sparse_threshold)?;
    println!("rows read: {}", report.rows_read);
    println!("dropped (missing sensitive value): {}", report.dropped_missing_sensitive);
    println!("dropped (missing response): {}", report.dropped_missing_response);
    println!("dropped (sparse rows): {sparse}");
    println!("rows kept: {}", ds.n_rows());
    println!();
    println!("group counts:");
    for g in group_counts(&ds) {
        println!("  {:<20} {:>7} {:>8.4}", g.group, g.count, g.share);
    }
    let profile = missing_profile(&ds);
    println!();
    println!("missing fraction by column:");
    for (name, frac) in &profile.columns {
        println!("  {name:<32} {frac:>8.4}");
    }
    let incomplete = (0..ds.n_rows()).filter(|&r| ds.row_has_missing(r)).count();
    let worst = profile.rows.iter().copied().fold(0.0, f64::max);
    println!("rows with any missing feature: {incomplete}");
    println!("largest per-row missing fraction: {worst:.4}");
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    config_path: String,
    config_sha256: String,
    master_seed: u64,
    trials: usize,
    scenarios: Vec<String>,
    records: usize,
    failed_cells: usize,
    wall_time_seconds: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn audit(a: &AuditArgs) -> Result<()> {
    let started = Instant::now();
    let bytes = fs::read(&a.config).map_err(|e| Error::io(&a.config, e))?;
    let mut cfg = AuditConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(t) = a.trials {
        cfg.run.trials = t;
    }
    if let Some(out) = &a.out {
        cfg.run.out_dir = Some(out.clone());
    }
    cfg.filter_scenarios(&a.scenarios)?;
    cfg.validate()?;
    let out = cfg
        .run
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: set run.out_dir or pass --out".into()))?;
    if out.exists() && !a.force {
        let occupied = fs::read_dir(&out).map_err(|e| Error::io(&out, e))?.next().is_some();
        if occupied {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    }

    let output = run_audit(&cfg)?;
    emit(&output, &out)?;
    if !output.errors.is_empty() {
        log::warn!("{} cells failed; see errors.csv", output.errors.len());
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config_path: a.config.display().to_string(),
        config_sha256: hex(&Sha256::digest(&bytes)),
        master_seed: cfg.run.master_seed,
        trials: cfg.run.trials,
        scenarios: cfg.scenarios.iter().map(|s| s.label()).collect(),
        records: output.records.len(),
        failed_cells: output.errors.len(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    info!(
        "wrote {} records to {} in {:.1}s",
        output.records.len(),
        out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let records = read_records(&a.records)?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => a.records.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let summary = summarize(&records);
    write_summary(&summary, &out)?;
    info!("summarized {} records into {} cells", records.len(), summary.len());
    Ok(())
}
