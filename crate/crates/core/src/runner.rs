//! Config-driven audits over the scenario × imputer × model × trial grid.
//!
//! # Seeds
//!
//! Every cell gets its seed from the master seed and a canonical string
//! `"<scenario>|<imputer>|<model>|<trial>"` (labels as they appear in the
//! records, trial 1-based) through
//! `splitmix64(master_seed ^ fnv1a64(string))`. Train/test construction uses
//! the same rule with an empty model field, so all models in a trial see the
//! same split, imputation and perturbation. Seeds never depend on the trial
//! count, so raising it leaves earlier trials unchanged.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{drop_sparse_rows, load_csv, read_schema, Dataset, IngestReport};
use crate::error::{Error, Result};
use crate::fairness::{one_vs_rest_report, Notion};
use crate::impute::ImputerSpec;
use crate::models::{train, ModelSpec};
use crate::scenario::{build_scenario, ScenarioSpec};
use crate::seeding::derive_seed;
use crate::synth::{generate_with_missing, preset, SynthConfig};

pub const NO_IMPUTER: &str = "none";
pub const ALL_GROUPS: &str = "ALL";
pub const ACCURACY: &str = "accuracy";
pub const COUNT: &str = "count";

/// Where the audit data comes from: exactly one of a CSV + schema pair, an
/// inline generator config, or a named preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Row count for a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rows: Option<usize>,
    /// Generator seed for a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_trials() -> usize {
    20
}

fn default_sparse() -> f64 {
    0.75
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Rows missing more than this fraction of attributes are dropped on load.
    #[serde(default = "default_sparse")]
    pub sparse_row_threshold: f64,
    /// Feed the group indicator columns to the models.
    #[serde(default = "default_true")]
    pub include_sensitive_features: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            trials: default_trials(),
            master_seed: 0,
            out_dir: None,
            sparse_row_threshold: default_sparse(),
            include_sensitive_features: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub data: DataSection,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub imputers: Vec<ImputerSpec>,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub run: RunSection,
}

fn unique<'a>(what: &str, labels: impl Iterator<Item = String> + 'a) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.clone()) {
            return Err(Error::Config(format!("duplicate {what} `{l}`")));
        }
    }
    Ok(())
}

impl AuditConfig {
    /// Reads a JSON config; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: AuditConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.csv, &mut cfg.data.schema].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let sources = [d.csv.is_some() || d.schema.is_some(), d.synth.is_some(), d.preset.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config(
                "data needs exactly one of `csv` + `schema`, `synth` or `preset`".into(),
            ));
        }
        if (d.csv.is_some() || d.schema.is_some()) && (d.csv.is_none() || d.schema.is_none()) {
            return Err(Error::Config("`csv` and `schema` must be given together".into()));
        }
        if d.preset.is_none() && (d.n_rows.is_some() || d.seed.is_some()) {
            return Err(Error::Config("`n_rows` and `seed` apply only to a preset".into()));
        }
        if let Some(s) = &d.synth {
            s.validate()?;
        }
        if self.run.trials == 0 {
            return Err(Error::Config("run.trials must be at least 1".into()));
        }
        let t = self.run.sparse_row_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("sparse_row_threshold must lie in (0, 1], got {t}")));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario is required".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        for i in &self.imputers {
            i.validate()?;
        }
        for m in &self.models {
            m.validate()?;
        }
        if self.imputers.is_empty() && self.scenarios.iter().any(|s| !s.kind.removes_missing()) {
            return Err(Error::Config("imputing scenarios need at least one imputer".into()));
        }
        unique("scenario", self.scenarios.iter().map(ScenarioSpec::label))?;
        unique("imputer", self.imputers.iter().map(ImputerSpec::label))?;
        unique("model", self.models.iter().map(ModelSpec::label))?;
        Ok(())
    }

    /// Keeps the scenarios whose label or kind name is listed.
    pub fn filter_scenarios(&mut self, names: &[String]) -> Result<()> {
        if names.is_empty() {
            return Ok(());
        }
        for n in names {
            if !self.scenarios.iter().any(|s| &s.label() == n || s.kind.as_str() == n) {
                return Err(Error::Config(format!("scenario `{n}` is not in the config")));
            }
        }
        self.scenarios
            .retain(|s| names.iter().any(|n| *n == s.label() || n == s.kind.as_str()));
        Ok(())
    }
}

/// Loads (or generates) the audit dataset and drops sparse rows.
pub fn load_data(cfg: &AuditConfig) -> Result<(Dataset, IngestReport, usize)> {
    let d = &cfg.data;
    let (ds, report) = if let (Some(csv), Some(schema)) = (&d.csv, &d.schema) {
        load_csv(csv, &read_schema(schema)?)?
    } else {
        let synth = match (&d.synth, &d.preset) {
            (Some(s), _) => s.clone(),
            (None, Some(name)) => preset(name, d.n_rows.unwrap_or(5000), d.seed.unwrap_or(0))?,
            (None, None) => return Err(Error::Config("no data source".into())),
        };
        let ds = generate_with_missing(&synth)?;
        let report = IngestReport {
            rows_read: ds.n_rows(),
            ..Default::default()
        };
        (ds, report)
    };
    let (ds, sparse) = drop_sparse_rows(&ds, cfg.run.sparse_row_threshold)?;
    Ok((ds, report, sparse))
}

/// `splitmix64(master ^ fnv1a64("<scenario>|<imputer>|<model>|<trial>"))`.
pub fn cell_seed(master: u64, scenario: &str, imputer: &str, model: &str, trial: usize) -> u64 {
    derive_seed(master, &format!("{scenario}|{imputer}|{model}|{trial}"))
}

/// One observation of the long-format output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub scenario: String,
    pub imputer: String,
    pub model: String,
    pub trial: usize,
    pub group: String,
    pub metric: String,
    pub value: Option<f64>,
    pub test_group_size: u64,
    pub predicted_positives: u64,
}

/// A grid cell that failed; the rest of the audit still runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub scenario: String,
    pub imputer: String,
    pub model: String,
    pub trial: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct AuditOutput {
    pub records: Vec<AuditRecord>,
    pub errors: Vec<CellError>,
}

struct Unit<'a> {
    scenario: &'a ScenarioSpec,
    imputer: Option<&'a ImputerSpec>,
    trial: usize,
}

fn imputer_label(i: Option<&ImputerSpec>) -> String {
    i.map_or_else(|| NO_IMPUTER.to_string(), ImputerSpec::label)
}

/// Runs every cell on `ds`. Output order is scenario, imputer, model, trial
/// (config order), independent of scheduling.
pub fn run_on(cfg: &AuditConfig, ds: &Dataset) -> Result<AuditOutput> {
    cfg.validate()?;
    let mut units = Vec::new();
    for scenario in &cfg.scenarios {
        let imputers: Vec<Option<&ImputerSpec>> = if scenario.kind.removes_missing() {
            vec![None]
        } else {
            cfg.imputers.iter().map(Some).collect()
        };
        for imputer in imputers {
            for trial in 1..=cfg.run.trials {
                units.push(Unit {
                    scenario,
                    imputer,
                    trial,
                });
            }
        }
    }
    info!(
        "running {} scenario builds x {} models on {} rows",
        units.len(),
        cfg.models.len(),
        ds.n_rows()
    );

    // per unit: one entry per model, each either records or an error
    let results: Vec<Vec<std::result::Result<Vec<AuditRecord>, CellError>>> =
        units.par_iter().map(|u| run_unit(cfg, ds, u)).collect();

    // regroup from (scenario, imputer, trial, model) to (scenario, imputer, model, trial)
    let mut out = AuditOutput::default();
    let trials = cfg.run.trials;
    for block in results.chunks(trials) {
        for m in 0..cfg.models.len() {
            for unit in block {
                match &unit[m] {
                    Ok(r) => out.records.extend(r.iter().cloned()),
                    Err(e) => out.errors.push(e.clone()),
                }
            }
        }
    }
    for e in &out.errors {
        warn!(
            "cell {}|{}|{}|{} failed during {}: {}",
            e.scenario, e.imputer, e.model, e.trial, e.stage, e.message
        );
    }
    Ok(out)
}

fn run_unit(cfg: &AuditConfig, ds: &Dataset, u: &Unit) -> Vec<std::result::Result<Vec<AuditRecord>, CellError>> {
    let scenario = u.scenario.label();
    let imputer = imputer_label(u.imputer);
    let fail = |model: &str, stage: &str, e: Error| CellError {
        scenario: scenario.clone(),
        imputer: imputer.clone(),
        model: model.to_string(),
        trial: u.trial,
        stage: stage.to_string(),
        message: e.to_string(),
    };
    let data_seed = cell_seed(cfg.run.master_seed, &scenario, &imputer, "", u.trial);
    let include = cfg.run.include_sensitive_features;
    let prepared = build_scenario(u.scenario, ds, u.imputer, data_seed).and_then(|b| {
        let x_train = b.train.to_matrix(include)?;
        let x_test = b.test.to_matrix(include)?;
        Ok((b, x_train, x_test))
    });
    let (built, x_train, x_test) = match prepared {
        Ok(p) => p,
        Err(e) => {
            return cfg
                .models
                .iter()
                .map(|m| Err(fail(&m.label(), "build", clone_error(&e))))
                .collect()
        }
    };
    if u.trial == 1 {
        info!(
            "{scenario} / {imputer}: {} train rows, {} test rows",
            built.train.n_rows(),
            built.test.n_rows()
        );
    }
    cfg.models
        .iter()
        .map(|spec| {
            let model = spec.label();
            let seed = cell_seed(cfg.run.master_seed, &scenario, &imputer, &model, u.trial);
            let trained = train(spec, &x_train, built.train.labels(), seed).map_err(|e| fail(&model, "train", e))?;
            let yhat = trained.predict(&x_test).map_err(|e| fail(&model, "predict", e))?;
            cell_records(&built.test, &yhat, &scenario, &imputer, &model, u.trial).map_err(|e| fail(&model, "metrics", e))
        })
        .collect()
}

// Error holds non-Clone sources; a build failure is reported once per model.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m.clone()),
        other => Error::InvalidInput(other.to_string()),
    }
}

/// Records for one cell: each group's seven gaps, overall and per-group
/// accuracy, then per-group counts.
pub fn cell_records(
    test: &Dataset,
    yhat: &[u8],
    scenario: &str,
    imputer: &str,
    model: &str,
    trial: usize,
) -> Result<Vec<AuditRecord>> {
    let names = test.group_names();
    let report = one_vs_rest_report(test.labels(), yhat, test.groups(), names)?;
    let k = names.len();
    let mut out = Vec::with_capacity(k * Notion::ALL.len() + 2 * k + 1);
    let rec = |group: &str, metric: &str, value: Option<f64>, size: u64, pos: u64| AuditRecord {
        scenario: scenario.to_string(),
        imputer: imputer.to_string(),
        model: model.to_string(),
        trial,
        group: group.to_string(),
        metric: metric.to_string(),
        value,
        test_group_size: size,
        predicted_positives: pos,
    };
    let conf = &report.confusion;
    for (row, c) in report.rows.iter().zip(conf.iter().flat_map(|c| std::iter::repeat_n(c, Notion::ALL.len()))) {
        out.push(rec(&row.group, row.metric.as_str(), row.value, c.total(), c.predicted_positive()));
    }
    let total = test.n_rows() as u64;
    let positives = yhat.iter().filter(|&&v| v == 1).count() as u64;
    let hits = test.labels().iter().zip(yhat).filter(|(a, b)| a == b).count();
    out.push(rec(ALL_GROUPS, ACCURACY, Some(hits as f64 / total as f64), total, positives));
    for (name, c) in names.iter().zip(conf) {
        out.push(rec(name, ACCURACY, c.accuracy(), c.total(), c.predicted_positive()));
    }
    for (name, c) in names.iter().zip(conf) {
        out.push(rec(name, COUNT, Some(c.total() as f64), c.total(), c.predicted_positive()));
    }
    Ok(out)
}

/// Loads the data and runs the audit.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditOutput> {
    cfg.validate()?;
    let (ds, report, sparse) = load_data(cfg)?;
    info!(
        "loaded {} rows ({} read, {} dropped at ingest, {} sparse rows dropped)",
        ds.n_rows(),
        report.rows_read,
        report.rows_dropped(),
        sparse
    );
    run_on(cfg, &ds)
}

/// Mean and spread of one (scenario, imputer, model, group, metric) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub imputer: String,
    pub model: String,
    pub group: String,
    pub metric: String,
    /// Mean over defined values.
    pub mean: Option<f64>,
    /// Sample standard deviation over defined values; 0 for a single value.
    pub std: Option<f64>,
    /// Trials with a defined value.
    pub trials: usize,
    pub undefined: usize,
}

/// Aggregates records per cell, keeping first-appearance order.
pub fn summarize(records: &[AuditRecord]) -> Vec<SummaryRow> {
    let mut cells: IndexMap<(&str, &str, &str, &str, &str), (Vec<f64>, usize)> = IndexMap::new();
    for r in records {
        let key = (
            r.scenario.as_str(),
            r.imputer.as_str(),
            r.model.as_str(),
            r.group.as_str(),
            r.metric.as_str(),
        );
        let cell = cells.entry(key).or_default();
        match r.value {
            Some(v) => cell.0.push(v),
            None => cell.1 += 1,
        }
    }
    cells
        .into_iter()
        .map(|((scenario, imputer, model, group, metric), (values, undefined))| {
            let (mean, std) = mean_std(&values);
            SummaryRow {
                scenario: scenario.into(),
                imputer: imputer.into(),
                model: model.into(),
                group: group.into(),
                metric: metric.into(),
                mean,
                std,
                trials: values.len(),
                undefined,
            }
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let ss = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (Some(mean), Some((ss / (n - 1.0)).sqrt()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const RECORD_HEADER: [&str; 9] = [
    "scenario",
    "imputer",
    "model",
    "trial",
    "group",
    "metric",
    "value",
    "test_group_size",
    "predicted_positives",
];

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn write_records(records: &[AuditRecord], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e| Error::csv(path, e);
    w.write_record(RECORD_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.scenario.as_str(),
            &r.imputer,
            &r.model,
            &r.trial.to_string(),
            &r.group,
            &r.metric,
            &opt(r.value),
            &r.test_group_size.to_string(),
            &r.predicted_positives.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<AuditRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::Schema(format!(
            "{}: expected header {}",
            path.display(),
            RECORD_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let bad = |column: &str, message: String| Error::Parse {
            row: i + 1,
            column: column.to_string(),
            message,
        };
        let num = |j: usize| -> Result<u64> {
            row[j]
                .parse()
                .map_err(|_| bad(RECORD_HEADER[j], format!("`{}` is not a count", &row[j])))
        };
        let value = match &row[6] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("value", format!("`{s}` is not a number")))?),
        };
        out.push(AuditRecord {
            scenario: row[0].to_string(),
            imputer: row[1].to_string(),
            model: row[2].to_string(),
            trial: num(3)? as usize,
            group: row[4].to_string(),
            metric: row[5].to_string(),
            value,
            test_group_size: num(7)?,
            predicted_positives: num(8)?,
        });
    }
    Ok(out)
}

pub fn write_errors(errors: &[CellError], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e| Error::csv(path, e);
    w.write_record(["scenario", "imputer", "model", "trial", "stage", "message"])
        .map_err(io)?;
    for e in errors {
        w.write_record([
            e.scenario.as_str(),
            &e.imputer,
            &e.model,
            &e.trial.to_string(),
            &e.stage,
            &e.message,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes `summary.csv`, `summary.json` and `plotdata/<metric>__<model>.csv`
/// (one row per scenario and imputer, a mean and std column per group).
pub fn write_summary(summary: &[SummaryRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("summary.csv");
    let mut w = csv_writer(&path)?;
    let io = |e| Error::csv(&path, e);
    w.write_record([
        "scenario", "imputer", "model", "group", "metric", "mean", "std", "trials", "undefined",
    ])
    .map_err(io)?;
    for s in summary {
        w.write_record([
            s.scenario.as_str(),
            &s.imputer,
            &s.model,
            &s.group,
            &s.metric,
            &opt(s.mean),
            &opt(s.std),
            &s.trials.to_string(),
            &s.undefined.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let json_path = dir.join("summary.json");
    let mut f = create(&json_path)?;
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Json {
        path: json_path.clone(),
        source: e,
    })?;
    writeln!(f, "{text}").map_err(|e| Error::io(&json_path, e))?;

    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    // (metric, model) -> (groups in order, (scenario, imputer) -> group -> (mean, std))
    type Table<'a> = (Vec<&'a str>, IndexMap<(&'a str, &'a str), IndexMap<&'a str, &'a SummaryRow>>);
    let mut tables: IndexMap<(&str, &str), Table> = IndexMap::new();
    for s in summary.iter().filter(|s| s.metric != COUNT) {
        let (groups, rows) = tables.entry((s.metric.as_str(), s.model.as_str())).or_default();
        if !groups.contains(&s.group.as_str()) {
            groups.push(&s.group);
        }
        rows.entry((s.scenario.as_str(), s.imputer.as_str()))
            .or_default()
            .insert(&s.group, s);
    }
    for ((metric, model), (groups, rows)) in &tables {
        let path = plot_dir.join(format!("{}__{}.csv", file_stem(metric), file_stem(model)));
        let mut w = csv_writer(&path)?;
        let io = |e| Error::csv(&path, e);
        let mut header = vec!["scenario".to_string(), "imputer".to_string()];
        for g in groups {
            header.push(format!("{g}_mean"));
            header.push(format!("{g}_std"));
        }
        w.write_record(&header).map_err(io)?;
        for ((scenario, imputer), cells) in rows {
            let mut line = vec![scenario.to_string(), imputer.to_string()];
            for g in groups {
                let cell = cells.get(g);
                line.push(opt(cell.and_then(|c| c.mean)));
                line.push(opt(cell.and_then(|c| c.std)));
            }
            w.write_record(&line).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes records, errors, summary and plot data into `dir`.
pub fn emit(output: &AuditOutput, dir: &Path) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records(&output.records, &dir.join("records.csv"))?;
    write_errors(&output.errors, &dir.join("errors.csv"))?;
    let summary = summarize(&output.records);
    write_summary(&summary, dir)?;
    Ok(summary)
}
