//! Synthetic tabular data with controllable population bias, behavioral bias
//! and missingness.
//!
//! Each row draws its group from `group_shares`, its features as the group's
//! mean shift plus zero-mean normal noise, and its label from
//! `Bernoulli(sigmoid(coefficients · features + group offset))`. Randomness is
//! counter-based per row, so the output is a pure function of the config.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, ColumnRole, ColumnSchema, Dataset, FeatureColumn, FeatureKind};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, stream_rng};

/// Name of the sensitive column in generated CSV files.
pub const GROUP_COLUMN: &str = "race";
/// Name of the response column in generated CSV files.
pub const LABEL_COLUMN: &str = "outcome";
pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingMechanism {
    #[serde(rename = "MCAR")]
    Mcar,
    #[serde(rename = "MAR-on-group")]
    MarOnGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_rows: usize,
    /// Group name → sampling probability; order defines group order.
    pub group_shares: IndexMap<String, f64>,
    pub n_features: usize,
    /// Optional feature names; defaults to `x1..xp`.
    #[serde(default)]
    pub feature_names: Vec<String>,
    /// Group → per-feature additive shift (absent groups: no shift).
    #[serde(default)]
    pub group_mean_shift: IndexMap<String, Vec<f64>>,
    pub noise_std: Vec<f64>,
    pub label_coefficients: Vec<f64>,
    /// Group → direct additive term on the label logit.
    #[serde(default)]
    pub label_group_offset: IndexMap<String, f64>,
    pub missing_rates: Vec<f64>,
    pub missing_mechanism: MissingMechanism,
    /// Group → multiplier on every column's missing rate (MAR-on-group only).
    #[serde(default)]
    pub mar_rate_multiplier: IndexMap<String, f64>,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_rows == 0 {
            return bad("n_rows must be at least 1".into());
        }
        if self.n_features == 0 {
            return bad("n_features must be at least 1".into());
        }
        if self.group_shares.is_empty() {
            return bad("group_shares must name at least one group".into());
        }
        if let Some((g, s)) = self.group_shares.iter().find(|(_, &s)| !(s > 0.0 && s.is_finite())) {
            return bad(format!("group share for `{g}` must be positive, got {s}"));
        }
        let total: f64 = self.group_shares.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("group shares sum to {total}, expected 1"));
        }
        let p = self.n_features;
        for (name, len) in [
            ("noise_std", self.noise_std.len()),
            ("label_coefficients", self.label_coefficients.len()),
            ("missing_rates", self.missing_rates.len()),
        ] {
            if len != p {
                return bad(format!("{name} has length {len}, expected n_features = {p}"));
            }
        }
        if !self.feature_names.is_empty() && self.feature_names.len() != p {
            return bad(format!(
                "feature_names has length {}, expected {p}",
                self.feature_names.len()
            ));
        }
        if self.noise_std.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return bad("noise_std entries must be finite and nonnegative".into());
        }
        if self.label_coefficients.iter().any(|c| !c.is_finite()) {
            return bad("label_coefficients must be finite".into());
        }
        if self.missing_rates.iter().any(|&r| !(0.0..1.0).contains(&r)) {
            return bad("missing_rates must lie in [0, 1)".into());
        }
        for map_name in ["group_mean_shift", "label_group_offset", "mar_rate_multiplier"] {
            let keys: Vec<&String> = match map_name {
                "group_mean_shift" => self.group_mean_shift.keys().collect(),
                "label_group_offset" => self.label_group_offset.keys().collect(),
                _ => self.mar_rate_multiplier.keys().collect(),
            };
            if let Some(k) = keys.iter().find(|k| !self.group_shares.contains_key(k.as_str())) {
                return bad(format!("{map_name} names unknown group `{k}`"));
            }
        }
        if let Some((g, v)) = self.group_mean_shift.iter().find(|(_, v)| v.len() != p) {
            return bad(format!(
                "group_mean_shift for `{g}` has length {}, expected {p}",
                v.len()
            ));
        }
        if let Some((g, m)) = self
            .mar_rate_multiplier
            .iter()
            .find(|(_, &m)| !(m > 0.0 && m.is_finite()))
        {
            return bad(format!("MAR multiplier for `{g}` must be positive, got {m}"));
        }
        if self.missing_mechanism == MissingMechanism::MarOnGroup {
            for g in self.group_shares.keys() {
                let mult = self.mar_multiplier(g);
                if let Some((j, r)) = self
                    .missing_rates
                    .iter()
                    .enumerate()
                    .find(|(_, &r)| r * mult >= 1.0)
                {
                    return bad(format!(
                        "effective missing rate {} for feature {j} in group `{g}` is not below 1",
                        r * mult
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn group_names(&self) -> Vec<String> {
        self.group_shares.keys().cloned().collect()
    }

    pub fn feature_name(&self, j: usize) -> String {
        self.feature_names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("x{}", j + 1))
    }

    fn mar_multiplier(&self, group: &str) -> f64 {
        self.mar_rate_multiplier.get(group).copied().unwrap_or(1.0)
    }

    fn effective_rate(&self, group: &str, j: usize) -> f64 {
        match self.missing_mechanism {
            MissingMechanism::Mcar => self.missing_rates[j],
            MissingMechanism::MarOnGroup => self.missing_rates[j] * self.mar_multiplier(group),
        }
    }

    /// Probability that a row of `group` has no masked feature.
    pub fn complete_case_probability(&self, group: &str) -> f64 {
        (0..self.n_features)
            .map(|j| 1.0 - self.effective_rate(group, j))
            .product()
    }

    /// Share-weighted probability that a generated row is complete.
    pub fn expected_complete_fraction(&self) -> f64 {
        self.group_shares
            .iter()
            .map(|(g, s)| s * self.complete_case_probability(g))
            .sum()
    }

    /// Schema describing the CSV written by [`write_dataset`].
    pub fn schema(&self) -> Vec<ColumnSchema> {
        let mut schema = vec![ColumnSchema {
            name: GROUP_COLUMN.into(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Sensitive,
            missing_codes: vec![],
            categories: self.group_names(),
            favorable_values: vec![],
        }];
        schema.extend((0..self.n_features).map(|j| ColumnSchema {
            name: self.feature_name(j),
            kind: ColumnKind::Numeric,
            role: ColumnRole::Feature,
            missing_codes: vec![MISSING_TOKEN.into()],
            categories: vec![],
            favorable_values: vec![],
        }));
        schema.push(ColumnSchema {
            name: LABEL_COLUMN.into(),
            kind: ColumnKind::Binary,
            role: ColumnRole::Response,
            missing_codes: vec![],
            categories: vec![],
            favorable_values: vec!["1".into()],
        });
        schema
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draws a complete dataset (no masked cells).
///
/// Column layout matches what [`crate::data::load_csv`] produces for
/// [`SynthConfig::schema`]: one indicator per group, then the numeric features.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let names = cfg.group_names();
    let k = names.len();
    let p = cfg.n_features;
    let n = cfg.n_rows;
    let shares: Vec<f64> = cfg.group_shares.values().copied().collect();
    let picker = WeightedIndex::new(&shares).map_err(|e| Error::Config(e.to_string()))?;
    let shifts: Vec<Vec<f64>> = names
        .iter()
        .map(|g| cfg.group_mean_shift.get(g).cloned().unwrap_or_else(|| vec![0.0; p]))
        .collect();
    let offsets: Vec<f64> = names
        .iter()
        .map(|g| cfg.label_group_offset.get(g).copied().unwrap_or(0.0))
        .collect();
    let noises: Vec<Normal<f64>> = cfg
        .noise_std
        .iter()
        .map(|&s| Normal::new(0.0, s).expect("validated std"))
        .collect();

    let mut values = vec![vec![0.0; n]; k + p];
    let mut groups = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let row_seed = derive_seed(cfg.seed, "synth/rows");
    for i in 0..n {
        let mut rng = stream_rng(row_seed, i as u64);
        let g = picker.sample(&mut rng);
        values[g][i] = 1.0;
        let mut logit = offsets[g];
        for j in 0..p {
            let x = shifts[g][j] + noises[j].sample(&mut rng);
            values[k + j][i] = x;
            logit += cfg.label_coefficients[j] * x;
        }
        let u: f64 = rng.random();
        labels.push(u8::from(u < sigmoid(logit)));
        groups.push(g);
    }

    let mut features: Vec<FeatureColumn> = names
        .iter()
        .enumerate()
        .map(|(g, name)| FeatureColumn {
            name: format!("{GROUP_COLUMN}={name}"),
            kind: FeatureKind::SensitiveDummy { group: g },
            source: GROUP_COLUMN.into(),
        })
        .collect();
    features.extend((0..p).map(|j| FeatureColumn {
        name: cfg.feature_name(j),
        kind: FeatureKind::Numeric,
        source: cfg.feature_name(j),
    }));
    let mask = vec![vec![false; n]; k + p];
    Dataset::new(features, values, mask, names, groups, labels)
}

/// Masks feature cells according to the configured mechanism. Only the
/// generated numeric features are eligible; group indicators never are.
pub fn inject_missing(ds: &Dataset, cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let targets: Vec<usize> = (0..ds.n_features())
        .filter(|&j| !ds.features()[j].kind.is_sensitive())
        .collect();
    if targets.len() != cfg.n_features {
        return Err(Error::InvalidInput(format!(
            "dataset has {} non-sensitive features, config declares {}",
            targets.len(),
            cfg.n_features
        )));
    }
    if targets.iter().any(|&j| ds.column_mask(j).iter().any(|&m| m)) {
        return Err(Error::InvalidInput(
            "inject_missing expects a dataset without masked feature cells".into(),
        ));
    }
    let rates: Vec<Vec<f64>> = ds
        .group_names()
        .iter()
        .map(|g| (0..cfg.n_features).map(|j| cfg.effective_rate(g, j)).collect())
        .collect();
    if let Some(r) = rates.iter().flatten().find(|&&r| r >= 1.0) {
        return Err(Error::Config(format!("effective missing rate {r} is not below 1")));
    }

    let mut out = ds.clone();
    let seed = derive_seed(cfg.seed, "synth/missing");
    for i in 0..ds.n_rows() {
        let mut rng = stream_rng(seed, i as u64);
        let g = ds.groups()[i];
        for (t, &j) in targets.iter().enumerate() {
            let u: f64 = rng.random();
            if u < rates[g][t] {
                out.mask[j][i] = true;
                out.values[j][i] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Writes `ds` (produced from `cfg`) as `dataset.csv` + `schema.json` in `dir`.
pub fn write_dataset(ds: &Dataset, cfg: &SynthConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("dataset.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::csv(&csv_path, e))?;
    let schema = cfg.schema();
    w.write_record(schema.iter().map(|c| c.name.as_str()))
        .map_err(|e| Error::csv(&csv_path, e))?;
    let first_feature = ds.n_groups();
    let mut row: Vec<String> = Vec::with_capacity(schema.len());
    for i in 0..ds.n_rows() {
        row.clear();
        row.push(ds.group_names()[ds.groups()[i]].clone());
        for j in 0..cfg.n_features {
            row.push(match ds.get(i, first_feature + j) {
                Some(v) => format!("{v}"),
                None => MISSING_TOKEN.to_string(),
            });
        }
        row.push(ds.labels()[i].to_string());
        w.write_record(&row).map_err(|e| Error::csv(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let schema_path = dir.join("schema.json");
    let mut f = fs::File::create(&schema_path).map_err(|e| Error::io(&schema_path, e))?;
    let text = serde_json::to_string_pretty(&schema).expect("schema serializes");
    writeln!(f, "{text}").map_err(|e| Error::io(&schema_path, e))?;
    Ok(())
}

/// Racial composition of the four-year-institution ELS sample, as person
/// counts per 9957 students (Asian, Black, Hispanic, Multiracial, White).
pub const ELS_GROUP_COUNTS: [(&str, f64); 5] = [
    ("Asian", 1113.0),
    ("Black", 1021.0),
    ("Hispanic", 813.0),
    ("MR", 427.0),
    ("White", 6583.0),
];

/// Features of the `els-like` preset: name, missing rate taken from the
/// published per-variable missing percentages, label coefficient, and
/// whether the feature carries the behavioral (group-shifted) signal.
const ELS_FEATURES: [(&str, f64, f64, bool); 16] = [
    ("st_relationship", 0.3332, 0.9, true),
    ("loan_owed", 0.2533, 0.8, true),
    ("tv_video_hours", 0.1487, -0.3, false),
    ("college_entrance", 0.0975, 0.7, true),
    ("generation", 0.0706, 0.1, false),
    ("gpa_first_year", 0.0678, 0.6, true),
    ("athletic_level", 0.0539, 0.1, false),
    ("credits_total", 0.0404, 0.3, true),
    ("gpa_all", 0.0333, 0.2, true),
    ("homework_hours", 0.0185, 0.1, false),
    ("school_activities", 0.0084, 0.1, false),
    ("std_math_reading", 0.0002, 0.2, true),
    ("parents_education", 0.0, 0.2, true),
    ("income", 0.0, 0.2, true),
    ("hs_attendance", 0.0, 0.1, false),
    ("family_composition", 0.0, 0.0, false),
];

/// Per-group (behavioral shift on academic features, label offset, MAR multiplier).
fn els_group_params(group: &str) -> (f64, f64, f64) {
    match group {
        "Asian" => (0.05, 1.4, 1.0),
        "Black" => (-0.4, 0.2, 1.8),
        "Hispanic" => (-0.3, 0.4, 1.6),
        "MR" => (-0.1, 0.9, 1.2),
        _ => (0.0, 1.4, 0.85),
    }
}

/// Names of the bundled presets.
pub const PRESETS: [&str; 1] = ["els-like"];

/// ELS-shaped preset: published group shares (normalized), missing rates
/// drawn from the published variable table, group-dependent missingness,
/// and academic features shifted down for the Black and Hispanic groups.
pub fn els_like(n_rows: usize, seed: u64) -> SynthConfig {
    let total: f64 = ELS_GROUP_COUNTS.iter().map(|(_, c)| c).sum();
    let group_shares: IndexMap<String, f64> = ELS_GROUP_COUNTS
        .iter()
        .map(|(g, c)| (g.to_string(), c / total))
        .collect();
    let p = ELS_FEATURES.len();
    let mut group_mean_shift = IndexMap::new();
    let mut label_group_offset = IndexMap::new();
    let mut mar_rate_multiplier = IndexMap::new();
    for (g, _) in ELS_GROUP_COUNTS {
        let (shift, offset, mult) = els_group_params(g);
        let shifts = ELS_FEATURES
            .iter()
            .map(|&(_, _, _, academic)| if academic { shift } else { 0.0 })
            .collect();
        group_mean_shift.insert(g.to_string(), shifts);
        label_group_offset.insert(g.to_string(), offset);
        mar_rate_multiplier.insert(g.to_string(), mult);
    }
    SynthConfig {
        n_rows,
        group_shares,
        n_features: p,
        feature_names: ELS_FEATURES.iter().map(|f| f.0.to_string()).collect(),
        group_mean_shift,
        noise_std: vec![1.0; p],
        label_coefficients: ELS_FEATURES.iter().map(|f| f.2).collect(),
        label_group_offset,
        missing_rates: ELS_FEATURES.iter().map(|f| f.1).collect(),
        missing_mechanism: MissingMechanism::MarOnGroup,
        mar_rate_multiplier,
        seed,
    }
}

pub fn preset(name: &str, n_rows: usize, seed: u64) -> Result<SynthConfig> {
    match name {
        "els-like" => Ok(els_like(n_rows, seed)),
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

/// Generates a dataset and applies the configured missingness.
pub fn generate_with_missing(cfg: &SynthConfig) -> Result<Dataset> {
    let ds = generate(cfg)?;
    inject_missing(&ds, cfg)
}
