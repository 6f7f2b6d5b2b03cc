//! Dataset representation and CSV ingestion.
//!
//! A [`Dataset`] stores feature columns column-major with an explicit
//! missingness mask. Categorical columns are expanded into one dummy
//! indicator per category at ingest; the sensitive column additionally
//! populates the per-row group vector, and the response column is binarized
//! through its favorable values.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Sensitive,
    Response,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
    #[serde(default)]
    pub missing_codes: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub favorable_values: Vec<String>,
}

impl ColumnSchema {
    fn is_missing(&self, token: &str) -> bool {
        self.missing_codes.iter().any(|c| c == token)
    }
}

/// Checks the cross-column schema invariants.
pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut names = HashSet::new();
    for col in schema {
        if col.name.is_empty() {
            return Err(Error::Schema("column with empty name".into()));
        }
        if !names.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
        }
        let is_cat = col.kind == ColumnKind::Categorical;
        if is_cat == col.categories.is_empty() {
            return Err(Error::Schema(format!(
                "column `{}`: categories must be given iff kind is categorical",
                col.name
            )));
        }
        let is_resp = col.role == ColumnRole::Response;
        if is_resp == col.favorable_values.is_empty() {
            return Err(Error::Schema(format!(
                "column `{}`: favorable_values must be given iff role is response",
                col.name
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = col.categories.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Schema(format!(
                "column `{}`: duplicate category `{dup}`",
                col.name
            )));
        }
        if col.role == ColumnRole::Sensitive && !is_cat {
            return Err(Error::Schema(format!(
                "sensitive column `{}` must be categorical so its groups are named",
                col.name
            )));
        }
    }
    for role in [ColumnRole::Response, ColumnRole::Sensitive] {
        let n = schema.iter().filter(|c| c.role == role).count();
        if n != 1 {
            return Err(Error::Schema(format!(
                "exactly one {role:?} column required, found {n}"
            )));
        }
    }
    Ok(())
}

pub fn read_schema(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: Vec<ColumnSchema> = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    validate_schema(&schema)?;
    Ok(schema)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Binary,
    /// Indicator of one category of a non-sensitive categorical column.
    Dummy { category: String },
    /// Indicator of one group of the sensitive column.
    SensitiveDummy { group: usize },
}

impl FeatureKind {
    /// Columns whose values live in {0, 1}.
    pub fn is_indicator(&self) -> bool {
        !matches!(self, FeatureKind::Numeric)
    }

    pub fn is_sensitive(&self) -> bool {
        matches!(self, FeatureKind::SensitiveDummy { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
    /// Name of the raw attribute this column was derived from.
    pub source: String,
}

/// Column-major table with per-cell missingness, groups and binary labels.
///
/// Masked cells store `0.0`; no operation reads that payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub(crate) features: Vec<FeatureColumn>,
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) mask: Vec<Vec<bool>>,
    pub(crate) group_names: Vec<String>,
    pub(crate) groups: Vec<usize>,
    pub(crate) labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        features: Vec<FeatureColumn>,
        values: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
        group_names: Vec<String>,
        groups: Vec<usize>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let n = groups.len();
        if features.len() != values.len() || features.len() != mask.len() {
            return Err(Error::InvalidInput(
                "feature metadata, values and mask disagree on column count".into(),
            ));
        }
        if labels.len() != n {
            return Err(Error::InvalidInput("labels and groups differ in length".into()));
        }
        if values.iter().any(|c| c.len() != n) || mask.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("column length differs from row count".into()));
        }
        if group_names.is_empty() {
            return Err(Error::InvalidInput("at least one group name required".into()));
        }
        if groups.iter().any(|&g| g >= group_names.len()) {
            return Err(Error::InvalidInput("group index out of range".into()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        let mut ds = Dataset {
            features,
            values,
            mask,
            group_names,
            groups,
            labels,
        };
        ds.zero_masked_payload();
        Ok(ds)
    }

    fn zero_masked_payload(&mut self) {
        for (col, m) in self.values.iter_mut().zip(&self.mask) {
            for (v, &missing) in col.iter_mut().zip(m) {
                if missing {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        self.groups.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn features(&self) -> &[FeatureColumn] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn column_mask(&self, j: usize) -> &[bool] {
        &self.mask[j]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[col][row]
    }

    /// Cell value, `None` when masked.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        (!self.mask[col][row]).then(|| self.values[col][row])
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }

    pub fn row_has_missing(&self, row: usize) -> bool {
        self.mask.iter().any(|m| m[row])
    }

    pub fn is_complete(&self) -> bool {
        self.n_missing() == 0
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |col: &Vec<f64>| rows.iter().map(|&r| col[r]).collect::<Vec<_>>();
        Dataset {
            features: self.features.clone(),
            values: self.values.iter().map(pick).collect(),
            mask: self
                .mask
                .iter()
                .map(|m| rows.iter().map(|&r| m[r]).collect())
                .collect(),
            group_names: self.group_names.clone(),
            groups: rows.iter().map(|&r| self.groups[r]).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Writes an observed value into a cell and clears its mask bit.
    pub(crate) fn fill(&mut self, row: usize, col: usize, value: f64) {
        self.values[col][row] = value;
        self.mask[col][row] = false;
    }

    /// Indices of the distinct non-sensitive attributes, as groups of column indices.
    pub(crate) fn attribute_blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks: Vec<(String, Vec<usize>)> = Vec::new();
        for (j, f) in self.features.iter().enumerate() {
            if f.kind.is_sensitive() {
                continue;
            }
            match blocks.iter_mut().find(|(s, _)| *s == f.source) {
                Some((_, cols)) => cols.push(j),
                None => blocks.push((f.source.clone(), vec![j])),
            }
        }
        blocks.into_iter().map(|(_, cols)| cols).collect()
    }

    /// Fraction of non-sensitive attributes missing in each row. A dummy-expanded
    /// attribute counts once and is missing when its indicators are masked.
    pub fn row_missing_fractions(&self) -> Vec<f64> {
        let blocks = self.attribute_blocks();
        if blocks.is_empty() {
            return vec![0.0; self.n_rows()];
        }
        (0..self.n_rows())
            .map(|r| {
                let missing = blocks
                    .iter()
                    .filter(|cols| cols.iter().any(|&j| self.mask[j][r]))
                    .count();
                missing as f64 / blocks.len() as f64
            })
            .collect()
    }

    /// Per-column (mean, population std) over observed values.
    pub fn column_moments(&self) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.mask)
            .map(|(col, m)| {
                let obs: Vec<f64> = col
                    .iter()
                    .zip(m)
                    .filter(|(_, &miss)| !miss)
                    .map(|(&v, _)| v)
                    .collect();
                if obs.is_empty() {
                    return (0.0, 0.0);
                }
                let n = obs.len() as f64;
                let mean = obs.iter().sum::<f64>() / n;
                let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .collect()
    }

    /// Row-major feature matrix; fails if any used cell is masked.
    pub fn to_matrix(&self, include_sensitive: bool) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<usize> = (0..self.n_features())
            .filter(|&j| include_sensitive || !self.features[j].kind.is_sensitive())
            .collect();
        if let Some(&j) = cols.iter().find(|&&j| self.mask[j].iter().any(|&m| m)) {
            return Err(Error::InvalidInput(format!(
                "feature `{}` has masked cells; impute or remove them before training",
                self.features[j].name
            )));
        }
        Ok((0..self.n_rows())
            .map(|r| cols.iter().map(|&j| self.values[j][r]).collect())
            .collect())
    }
}

/// Counts reported by [`load_csv`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped_missing_sensitive: usize,
    pub dropped_missing_response: usize,
}

impl IngestReport {
    pub fn rows_dropped(&self) -> usize {
        self.dropped_missing_sensitive + self.dropped_missing_response
    }
}

enum ColumnPlan {
    Numeric { out: usize, binary: bool },
    Categorical { first_out: usize },
    Sensitive { first_out: usize },
    Response,
    Drop,
}

/// Loads a CSV file under `schema`.
pub fn load_csv(path: &Path, schema: &[ColumnSchema]) -> Result<(Dataset, IngestReport)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

/// Same as [`load_csv`], reading from any source.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &[ColumnSchema]) -> Result<(Dataset, IngestReport)> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::csv("<input>", e))?
        .clone();

    let mut header_pos = Vec::with_capacity(schema.len());
    for col in schema {
        let pos = headers.iter().position(|h| h == col.name).ok_or_else(|| {
            Error::Schema(format!("schema column `{}` not present in CSV header", col.name))
        })?;
        header_pos.push(pos);
    }
    if let Some(extra) = headers.iter().find(|h| !schema.iter().any(|c| c.name == *h)) {
        return Err(Error::Schema(format!("CSV column `{extra}` not declared in schema")));
    }
    if headers.len() != schema.len() {
        return Err(Error::Schema("CSV header contains duplicate column names".into()));
    }

    let sensitive = schema
        .iter()
        .find(|c| c.role == ColumnRole::Sensitive)
        .expect("validated");
    let group_names = sensitive.categories.clone();

    let mut features = Vec::new();
    let mut plans = Vec::with_capacity(schema.len());
    for col in schema {
        let plan = match (col.role, col.kind) {
            (ColumnRole::Drop, _) => ColumnPlan::Drop,
            (ColumnRole::Response, _) => ColumnPlan::Response,
            (ColumnRole::Sensitive, _) => {
                let first_out = features.len();
                for (g, cat) in col.categories.iter().enumerate() {
                    features.push(FeatureColumn {
                        name: format!("{}={}", col.name, cat),
                        kind: FeatureKind::SensitiveDummy { group: g },
                        source: col.name.clone(),
                    });
                }
                ColumnPlan::Sensitive { first_out }
            }
            (ColumnRole::Feature, ColumnKind::Categorical) => {
                let first_out = features.len();
                for cat in &col.categories {
                    features.push(FeatureColumn {
                        name: format!("{}={}", col.name, cat),
                        kind: FeatureKind::Dummy {
                            category: cat.clone(),
                        },
                        source: col.name.clone(),
                    });
                }
                ColumnPlan::Categorical { first_out }
            }
            (ColumnRole::Feature, kind) => {
                let out = features.len();
                let binary = kind == ColumnKind::Binary;
                features.push(FeatureColumn {
                    name: col.name.clone(),
                    kind: if binary {
                        FeatureKind::Binary
                    } else {
                        FeatureKind::Numeric
                    },
                    source: col.name.clone(),
                });
                ColumnPlan::Numeric { out, binary }
            }
        };
        plans.push(plan);
    }

    let p = features.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut mask: Vec<Vec<bool>> = vec![Vec::new(); p];
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    let mut report = IngestReport::default();

    let mut row_vals = vec![0.0; p];
    let mut row_mask = vec![false; p];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv("<input>", e))?;
        let row = i + 1;
        report.rows_read += 1;
        row_vals.iter_mut().for_each(|v| *v = 0.0);
        row_mask.iter_mut().for_each(|m| *m = false);
        let mut group = None;
        let mut label = None;
        let mut drop_sensitive = false;
        let mut drop_response = false;

        for ((col, plan), &pos) in schema.iter().zip(&plans).zip(&header_pos) {
            let token = rec.get(pos).unwrap_or("").trim();
            let parse_err = |message: String| Error::Parse {
                row,
                column: col.name.clone(),
                message,
            };
            let missing = col.is_missing(token);
            match plan {
                ColumnPlan::Drop => {}
                ColumnPlan::Response => {
                    if missing {
                        drop_response = true;
                    } else {
                        if col.kind == ColumnKind::Categorical
                            && !col.categories.iter().any(|c| c == token)
                        {
                            return Err(parse_err(format!("unknown category `{token}`")));
                        }
                        label = Some(u8::from(col.favorable_values.iter().any(|f| f == token)));
                    }
                }
                ColumnPlan::Sensitive { first_out } => {
                    if missing {
                        drop_sensitive = true;
                    } else {
                        let g = col
                            .categories
                            .iter()
                            .position(|c| c == token)
                            .ok_or_else(|| parse_err(format!("unknown group `{token}`")))?;
                        for k in 0..col.categories.len() {
                            row_vals[first_out + k] = if k == g { 1.0 } else { 0.0 };
                        }
                        group = Some(g);
                    }
                }
                ColumnPlan::Categorical { first_out } => {
                    let k_total = col.categories.len();
                    if missing {
                        for k in 0..k_total {
                            row_mask[first_out + k] = true;
                        }
                    } else {
                        let c = col
                            .categories
                            .iter()
                            .position(|c| c == token)
                            .ok_or_else(|| parse_err(format!("unknown category `{token}`")))?;
                        for k in 0..k_total {
                            row_vals[first_out + k] = if k == c { 1.0 } else { 0.0 };
                        }
                    }
                }
                ColumnPlan::Numeric { out, binary } => {
                    if missing {
                        row_mask[*out] = true;
                    } else {
                        let v: f64 = token.parse().map_err(|_| {
                            parse_err(format!("`{token}` is neither a number nor a declared missing code"))
                        })?;
                        if !v.is_finite() {
                            return Err(parse_err(format!("non-finite value `{token}`")));
                        }
                        if *binary && v != 0.0 && v != 1.0 {
                            return Err(parse_err(format!("binary column holds `{token}`")));
                        }
                        row_vals[*out] = v;
                    }
                }
            }
        }

        if drop_sensitive {
            report.dropped_missing_sensitive += 1;
            continue;
        }
        if drop_response {
            report.dropped_missing_response += 1;
            continue;
        }
        groups.push(group.expect("sensitive column parsed"));
        labels.push(label.expect("response column parsed"));
        for j in 0..p {
            values[j].push(row_vals[j]);
            mask[j].push(row_mask[j]);
        }
    }

    if groups.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no rows survived ingestion ({} read)",
            report.rows_read
        )));
    }
    let ds = Dataset::new(features, values, mask, group_names, groups, labels)?;
    Ok((ds, report))
}

/// Drops rows whose missing-attribute fraction is strictly above `threshold`.
pub fn drop_sparse_rows(ds: &Dataset, threshold: f64) -> Result<(Dataset, usize)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "sparse-row threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let keep: Vec<usize> = ds
        .row_missing_fractions()
        .iter()
        .enumerate()
        .filter(|(_, &f)| f <= threshold)
        .map(|(r, _)| r)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "every row exceeds the {threshold} missing-attribute threshold"
        )));
    }
    let dropped = ds.n_rows() - keep.len();
    Ok((ds.select_rows(&keep), dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingProfile {
    /// (column name, fraction of masked cells)
    pub columns: Vec<(String, f64)>,
    pub rows: Vec<f64>,
}

pub fn missing_profile(ds: &Dataset) -> MissingProfile {
    let n = ds.n_rows();
    let columns = ds
        .features
        .iter()
        .zip(&ds.mask)
        .map(|(f, m)| {
            let masked = m.iter().filter(|&&x| x).count();
            let frac = if n == 0 { 0.0 } else { masked as f64 / n as f64 };
            (f.name.clone(), frac)
        })
        .collect();
    MissingProfile {
        columns,
        rows: ds.row_missing_fractions(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCount {
    pub group: String,
    pub count: usize,
    pub share: f64,
}

/// Group sizes and shares, in schema order.
pub fn group_counts(ds: &Dataset) -> Vec<GroupCount> {
    let mut counts = vec![0usize; ds.n_groups()];
    for &g in &ds.groups {
        counts[g] += 1;
    }
    let n = ds.n_rows();
    ds.group_names
        .iter()
        .zip(counts)
        .map(|(name, count)| GroupCount {
            group: name.clone(),
            count,
            share: if n == 0 { 0.0 } else { count as f64 / n as f64 },
        })
        .collect()
}
