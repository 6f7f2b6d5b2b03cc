//! Imputation strategies with a fit-on-train / transform-anywhere contract.
//!
//! * Simple: per-column mean or median of the observed training values.
//! * KNN: mean of the target column over the k nearest training rows under a
//!   masked-aware Euclidean distance.
//! * Multiple: chained equations with ridge-regularized linear models; `m`
//!   stochastic completions are pooled by per-cell averaging.
//!
//! Indicator columns (binary, dummies) are clamped to [0, 1] and thresholded
//! at 0.5 after filling.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureColumn};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed_indexed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    #[default]
    Mean,
    Median,
}

fn default_k() -> usize {
    5
}
fn default_m() -> usize {
    5
}
fn default_iters() -> usize {
    10
}
fn default_ridge() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ImputerSpec {
    Simple {
        #[serde(default)]
        statistic: Statistic,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    Multiple {
        #[serde(default = "default_m")]
        m: usize,
        #[serde(default = "default_iters")]
        iters: usize,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
}

impl ImputerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ImputerSpec::Simple { .. } => Ok(()),
            ImputerSpec::Knn { k } if k == 0 => Err(Error::Config("KNN imputer needs k >= 1".into())),
            ImputerSpec::Knn { .. } => Ok(()),
            ImputerSpec::Multiple { m, iters, ridge } => {
                if m < 2 {
                    return Err(Error::Config("multiple imputation needs m >= 2".into()));
                }
                if iters == 0 {
                    return Err(Error::Config("multiple imputation needs iters >= 1".into()));
                }
                if !(ridge >= 0.0 && ridge.is_finite()) {
                    return Err(Error::Config("ridge must be finite and nonnegative".into()));
                }
                Ok(())
            }
        }
    }

    /// Short identifier used in audit records.
    pub fn label(&self) -> String {
        match self {
            ImputerSpec::Simple { statistic: Statistic::Mean } => "SI-mean".into(),
            ImputerSpec::Simple { statistic: Statistic::Median } => "SI-median".into(),
            ImputerSpec::Knn { k } => format!("KNN-k{k}"),
            ImputerSpec::Multiple { m, .. } => format!("MI-m{m}"),
        }
    }
}

/// Linear model predicting one column from all the others.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnModel {
    pub intercept: f64,
    /// One coefficient per column; the target's own entry is zero.
    pub coefs: Vec<f64>,
    pub resid_std: f64,
}

impl ColumnModel {
    fn predict(&self, x: &[Vec<f64>], row: usize) -> f64 {
        self.intercept
            + self
                .coefs
                .iter()
                .zip(x)
                .map(|(c, col)| c * col[row])
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum State {
    Simple {
        stats: Vec<f64>,
    },
    Knn {
        k: usize,
        values: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
        means: Vec<f64>,
    },
    Multiple {
        m: usize,
        iters: usize,
        init_means: Vec<f64>,
        models: Vec<ColumnModel>,
    },
}

/// Imputation state learned from training rows only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedImputer {
    columns: Vec<FeatureColumn>,
    state: State,
}

/// Diagnostics from one transform.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TransformReport {
    pub cells_filled: usize,
    /// KNN cells with no comparable neighbor, filled with the training mean.
    pub knn_fallbacks: usize,
    /// KNN cells that had fewer than k candidate neighbors.
    pub knn_short_neighborhoods: usize,
    /// Chained-equation sweeps run per completed copy.
    pub sweeps: usize,
}

fn observed(ds: &Dataset, j: usize) -> Vec<f64> {
    ds.column(j)
        .iter()
        .zip(ds.column_mask(j))
        .filter(|(_, &m)| !m)
        .map(|(&v, _)| v)
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ridge regression of `target` on every other column over `rows`;
/// predictors and target are centered so the intercept is unpenalized.
fn fit_column_model(x: &[Vec<f64>], target: usize, rows: &[usize], ridge: f64) -> ColumnModel {
    let p = x.len();
    let preds: Vec<usize> = (0..p).filter(|&c| c != target).collect();
    let q = preds.len();
    let n = rows.len() as f64;
    let y_mean = rows.iter().map(|&r| x[target][r]).sum::<f64>() / n;
    let x_means: Vec<f64> = preds
        .iter()
        .map(|&c| rows.iter().map(|&r| x[c][r]).sum::<f64>() / n)
        .collect();

    let mut coefs = vec![0.0; p];
    if q > 0 {
        let centered: Vec<Vec<f64>> = preds
            .iter()
            .zip(&x_means)
            .map(|(&c, &mu)| rows.iter().map(|&r| x[c][r] - mu).collect())
            .collect();
        let yc: Vec<f64> = rows.iter().map(|&r| x[target][r] - y_mean).collect();
        let mut gram = DMatrix::<f64>::zeros(q, q);
        let mut rhs = DVector::<f64>::zeros(q);
        for a in 0..q {
            rhs[a] = centered[a].iter().zip(&yc).map(|(u, v)| u * v).sum();
            for b in a..q {
                let s: f64 = centered[a].iter().zip(&centered[b]).map(|(u, v)| u * v).sum();
                gram[(a, b)] = s;
                gram[(b, a)] = s;
            }
            // a tiny floor keeps the system solvable when ridge = 0 and columns are collinear
            gram[(a, a)] += ridge.max(1e-12);
        }
        let beta = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(q)),
        };
        for (i, &c) in preds.iter().enumerate() {
            coefs[c] = beta[i];
        }
    }
    let intercept = y_mean - preds.iter().zip(&x_means).map(|(&c, mu)| coefs[c] * mu).sum::<f64>();
    let mut model = ColumnModel {
        intercept,
        coefs,
        resid_std: 0.0,
    };
    let ssr: f64 = rows
        .iter()
        .map(|&r| (x[target][r] - model.predict(x, r)).powi(2))
        .sum();
    let dof = (rows.len() as f64 - (q as f64 + 1.0)).max(1.0);
    model.resid_std = (ssr / dof).sqrt();
    model
}

fn standard_normal(seed: u64) -> f64 {
    StandardNormal.sample(&mut rng(seed))
}

fn fill_with(ds: &Dataset, fills: &[f64]) -> Vec<Vec<f64>> {
    (0..ds.n_features())
        .map(|j| {
            ds.column(j)
                .iter()
                .zip(ds.column_mask(j))
                .map(|(&v, &m)| if m { fills[j] } else { v })
                .collect()
        })
        .collect()
}

fn missing_rows(ds: &Dataset, j: usize) -> Vec<usize> {
    ds.column_mask(j)
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(r, _)| r)
        .collect()
}

impl FittedImputer {
    /// Learns imputation state from `train`. The seed drives the stochastic
    /// refills of the chained-equation sweeps (Multiple only).
    pub fn fit(spec: &ImputerSpec, train: &Dataset, seed: u64) -> Result<Self> {
        spec.validate()?;
        if train.n_rows() == 0 {
            return Err(Error::EmptyDataset("cannot fit an imputer on zero rows".into()));
        }
        let p = train.n_features();
        let observed_cols: Vec<Vec<f64>> = (0..p).map(|j| observed(train, j)).collect();
        if let Some(j) = observed_cols.iter().position(|o| o.is_empty()) {
            return Err(Error::UnfittableColumn(train.features()[j].name.clone()));
        }
        let means: Vec<f64> = observed_cols.iter().map(|o| mean(o)).collect();

        let state = match *spec {
            ImputerSpec::Simple { statistic } => State::Simple {
                stats: match statistic {
                    Statistic::Mean => means,
                    Statistic::Median => observed_cols.iter().map(|o| median(o)).collect(),
                },
            },
            ImputerSpec::Knn { k } => State::Knn {
                k,
                values: (0..p).map(|j| train.column(j).to_vec()).collect(),
                mask: (0..p).map(|j| train.column_mask(j).to_vec()).collect(),
                means,
            },
            ImputerSpec::Multiple { m, iters, ridge } => {
                let mut x = fill_with(train, &means);
                let incomplete: Vec<(usize, Vec<usize>)> = (0..p)
                    .map(|j| (j, missing_rows(train, j)))
                    .filter(|(_, rows)| !rows.is_empty())
                    .collect();
                let observed_rows: Vec<Vec<usize>> = (0..p)
                    .map(|j| {
                        train
                            .column_mask(j)
                            .iter()
                            .enumerate()
                            .filter(|(_, &m)| !m)
                            .map(|(r, _)| r)
                            .collect()
                    })
                    .collect();
                for sweep in 0..iters {
                    for (j, miss) in &incomplete {
                        let model = fit_column_model(&x, *j, &observed_rows[*j], ridge);
                        for &r in miss {
                            let z = standard_normal(derive_seed_indexed(
                                seed,
                                &[sweep as u64, r as u64, *j as u64],
                            ));
                            x[*j][r] = model.predict(&x, r) + model.resid_std * z;
                        }
                    }
                }
                let models = (0..p)
                    .map(|j| fit_column_model(&x, j, &observed_rows[j], ridge))
                    .collect();
                State::Multiple {
                    m,
                    iters,
                    init_means: means,
                    models,
                }
            }
        };
        Ok(FittedImputer {
            columns: train.features().to_vec(),
            state,
        })
    }

    /// Per-column statistic of a Simple imputer.
    pub fn simple_statistics(&self) -> Option<&[f64]> {
        match &self.state {
            State::Simple { stats } => Some(stats),
            _ => None,
        }
    }

    /// Frozen per-column models of a Multiple imputer.
    pub fn column_models(&self) -> Option<&[ColumnModel]> {
        match &self.state {
            State::Multiple { models, .. } => Some(models),
            _ => None,
        }
    }

    /// Fills every masked feature cell of `ds`; observed cells pass through.
    pub fn transform(&self, ds: &Dataset, seed: u64) -> Result<(Dataset, TransformReport)> {
        if ds.features() != self.columns.as_slice() {
            return Err(Error::InvalidInput(
                "dataset columns differ from the columns the imputer was fitted on".into(),
            ));
        }
        let p = ds.n_features();
        let missing: Vec<Vec<usize>> = (0..p).map(|j| missing_rows(ds, j)).collect();
        let mut report = TransformReport {
            cells_filled: missing.iter().map(Vec::len).sum(),
            ..Default::default()
        };
        let mut out = ds.clone();

        match &self.state {
            State::Simple { stats } => {
                for (j, rows) in missing.iter().enumerate() {
                    for &r in rows {
                        out.fill(r, j, stats[j]);
                    }
                }
            }
            State::Knn {
                k,
                values,
                mask,
                means,
            } => {
                let n_train = values.first().map_or(0, Vec::len);
                let mut dists: Vec<Option<f64>> = vec![None; n_train];
                for r in 0..ds.n_rows() {
                    let targets: Vec<usize> = (0..p).filter(|&j| ds.is_missing(r, j)).collect();
                    if targets.is_empty() {
                        continue;
                    }
                    for (t, d) in dists.iter_mut().enumerate() {
                        let mut common = 0usize;
                        let mut sum = 0.0;
                        for j in 0..p {
                            if !ds.is_missing(r, j) && !mask[j][t] {
                                common += 1;
                                let diff = ds.column(j)[r] - values[j][t];
                                sum += diff * diff;
                            }
                        }
                        *d = (common > 0).then(|| sum * p as f64 / common as f64);
                    }
                    for j in targets {
                        let mut cands: Vec<(f64, usize)> = dists
                            .iter()
                            .enumerate()
                            .filter(|(t, _)| !mask[j][*t])
                            .filter_map(|(t, d)| d.map(|d| (d, t)))
                            .collect();
                        let value = if cands.is_empty() {
                            report.knn_fallbacks += 1;
                            means[j]
                        } else {
                            if cands.len() < *k {
                                report.knn_short_neighborhoods += 1;
                            }
                            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                            let take = cands.len().min(*k);
                            cands[..take].iter().map(|&(_, t)| values[j][t]).sum::<f64>()
                                / take as f64
                        };
                        out.fill(r, j, value);
                    }
                }
            }
            State::Multiple {
                m,
                iters,
                init_means,
                models,
            } => {
                report.sweeps = *iters;
                let incomplete: Vec<usize> = (0..p).filter(|&j| !missing[j].is_empty()).collect();
                let mut pooled: Vec<Vec<f64>> = missing.iter().map(|rows| vec![0.0; rows.len()]).collect();
                for copy in 0..*m {
                    let mut x = fill_with(ds, init_means);
                    for sweep in 0..*iters {
                        for &j in &incomplete {
                            let model = &models[j];
                            for &r in &missing[j] {
                                let z = standard_normal(derive_seed_indexed(
                                    seed,
                                    &[copy as u64, sweep as u64, r as u64, j as u64],
                                ));
                                x[j][r] = model.predict(&x, r) + model.resid_std * z;
                            }
                        }
                    }
                    for &j in &incomplete {
                        for (acc, &r) in pooled[j].iter_mut().zip(&missing[j]) {
                            *acc += x[j][r];
                        }
                    }
                }
                for &j in &incomplete {
                    for (acc, &r) in pooled[j].iter().zip(&missing[j]) {
                        out.fill(r, j, acc / *m as f64);
                    }
                }
            }
        }

        for (j, rows) in missing.iter().enumerate() {
            if !self.columns[j].kind.is_indicator() {
                continue;
            }
            for &r in rows {
                let v = out.column(j)[r].clamp(0.0, 1.0);
                out.fill(r, j, if v >= 0.5 { 1.0 } else { 0.0 });
            }
        }
        Ok((out, report))
    }
}

/// Drops every row with at least one masked feature cell.
pub fn remove_na(ds: &Dataset) -> Result<Dataset> {
    let keep: Vec<usize> = (0..ds.n_rows()).filter(|&r| !ds.row_has_missing(r)).collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset("every row has a missing feature".into()));
    }
    Ok(ds.select_rows(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureKind;

    pub(crate) fn numeric(cols: &[&[Option<f64>]]) -> Dataset {
        let n = cols[0].len();
        let features = (0..cols.len())
            .map(|j| FeatureColumn {
                name: format!("c{j}"),
                kind: FeatureKind::Numeric,
                source: format!("c{j}"),
            })
            .collect();
        let values = cols
            .iter()
            .map(|c| c.iter().map(|v| v.unwrap_or(0.0)).collect())
            .collect();
        let mask = cols.iter().map(|c| c.iter().map(Option::is_none).collect()).collect();
        Dataset::new(features, values, mask, vec!["A".into(), "B".into()], vec![0; n], vec![0; n])
            .unwrap()
    }

    #[test]
    fn simple_statistics() {
        let ds = numeric(&[&[Some(1.0), Some(2.0), Some(3.0), None]]);
        let f = FittedImputer::fit(&ImputerSpec::Simple { statistic: Statistic::Mean }, &ds, 0).unwrap();
        assert_eq!(f.simple_statistics().unwrap(), &[2.0]);
        let (out, rep) = f.transform(&ds, 0).unwrap();
        assert_eq!(out.get(3, 0), Some(2.0));
        assert_eq!(rep.cells_filled, 1);

        let ds = numeric(&[&[Some(1.0), Some(2.0), Some(100.0), None]]);
        let f = FittedImputer::fit(&ImputerSpec::Simple { statistic: Statistic::Median }, &ds, 0).unwrap();
        assert_eq!(f.simple_statistics().unwrap(), &[2.0]);
    }

    #[test]
    fn simple_fixed_point() {
        let ds = numeric(&[
            &[Some(1.0), None, Some(4.0), Some(7.0)],
            &[None, Some(2.0), Some(2.5), None],
        ]);
        let spec = ImputerSpec::Simple { statistic: Statistic::Mean };
        let f = FittedImputer::fit(&spec, &ds, 0).unwrap();
        let (filled, _) = f.transform(&ds, 0).unwrap();
        let refit = FittedImputer::fit(&spec, &filled, 0).unwrap();
        for (a, b) in refit.simple_statistics().unwrap().iter().zip(f.simple_statistics().unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_picks_nearest_training_row() {
        let train = numeric(&[&[Some(0.0), Some(10.0)], &[Some(10.0), Some(20.0)]]);
        let f = FittedImputer::fit(&ImputerSpec::Knn { k: 1 }, &train, 0).unwrap();
        let query = numeric(&[&[Some(1.0)], &[None]]);
        let (out, _) = f.transform(&query, 0).unwrap();
        assert_eq!(out.get(0, 1), Some(10.0));
    }

    #[test]
    fn knn_falls_back_without_common_coordinates() {
        let train = numeric(&[&[Some(0.0), None], &[None, Some(4.0)]]);
        let f = FittedImputer::fit(&ImputerSpec::Knn { k: 2 }, &train, 0).unwrap();
        // column 0 observed only in row 0, which shares no coordinate with the query
        let query = numeric(&[&[None], &[Some(1.0)]]);
        let (out, rep) = f.transform(&query, 0).unwrap();
        assert_eq!(out.get(0, 0), Some(0.0));
        assert_eq!(rep.knn_fallbacks, 1);
    }

    #[test]
    fn unfittable_and_incompatible() {
        let ds = numeric(&[&[Some(1.0), Some(2.0)], &[None, None]]);
        let err = FittedImputer::fit(&ImputerSpec::Simple { statistic: Statistic::Mean }, &ds, 0);
        assert!(matches!(err, Err(Error::UnfittableColumn(c)) if c == "c1"));

        let train = numeric(&[&[Some(1.0), Some(2.0)]]);
        let f = FittedImputer::fit(&ImputerSpec::Knn { k: 1 }, &train, 0).unwrap();
        let other = numeric(&[&[Some(1.0)], &[Some(2.0)]]);
        assert!(f.transform(&other, 0).is_err());
    }

    #[test]
    fn multiple_recovers_exact_slope_and_prediction() {
        let col1: Vec<Option<f64>> = (0..30).map(|i| Some(i as f64 * 0.5 - 3.0)).collect();
        let col2: Vec<Option<f64>> = (0..30)
            .map(|i| (i % 4 != 0).then(|| 2.0 * (i as f64 * 0.5 - 3.0)))
            .collect();
        let train = numeric(&[&col1, &col2]);
        let spec = ImputerSpec::Multiple { m: 5, iters: 5, ridge: 1e-6 };
        let f = FittedImputer::fit(&spec, &train, 17).unwrap();
        let model = &f.column_models().unwrap()[1];
        assert!((model.coefs[0] - 2.0).abs() < 1e-3, "slope {}", model.coefs[0]);

        let query = numeric(&[&[Some(3.0)], &[None]]);
        let (out, rep) = f.transform(&query, 3).unwrap();
        let bound = 3.0 * model.resid_std / 5f64.sqrt() + 1e-6;
        assert!((out.get(0, 1).unwrap() - 6.0).abs() <= bound);
        assert_eq!(rep.sweeps, 5);
    }

    #[test]
    fn indicators_thresholded_after_fill() {
        let mut ds = numeric(&[&[Some(1.0), Some(1.0), Some(0.0), None]]);
        ds.features[0].kind = FeatureKind::Binary;
        let f = FittedImputer::fit(&ImputerSpec::Simple { statistic: Statistic::Mean }, &ds, 0).unwrap();
        let (out, _) = f.transform(&ds, 0).unwrap();
        // mean 2/3 thresholds to 1
        assert_eq!(out.get(3, 0), Some(1.0));
    }

    #[test]
    fn remove_na_counts() {
        let ds = numeric(&[
            &[Some(1.0), None, Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0)],
            &[Some(1.0), Some(1.0), None, None, Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0)],
        ]);
        assert_eq!(remove_na(&ds).unwrap().n_rows(), 7);
        let clean = numeric(&[&[Some(1.0), Some(2.0)]]);
        assert_eq!(remove_na(&clean).unwrap(), clean);
        assert!(remove_na(&numeric(&[&[None]])).is_err());
    }

    #[test]
    fn spec_validation_and_labels() {
        assert!(ImputerSpec::Knn { k: 0 }.validate().is_err());
        assert!(ImputerSpec::Multiple { m: 1, iters: 1, ridge: 0.0 }.validate().is_err());
        let parsed: ImputerSpec = serde_json::from_str(r#"{"kind":"multiple"}"#).unwrap();
        assert_eq!(parsed, ImputerSpec::Multiple { m: 5, iters: 10, ridge: 1e-3 });
        assert_eq!(parsed.label(), "MI-m5");
        let parsed: ImputerSpec = serde_json::from_str(r#"{"kind":"knn"}"#).unwrap();
        assert_eq!(parsed.label(), "KNN-k5");
    }
}
