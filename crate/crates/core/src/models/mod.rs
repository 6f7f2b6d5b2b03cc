//! Binary classifiers trained from scratch with deterministic procedures.

mod forest;
mod logistic;
mod svc;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::RandomForest;
pub use logistic::{logistic_objective, LogisticRegression};
pub use svc::LinearSvc;
pub use tree::{DecisionTree, Node, Split};

fn default_log_rate() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    300
}
fn default_l2() -> f64 {
    1e-4
}
fn default_depth() -> usize {
    8
}
fn default_min_leaf() -> usize {
    5
}
fn default_trees() -> usize {
    100
}
fn default_true() -> bool {
    true
}
fn default_c() -> f64 {
    1.0
}
fn default_svc_rate() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ModelKind {
    #[serde(rename = "Log", alias = "log")]
    Log {
        #[serde(default = "default_log_rate")]
        learning_rate: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_l2")]
        l2: f64,
    },
    #[serde(rename = "DT", alias = "dt")]
    Dt {
        #[serde(default = "default_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_samples_leaf: usize,
    },
    #[serde(rename = "RF", alias = "rf")]
    Rf {
        #[serde(default = "default_trees")]
        n_trees: usize,
        #[serde(default = "default_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_samples_leaf: usize,
        /// Features tried per split; defaults to floor(sqrt(p)).
        #[serde(default)]
        feature_subsample: Option<usize>,
        #[serde(default = "default_true")]
        bootstrap: bool,
    },
    #[serde(rename = "SVC", alias = "svc")]
    Svc {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_svc_rate")]
        learning_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Label used in audit records; defaults to the kind's short name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: ModelKind,
}

impl ModelSpec {
    pub fn log() -> Self {
        Self::from(ModelKind::Log {
            learning_rate: default_log_rate(),
            epochs: default_epochs(),
            l2: default_l2(),
        })
    }

    pub fn dt() -> Self {
        Self::from(ModelKind::Dt {
            max_depth: default_depth(),
            min_samples_leaf: default_min_leaf(),
        })
    }

    pub fn rf() -> Self {
        Self::from(ModelKind::Rf {
            n_trees: default_trees(),
            max_depth: default_depth(),
            min_samples_leaf: default_min_leaf(),
            feature_subsample: None,
            bootstrap: true,
        })
    }

    pub fn svc() -> Self {
        Self::from(ModelKind::Svc {
            c: default_c(),
            epochs: default_epochs(),
            learning_rate: default_svc_rate(),
        })
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match self.kind {
            ModelKind::Log { .. } => "Log",
            ModelKind::Dt { .. } => "DT",
            ModelKind::Rf { .. } => "RF",
            ModelKind::Svc { .. } => "SVC",
        }
        .into()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.label())));
        let rate_ok = |r: f64| r > 0.0 && r.is_finite();
        match self.kind {
            ModelKind::Log { learning_rate, epochs, l2 } => {
                if !rate_ok(learning_rate) {
                    return bad("learning_rate must be positive");
                }
                if epochs == 0 {
                    return bad("epochs must be at least 1");
                }
                if !(l2 >= 0.0 && l2.is_finite()) {
                    return bad("l2 must be nonnegative");
                }
            }
            ModelKind::Dt { max_depth, min_samples_leaf } => {
                if max_depth == 0 || min_samples_leaf == 0 {
                    return bad("max_depth and min_samples_leaf must be at least 1");
                }
            }
            ModelKind::Rf {
                n_trees,
                max_depth,
                min_samples_leaf,
                feature_subsample,
                ..
            } => {
                if n_trees == 0 || max_depth == 0 || min_samples_leaf == 0 || feature_subsample == Some(0) {
                    return bad("tree counts and sizes must be at least 1");
                }
            }
            ModelKind::Svc { c, epochs, learning_rate } => {
                if !rate_ok(learning_rate) {
                    return bad("learning_rate must be positive");
                }
                if epochs == 0 {
                    return bad("epochs must be at least 1");
                }
                if !(c >= 0.0 && c.is_finite()) {
                    return bad("C must be nonnegative");
                }
            }
        }
        Ok(())
    }
}

impl From<ModelKind> for ModelSpec {
    fn from(kind: ModelKind) -> Self {
        ModelSpec { name: None, kind }
    }
}

/// Row-major feature matrix.
pub type Matrix = [Vec<f64>];

/// Column centering and scaling learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population std; constant columns store 1 so they map to 0.
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let means: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scales = (0..p)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                // relative floor: a column that is constant up to rounding is treated as constant
                if sd <= 1e-12 * means[j].abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Standardizer { means, scales }
    }

    pub fn apply(&self, x: &Matrix) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(self.means.iter().zip(&self.scales))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

/// A fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum TrainedModel {
    Log(LogisticRegression),
    #[serde(rename = "DT")]
    Dt(DecisionTree),
    #[serde(rename = "RF")]
    Rf(RandomForest),
    #[serde(rename = "SVC")]
    Svc(LinearSvc),
}

fn check_inputs(x: &Matrix, y: &[u8]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("training needs at least 2 rows".into()));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput("ragged feature matrix".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(p)
}

fn require_both_classes(y: &[u8], model: &str) -> Result<()> {
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels(format!(
            "{model} needs both classes in the training labels"
        )));
    }
    Ok(())
}

/// Fits `spec` on `(x, y)`. Identical inputs and seed give identical models.
pub fn train(spec: &ModelSpec, x: &Matrix, y: &[u8], seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    check_inputs(x, y)?;
    Ok(match spec.kind {
        ModelKind::Log { learning_rate, epochs, l2 } => {
            require_both_classes(y, "logistic regression")?;
            TrainedModel::Log(LogisticRegression::fit(x, y, learning_rate, epochs, l2))
        }
        ModelKind::Dt { max_depth, min_samples_leaf } => {
            TrainedModel::Dt(DecisionTree::fit(x, y, max_depth, min_samples_leaf))
        }
        ModelKind::Rf {
            n_trees,
            max_depth,
            min_samples_leaf,
            feature_subsample,
            bootstrap,
        } => TrainedModel::Rf(RandomForest::fit(
            x,
            y,
            forest::ForestParams {
                n_trees,
                max_depth,
                min_samples_leaf,
                feature_subsample,
                bootstrap,
            },
            seed,
        )),
        ModelKind::Svc { c, epochs, learning_rate } => {
            require_both_classes(y, "SVC")?;
            TrainedModel::Svc(LinearSvc::fit(x, y, c, epochs, learning_rate))
        }
    })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Log(m) => m.weights.len(),
            TrainedModel::Dt(m) => m.n_features,
            TrainedModel::Rf(m) => m.n_features,
            TrainedModel::Svc(m) => m.weights.len(),
        }
    }

    /// Predicted labels in {0, 1}.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        let p = self.n_features();
        if let Some(row) = x.iter().find(|r| r.len() != p) {
            return Err(Error::InvalidInput(format!(
                "model expects {p} features, got {}",
                row.len()
            )));
        }
        Ok(match self {
            TrainedModel::Log(m) => m.predict(x),
            TrainedModel::Dt(m) => x.iter().map(|r| m.predict_row(r)).collect(),
            TrainedModel::Rf(m) => x.iter().map(|r| m.predict_row(r)).collect(),
            TrainedModel::Svc(m) => m.predict(x),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model parameters serialize")
    }
}

/// Fraction of matching labels.
pub fn accuracy(y: &[u8], yhat: &[u8]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty label vector".into()));
    }
    if y.len() != yhat.len() {
        return Err(Error::InvalidInput("label vectors differ in length".into()));
    }
    let hits = y.iter().zip(yhat).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 1], &[0, 1, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 0, 1, 0], &[1, 1, 1, 0]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn input_validation() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train(&ModelSpec::log(), &x, &[1, 1], 0),
            Err(Error::DegenerateLabels(_))
        ));
        assert!(matches!(
            train(&ModelSpec::svc(), &x, &[0, 0], 0),
            Err(Error::DegenerateLabels(_))
        ));
        let bad = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(train(&ModelSpec::dt(), &bad, &[0, 1], 0), Err(Error::InvalidInput(_))));
        let m = train(&ModelSpec::dt(), &x, &[0, 1], 0).unwrap();
        assert!(m.predict(&[vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn spec_json() {
        let s: ModelSpec = serde_json::from_str(r#"{"kind":"Log"}"#).unwrap();
        assert_eq!(s, ModelSpec::log());
        let s: ModelSpec = serde_json::from_str(r#"{"kind":"rf","n_trees":3,"name":"RF3"}"#).unwrap();
        assert_eq!(s.label(), "RF3");
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"DT","max_depht":3}"#).is_err());
        let bad: ModelSpec = serde_json::from_str(r#"{"kind":"DT","max_depth":0}"#).unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_leaf_predicts_majority() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0];
        // min_samples_leaf larger than half the rows forbids any split
        let spec = ModelSpec::from(ModelKind::Dt { max_depth: 3, min_samples_leaf: 6 });
        let m = train(&spec, &x, &y, 0).unwrap();
        assert!(m.predict(&x).unwrap().iter().all(|&v| v == 1));
    }
}
