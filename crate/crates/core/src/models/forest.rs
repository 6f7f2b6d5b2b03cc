use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::tree::{DecisionTree, TreeParams};
use super::Matrix;
use crate::seeding::{derive_seed_indexed, rng};

pub(crate) struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
}

/// Bagged CART trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomForest {
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub(crate) fn fit(x: &Matrix, y: &[u8], params: ForestParams, seed: u64) -> Self {
        let n = x.len();
        let p = x.first().map_or(0, Vec::len);
        let default_mtry = ((p as f64).sqrt().floor() as usize).max(1);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: Some(params.feature_subsample.unwrap_or(default_mtry).min(p)),
        };
        // one stream per tree keeps the forest independent of the thread schedule
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng(derive_seed_indexed(seed, &[t as u64]));
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| r.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_rows(x, y, rows, &tree_params, &mut r)
            })
            .collect();
        RandomForest { n_features: p, trees }
    }

    /// Majority vote; ties go to 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let votes = self.trees.iter().filter(|t| t.predict_row(row) == 1).count();
        u8::from(2 * votes > self.trees.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train, ModelKind, ModelSpec, TrainedModel};

    fn data() -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut r = rng(31);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let y = x
            .iter()
            .map(|row| u8::from(row[0] + 0.5 * row[2] * row[3] + 0.2 * r.random_range(-1.0..1.0) > 0.0))
            .collect();
        (x, y)
    }

    #[test]
    fn single_unsampled_tree_equals_plain_tree() {
        let (x, y) = data();
        let rf = ModelSpec::from(ModelKind::Rf {
            n_trees: 1,
            max_depth: 6,
            min_samples_leaf: 3,
            feature_subsample: Some(5),
            bootstrap: false,
        });
        let dt = ModelSpec::from(ModelKind::Dt {
            max_depth: 6,
            min_samples_leaf: 3,
        });
        let TrainedModel::Rf(forest) = train(&rf, &x, &y, 8).unwrap() else {
            unreachable!()
        };
        let TrainedModel::Dt(tree) = train(&dt, &x, &y, 8).unwrap() else {
            unreachable!()
        };
        assert_eq!(forest.trees[0], tree);
        let a: Vec<u8> = x.iter().map(|r| forest.predict_row(r)).collect();
        let b: Vec<u8> = x.iter().map(|r| tree.predict_row(r)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let (x, y) = data();
        let spec = ModelSpec::from(ModelKind::Rf {
            n_trees: 15,
            max_depth: 5,
            min_samples_leaf: 2,
            feature_subsample: None,
            bootstrap: true,
        });
        let a = train(&spec, &x, &y, 1).unwrap();
        assert_eq!(a, train(&spec, &x, &y, 1).unwrap());
        assert_ne!(a, train(&spec, &x, &y, 2).unwrap());
        let acc = crate::models::accuracy(&y, &a.predict(&x).unwrap()).unwrap();
        assert!(acc > 0.8, "training accuracy {acc}");
    }

    #[test]
    fn even_vote_ties_to_zero() {
        let leaf = |label| DecisionTree {
            n_features: 1,
            nodes: vec![crate::models::Node::Leaf { label }],
        };
        let f = RandomForest {
            n_features: 1,
            trees: vec![leaf(1), leaf(0)],
        };
        assert_eq!(f.predict_row(&[0.0]), 0);
    }
}
