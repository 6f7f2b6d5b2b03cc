//! Greedy binary CART on Gini impurity.
//!
//! Candidate thresholds are midpoints between consecutive distinct values;
//! rows with `x[feature] <= threshold` go left. Split quality is compared with
//! exact integer arithmetic, so ties resolve deterministically to the lowest
//! feature index and then the lowest threshold.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf { label: u8 },
    Split { split: Split, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionTree {
    pub n_features: usize,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

/// Weighted child impurity scaled to an exact fraction:
/// `a(nl-a)/nl + b(nr-b)/nr = num / den` (proportional to n · weighted Gini / 2).
#[derive(Debug, Clone, Copy)]
struct Impurity {
    num: u128,
    den: u128,
}

impl Impurity {
    fn new(left_pos: usize, left_n: usize, right_pos: usize, right_n: usize) -> Self {
        let (a, nl, b, nr) = (left_pos as u128, left_n as u128, right_pos as u128, right_n as u128);
        Impurity {
            num: a * (nl - a) * nr + b * (nr - b) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &Impurity) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

pub(crate) fn majority(y: &[u8], rows: &[usize]) -> u8 {
    let pos = rows.iter().filter(|&&r| y[r] == 1).count();
    u8::from(2 * pos > rows.len())
}

fn best_split(x: &Matrix, y: &[u8], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
    let n = rows.len();
    let total_pos = rows.iter().filter(|&&r| y[r] == 1).count();
    let mut best: Option<(Impurity, Split)> = None;
    let mut column: Vec<(f64, u8)> = Vec::with_capacity(n);
    for &f in features {
        column.clear();
        column.extend(rows.iter().map(|&r| (x[r][f], y[r])));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0usize;
        for i in 0..n - 1 {
            left_pos += usize::from(column[i].1);
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo == hi {
                continue;
            }
            let left_n = i + 1;
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let score = Impurity::new(left_pos, left_n, total_pos - left_pos, right_n);
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            let better = match &best {
                None => true,
                Some((b, _)) => score.cmp(b) == Ordering::Less,
            };
            if better {
                best = Some((score, Split { feature: f, threshold }));
            }
        }
    }
    best.map(|(_, s)| s)
}

impl DecisionTree {
    pub fn fit(x: &Matrix, y: &[u8], max_depth: usize, min_samples_leaf: usize) -> Self {
        let rows: Vec<usize> = (0..x.len()).collect();
        let params = TreeParams {
            max_depth,
            min_samples_leaf,
            max_features: None,
        };
        // no feature sampling, so the generator is never drawn from
        Self::fit_rows(x, y, rows, &params, &mut crate::seeding::rng(0))
    }

    /// Grows a tree on `rows` (which may repeat, as in a bootstrap sample).
    pub(crate) fn fit_rows<R: Rng>(x: &Matrix, y: &[u8], rows: Vec<usize>, params: &TreeParams, rng: &mut R) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let mut tree = DecisionTree {
            n_features,
            nodes: Vec::new(),
        };
        tree.grow(x, y, rows, 0, params, rng);
        tree
    }

    fn grow<R: Rng>(&mut self, x: &Matrix, y: &[u8], rows: Vec<usize>, depth: usize, params: &TreeParams, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let label = majority(y, &rows);
        self.nodes.push(Node::Leaf { label });

        let pos = rows.iter().filter(|&&r| y[r] == 1).count();
        let pure = pos == 0 || pos == rows.len();
        if pure || depth >= params.max_depth || rows.len() < 2 * params.min_samples_leaf {
            return id;
        }
        let features: Vec<usize> = match params.max_features {
            Some(k) if k < self.n_features => {
                let mut picked = sample(rng, self.n_features, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..self.n_features).collect(),
        };
        let Some(split) = best_split(x, y, &rows, &features, params.min_samples_leaf) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| x[r][split.feature] <= split.threshold);
        let left = self.grow(x, y, left_rows, depth + 1, params, rng);
        let right = self.grow(x, y, right_rows, depth + 1, params, rng);
        self.nodes[id] = Node::Split { split, left, right };
        id
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { label } => return *label,
                Node::Split { split, left, right } => {
                    id = if row[split.feature] <= split.threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng;

    #[test]
    fn xor_at_depth_two() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let t = DecisionTree::fit(&x, &y, 2, 1);
        let pred: Vec<u8> = x.iter().map(|r| t.predict_row(r)).collect();
        assert_eq!(pred, y);
        assert_eq!(t.depth(), 2);
    }

    /// Every depth-2 axis-aligned tree over the XOR points, enumerated by
    /// (root split, left split, right split, leaf labels).
    #[test]
    fn xor_enumeration_has_perfect_tree() {
        let x = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0u8, 1, 1, 0];
        let splits = [(0usize, 0.5f64), (1, 0.5)];
        let mut best = 0;
        for &(rf, rt) in &splits {
            for &(lf, lt) in &splits {
                for &(qf, qt) in &splits {
                    for labels in 0..16u8 {
                        let hits = x
                            .iter()
                            .zip(&y)
                            .filter(|(p, &t)| {
                                let leaf = if p[rf] <= rt {
                                    usize::from(p[lf] > lt)
                                } else {
                                    2 + usize::from(p[qf] > qt)
                                };
                                (labels >> leaf) & 1 == t
                            })
                            .count();
                        best = best.max(hits);
                    }
                }
            }
        }
        assert_eq!(best, 4);
    }

    #[test]
    fn leaf_ties_go_to_zero() {
        assert_eq!(majority(&[0, 1], &[0, 1]), 0);
        assert_eq!(majority(&[1, 1, 0], &[0, 1, 2]), 1);
    }

    /// Exhaustive best stump: every feature, every midpoint, counted directly.
    fn oracle_stump(x: &[Vec<f64>], y: &[u8]) -> Option<(usize, f64, u128, u128)> {
        let n = x.len();
        let p = x[0].len();
        let mut best: Option<(usize, f64, u128, u128)> = None;
        for f in 0..p {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = w[0] + (w[1] - w[0]) / 2.0;
                let left: Vec<usize> = (0..n).filter(|&i| x[i][f] <= t).collect();
                let right: Vec<usize> = (0..n).filter(|&i| x[i][f] > t).collect();
                let gini_part = |idx: &[usize]| {
                    let c = idx.len() as u128;
                    let a = idx.iter().filter(|&&i| y[i] == 1).count() as u128;
                    (a * (c - a), c)
                };
                let (ln, ld) = gini_part(&left);
                let (rn, rd) = gini_part(&right);
                let (num, den) = (ln * rd + rn * ld, ld * rd);
                let better = match best {
                    None => true,
                    Some((_, _, bn, bd)) => num * bd < bn * den,
                };
                if better {
                    best = Some((f, t, num, den));
                }
            }
        }
        best
    }

    #[test]
    fn matches_exhaustive_stump_search() {
        let mut r = rng(2024);
        for _ in 0..100 {
            let n = r.random_range(4..=50);
            let p = r.random_range(1..=4);
            // small integer grid so ties and repeated values are common
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| f64::from(r.random_range(0..6u8))).collect())
                .collect();
            let y: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
            let t = DecisionTree::fit(&x, &y, 1, 1);
            let pos = y.iter().filter(|&&v| v == 1).count();
            match (oracle_stump(&x, &y), &t.nodes[0]) {
                (Some((f, th, _, _)), Node::Split { split, .. }) => {
                    assert_eq!((split.feature, split.threshold), (f, th));
                }
                (None, Node::Leaf { .. }) => {}
                (_, Node::Leaf { .. }) if pos == 0 || pos == n => {}
                (o, node) => panic!("oracle {o:?} vs tree {node:?}"),
            }
        }
    }

    #[test]
    fn respects_min_leaf_and_depth() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let t = DecisionTree::fit(&x, &y, 3, 5);
        assert!(t.depth() <= 3);
        let mut leaf_sizes = vec![0usize; t.nodes.len()];
        for row in &x {
            let mut id = 0;
            while let Node::Split { split, left, right } = &t.nodes[id] {
                id = if row[split.feature] <= split.threshold { *left } else { *right };
            }
            leaf_sizes[id] += 1;
        }
        for (id, node) in t.nodes.iter().enumerate() {
            if matches!(node, Node::Leaf { .. }) {
                assert!(leaf_sizes[id] >= 5);
            }
        }
    }
}
