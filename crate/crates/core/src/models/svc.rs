use serde::Serialize;

use super::{Matrix, Standardizer};

/// Linear support vector classifier trained by full-batch subgradient
/// descent on mean hinge loss plus `‖w‖² / (2C)`. `C = 0` disables the penalty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSvc {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvc {
    pub fn fit(x: &Matrix, y: &[u8], c: f64, epochs: usize, learning_rate: f64) -> Self {
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.apply(x);
        let p = standardizer.means.len();
        let n = xs.len() as f64;
        let penalty = if c > 0.0 { 1.0 / c } else { 0.0 };
        let mut weights = vec![0.0; p];
        let mut bias = 0.0;
        let signs: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        for _ in 0..epochs {
            let mut gw: Vec<f64> = weights.iter().map(|w| penalty * w).collect();
            let mut gb = 0.0;
            for (row, &s) in xs.iter().zip(&signs) {
                let margin = s * (bias + row.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>());
                if margin < 1.0 {
                    for (g, v) in gw.iter_mut().zip(row) {
                        *g -= s * v / n;
                    }
                    gb -= s / n;
                }
            }
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= learning_rate * g;
            }
            bias -= learning_rate * gb;
        }
        LinearSvc {
            standardizer,
            weights,
            bias,
        }
    }

    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        self.standardizer
            .apply(x)
            .iter()
            .map(|row| self.bias + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Label 1 when the score is nonnegative.
    pub fn predict(&self, x: &Matrix) -> Vec<u8> {
        self.decision_function(x).iter().map(|&s| u8::from(s >= 0.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy;
    use crate::seeding::rng;
    use rand::Rng;

    #[test]
    fn separates_shifted_clusters() {
        let mut r = rng(5);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let label = (i % 2) as u8;
            let shift = if label == 1 { 2.0 } else { -2.0 };
            x.push(vec![shift + r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
            y.push(label);
        }
        let m = LinearSvc::fit(&x, &y, 1.0, 300, 0.01);
        assert_eq!(accuracy(&y, &m.predict(&x)).unwrap(), 1.0);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn affine_rescaling_leaves_predictions() {
        let mut r = rng(6);
        let x: Vec<Vec<f64>> = (0..150).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let y: Vec<u8> = x.iter().map(|p| u8::from(p[0] - 0.3 * p[1] + r.random_range(-0.3..0.3) > 0.0)).collect();
        let scaled: Vec<Vec<f64>> = x.iter().map(|p| vec![p[0] * 40.0 + 2.0, p[1] * 0.5 - 9.0]).collect();
        let a = LinearSvc::fit(&x, &y, 1.0, 300, 0.01);
        let b = LinearSvc::fit(&scaled, &y, 1.0, 300, 0.01);
        assert_eq!(a.predict(&x), b.predict(&scaled));
    }
}
