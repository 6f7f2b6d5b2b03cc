use serde::Serialize;

use super::{Matrix, Standardizer};

/// L2-regularized logistic regression over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticRegression {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy plus `l2/2 · ‖w‖²` and its gradient `(∂w, ∂b)`.
pub fn logistic_objective(weights: &[f64], bias: f64, x: &Matrix, y: &[u8], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = bias + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        let t = f64::from(label);
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        grad_b += r;
        for (g, v) in grad_w.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

impl LogisticRegression {
    pub fn fit(x: &Matrix, y: &[u8], learning_rate: f64, epochs: usize, l2: f64) -> Self {
        Self::fit_with_history(x, y, learning_rate, epochs, l2).0
    }

    /// Full-batch gradient descent from zero; also returns the objective
    /// value before each epoch's update.
    pub fn fit_with_history(x: &Matrix, y: &[u8], learning_rate: f64, epochs: usize, l2: f64) -> (Self, Vec<f64>) {
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.apply(x);
        let p = standardizer.means.len();
        let mut weights = vec![0.0; p];
        let mut bias = 0.0;
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let (loss, gw, gb) = logistic_objective(&weights, bias, &xs, y, l2);
            history.push(loss);
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= learning_rate * g;
            }
            bias -= learning_rate * gb;
        }
        (
            LogisticRegression {
                standardizer,
                weights,
                bias,
            },
            history,
        )
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.standardizer
            .apply(x)
            .iter()
            .map(|row| sigmoid(self.bias + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()))
            .collect()
    }

    /// Label 1 when the probability is at least 0.5.
    pub fn predict(&self, x: &Matrix) -> Vec<u8> {
        self.predict_proba(x).iter().map(|&p| u8::from(p >= 0.5)).collect()
    }
}
