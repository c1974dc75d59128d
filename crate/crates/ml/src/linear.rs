//! Multinomial logistic regression fitted by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::matrix::{check_labels, check_row, FeatureMatrix, Standardizer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2: f64,
    pub iterations: usize,
    /// Fixed step; by default 1/L from a bound on the loss curvature.
    pub learning_rate: Option<f64>,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            iterations: 500,
            learning_rate: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    /// classes × features
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub iterations: usize,
}

pub const GRADIENT_TOLERANCE: f64 = 1e-5;
const DIVERGENCE_STREAK: usize = 10;

/// Mean cross-entropy plus ½·l2·‖W‖² (bias unpenalized) and its gradient.
/// Parameters are laid out per class as `[w_1 .. w_f, b]`.
pub fn loss_and_gradient(theta: &[f64], x: &[Vec<f64>], y: &[usize], n_classes: usize, l2: f64) -> (f64, Vec<f64>) {
    let f = x.first().map_or(0, Vec::len);
    let stride = f + 1;
    let n = x.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut logits = vec![0.0; n_classes];
    for (row, &label) in x.iter().zip(y) {
        for (k, z) in logits.iter_mut().enumerate() {
            let w = &theta[k * stride..(k + 1) * stride];
            *z = w[f] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        loss += max + sum.ln() - logits[label];
        for k in 0..n_classes {
            let p = (logits[k] - max).exp() / sum;
            let r = (p - f64::from(u8::from(k == label))) / n;
            let g = &mut grad[k * stride..(k + 1) * stride];
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            g[f] += r;
        }
    }
    loss /= n;
    for k in 0..n_classes {
        for j in 0..f {
            let w = theta[k * stride + j];
            loss += 0.5 * l2 * w * w;
            grad[k * stride + j] += l2 * w;
        }
    }
    (loss, grad)
}

/// Largest eigenvalue of (1/n)·X̃ᵀX̃ with a bias column, by power iteration.
fn gram_spectral_radius(x: &[Vec<f64>]) -> f64 {
    let f = x.first().map_or(0, Vec::len) + 1;
    let n = x.len() as f64;
    let mut v = vec![1.0 / (f as f64).sqrt(); f];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = vec![0.0; f];
        for row in x {
            let dot: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[f - 1];
            for (wj, xj) in w.iter_mut().zip(row) {
                *wj += dot * xj;
            }
            w[f - 1] += dot;
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / n;
        v = w.into_iter().map(|a| a / norm).collect();
        if (next - lambda).abs() <= 1e-6 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub fn train_logistic_regression(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &LogisticParams,
) -> Result<LogisticModel> {
    check_labels(x, y, n_classes)?;
    if params.l2 < 0.0 {
        return Err(MlError::InvalidParams("l2 must be non-negative".into()));
    }
    let standardizer = Standardizer::fit(x);
    let xs = standardizer.transform_matrix(x);
    let f = x.ncols();
    let stride = f + 1;
    let rate = params
        .learning_rate
        .unwrap_or_else(|| 1.0 / (0.5 * gram_spectral_radius(&xs) + params.l2));
    let mut theta = vec![0.0; n_classes * stride];
    let mut prev = f64::INFINITY;
    let mut streak = 0;
    let mut iterations = 0;
    for it in 0..params.iterations {
        let (loss, grad) = loss_and_gradient(&theta, &xs, y, n_classes, params.l2);
        if !loss.is_finite() {
            return Err(MlError::Training(format!("non-finite loss at iteration {it}")));
        }
        streak = if loss > prev { streak + 1 } else { 0 };
        if streak >= DIVERGENCE_STREAK {
            return Err(MlError::Training(format!(
                "loss increased {DIVERGENCE_STREAK} consecutive steps (rate {rate:.3e})"
            )));
        }
        prev = loss;
        iterations = it;
        if grad.iter().fold(0.0_f64, |m, g| m.max(g.abs())) < GRADIENT_TOLERANCE {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= rate * g;
        }
    }
    let weights = (0..n_classes).map(|k| theta[k * stride..k * stride + f].to_vec()).collect();
    let bias = (0..n_classes).map(|k| theta[k * stride + f]).collect();
    Ok(LogisticModel {
        standardizer,
        weights,
        bias,
        iterations,
    })
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn predict_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_row(self.n_features(), row)?;
        let z = self.standardizer.transform(row);
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        Ok(exp.into_iter().map(|e| e / sum).collect())
    }
}
