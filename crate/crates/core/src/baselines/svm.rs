//! Linear SVM trained by stochastic subgradient descent (Pegasos) on the
//! L2-regularized hinge loss
//!
//! `λ/2·(‖w‖² + b²) + mean_i max(0, 1 − y_i(w·x_i + b))`, with `λ = 1/(c·n)`.
//!
//! Labels map to `y = −1` (benign) and `y = +1` (malicious). The bias is
//! treated as the weight of a constant input and regularized with `w`. Step
//! `t` uses rate `1/(λt)` and is followed by projection onto the ball of
//! radius `1/√λ`. Each epoch visits every sample once in an order drawn from
//! `SeededRng::new(seed)`. A score of exactly 0 predicts class 0.

use serde::{Deserialize, Serialize};

use super::tree::check_training;
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
}

fn signed(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

fn score(w: &[f64], b: f64, row: &[f64]) -> f64 {
    w.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + b
}

/// `mean_i max(0, 1 − y_i(w·x_i + b))` with labels in {0, 1}.
pub fn mean_hinge_loss(w: &[f64], b: f64, x: &Matrix, y: &[u8]) -> f64 {
    let total: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(r, &l)| (1.0 - signed(l) * score(w, b, r)).max(0.0))
        .sum();
    total / y.len().max(1) as f64
}

/// Regularized objective minimized by [`fit_linear_svm`].
pub fn svm_objective(w: &[f64], b: f64, x: &Matrix, y: &[u8], lambda: f64) -> f64 {
    let norm2 = w.iter().map(|v| v * v).sum::<f64>() + b * b;
    0.5 * lambda * norm2 + mean_hinge_loss(w, b, x, y)
}

/// Returns the model and the objective after every epoch.
pub fn fit_linear_svm(x: &Matrix, y: &[u8], cfg: &SvmConfig) -> Result<(LinearSvmModel, Curve)> {
    check_training(x, y)?;
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::InvalidInput(format!("SVM c must be positive, got {}", cfg.c)));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidInput("SVM needs at least one epoch".into()));
    }
    let n = x.rows();
    let lambda = 1.0 / (cfg.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut rng = SeededRng::new(cfg.seed);
    let mut curve = Curve::default();
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        for i in rng.permutation(n) {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let row = x.row(i);
            let yi = signed(y[i]);
            let violated = yi * score(&w, b, row) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if violated {
                for (v, xi) in w.iter_mut().zip(row) {
                    *v += eta * yi * xi;
                }
                b += eta * yi;
            }
            let norm = (w.iter().map(|v| v * v).sum::<f64>() + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
                b *= s;
            }
        }
        curve.push(svm_objective(&w, b, x, y, lambda));
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::NonFinite("fit_linear_svm"));
    }
    Ok((LinearSvmModel { w, b, c: cfg.c }, curve))
}

impl LinearSvmModel {
    pub fn decision(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.w.len() {
            return Err(Error::dims(
                "svm",
                format!("{} columns for a model over {}", x.cols(), self.w.len()),
            ));
        }
        Ok(x.iter_rows().map(|r| score(&self.w, self.b, r)).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self.decision(x)?.into_iter().map(|s| u8::from(s > 0.0)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.iter().any(|v| !v.is_finite()) || !self.b.is_finite() || self.c <= 0.0 {
            return Err(Error::InvalidInput("svm model has invalid parameters".into()));
        }
        Ok(())
    }
}
