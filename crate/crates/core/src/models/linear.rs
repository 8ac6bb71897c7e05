//! Linear classifiers: logistic regression trained by full-batch gradient
//! descent, and a linear SVM trained by stochastic sub-gradient descent on
//! the primal hinge loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_training_data, Prediction};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::util::{dot, seeded_rng, sigmoid, softplus};

/// `f(x) = w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(dot(&self.weights, x) + self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub l2: f64,
    pub threshold: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            learning_rate: 0.1,
            max_iters: 200,
            tol: 1e-6,
            l2: 0.0,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegressionModel {
    pub linear: LinearModel,
    pub threshold: f64,
}

impl LogisticRegressionModel {
    /// `score = sigmoid(w·x + b)`, label 1 iff `score ≥ threshold`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let score = sigmoid(self.linear.decision(x)?);
        Ok(Prediction {
            label: u8::from(score >= self.threshold),
            score,
        })
    }
}

/// Mean log-loss plus `(l2/2)·‖w‖²`, with its gradient `(∂w, ∂b)`.
pub fn logistic_loss_and_gradient(model: &LinearModel, x: &[FeatureVector], y: &[u8], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; model.dim()];
    let mut grad_b = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = dot(&model.weights, &xi.values) + model.bias;
        let yf = f64::from(yi);
        loss += softplus(z) - yf * z;
        let r = sigmoid(z) - yf;
        for (g, v) in grad_w.iter_mut().zip(&xi.values) {
            *g += r * v;
        }
        grad_b += r;
    }
    loss /= n;
    grad_b /= n;
    let mut reg = 0.0;
    for (g, w) in grad_w.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
        reg += w * w;
    }
    (loss + 0.5 * l2 * reg, grad_w, grad_b)
}

pub fn train_logreg(x: &[FeatureVector], y: &[u8], cfg: &LogRegConfig) -> Result<LogisticRegressionModel> {
    train_logreg_with_trace(x, y, cfg).map(|(m, _)| m)
}

/// Also returns the objective value before each update.
pub fn train_logreg_with_trace(
    x: &[FeatureVector],
    y: &[u8],
    cfg: &LogRegConfig,
) -> Result<(LogisticRegressionModel, Vec<f64>)> {
    let dim = check_training_data(x, y, 2, true)?;
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {} not in (0,1)",
            cfg.threshold
        )));
    }
    let mut model = LinearModel::zeros(dim);
    let mut trace = Vec::new();
    let mut prev_loss = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let (loss, gw, gb) = logistic_loss_and_gradient(&model, x, y, cfg.l2);
        trace.push(loss);
        if (prev_loss - loss).abs() < cfg.tol {
            break;
        }
        prev_loss = loss;
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        model.bias -= cfg.learning_rate * gb;
    }
    Ok((
        LogisticRegressionModel {
            linear: model,
            threshold: cfg.threshold,
        },
        trace,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSVMModel {
    pub linear: LinearModel,
}

impl LinearSVMModel {
    /// Label 1 iff `f(x) ≥ 0`; the score is `f(x)` itself.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let f = self.linear.decision(x)?;
        Ok(Prediction {
            label: u8::from(f >= 0.0),
            score: f,
        })
    }
}

/// `(λ/2)(‖w‖² + b²) + mean hinge`, the objective the SVM trainer descends.
pub fn hinge_objective(model: &LinearModel, x: &[FeatureVector], y: &[u8], lambda: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let s = if yi == 1 { 1.0 } else { -1.0 };
            (1.0 - s * (dot(&model.weights, &xi.values) + model.bias)).max(0.0)
        })
        .sum::<f64>()
        / x.len() as f64;
    let norm: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() + model.bias * model.bias;
    0.5 * lambda * norm + hinge
}

pub fn train_svm(x: &[FeatureVector], y: &[u8], cfg: &SvmConfig) -> Result<LinearSVMModel> {
    train_svm_with_trace(x, y, cfg).map(|(m, _)| m)
}

/// Pegasos: step `1/(λt)`, bias treated as a regularized constant feature,
/// iterate projected onto the ball of radius `1/√λ`. The trace holds the
/// objective before training and after every epoch.
pub fn train_svm_with_trace(x: &[FeatureVector], y: &[u8], cfg: &SvmConfig) -> Result<(LinearSVMModel, Vec<f64>)> {
    let dim = check_training_data(x, y, 2, true)?;
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("svm lambda {} must be > 0", cfg.lambda)));
    }
    let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut rng = seeded_rng(cfg.seed);
    let mut model = LinearModel::zeros(dim);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let radius = 1.0 / cfg.lambda.sqrt();
    let mut trace = vec![hinge_objective(&model, x, y, cfg.lambda)];
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let margin = signs[i] * (dot(&model.weights, &x[i].values) + model.bias);
            let shrink = 1.0 - eta * cfg.lambda;
            model.weights.iter_mut().for_each(|w| *w *= shrink);
            model.bias *= shrink;
            if margin < 1.0 {
                let step = eta * signs[i];
                for (w, v) in model.weights.iter_mut().zip(&x[i].values) {
                    *w += step * v;
                }
                model.bias += step;
            }
            let norm = (model.weights.iter().map(|w| w * w).sum::<f64>() + model.bias * model.bias).sqrt();
            if norm > radius {
                let scale = radius / norm;
                model.weights.iter_mut().for_each(|w| *w *= scale);
                model.bias *= scale;
            }
        }
        trace.push(hinge_objective(&model, x, y, cfg.lambda));
    }
    Ok((LinearSVMModel { linear: model }, trace))
}
