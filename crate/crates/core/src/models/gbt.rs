//! Binary gradient boosting on logistic loss.
//!
//! Each round fits a least-squares regression tree to the residuals
//! `y − p` (the negative gradient) and sets every leaf to one Newton step,
//! `Σ(y − p) / Σ p(1 − p)` over the rows in that leaf.

use serde::{Deserialize, Serialize};

use super::tree::midpoint;
use super::{check_dim, check_training_data, Prediction};
use crate::error::Result;
use crate::features::FeatureVector;
use crate::util::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_instances: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_iterations: 50,
            learning_rate: 0.1,
            max_depth: 3,
            min_instances: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegressionNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                RegressionNode::Leaf { value } => return value,
                RegressionNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GBTModel {
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub n_iterations: usize,
    pub max_depth: usize,
    /// Prior log-odds `ln(n1/n0)`.
    pub init_score: f64,
    pub n_features: usize,
}

impl GBTModel {
    pub fn raw_score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features, x.len())?;
        Ok(self.init_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    /// Score is `sigmoid(F(x))`; label 1 iff it is at least 0.5.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let score = sigmoid(self.raw_score(x)?);
        Ok(Prediction {
            label: u8::from(score >= 0.5),
            score,
        })
    }
}

struct RegressionGrower<'a> {
    x: &'a [FeatureVector],
    residual: &'a [f64],
    hessian: &'a [f64],
    max_depth: usize,
    min_instances: usize,
    nodes: Vec<RegressionNode>,
    sorted: Vec<(f64, f64)>,
}

impl RegressionGrower<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&r| self.residual[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hessian[r]).sum();
        if h > 1e-12 {
            g / h
        } else {
            0.0
        }
    }

    /// Maximizes `S_L²/n_L + S_R²/n_R` (equivalently, minimizes the squared
    /// error of the residual fit). Ties go to the lower feature, then the
    /// lower threshold.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.residual[r]).sum();
        let parent = total * total / n as f64;
        let dim = self.x[rows[0]].dim();
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..dim {
            self.sorted.clear();
            self.sorted
                .extend(rows.iter().map(|&r| (self.x[r].values[f], self.residual[r])));
            self.sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.sorted[i].1;
                if self.sorted[i].0 == self.sorted[i + 1].0 {
                    continue;
                }
                let nl = i + 1;
                if nl < self.min_instances || n - nl < self.min_instances {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
                if best.is_none_or(|(b, _, _)| score > b) {
                    best = Some((score, f, midpoint(self.sorted[i].0, self.sorted[i + 1].0)));
                }
            }
        }
        let tol = 1e-12 * (1.0 + parent.abs());
        best.filter(|&(s, _, _)| s > parent + tol).map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(RegressionNode::Leaf {
            value: self.leaf_value(rows),
        });
        if depth >= self.max_depth || rows.len() < 2 * self.min_instances {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return id;
        };
        let x = self.x;
        rows.sort_by_key(|&r| x[r].values[feature] > threshold);
        let mid = rows.iter().take_while(|&&r| x[r].values[feature] <= threshold).count();
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = RegressionNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Mean logistic loss of raw scores `f` against labels `y`.
pub fn mean_log_loss(f: &[f64], y: &[u8]) -> f64 {
    f.iter()
        .zip(y)
        .map(|(&z, &yi)| softplus(z) - f64::from(yi) * z)
        .sum::<f64>()
        / f.len() as f64
}

pub fn train_gbt(x: &[FeatureVector], y: &[u8], cfg: &GbtConfig) -> Result<GBTModel> {
    train_gbt_with_trace(x, y, cfg).map(|(m, _)| m)
}

/// Also returns the mean training log-loss after the prior and after each round.
pub fn train_gbt_with_trace(x: &[FeatureVector], y: &[u8], cfg: &GbtConfig) -> Result<(GBTModel, Vec<f64>)> {
    let dim = check_training_data(x, y, 2, true)?;
    let n1 = y.iter().filter(|&&l| l == 1).count() as f64;
    let n0 = y.len() as f64 - n1;
    let init_score = (n1 / n0).ln();
    let mut f = vec![init_score; x.len()];
    let mut trace = vec![mean_log_loss(&f, y)];
    let mut trees = Vec::with_capacity(cfg.n_iterations);
    let mut residual = vec![0.0; x.len()];
    let mut hessian = vec![0.0; x.len()];
    for _ in 0..cfg.n_iterations {
        for i in 0..x.len() {
            let p = sigmoid(f[i]);
            residual[i] = f64::from(y[i]) - p;
            hessian[i] = p * (1.0 - p);
        }
        let mut grower = RegressionGrower {
            x,
            residual: &residual,
            hessian: &hessian,
            max_depth: cfg.max_depth,
            min_instances: cfg.min_instances.max(1),
            nodes: Vec::new(),
            sorted: Vec::new(),
        };
        let mut rows: Vec<usize> = (0..x.len()).collect();
        grower.grow(&mut rows, 0);
        let tree = RegressionTree { nodes: grower.nodes };
        for (fi, xi) in f.iter_mut().zip(x) {
            *fi += cfg.learning_rate * tree.predict(&xi.values);
        }
        trace.push(mean_log_loss(&f, y));
        trees.push(tree);
    }
    Ok((
        GBTModel {
            trees,
            learning_rate: cfg.learning_rate,
            n_iterations: cfg.n_iterations,
            max_depth: cfg.max_depth,
            init_score,
            n_features: dim,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;
    use rand::Rng;

    fn toy(n: usize) -> (Vec<FeatureVector>, Vec<u8>) {
        let mut rng = seeded_rng(21);
        let x: Vec<_> = (0..n)
            .map(|_| FeatureVector::new(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]))
            .collect();
        let y = x
            .iter()
            .map(|v| u8::from(v.values[0] * v.values[1] + 0.2 * rng.gen_range(-1.0..1.0) > 0.0))
            .collect();
        (x, y)
    }

    #[test]
    fn zero_iterations_predict_majority() {
        let (x, y) = toy(50);
        let cfg = GbtConfig {
            n_iterations: 0,
            ..GbtConfig::default()
        };
        let m = train_gbt(&x, &y, &cfg).unwrap();
        let ones = y.iter().filter(|&&l| l == 1).count();
        let majority = u8::from(ones * 2 >= y.len());
        for xi in &x {
            assert_eq!(m.predict(&xi.values).unwrap().label, majority);
        }
    }

    #[test]
    fn balanced_prior_is_zero() {
        let x: Vec<_> = (0..4).map(|i| FeatureVector::new(vec![i as f64])).collect();
        let m = train_gbt(&x, &[0, 1, 0, 1], &GbtConfig::default()).unwrap();
        assert_eq!(m.init_score, 0.0);
        assert_eq!(m.trees.len(), 50);
    }

    #[test]
    fn training_loss_never_increases() {
        let (x, y) = toy(50);
        let (_, trace) = train_gbt_with_trace(&x, &y, &GbtConfig::default()).unwrap();
        assert_eq!(trace.len(), 51);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose: {} -> {}", w[0], w[1]);
        }
        assert!(trace[50] < trace[0]);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = toy(10);
        assert!(train_gbt(&x, &[1; 10], &GbtConfig::default()).is_err());
    }
}
