//! CART-style binary classification tree grown greedily on weighted Gini
//! impurity.
//!
//! Split scores are compared exactly in integer arithmetic, so the
//! tie-break (lower feature index, then lower threshold) never depends on
//! floating-point rounding.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_training_data, Prediction};
use crate::error::Result;
use crate::features::FeatureVector;
use crate::util::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_instances: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 5,
            min_instances: 1,
        }
    }
}

/// Nodes live in an arena; `left`/`right` index into it. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class_counts: [u64; 2],
        prediction: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
    pub max_depth: usize,
    pub min_instances_per_node: usize,
}

impl DecisionTreeModel {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = [u64; 2]> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { class_counts, .. } => Some(*class_counts),
            TreeNode::Split { .. } => None,
        })
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<u8> {
        check_dim(self.n_features, x.len())?;
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { prediction, .. } => return Ok(prediction),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// The score is a constant 1.0; the label is the leaf's majority class.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(Prediction {
            label: self.predict_label(x)?,
            score: 1.0,
        })
    }
}

/// Split score `(a²+b²)/nL + (c²+d²)/nR` held as an exact fraction; a
/// larger score means lower weighted Gini impurity.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn of(left: [u64; 2], right: [u64; 2]) -> Self {
        let sq = |c: [u64; 2]| u128::from(c[0]) * u128::from(c[0]) + u128::from(c[1]) * u128::from(c[1]);
        let (nl, nr) = (u128::from(left[0] + left[1]), u128::from(right[0] + right[1]));
        Score {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn unsplit(counts: [u64; 2]) -> Self {
        let n = u128::from(counts[0] + counts[1]);
        Score {
            num: u128::from(counts[0]).pow(2) + u128::from(counts[1]).pow(2),
            den: n,
        }
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
}

/// Midpoint of two consecutive distinct sorted values, nudged down to `lo`
/// when rounding would make it equal to `hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn counts(y: &[u8], rows: &[usize]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for &r in rows {
        c[usize::from(y[r])] += 1;
    }
    c
}

/// Best Gini split of `rows` over `features` (ascending), or `None` when no
/// split leaves `min_instances` rows on each side and strictly reduces
/// impurity.
fn best_split(
    x: &[FeatureVector],
    y: &[u8],
    rows: &[usize],
    features: &[usize],
    min_instances: usize,
    sorted: &mut Vec<(f64, u8)>,
) -> Option<SplitChoice> {
    let total = counts(y, rows);
    let n = rows.len();
    let mut best: Option<(Score, SplitChoice)> = None;
    for &f in features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (x[r].values[f], y[r])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u64; 2];
        for i in 0..n - 1 {
            left[usize::from(sorted[i].1)] += 1;
            if sorted[i].0 == sorted[i + 1].0 {
                continue;
            }
            let n_left = i + 1;
            if n_left < min_instances || n - n_left < min_instances {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = Score::of(left, right);
            if best.as_ref().is_none_or(|(b, _)| score.beats(b)) {
                let threshold = midpoint(sorted[i].0, sorted[i + 1].0);
                best = Some((score, SplitChoice { feature: f, threshold }));
            }
        }
    }
    best.filter(|(s, _)| s.beats(&Score::unsplit(total))).map(|(_, c)| c)
}

/// Chooses candidate features per node: all of them, or a fresh random subset.
pub(crate) enum FeatureSampler<'a> {
    All(usize),
    Random { dim: usize, k: usize, rng: &'a mut Rng },
}

impl FeatureSampler<'_> {
    fn fill(&mut self, out: &mut Vec<usize>) {
        out.clear();
        match self {
            FeatureSampler::All(dim) => out.extend(0..*dim),
            FeatureSampler::Random { dim, k, rng } => {
                out.extend(sample(rng, *dim, (*k).min(*dim)).iter());
                out.sort_unstable();
            }
        }
    }
}

struct Grower<'a, 's> {
    x: &'a [FeatureVector],
    y: &'a [u8],
    cfg: &'a TreeConfig,
    sampler: FeatureSampler<'s>,
    nodes: Vec<TreeNode>,
    features: Vec<usize>,
    sorted: Vec<(f64, u8)>,
}

impl Grower<'_, '_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let c = counts(self.y, rows);
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class_counts: c,
            prediction: u8::from(c[1] > c[0]),
        });
        let pure = c[0] == 0 || c[1] == 0;
        if pure || depth >= self.cfg.max_depth || rows.len() < 2 * self.cfg.min_instances.max(1) {
            return id;
        }
        self.sampler.fill(&mut self.features);
        let Some(choice) = best_split(
            self.x,
            self.y,
            rows,
            &self.features,
            self.cfg.min_instances.max(1),
            &mut self.sorted,
        ) else {
            return id;
        };
        let x = self.x;
        let mid = partition(rows, |r| x[r].values[choice.feature] <= choice.threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        id
    }
}

/// Stable in-place partition; returns the number of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let mid = yes.len();
    for (slot, r) in rows.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = r;
    }
    mid
}

pub(crate) fn grow_tree(
    x: &[FeatureVector],
    y: &[u8],
    rows: &mut [usize],
    cfg: &TreeConfig,
    sampler: FeatureSampler<'_>,
) -> DecisionTreeModel {
    let n_features = x.first().map_or(0, FeatureVector::dim);
    let mut g = Grower {
        x,
        y,
        cfg,
        sampler,
        nodes: Vec::new(),
        features: Vec::new(),
        sorted: Vec::new(),
    };
    g.grow(rows, 0);
    DecisionTreeModel {
        nodes: g.nodes,
        n_features,
        max_depth: cfg.max_depth,
        min_instances_per_node: cfg.min_instances,
    }
}

pub fn train_tree(x: &[FeatureVector], y: &[u8], cfg: &TreeConfig) -> Result<DecisionTreeModel> {
    let dim = check_training_data(x, y, 1, false)?;
    let mut rows: Vec<usize> = (0..x.len()).collect();
    Ok(grow_tree(x, y, &mut rows, cfg, FeatureSampler::All(dim)))
}
