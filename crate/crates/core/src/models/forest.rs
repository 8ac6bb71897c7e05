use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, DecisionTreeModel, FeatureSampler, TreeConfig};
use super::{check_dim, check_training_data, Prediction};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::util::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `⌈√dim⌉`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: usize,
    pub min_instances: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            features_per_split: None,
            bootstrap: true,
            max_depth: 5,
            min_instances: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTreeModel>,
    pub n_trees: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

/// Majority vote; a tie goes to class 0.
pub fn vote(votes: &[u8]) -> u8 {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    u8::from(ones * 2 > votes.len())
}

impl RandomForestModel {
    pub fn tree_votes(&self, x: &[f64]) -> Result<Vec<u8>> {
        self.trees.iter().map(|t| t.predict_label(x)).collect()
    }

    /// The score is the fraction of trees voting for class 1.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if let Some(first) = self.trees.first() {
            check_dim(first.n_features, x.len())?;
        }
        let votes = self.tree_votes(x)?;
        let ones = votes.iter().filter(|&&v| v == 1).count();
        Ok(Prediction {
            label: vote(&votes),
            score: if votes.is_empty() {
                0.0
            } else {
                ones as f64 / votes.len() as f64
            },
        })
    }
}

/// Each tree sees a bootstrap sample of size n (or every row when
/// `bootstrap` is off) and draws a fresh feature subset at every split.
/// Tree `i` uses its own RNG seeded from `(seed, i)`.
pub fn train_forest(x: &[FeatureVector], y: &[u8], cfg: &ForestConfig) -> Result<RandomForestModel> {
    let dim = check_training_data(x, y, 1, false)?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let k = cfg
        .features_per_split
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim.max(1));
    let tree_cfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_instances: cfg.min_instances,
    };
    let n = x.len();
    let trees = (0..cfg.n_trees)
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(cfg.seed, i as u64));
            let mut rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sampler = if k >= dim {
                FeatureSampler::All(dim)
            } else {
                FeatureSampler::Random { dim, k, rng: &mut rng }
            };
            grow_tree(x, y, &mut rows, &tree_cfg, sampler)
        })
        .collect();
    Ok(RandomForestModel {
        trees,
        n_trees: cfg.n_trees,
        features_per_split: k,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::train_tree;
    use rand::Rng;

    fn data(seed: u64, n: usize, d: usize) -> (Vec<FeatureVector>, Vec<u8>) {
        let mut rng = seeded_rng(seed);
        let x: Vec<_> = (0..n)
            .map(|_| FeatureVector::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let y = x
            .iter()
            .map(|v| u8::from(v.values[0] + 0.3 * v.values[1] > 0.0))
            .collect();
        (x, y)
    }

    #[test]
    fn votes() {
        assert_eq!(vote(&[1, 1, 0]), 1);
        assert_eq!(vote(&[1, 1, 0, 0]), 0);
        assert_eq!(vote(&[]), 0);
    }

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let (x, y) = data(1, 80, 4);
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            features_per_split: Some(4),
            ..ForestConfig::default()
        };
        let forest = train_forest(&x, &y, &cfg).unwrap();
        let tree = train_tree(&x, &y, &TreeConfig::default()).unwrap();
        assert_eq!(forest.trees[0], tree);
        let (probe, _) = data(2, 50, 4);
        for p in &probe {
            assert_eq!(
                forest.predict(&p.values).unwrap().label,
                tree.predict_label(&p.values).unwrap()
            );
        }
    }

    #[test]
    fn seeded_and_sized() {
        let (x, y) = data(3, 60, 9);
        let cfg = ForestConfig {
            n_trees: 7,
            seed: 11,
            ..ForestConfig::default()
        };
        let a = train_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a.trees.len(), 7);
        assert_eq!(a.features_per_split, 3);
        assert_eq!(a, train_forest(&x, &y, &cfg).unwrap());
        let b = train_forest(&x, &y, &ForestConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, b);
    }
}
