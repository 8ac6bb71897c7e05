//! Skip-gram Word2Vec trained with negative sampling.
//!
//! Training is single-threaded and fully determined by the corpus and
//! [`W2VConfig::seed`]: two runs with the same inputs produce bit-identical
//! matrices.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::TokenizedDoc;
use crate::util::{seeded_rng, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct W2VConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: usize,
    /// Initial step size, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for W2VConfig {
    fn default() -> Self {
        W2VConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 10,
            min_count: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            seed: 0,
        }
    }
}

impl W2VConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("window", self.window),
            ("epochs", self.epochs),
            ("min_count", self.min_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("word2vec {name} must be >= 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("word2vec learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Trained embeddings: one row of `dim` reals per vocabulary token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Word2VecWire")]
pub struct Word2VecModel {
    /// Vocabulary in row order (count descending, then lexicographic).
    words: Vec<String>,
    /// Row-major `words.len() × dim`.
    vectors: Vec<f64>,
    dim: usize,
    config: W2VConfig,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct Word2VecWire {
    words: Vec<String>,
    vectors: Vec<f64>,
    dim: usize,
    config: W2VConfig,
}

impl TryFrom<Word2VecWire> for Word2VecModel {
    type Error = String;

    fn try_from(w: Word2VecWire) -> std::result::Result<Self, String> {
        Word2VecModel::from_parts(w.words, w.vectors, w.dim, w.config).map_err(|e| e.to_string())
    }
}

impl Word2VecModel {
    pub fn from_parts(words: Vec<String>, vectors: Vec<f64>, dim: usize, config: W2VConfig) -> Result<Self> {
        if dim == 0 || vectors.len() != words.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix has {} values for {} words of dim {dim}",
                vectors.len(),
                words.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                part: "word2vec vectors".into(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token `{w}`")));
            }
        }
        Ok(Word2VecModel {
            words,
            vectors,
            dim,
            config,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn config(&self) -> &W2VConfig {
        &self.config
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (va, vb) = (self.vector(a)?, self.vector(b)?);
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(dot / (na * nb))
    }
}

/// Mean of the vectors of in-vocabulary tokens; all zeros when none are known.
pub fn embed_doc(model: &Word2VecModel, doc: &TokenizedDoc) -> Vec<f64> {
    let mut acc = vec![0.0; model.dim];
    let mut n = 0usize;
    for row in doc.iter().filter_map(|t| model.vector(t)) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        n += 1;
    }
    if n > 0 {
        let n = n as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

fn build_vocab(corpus: &[TokenizedDoc], min_count: usize) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in corpus.iter().flat_map(TokenizedDoc::iter) {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut vocab: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, c)| (t.to_owned(), c))
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    vocab
}

struct Trainer {
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
    grad: Vec<f64>,
}

impl Trainer {
    /// One positive pair plus sampled negatives; updates output rows in place
    /// and applies the accumulated gradient to the centre word's input row.
    fn step(&mut self, center: usize, targets: &[(usize, f64)], lr: f64) {
        let d = self.dim;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let inp = center * d;
        for &(target, label) in targets {
            let out = target * d;
            let f: f64 = (0..d).map(|k| self.input[inp + k] * self.output[out + k]).sum();
            let g = (label - sigmoid(f)) * lr;
            for k in 0..d {
                self.grad[k] += g * self.output[out + k];
                self.output[out + k] += g * self.input[inp + k];
            }
        }
        for k in 0..d {
            self.input[inp + k] += self.grad[k];
        }
    }
}

pub fn train_word2vec(corpus: &[TokenizedDoc], cfg: &W2VConfig) -> Result<Word2VecModel> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyDataset("word2vec corpus is empty".into()));
    }
    let vocab = build_vocab(corpus, cfg.min_count);
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary {
            min_count: cfg.min_count,
        });
    }
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (w.as_str(), i)).collect();
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.iter().filter_map(|t| index.get(t).copied()).collect())
        .collect();

    let mut rng = seeded_rng(cfg.seed);
    let dim = cfg.dim;
    let n_words = vocab.len();
    let half_width = 0.5 / dim as f64;
    let input: Vec<f64> = (0..n_words * dim)
        .map(|_| rng.gen_range(-half_width..half_width))
        .collect();
    let mut trainer = Trainer {
        dim,
        input,
        output: vec![0.0; n_words * dim],
        grad: vec![0.0; dim],
    };
    let noise =
        WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75))).expect("vocabulary counts are positive");

    let total_steps = (cfg.epochs * docs.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut step = 0usize;
    let mut targets = Vec::with_capacity(cfg.negatives + 1);
    for _ in 0..cfg.epochs {
        for doc in &docs {
            for (pos, &center) in doc.iter().enumerate() {
                let progress = step as f64 / total_steps;
                let lr = (cfg.learning_rate - (cfg.learning_rate - cfg.min_learning_rate) * progress)
                    .max(cfg.min_learning_rate);
                step += 1;
                // Sampled effective window, as in the reference word2vec trainer.
                let reach = rng.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(doc.len() - 1);
                for (ctx, &positive) in doc.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx == pos {
                        continue;
                    }
                    targets.clear();
                    targets.push((positive, 1.0));
                    if n_words > 1 {
                        while targets.len() <= cfg.negatives {
                            let neg = noise.sample(&mut rng);
                            if neg != positive {
                                targets.push((neg, 0.0));
                            }
                        }
                    }
                    trainer.step(center, &targets, lr);
                }
            }
        }
    }

    Word2VecModel::from_parts(
        vocab.into_iter().map(|(w, _)| w).collect(),
        trainer.input,
        dim,
        cfg.clone(),
    )
}
