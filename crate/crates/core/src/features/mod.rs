//! The fitted feature chain: string indexer, Word2Vec document embedding,
//! vector assembly and standardization.

mod word2vec;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use word2vec::{embed_doc, train_word2vec, W2VConfig, Word2VecModel};

use crate::corpus::{LabeledPost, Post};
use crate::error::{Error, Result};
use crate::textprep::{preprocess, StopwordList, TokenizedDoc};

/// A dense, finite feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Categorical → index encoder. Index 0 is the most frequent value; ties
/// are broken lexicographically. Unseen values map to `unknown_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringIndexerModel {
    labels: Vec<String>,
}

impl StringIndexerModel {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn unknown_index(&self) -> usize {
        self.labels.len()
    }

    pub fn transform(&self, value: &str) -> usize {
        self.labels.iter().position(|l| l == value).unwrap_or(self.labels.len())
    }
}

pub fn fit_string_indexer<S: AsRef<str>>(values: &[S]) -> Result<StringIndexerModel> {
    if values.is_empty() {
        return Err(Error::EmptyDataset("string indexer needs at least one value".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in values {
        *counts.entry(v.as_ref()).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(StringIndexerModel {
        labels: ranked.into_iter().map(|(l, _)| l.to_owned()).collect(),
    })
}

/// One named input to [`assemble`].
#[derive(Debug, Clone, Copy)]
pub enum FeaturePart<'a> {
    Vector(&'a str, &'a [f64]),
    Scalar(&'a str, f64),
}

/// Concatenates the parts in order, rejecting non-finite values.
pub fn assemble(parts: &[FeaturePart<'_>]) -> Result<FeatureVector> {
    let mut values = Vec::new();
    for part in parts {
        match *part {
            FeaturePart::Vector(name, v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite { part: name.into() });
                }
                values.extend_from_slice(v);
            }
            FeaturePart::Scalar(name, x) => {
                if !x.is_finite() {
                    return Err(Error::NonFinite { part: name.into() });
                }
                values.push(x);
            }
        }
    }
    Ok(FeatureVector { values })
}

/// Per-coordinate z-score with sample (N−1) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScalerModel {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl StandardScalerModel {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Zero-variance coordinates map to 0.
    pub fn transform(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.dim(),
            });
        }
        let values = v
            .values
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| if s > 0.0 { (x - m) / s } else { 0.0 })
            .collect();
        Ok(FeatureVector { values })
    }
}

pub fn fit_scaler(rows: &[FeatureVector]) -> Result<StandardScalerModel> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "scaler needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let dim = rows[0].dim();
    if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; dim];
    for r in rows {
        for (m, x) in means.iter_mut().zip(&r.values) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; dim];
    for r in rows {
        for ((s, x), m) in stds.iter_mut().zip(&r.values).zip(&means) {
            *s += (x - m) * (x - m);
        }
    }
    stds.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt());
    Ok(StandardScalerModel { means, stds })
}

fn default_stopwords() -> StopwordList {
    StopwordList::builtin()
}

/// Settings for fitting a [`FeaturePipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub w2v: W2VConfig,
    /// Adds the string-indexed domain as one raw coordinate.
    pub use_domain_index: bool,
    /// Aux feature names appended after the embedding, in this order.
    pub aux: Vec<String>,
    #[serde(skip_serializing, default = "default_stopwords")]
    pub stopwords: StopwordList,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            w2v: W2VConfig::default(),
            use_domain_index: false,
            aux: Vec::new(),
            stopwords: StopwordList::builtin(),
        }
    }
}

/// preprocess → embed → assemble → scale, with all statistics taken from
/// the rows it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub stopwords: StopwordList,
    pub indexer: Option<StringIndexerModel>,
    pub w2v: Word2VecModel,
    pub use_aux: Vec<String>,
    pub scaler: StandardScalerModel,
    pub output_dim: usize,
}

impl FeaturePipeline {
    pub fn tokenize(&self, text: &str) -> TokenizedDoc {
        preprocess(text, &self.stopwords)
    }

    /// Assembled but unscaled features.
    pub fn raw_features(&self, post: &Post) -> Result<FeatureVector> {
        let doc = self.tokenize(&post.body);
        raw_features(post, &doc, &self.w2v, self.indexer.as_ref(), &self.use_aux)
    }

    pub fn transform(&self, post: &Post) -> Result<FeatureVector> {
        self.scaler.transform(&self.raw_features(post)?)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.w2v.dim() + usize::from(self.indexer.is_some()) + self.use_aux.len();
        if self.output_dim != expected || self.scaler.dim() != expected || self.scaler.stds.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.output_dim,
            });
        }
        Ok(())
    }
}

fn raw_features(
    post: &Post,
    doc: &TokenizedDoc,
    w2v: &Word2VecModel,
    indexer: Option<&StringIndexerModel>,
    aux_names: &[String],
) -> Result<FeatureVector> {
    let emb = embed_doc(w2v, doc);
    let mut parts = vec![FeaturePart::Vector("word2vec", &emb)];
    if let Some(ix) = indexer {
        parts.push(FeaturePart::Scalar("domain_index", ix.transform(&post.domain) as f64));
    }
    for name in aux_names {
        let v = post
            .aux(name)
            .ok_or_else(|| Error::InvalidArgument(format!("post {} lacks aux feature `{name}`", post.post_id)))?;
        parts.push(FeaturePart::Scalar(name, v));
    }
    assemble(&parts)
}

/// Fits the pipeline on `train` and returns it with the scaled training rows.
pub fn fit_transform(train: &[LabeledPost], cfg: &FeatureConfig) -> Result<(FeaturePipeline, Vec<FeatureVector>)> {
    if train.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "feature pipeline needs at least 2 training rows, got {}",
            train.len()
        )));
    }
    let docs: Vec<TokenizedDoc> = train
        .iter()
        .map(|lp| preprocess(&lp.post.body, &cfg.stopwords))
        .collect();
    let w2v = train_word2vec(&docs, &cfg.w2v)?;
    let indexer = if cfg.use_domain_index {
        let domains: Vec<&str> = train.iter().map(|lp| lp.post.domain.as_str()).collect();
        Some(fit_string_indexer(&domains)?)
    } else {
        None
    };
    let raw = train
        .iter()
        .zip(&docs)
        .map(|(lp, doc)| raw_features(&lp.post, doc, &w2v, indexer.as_ref(), &cfg.aux))
        .collect::<Result<Vec<_>>>()?;
    let scaler = fit_scaler(&raw)?;
    let rows = raw.iter().map(|r| scaler.transform(r)).collect::<Result<Vec<_>>>()?;
    let output_dim = scaler.dim();
    let pipeline = FeaturePipeline {
        stopwords: cfg.stopwords.clone(),
        indexer,
        w2v,
        use_aux: cfg.aux.clone(),
        scaler,
        output_dim,
    };
    Ok((pipeline, rows))
}

pub fn fit_pipeline(train: &[LabeledPost], cfg: &FeatureConfig) -> Result<FeaturePipeline> {
    fit_transform(train, cfg).map(|(p, _)| p)
}

/// Transform through an optional pipeline; `None` is an unfitted stage.
pub fn transform_pipeline(pipeline: Option<&FeaturePipeline>, post: &Post) -> Result<FeatureVector> {
    pipeline.ok_or(Error::NotFitted)?.transform(post)
}
