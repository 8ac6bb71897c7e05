//! Versioned model artifact: a self-describing UTF-8 JSON document holding
//! the model parameters and the fitted feature pipeline.
//!
//! Floats are written in shortest round-trip form, so `load(save(m))`
//! predicts bit-identically to `m`.
//!
//! ```text
//! {
//!   "schema_version": "1",
//!   "model_type": "logreg" | "svm" | "dtree" | "rforest" | "gbt",
//!   "model_id": "<model_type>-<crc32 of params and pipeline, 8 hex digits>",
//!   "created_at": <unix millis>,
//!   "hyperparams": { ... },
//!   "params": { ... model payload ... },
//!   "pipeline": { stopwords, indexer, w2v, use_aux, scaler, output_dim }
//! }
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::{ClassifierModel, HyperParams, ModelKind, Prediction};
use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::features::{FeaturePipeline, FeatureVector};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub schema_version: String,
    pub model_id: String,
    pub hyperparams: Value,
    pub params: ClassifierModel,
    pub pipeline: FeaturePipeline,
    pub created_at: i64,
}

impl ModelArtifact {
    pub fn new(model: ClassifierModel, pipeline: FeaturePipeline, hyperparams: &HyperParams, created_at: i64) -> Self {
        let kind = model.kind();
        let model_id = model_id(kind, &model.params_json(), &pipeline);
        ModelArtifact {
            schema_version: SCHEMA_VERSION.to_owned(),
            model_id,
            hyperparams: hyperparams.section(kind),
            params: model,
            pipeline,
            created_at,
        }
    }

    pub fn model_type(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn featurize(&self, post: &Post) -> Result<FeatureVector> {
        self.pipeline.transform(post)
    }

    /// preprocess → features → predict.
    pub fn predict_post(&self, post: &Post) -> Result<Prediction> {
        let x = self.featurize(post)?;
        self.params.predict(&x.values)
    }

    pub fn to_json(&self) -> String {
        let doc = json!({
            "schema_version": self.schema_version,
            "model_type": self.model_type().as_str(),
            "model_id": self.model_id,
            "created_at": self.created_at,
            "hyperparams": self.hyperparams,
            "params": self.params.params_json(),
            "pipeline": self.pipeline,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("artifact serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::CorruptArtifact("file is empty".into()));
        }
        let doc: Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptArtifact(format!("not valid JSON: {e}")))?;
        let Value::Object(mut obj) = doc else {
            return Err(Error::CorruptArtifact("top level is not an object".into()));
        };
        let version = take_str(&mut obj, "schema_version")?;
        if version != SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: SCHEMA_VERSION.into(),
            });
        }
        let kind: ModelKind = take_str(&mut obj, "model_type")?
            .parse()
            .map_err(|e: Error| Error::CorruptArtifact(e.to_string()))?;
        let model_id = take_str(&mut obj, "model_id")?;
        let created_at = take(&mut obj, "created_at")?
            .as_i64()
            .ok_or_else(|| Error::CorruptArtifact("created_at is not an integer".into()))?;
        let hyperparams = take(&mut obj, "hyperparams")?;
        let params = ClassifierModel::from_params_json(kind, take(&mut obj, "params")?)
            .map_err(|e| Error::CorruptArtifact(format!("params: {e}")))?;
        let pipeline: FeaturePipeline = serde_json::from_value(take(&mut obj, "pipeline")?)
            .map_err(|e| Error::CorruptArtifact(format!("pipeline: {e}")))?;
        pipeline
            .validate()
            .map_err(|e| Error::CorruptArtifact(format!("pipeline: {e}")))?;
        Ok(ModelArtifact {
            schema_version: version,
            model_id,
            hyperparams,
            params,
            pipeline,
            created_at,
        })
    }
}

fn take(obj: &mut Map<String, Value>, key: &str) -> Result<Value> {
    obj.remove(key)
        .ok_or_else(|| Error::CorruptArtifact(format!("missing field `{key}`")))
}

fn take_str(obj: &mut Map<String, Value>, key: &str) -> Result<String> {
    match take(obj, key)? {
        Value::String(s) => Ok(s),
        _ => Err(Error::CorruptArtifact(format!("field `{key}` is not a string"))),
    }
}

fn model_id(kind: ModelKind, params: &Value, pipeline: &FeaturePipeline) -> String {
    let mut h = crc32fast::Hasher::new();
    h.update(params.to_string().as_bytes());
    h.update(serde_json::to_string(pipeline).expect("pipeline serializes").as_bytes());
    format!("{}-{:08x}", kind.as_str(), h.finalize())
}

/// Writes the artifact via a temporary file and rename.
pub fn save_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(artifact.to_json().as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    let text = fs::read_to_string(path.as_ref())?;
    ModelArtifact::from_json(&text)
}
