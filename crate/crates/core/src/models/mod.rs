//! The five classifiers behind one train/predict contract.
//!
//! Labels are `0`/`1` everywhere (1 = stress). Every `predict` is pure and
//! rejects inputs whose dimension differs from the training data.

mod artifact;
mod forest;
mod gbt;
mod linear;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use artifact::{load_model, save_model, ModelArtifact, SCHEMA_VERSION};
pub use forest::{train_forest, vote, ForestConfig, RandomForestModel};
pub use gbt::{mean_log_loss, train_gbt, train_gbt_with_trace, GBTModel, GbtConfig, RegressionNode, RegressionTree};
pub use linear::{
    hinge_objective, logistic_loss_and_gradient, train_logreg, train_logreg_with_trace, train_svm,
    train_svm_with_trace, LinearModel, LinearSVMModel, LogRegConfig, LogisticRegressionModel, SvmConfig,
};
pub use tree::{train_tree, DecisionTreeModel, TreeConfig, TreeNode};

use crate::corpus::LabeledPost;
use crate::error::{Error, Result};
use crate::features::{fit_transform, FeatureConfig, FeatureVector};

/// A predicted label with the model's own score (probability, decision
/// value or vote fraction depending on the model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logreg,
    Svm,
    Dtree,
    Rforest,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Logreg,
        ModelKind::Svm,
        ModelKind::Rforest,
        ModelKind::Gbt,
        ModelKind::Dtree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Svm => "svm",
            ModelKind::Dtree => "dtree",
            ModelKind::Rforest => "rforest",
            ModelKind::Gbt => "gbt",
        }
    }

    /// Name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Logreg => "LogisticRegression",
            ModelKind::Svm => "Support Vector Machines (SVM)",
            ModelKind::Dtree => "Decision Trees",
            ModelKind::Rforest => "RandomForest",
            ModelKind::Gbt => "Gradient-Boosted Trees",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ModelKind::Logreg),
            "svm" => Ok(ModelKind::Svm),
            "dtree" => Ok(ModelKind::Dtree),
            "rforest" => Ok(ModelKind::Rforest),
            "gbt" => Ok(ModelKind::Gbt),
            other => Err(Error::InvalidArgument(format!(
                "unknown model type `{other}` (expected logreg, svm, dtree, rforest or gbt)"
            ))),
        }
    }
}

/// Hyperparameters for every model type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub logreg: LogRegConfig,
    pub svm: SvmConfig,
    pub dtree: TreeConfig,
    pub rforest: ForestConfig,
    pub gbt: GbtConfig,
}

impl HyperParams {
    /// Sets every stochastic trainer's seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.svm.seed = seed;
        self.rforest.seed = seed;
        self
    }

    /// The section relevant to `kind`, as JSON.
    pub fn section(&self, kind: ModelKind) -> serde_json::Value {
        let v = match kind {
            ModelKind::Logreg => serde_json::to_value(&self.logreg),
            ModelKind::Svm => serde_json::to_value(&self.svm),
            ModelKind::Dtree => serde_json::to_value(&self.dtree),
            ModelKind::Rforest => serde_json::to_value(&self.rforest),
            ModelKind::Gbt => serde_json::to_value(&self.gbt),
        };
        v.expect("hyperparameters serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Logreg(LogisticRegressionModel),
    Svm(LinearSVMModel),
    Dtree(DecisionTreeModel),
    Rforest(RandomForestModel),
    Gbt(GBTModel),
}

impl ClassifierModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ClassifierModel::Logreg(_) => ModelKind::Logreg,
            ClassifierModel::Svm(_) => ModelKind::Svm,
            ClassifierModel::Dtree(_) => ModelKind::Dtree,
            ClassifierModel::Rforest(_) => ModelKind::Rforest,
            ClassifierModel::Gbt(_) => ModelKind::Gbt,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        match self {
            ClassifierModel::Logreg(m) => m.predict(x),
            ClassifierModel::Svm(m) => m.predict(x),
            ClassifierModel::Dtree(m) => m.predict(x),
            ClassifierModel::Rforest(m) => m.predict(x),
            ClassifierModel::Gbt(m) => m.predict(x),
        }
    }

    pub(crate) fn params_json(&self) -> serde_json::Value {
        let v = match self {
            ClassifierModel::Logreg(m) => serde_json::to_value(m),
            ClassifierModel::Svm(m) => serde_json::to_value(m),
            ClassifierModel::Dtree(m) => serde_json::to_value(m),
            ClassifierModel::Rforest(m) => serde_json::to_value(m),
            ClassifierModel::Gbt(m) => serde_json::to_value(m),
        };
        v.expect("model parameters serialize")
    }

    pub(crate) fn from_params_json(kind: ModelKind, v: serde_json::Value) -> Result<Self> {
        Ok(match kind {
            ModelKind::Logreg => ClassifierModel::Logreg(serde_json::from_value(v)?),
            ModelKind::Svm => ClassifierModel::Svm(serde_json::from_value(v)?),
            ModelKind::Dtree => ClassifierModel::Dtree(serde_json::from_value(v)?),
            ModelKind::Rforest => ClassifierModel::Rforest(serde_json::from_value(v)?),
            ModelKind::Gbt => ClassifierModel::Gbt(serde_json::from_value(v)?),
        })
    }
}

pub fn train_model(kind: ModelKind, x: &[FeatureVector], y: &[u8], hp: &HyperParams) -> Result<ClassifierModel> {
    Ok(match kind {
        ModelKind::Logreg => ClassifierModel::Logreg(train_logreg(x, y, &hp.logreg)?),
        ModelKind::Svm => ClassifierModel::Svm(train_svm(x, y, &hp.svm)?),
        ModelKind::Dtree => ClassifierModel::Dtree(train_tree(x, y, &hp.dtree)?),
        ModelKind::Rforest => ClassifierModel::Rforest(train_forest(x, y, &hp.rforest)?),
        ModelKind::Gbt => ClassifierModel::Gbt(train_gbt(x, y, &hp.gbt)?),
    })
}

/// Fits the feature pipeline and a `kind` model on `train` only.
pub fn fit_artifact(
    train: &[LabeledPost],
    kind: ModelKind,
    features: &FeatureConfig,
    hp: &HyperParams,
    created_at: i64,
) -> Result<ModelArtifact> {
    let (pipeline, rows) = fit_transform(train, features)?;
    let y: Vec<u8> = train.iter().map(|lp| lp.label).collect();
    let model = train_model(kind, &rows, &y, hp)?;
    Ok(ModelArtifact::new(model, pipeline, hp, created_at))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Validates a training set and returns its feature dimension.
pub(crate) fn check_training_data(x: &[FeatureVector], y: &[u8], min_rows: usize, both_classes: bool) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_rows {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_rows} training rows, got {}",
            x.len()
        )));
    }
    let dim = x[0].dim();
    for (i, row) in x.iter().enumerate() {
        check_dim(dim, row.dim())?;
        if row.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                part: format!("training row {i}"),
            });
        }
    }
    if let Some(bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
    }
    if both_classes {
        let ones = y.iter().filter(|&&l| l == 1).count();
        if ones == 0 || ones == y.len() {
            return Err(Error::SingleClass);
        }
    }
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("bert".parse::<ModelKind>().is_err());
    }

    #[test]
    fn training_data_checks() {
        let x = vec![FeatureVector::new(vec![1.0]), FeatureVector::new(vec![1.0, 2.0])];
        assert!(matches!(
            check_training_data(&x, &[0, 1], 1, false),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(check_training_data(&x[..1], &[0, 1], 1, false).is_err());
        assert!(check_training_data(&x[..1], &[2], 1, false).is_err());
    }
}
