//! Classifiers (ℓ1 logistic regression, random forest, boosted trees), the
//! OLS screening fit, and cross-validated hyperparameter selection.

pub mod cv;
pub mod ensemble;
pub mod logistic;
pub mod ols;
pub mod sampling;
pub mod tree;

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ensemble::{fit_forest, fit_gbrt, ForestModel, GbrtModel, TreeHparams};
pub use logistic::{fit_lr_l1, lambda_grid, LrModel, LrProblem};
pub use ols::ols_r2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LrL1,
    Rf,
    Gbrt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LrL1, Method::Rf, Method::Gbrt];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::LrL1 => "lr_l1",
            Method::Rf => "rf",
            Method::Gbrt => "gbrt",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Model {
    LrL1(LrModel),
    Rf(ForestModel),
    Gbrt(GbrtModel),
}

impl Model {
    pub fn method(&self) -> Method {
        match self {
            Model::LrL1(_) => Method::LrL1,
            Model::Rf(_) => Method::Rf,
            Model::Gbrt(_) => Method::Gbrt,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::LrL1(m) => m.n_features(),
            Model::Rf(m) => m.n_features,
            Model::Gbrt(m) => m.n_features,
        }
    }

    /// Score in [0, 1] for one row in fit-time column order.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::LrL1(m) => m.predict_proba_row(x),
            Model::Rf(m) => m.predict_row(x).clamp(0.0, 1.0),
            Model::Gbrt(m) => m.predict_row(x),
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect())
    }
}

/// Positive iff the score reaches the threshold.
pub fn classify(score: f64, theta: f64) -> u8 {
    u8::from(score >= theta)
}

pub const MODEL_FORMAT: &str = "evsite-model";
pub const MODEL_VERSION: u32 = 1;

/// A fitted model with its predictor layout, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub model: Model,
}

impl ModelDocument {
    pub fn new(feature_names: Vec<String>, model: Model) -> Result<Self> {
        if feature_names.len() != model.n_features() {
            return Err(Error::DimensionMismatch {
                expected: model.n_features(),
                got: feature_names.len(),
            });
        }
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            feature_names,
            model,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a document, refusing other formats and versions before
    /// looking at the model body.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or("").to_string();
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if format != MODEL_FORMAT || version != MODEL_VERSION {
            return Err(Error::ModelVersion {
                format,
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.feature_names.len() != doc.model.n_features() {
            return Err(Error::DimensionMismatch {
                expected: doc.model.n_features(),
                got: doc.feature_names.len(),
            });
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Everything needed to fit one method with internal cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub lambdas: Vec<f64>,
    pub k_folds: usize,
    pub rf_grid: Vec<TreeHparams>,
    pub gbrt_grid: Vec<TreeHparams>,
    pub gbrt_stop_threshold: f64,
}

/// What cross-validation chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Selection {
    LrL1 { lambda: f64, cv_auc: f64 },
    Rf { hparams: TreeHparams, cv_auc: f64 },
    Gbrt { hparams: TreeHparams, cv_auc: f64 },
}

/// Selects hyperparameters by stratified k-fold AUC, then refits on all rows.
pub fn train(method: Method, x: ArrayView2<f64>, y: &[u8], s: &TrainSettings, seed: u64) -> Result<(Model, Selection)> {
    use crate::rng::{derive_seed, Purpose};
    match method {
        Method::LrL1 => {
            let cv = cv::cv_lambda(x, y, &s.lambdas, s.k_folds, seed)?;
            let m = LrProblem::new(x, y)?.fit(cv.lambda)?;
            Ok((
                Model::LrL1(m),
                Selection::LrL1 {
                    lambda: cv.lambda,
                    cv_auc: cv.mean_auc[cv.index],
                },
            ))
        }
        Method::Rf => {
            let cv = cv::tune_tree_hparams(x, y, method, &s.rf_grid, s.k_folds, s.gbrt_stop_threshold, seed)?;
            let m = fit_forest(x, y, &cv.hparams, derive_seed(seed, Purpose::Fit, 0))?;
            Ok((
                Model::Rf(m),
                Selection::Rf {
                    hparams: cv.hparams,
                    cv_auc: cv.mean_auc[cv.index],
                },
            ))
        }
        Method::Gbrt => {
            let cv = cv::tune_tree_hparams(x, y, method, &s.gbrt_grid, s.k_folds, s.gbrt_stop_threshold, seed)?;
            let m = fit_gbrt(x, y, &cv.hparams, s.gbrt_stop_threshold)?;
            Ok((
                Model::Gbrt(m),
                Selection::Gbrt {
                    hparams: cv.hparams,
                    cv_auc: cv.mean_auc[cv.index],
                },
            ))
        }
    }
}
