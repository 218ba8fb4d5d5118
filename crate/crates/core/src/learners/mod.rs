//! Per-class binary learners, stratified cross-validation and metrics.

mod adaboost;
mod cv;
mod forest;
mod knn;
mod metrics;
pub mod tree;

pub use adaboost::AdaBoost;
pub use cv::{cross_validate, stratified_folds, stratified_folds_by_key, CvReport};
pub use forest::RandomForest;
pub use knn::Knn;
pub use metrics::{compute_metrics, Confusion, Metrics};
pub use tree::{DecisionTree, TreeParams};

use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("need at least 2 training rows, got {0}")]
    EmptyData(usize),
    #[error("{0} needs both classes in the training data")]
    SingleClassData(String),
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidSpec(String),
    #[error("cannot stratify: {0}")]
    StratificationError(String),
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("row has {found} values, model expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Knn { k: usize },
    DecisionTree { max_depth: usize, min_leaf: usize },
    RandomForest {
        trees: usize,
        /// Attributes per split; `None` means ⌊√d⌋.
        max_features: Option<usize>,
        max_depth: usize,
        min_leaf: usize,
    },
    AdaBoost { rounds: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub seed: u64,
}

impl ModelSpec {
    pub fn knn(k: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Knn { k },
            seed: 0,
        }
    }

    pub fn decision_tree() -> Self {
        ModelSpec {
            kind: ModelKind::DecisionTree {
                max_depth: 12,
                min_leaf: 2,
            },
            seed: 0,
        }
    }

    pub fn random_forest(trees: usize, seed: u64) -> Self {
        ModelSpec {
            kind: ModelKind::RandomForest {
                trees,
                max_features: None,
                max_depth: 16,
                min_leaf: 1,
            },
            seed,
        }
    }

    pub fn adaboost(rounds: usize) -> Self {
        ModelSpec {
            kind: ModelKind::AdaBoost { rounds },
            seed: 0,
        }
    }

    /// kNN(5), tree, forest(100), AdaBoost(100), in that order.
    pub fn default_roster(seed: u64) -> Vec<ModelSpec> {
        vec![
            ModelSpec::knn(5),
            ModelSpec::decision_tree(),
            ModelSpec::random_forest(100, seed),
            ModelSpec::adaboost(100),
        ]
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidSpec(m.to_string()));
        match self.kind {
            ModelKind::Knn { k: 0 } => bad("k must be >= 1"),
            ModelKind::DecisionTree { max_depth, min_leaf } if max_depth == 0 || min_leaf == 0 => {
                bad("max_depth and min_leaf must be >= 1")
            }
            ModelKind::RandomForest { trees: 0, .. } => bad("trees must be >= 1"),
            ModelKind::RandomForest {
                max_features: Some(0), ..
            } => bad("max_features must be >= 1"),
            ModelKind::RandomForest { max_depth, min_leaf, .. } if max_depth == 0 || min_leaf == 0 => {
                bad("max_depth and min_leaf must be >= 1")
            }
            ModelKind::AdaBoost { rounds: 0 } => bad("rounds must be >= 1"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Knn { k } => write!(f, "KNN(k={k})"),
            ModelKind::DecisionTree { max_depth, min_leaf } => write!(f, "DTC(depth={max_depth},leaf={min_leaf})"),
            ModelKind::RandomForest { trees, .. } => write!(f, "RF(trees={trees})"),
            ModelKind::AdaBoost { rounds } => write!(f, "Ada(rounds={rounds})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelState {
    Knn(Knn),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    AdaBoost(AdaBoost),
}

/// Anything that maps an attribute row to a positive-class score.
pub trait Scorer: Sync {
    fn score(&self, row: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Scorer for F {
    fn score(&self, row: &[f64]) -> f64 {
        self(row)
    }
}

/// A fitted binary classifier over a named attribute subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub schema: Vec<String>,
    pub state: ModelState,
}

impl TrainedModel {
    /// Score in `[0, 1]` for a row aligned to `schema`.
    pub fn score(&self, row: &[f64]) -> f64 {
        match &self.state {
            ModelState::Knn(m) => m.score(row),
            ModelState::DecisionTree(m) => m.score(row),
            ModelState::RandomForest(m) => m.score(row),
            ModelState::AdaBoost(m) => m.score(row),
        }
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.score(row) >= 0.5
    }

    pub fn checked_predict(&self, row: &[f64]) -> Result<bool, LearnError> {
        if row.len() != self.schema.len() {
            return Err(LearnError::ArityMismatch {
                expected: self.schema.len(),
                found: row.len(),
            });
        }
        Ok(self.predict(row))
    }
}

impl Scorer for TrainedModel {
    fn score(&self, row: &[f64]) -> f64 {
        TrainedModel::score(self, row)
    }
}

/// Fits `spec` on every row of `data`. kNN accepts single-class data; the
/// tree learners do not.
pub fn train(spec: &ModelSpec, data: &FeatureMatrix, labels: &[bool]) -> Result<TrainedModel, LearnError> {
    spec.validate()?;
    if data.n_rows() != labels.len() {
        return Err(LearnError::LabelMismatch {
            rows: data.n_rows(),
            labels: labels.len(),
        });
    }
    if data.n_rows() < 2 {
        return Err(LearnError::EmptyData(data.n_rows()));
    }
    let positives = labels.iter().filter(|l| **l).count();
    let single_class = positives == 0 || positives == labels.len();
    if single_class && !matches!(spec.kind, ModelKind::Knn { .. }) {
        return Err(LearnError::SingleClassData(spec.to_string()));
    }
    let all_rows: Vec<usize> = (0..data.n_rows()).collect();
    let state = match spec.kind {
        ModelKind::Knn { k } => ModelState::Knn(Knn::fit(data, labels, k)),
        ModelKind::DecisionTree { max_depth, min_leaf } => {
            let params = TreeParams {
                max_depth,
                min_leaf,
                max_features: None,
            };
            let w = vec![1.0; data.n_rows()];
            ModelState::DecisionTree(tree::grow::<ChaCha8Rng>(data, labels, &w, &all_rows, params, None))
        }
        ModelKind::RandomForest {
            trees,
            max_features,
            max_depth,
            min_leaf,
        } => {
            let mtry = max_features.unwrap_or_else(|| ((data.n_cols() as f64).sqrt() as usize).max(1));
            let params = TreeParams {
                max_depth,
                min_leaf,
                max_features: Some(mtry),
            };
            ModelState::RandomForest(RandomForest::fit(data, labels, trees, params, spec.seed))
        }
        ModelKind::AdaBoost { rounds } => ModelState::AdaBoost(AdaBoost::fit(data, labels, rounds)),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: *spec,
        schema: data.names().to_vec(),
        state,
    })
}
