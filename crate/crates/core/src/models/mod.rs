//! Learners and the two-stage wet/dry + inundation surrogate.
//!
//! Rows are z-scored with training statistics before either stage sees
//! them. The classifier is trained on every row with target 1 for wet
//! points; the regressor only on wet rows.

pub mod boost;
pub mod grid;
pub mod network;
mod two_stage;

pub use boost::{train_boosted, BoostConfig, BoostLoss, Booster};
pub use grid::{grid_search, grid_table_csv, Candidate, GridRow};
pub use network::{train_network, Architecture, EpochLog, Head, Network, NetworkSpec, TrainConfig};
pub use two_stage::{compose, Predictor, StageModel, TwoStageModel};

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::features::{FeatureError, FeatureMatrix};
use crate::ingest::{IngestError, SurgeLevel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("row ({storm}, {point}) has no label")]
    MissingLabel { storm: String, point: u64 },
    #[error("unknown model kind '{0}' (expected nn1, nn2, nn3 or gbt)")]
    UnknownKind(String),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Wet (1) versus dry (0).
    Classification,
    /// Peak surge in meters at wet rows.
    Regression,
}

/// Per-feature z-score transform; zero-variance features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let v: Vec<f64> = col.to_vec();
            let m = crate::eval::pairwise_sum(&v) / n;
            let sq: Vec<f64> = v.iter().map(|a| (a - m) * (a - m)).collect();
            let s = (crate::eval::pairwise_sum(&sq) / n).sqrt();
            mean.push(m);
            std.push(if s > 0.0 { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (k, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[k], self.std[k]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    /// Maps standardized rows back to raw feature values.
    pub fn invert(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut out = z.to_owned();
        for (k, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[k], self.std[k]);
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }
}

/// Labeled rows ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub x: Array2<f64>,
    pub labels: Vec<SurgeLevel>,
    /// Storm index of every row, in sorted storm-id order.
    pub groups: Vec<usize>,
    pub storms: Vec<String>,
    pub point_ids: Vec<u64>,
}

impl Dataset {
    pub fn from_matrix(m: &FeatureMatrix) -> Result<Self> {
        let storms: Vec<String> = m
            .rows()
            .iter()
            .map(|r| r.storm_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = storms.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
        let mut x = Array2::zeros((m.n_rows(), m.n_cols()));
        let mut labels = Vec::with_capacity(m.n_rows());
        let mut groups = Vec::with_capacity(m.n_rows());
        for (k, r) in m.rows().iter().enumerate() {
            for (c, v) in r.values.iter().enumerate() {
                x[[k, c]] = *v;
            }
            labels.push(r.label.ok_or_else(|| ModelError::MissingLabel {
                storm: r.storm_id.clone(),
                point: r.point_id,
            })?);
            groups.push(index[r.storm_id.as_str()]);
        }
        Ok(Self {
            columns: m.columns().to_vec(),
            x,
            labels,
            groups,
            point_ids: m.rows().iter().map(|r| r.point_id).collect(),
            storms,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn wet_targets(&self) -> Vec<f64> {
        self.labels.iter().map(|l| f64::from(l.is_wet())).collect()
    }

    pub fn wet_rows(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&k| self.labels[k].is_wet()).collect()
    }
}

/// Groups held out for validation: a seeded shuffle of the distinct
/// groups, taking `round(fraction * n)` of them (at least one, never all).
pub fn holdout_groups(groups: &[usize], fraction: f64, seed: u64) -> BTreeSet<usize> {
    let mut distinct: Vec<usize> = groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.len() < 2 || fraction <= 0.0 {
        return BTreeSet::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ba1);
    distinct.shuffle(&mut rng);
    let k = ((fraction * distinct.len() as f64).round() as usize).clamp(1, distinct.len() - 1);
    distinct.into_iter().take(k).collect()
}

/// Which learner fits a stage, with its settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSettings {
    pub kind: ModelKind,
    /// Divides every hidden width of the network architectures.
    pub width_divisor: usize,
    /// Network settings; `None` picks the per-task defaults.
    pub train: Option<TrainConfig>,
    pub boost: BoostConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Network(Architecture),
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Network(Architecture::Nn1),
        ModelKind::Network(Architecture::Nn2),
        ModelKind::Network(Architecture::Nn3),
        ModelKind::Gbt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Network(a) => a.name(),
            ModelKind::Gbt => "gbt",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

impl StageSettings {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            width_divisor: 1,
            train: None,
            boost: BoostConfig::new(BoostLoss::SquaredError),
            seed: 0,
        }
    }

    /// Fits this stage on standardized rows.
    pub fn fit(&self, task: Task, x: ArrayView2<f64>, y: &[f64], groups: &[usize]) -> Result<StageModel> {
        match self.kind {
            ModelKind::Network(arch) => {
                let head = match task {
                    Task::Classification => Head::Sigmoid,
                    Task::Regression => Head::Relu,
                };
                let spec = NetworkSpec::new(arch, x.ncols(), head, self.width_divisor);
                let mut cfg = self.train.clone().unwrap_or_else(|| match task {
                    Task::Classification => TrainConfig::classification(),
                    Task::Regression => TrainConfig::regression(),
                });
                cfg.seed = self.seed;
                let (net, _) = train_network(&spec, &cfg, x, y, groups)?;
                Ok(StageModel::Network(net))
            }
            ModelKind::Gbt => {
                let cfg = BoostConfig {
                    loss: match task {
                        Task::Classification => BoostLoss::Logistic,
                        Task::Regression => BoostLoss::SquaredError,
                    },
                    ..self.boost.clone()
                };
                let (b, _) = train_boosted(&cfg, x, y)?;
                Ok(StageModel::Boosted(b))
            }
        }
    }
}

/// Fits both stages on `data` and bundles them with the schema and the
/// standardization statistics.
pub fn train_two_stage(
    data: &Dataset,
    classifier: &StageSettings,
    regressor: &StageSettings,
    threshold: f64,
) -> Result<TwoStageModel> {
    if data.n_rows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    let norm = Standardizer::fit(data.x.view());
    let z = norm.apply(data.x.view());
    let clf = classifier.fit(Task::Classification, z.view(), &data.wet_targets(), &data.groups)?;
    let wet = data.wet_rows();
    if wet.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let zw = z.select(ndarray::Axis(0), &wet);
    let yw: Vec<f64> = wet.iter().map(|&k| data.labels[k].meters()).collect();
    let gw: Vec<usize> = wet.iter().map(|&k| data.groups[k]).collect();
    let reg = regressor.fit(Task::Regression, zw.view(), &yw, &gw)?;
    TwoStageModel::new(data.columns.clone(), norm, clf, reg, threshold)
}
