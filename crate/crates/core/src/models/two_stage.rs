use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{Booster, BoostLoss, Head, ModelError, Network, Result, Standardizer};
use crate::features::FeatureMatrix;
use crate::ingest::{read_file, write_file, SurgeLevel};

const FORMAT: &str = "surge-two-stage/1";

/// Anything that maps standardized rows to one number per row.
pub trait Predictor {
    fn predict(&self, x: ArrayView2<f64>) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StageModel {
    Network(Network),
    Boosted(Booster),
}

impl StageModel {
    pub fn n_features(&self) -> usize {
        match self {
            StageModel::Network(n) => n.spec.input_dim,
            StageModel::Boosted(b) => b.n_features,
        }
    }

    pub fn is_classifier(&self) -> bool {
        match self {
            StageModel::Network(n) => n.spec.head == Head::Sigmoid,
            StageModel::Boosted(b) => b.loss == BoostLoss::Logistic,
        }
    }
}

impl Predictor for StageModel {
    fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        match self {
            StageModel::Network(n) => n.predict(x),
            StageModel::Boosted(b) => b.predict(x),
        }
    }
}

/// Probability below `threshold` is DRY; otherwise the regressor value,
/// floored at 0.
pub fn compose(prob: &[f64], eta: &[f64], threshold: f64) -> Vec<SurgeLevel> {
    prob.iter()
        .zip(eta)
        .map(|(&p, &e)| {
            if p < threshold {
                SurgeLevel::Dry
            } else {
                SurgeLevel::Wet(e.max(0.0))
            }
        })
        .collect()
}

/// Model file layout (JSON): `format`, ordered `schema`, `normalization`
/// (per-feature mean and std), `threshold`, and the two stages tagged
/// `network` (layers of row-major weights and biases) or `boosted` (base
/// score and trees as flat node lists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageModel {
    pub format: String,
    pub schema: Vec<String>,
    pub normalization: Standardizer,
    pub threshold: f64,
    pub classifier: StageModel,
    pub regressor: StageModel,
}

impl TwoStageModel {
    pub fn new(
        schema: Vec<String>,
        normalization: Standardizer,
        classifier: StageModel,
        regressor: StageModel,
        threshold: f64,
    ) -> Result<Self> {
        let m = Self {
            format: FORMAT.to_string(),
            schema,
            normalization,
            threshold,
            classifier,
            regressor,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(ModelError::InvalidSpec(format!("unsupported format '{}'", self.format)));
        }
        let d = self.schema.len();
        if self.normalization.mean.len() != d || self.normalization.std.len() != d {
            return Err(ModelError::SchemaMismatch("normalization length differs from schema".into()));
        }
        for (stage, m) in [("classifier", &self.classifier), ("regressor", &self.regressor)] {
            if m.n_features() != d {
                return Err(ModelError::SchemaMismatch(format!(
                    "{stage} expects {} features, schema has {d}",
                    m.n_features()
                )));
            }
        }
        if !self.classifier.is_classifier() || self.regressor.is_classifier() {
            return Err(ModelError::InvalidSpec("stage heads do not match their tasks".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ModelError::InvalidSpec("threshold must be a probability".into()));
        }
        Ok(())
    }

    /// Predictions for raw (unstandardized) rows in schema order.
    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<SurgeLevel>> {
        if x.ncols() != self.schema.len() {
            return Err(ModelError::SchemaMismatch(format!(
                "{} columns given, model has {}",
                x.ncols(),
                self.schema.len()
            )));
        }
        let z = self.normalization.apply(x);
        let p = self.classifier.predict(z.view());
        let e = self.regressor.predict(z.view());
        Ok(compose(&p, &e, self.threshold))
    }

    /// Predictions for every row; columns must equal the schema exactly.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<SurgeLevel>> {
        if m.columns() != self.schema.as_slice() {
            let missing: Vec<&String> = self.schema.iter().filter(|c| m.column_index(c).is_none()).collect();
            return Err(ModelError::SchemaMismatch(format!(
                "matrix columns differ from model schema (missing: {missing:?})"
            )));
        }
        let mut x = Array2::zeros((m.n_rows(), m.n_cols()));
        for (k, r) in m.rows().iter().enumerate() {
            for (c, v) in r.values.iter().enumerate() {
                x[[k, c]] = *v;
            }
        }
        self.predict_rows(x.view())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(write_file(path, &self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }
}
