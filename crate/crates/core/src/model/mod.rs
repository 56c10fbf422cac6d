//! Victim model adapters: built-in trainable classifiers, the external
//! process protocol, and feature extractors.

pub mod adversarial;
pub mod builtin;
pub mod external;
pub mod features;
pub mod train;

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{BuiltinModel, LogisticModel, MlpModel};
pub use external::ExternalProcessModel;

const ROW_TOL: f64 = 1e-6;

/// A classifier F mapping feature vectors to class probabilities.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn predict_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BuiltinLogistic,
    BuiltinMlp,
    ExternalProcess,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Counts every `predict` call; the count never decreases.
pub struct ModelHandle {
    inner: Arc<dyn Classifier>,
    kind: ModelKind,
    predict_entry: String,
    queries: AtomicU64,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("kind", &self.kind)
            .field("num_classes", &self.num_classes())
            .field("feature_dim", &self.feature_dim())
            .field("queries", &self.query_count())
            .finish()
    }
}

impl ModelHandle {
    pub fn new(inner: Arc<dyn Classifier>, kind: ModelKind) -> Self {
        ModelHandle {
            inner,
            kind,
            predict_entry: "predict".to_string(),
            queries: AtomicU64::new(0),
        }
    }

    pub fn builtin(model: BuiltinModel) -> Self {
        let kind = model.kind();
        Self::new(Arc::new(model), kind)
    }

    pub fn with_predict_entry(mut self, entry: impl Into<String>) -> Self {
        self.predict_entry = entry.into();
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn predict_entry(&self) -> &str {
        &self.predict_entry
    }

    pub fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &Arc<dyn Classifier> {
        &self.inner
    }

    /// One query; every returned row is a probability distribution.
    pub fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let dim = self.feature_dim();
        if let Some(row) = batch.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        let out = self.inner.predict_batch(batch)?;
        if out.len() != batch.len() {
            return Err(Error::ExternalProtocol(format!("{} rows for a batch of {}", out.len(), batch.len())));
        }
        for row in &out {
            let sum: f64 = row.iter().sum();
            if row.len() != self.num_classes() || row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_TOL
            {
                return Err(Error::InvalidDistribution(format!("model returned {row:?}")));
            }
        }
        Ok(out)
    }

    pub fn predict_one(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mut rows = self.predict(&[features.to_vec()])?;
        Ok(rows.pop().expect("one row per input"))
    }
}

/// Versioned on-disk form of a built-in model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub model: BuiltinModel,
}

pub const MODEL_FORMAT: &str = "evgraph-model";
pub const MODEL_VERSION: u32 = 1;

impl ModelFile {
    pub fn new(model: BuiltinModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        file.model.check_shapes()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_logistic_is_uniform() {
        let h = ModelHandle::builtin(BuiltinModel::Logistic(LogisticModel::zeros(3, 4)));
        let p = h.predict_one(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(p.len(), 4);
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_shape_and_counter() {
        let h = ModelHandle::builtin(BuiltinModel::Mlp(MlpModel::new(2, 5, 3, 7)));
        let batch = vec![vec![0.1, 0.2]; 6];
        let out = h.predict(&batch).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(h.query_count(), 1);
        h.predict_one(&[0.0, 0.0]).unwrap();
        assert_eq!(h.query_count(), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let h = ModelHandle::builtin(BuiltinModel::Logistic(LogisticModel::zeros(3, 2)));
        assert!(matches!(h.predict_one(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn model_file_round_trip() {
        let m = BuiltinModel::Mlp(MlpModel::new(3, 4, 2, 1));
        let text = ModelFile::new(m.clone()).to_json().unwrap();
        assert_eq!(ModelFile::from_json(&text).unwrap().model, m);
        let bad = text.replace("evgraph-model", "other");
        assert!(matches!(ModelFile::from_json(&bad), Err(Error::Format(_))));
    }
}
