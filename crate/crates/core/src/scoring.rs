//! Vertex scoring: classifier loss, feature distance and the goal predicate.
//!
//! Higher scores are always better. A vertex is scored from a single model
//! query; the adversarial flag comes from the same probabilities.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::features::FeatureExtractor;
use crate::model::ModelHandle;
use crate::registry::Registry;
use crate::state::InputState;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
const SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    ClassifierLoss,
    FeatureDistance,
    /// A scorer registered under this name.
    Custom(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    L2,
    Lp(f64),
    CosineSimilarity,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDirection {
    #[default]
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSpec {
    #[serde(rename = "type")]
    pub kind: ScoreKind,
    #[serde(default)]
    pub loss: LossKind,
    /// Attacker-chosen label for targeted attacks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceKind>,
    /// Fixed target feature vector shared by every sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_features: Option<Vec<f64>>,
    /// File with one target vector per sample, in dataset order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_features_path: Option<String>,
    /// Treat the target as a perturbation relative to the original features.
    #[serde(default)]
    pub target_is_perturbation: bool,
    #[serde(default)]
    pub direction: ScoreDirection,
}

impl ScorerSpec {
    pub fn classifier_loss() -> Self {
        ScorerSpec {
            kind: ScoreKind::ClassifierLoss,
            loss: LossKind::CrossEntropy,
            target_label: None,
            distance: None,
            target_features: None,
            target_features_path: None,
            target_is_perturbation: false,
            direction: ScoreDirection::Maximize,
        }
    }

    pub fn targeted(label: usize) -> Self {
        ScorerSpec {
            target_label: Some(label),
            ..Self::classifier_loss()
        }
    }

    pub fn feature_distance(distance: DistanceKind, target: Option<Vec<f64>>) -> Self {
        ScorerSpec {
            kind: ScoreKind::FeatureDistance,
            distance: Some(distance),
            target_features: target,
            ..Self::classifier_loss()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ScoreKind::FeatureDistance {
            if self.distance.is_none() {
                return Err(Error::invalid("feature_distance scoring needs a `distance`"));
            }
            if self.target_features.is_none() && self.target_features_path.is_none() {
                return Err(Error::invalid(
                    "feature_distance scoring needs `target_features` or `target_features_path`",
                ));
            }
            if let Some(DistanceKind::Lp(p)) = self.distance {
                if !(p.is_finite() && p >= 1.0) {
                    return Err(Error::invalid(format!("lp distance needs p >= 1, got {p}")));
                }
            }
        }
        Ok(())
    }

    fn signed(&self, value: f64) -> f64 {
        match self.direction {
            ScoreDirection::Maximize => value,
            ScoreDirection::Minimize => -value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexScore {
    pub value: f64,
    pub is_adversarial: bool,
    pub predicted_label: usize,
    /// Set when the score is a convention rather than a measurement
    /// (cosine similarity of a zero perturbation).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Untargeted: any label other than the original. Targeted: the target label.
pub fn is_goal(predicted_label: usize, original_label: usize, target_label: Option<usize>) -> bool {
    match target_label {
        Some(t) => predicted_label == t,
        None => predicted_label != original_label,
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

pub fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty probability vector".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!("non-finite or negative entry in {probs:?}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// `-ln p[label]` with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].clamp(PROB_FLOOR, 1.0).ln()
}

/// Classifier-loss score: cross-entropy against the original label
/// (untargeted) or negative cross-entropy against the target label.
pub fn score_classifier_loss(probs: &[f64], original_label: usize, spec: &ScorerSpec) -> Result<VertexScore> {
    check_distribution(probs)?;
    let n = probs.len();
    for label in std::iter::once(original_label).chain(spec.target_label) {
        if label >= n {
            return Err(Error::LabelOutOfRange { label, num_classes: n });
        }
    }
    let value = match spec.target_label {
        None => cross_entropy(probs, original_label),
        Some(t) => -cross_entropy(probs, t),
    };
    let predicted = argmax(probs);
    Ok(VertexScore {
        value: spec.signed(value),
        is_adversarial: is_goal(predicted, original_label, spec.target_label),
        predicted_label: predicted,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceScore {
    pub value: f64,
    pub zero_perturbation: bool,
}

fn lp_distance(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Feature-distance score. `l2`/`lp` return the negated distance; cosine
/// mode returns the cosine similarity of the perturbations directly.
pub fn score_feature_distance(
    features: &[f64],
    target: &[f64],
    distance: DistanceKind,
    baseline: Option<&[f64]>,
    target_is_perturbation: bool,
) -> Result<DistanceScore> {
    if features.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            found: features.len(),
        });
    }
    if let Some(b) = baseline {
        if b.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: b.len(),
            });
        }
    }
    let sub = |x: &[f64], b: &[f64]| x.iter().zip(b).map(|(a, c)| a - c).collect::<Vec<_>>();
    match distance {
        DistanceKind::L2 | DistanceKind::Lp(_) => {
            let (cur, tgt) = match (baseline, target_is_perturbation) {
                (Some(b), true) => (sub(features, b), target.to_vec()),
                _ => (features.to_vec(), target.to_vec()),
            };
            let d = match distance {
                DistanceKind::Lp(p) => lp_distance(&cur, &tgt, p),
                _ => l2(&cur, &tgt),
            };
            Ok(DistanceScore {
                value: -d,
                zero_perturbation: false,
            })
        }
        DistanceKind::CosineSimilarity => {
            let b = baseline.ok_or_else(|| Error::invalid("cosine similarity scoring needs baseline features"))?;
            let pert = sub(features, b);
            let tgt = if target_is_perturbation { target.to_vec() } else { sub(target, b) };
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (np, nt) = (norm(&pert), norm(&tgt));
            if np == 0.0 || nt == 0.0 {
                return Ok(DistanceScore {
                    value: 0.0,
                    zero_perturbation: true,
                });
            }
            let dot: f64 = pert.iter().zip(&tgt).map(|(a, c)| a * c).sum();
            Ok(DistanceScore {
                value: dot / (np * nt),
                zero_perturbation: false,
            })
        }
    }
}

/// User-defined scoring function. Receives the model output and features of
/// the vertex and returns a value where higher is better.
pub trait ScoreFunction: Send + Sync {
    fn score(&self, probs: &[f64], features: &[f64], original_label: usize, baseline: Option<&[f64]>) -> Result<f64>;
}

/// A scorer spec with its custom hook resolved.
#[derive(Clone)]
pub struct Scorer {
    pub spec: ScorerSpec,
    custom: Option<Arc<dyn ScoreFunction>>,
}

impl fmt::Debug for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scorer").field("spec", &self.spec).finish()
    }
}

impl Scorer {
    pub fn new(spec: ScorerSpec, registry: &Registry) -> Result<Self> {
        spec.validate()?;
        let custom = match &spec.kind {
            ScoreKind::Custom(name) => Some(
                registry
                    .scorer(name)
                    .ok_or_else(|| Error::invalid(format!("scorer `{name}` is not registered")))?,
            ),
            _ => None,
        };
        Ok(Scorer { spec, custom })
    }

    pub fn classifier_loss() -> Self {
        Scorer {
            spec: ScorerSpec::classifier_loss(),
            custom: None,
        }
    }
}

/// Scores vertices for one sample: owns the model, extractor, original label
/// and (for feature distance) target and baseline features.
#[derive(Clone)]
pub struct Objective {
    model: Arc<ModelHandle>,
    extractor: Arc<dyn FeatureExtractor>,
    scorer: Scorer,
    original_label: usize,
    target_features: Option<Vec<f64>>,
    baseline: Option<Vec<f64>>,
    evaluations: Arc<AtomicU64>,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("scorer", &self.scorer)
            .field("original_label", &self.original_label)
            .finish()
    }
}

impl Objective {
    /// Builds the objective for `original`. When `label` is `None` the
    /// model's prediction on the original is used, which costs one query.
    pub fn for_sample(
        scorer: &Scorer,
        model: Arc<ModelHandle>,
        extractor: Arc<dyn FeatureExtractor>,
        original: &InputState,
        label: Option<usize>,
        target_features: Option<Vec<f64>>,
    ) -> Result<Self> {
        let baseline = extractor.extract(original)?;
        let original_label = match label {
            Some(l) => l,
            None => argmax(&model.predict_one(&baseline)?),
        };
        if original_label >= model.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: original_label,
                num_classes: model.num_classes(),
            });
        }
        let target_features = target_features.or_else(|| scorer.spec.target_features.clone());
        if scorer.spec.kind == ScoreKind::FeatureDistance {
            let target = target_features
                .as_ref()
                .ok_or_else(|| Error::invalid("no target features for feature_distance scoring"))?;
            if target.len() != baseline.len() {
                return Err(Error::DimensionMismatch {
                    expected: baseline.len(),
                    found: target.len(),
                });
            }
        }
        Ok(Objective {
            model,
            extractor,
            scorer: scorer.clone(),
            original_label,
            target_features,
            baseline: Some(baseline),
            evaluations: Arc::new(AtomicU64::new(0)),
        })
    }

    /// Vertices evaluated through this objective (shared by clones).
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn original_label(&self) -> usize {
        self.original_label
    }

    pub fn target_label(&self) -> Option<usize> {
        self.scorer.spec.target_label
    }

    pub fn model(&self) -> &Arc<ModelHandle> {
        &self.model
    }

    pub fn extractor(&self) -> &Arc<dyn FeatureExtractor> {
        &self.extractor
    }

    /// Scores a vertex with exactly one model query.
    pub fn evaluate(&self, state: &InputState) -> Result<VertexScore> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let features = self.extractor.extract(state)?;
        let probs = self.model.predict_one(&features)?;
        self.score_from(&probs, &features)
    }

    pub fn score_from(&self, probs: &[f64], features: &[f64]) -> Result<VertexScore> {
        let spec = &self.scorer.spec;
        match &spec.kind {
            ScoreKind::ClassifierLoss => score_classifier_loss(probs, self.original_label, spec),
            ScoreKind::FeatureDistance => {
                check_distribution(probs)?;
                let target = self.target_features.as_deref().unwrap_or_default();
                let d = score_feature_distance(
                    features,
                    target,
                    spec.distance.unwrap_or(DistanceKind::L2),
                    self.baseline.as_deref(),
                    spec.target_is_perturbation,
                )?;
                let predicted = argmax(probs);
                Ok(VertexScore {
                    value: spec.signed(d.value),
                    is_adversarial: is_goal(predicted, self.original_label, spec.target_label),
                    predicted_label: predicted,
                    degenerate: d.zero_perturbation,
                })
            }
            ScoreKind::Custom(_) => {
                check_distribution(probs)?;
                let f = self.scorer.custom.as_ref().expect("custom scorer resolved at construction");
                let value = f.score(probs, features, self.original_label, self.baseline.as_deref())?;
                if !value.is_finite() {
                    return Err(Error::invalid(format!("custom scorer returned {value}")));
                }
                let predicted = argmax(probs);
                Ok(VertexScore {
                    value: spec.signed(value),
                    is_adversarial: is_goal(predicted, self.original_label, spec.target_label),
                    predicted_label: predicted,
                    degenerate: false,
                })
            }
        }
    }
}
