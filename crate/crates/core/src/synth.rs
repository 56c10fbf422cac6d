//! Seeded synthetic tabular task: seven modifiable categorical fields (an
//! applicant-style schema) followed by four numeric fields that no
//! transformer touches.
//!
//! Every categorical value carries a fixed effect on the latent score, so
//! which swap helps an attacker most depends on the value a record already
//! holds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::features::{ColumnEncoding, TabularEncoder};
use crate::state::InputState;
use crate::transform::{ActionArgs, TransformerSpec, TransformerType};

pub const CATEGORICAL_COLUMNS: [(&str, &[&str]); 7] = [
    ("age", &["lt25", "25_34", "35_44", "45_54", "55_64", "65_74", "gt74"]),
    (
        "score_type",
        &["equifax", "experian", "transunion", "fico_mix", "vantage", "other_one", "other_multi", "none"],
    ),
    ("underwriter", &["du", "lp", "tots", "guarantee", "other", "na"]),
    ("loan_limit", &["conforming", "nonconforming"]),
    ("loan_duration", &["short", "long"]),
    ("gender", &["a", "b"]),
    ("race", &["a", "b"]),
];

pub const NUMERIC_COLUMNS: [&str; 4] = ["income", "loan_amount", "property_value", "debt_ratio"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Weights of the numeric fields in the latent score.
    pub numeric_weights: [f64; 4],
    /// Per categorical field, standard deviation of its value effects.
    pub category_scales: [f64; 7],
    /// Standard deviation of the label noise added to the latent score.
    pub label_noise: f64,
    /// Seed of the value effects; fixed so every split shares one task.
    pub effect_seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            numeric_weights: [0.6, -0.5, 0.4, 0.5],
            category_scales: [1.3; 7],
            label_noise: 0.3,
            effect_seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub states: Vec<InputState>,
    pub labels: Vec<usize>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl SynthParams {
    /// Numeric-dominated variant: categorical effects are a fifth of the
    /// default, so hardening against swaps costs little natural accuracy.
    pub fn robustness() -> Self {
        SynthParams {
            category_scales: [0.26; 7],
            ..SynthParams::default()
        }
    }

    /// Zero-mean effect of every value of every categorical field.
    pub fn effects(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.effect_seed);
        CATEGORICAL_COLUMNS
            .iter()
            .zip(&self.category_scales)
            .map(|((_, vocab), scale)| {
                let raw: Vec<f64> = vocab.iter().map(|_| normal(&mut rng) * scale).collect();
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                raw.into_iter().map(|e| e - mean).collect()
            })
            .collect()
    }

    pub fn generate(&self, n: usize, seed: u64) -> SynthData {
        let effects = self.effects();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut states = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut fields = Vec::with_capacity(CATEGORICAL_COLUMNS.len() + NUMERIC_COLUMNS.len());
            let mut latent = 0.0;
            for ((_, vocab), effect) in CATEGORICAL_COLUMNS.iter().zip(&effects) {
                let idx = rng.gen_range(0..vocab.len());
                latent += effect[idx];
                fields.push(InputState::Categorical(vocab[idx].to_string()));
            }
            for w in &self.numeric_weights {
                let x = (normal(&mut rng) * 1e4).round() / 1e4;
                latent += w * x;
                fields.push(InputState::Float(x));
            }
            labels.push(usize::from(latent + self.label_noise * normal(&mut rng) > 0.0));
            states.push(InputState::Vector(fields));
        }
        SynthData { states, labels }
    }
}

pub fn column_names() -> Vec<&'static str> {
    CATEGORICAL_COLUMNS
        .iter()
        .map(|(name, _)| *name)
        .chain(NUMERIC_COLUMNS)
        .collect()
}

/// One categorical swap transformer per modifiable field.
pub fn transformer_specs() -> Vec<TransformerSpec> {
    CATEGORICAL_COLUMNS
        .iter()
        .enumerate()
        .map(|(i, (name, vocab))| {
            TransformerSpec::new(TransformerType::Categorical)
                .named(name)
                .at_field(i)
                .with_action(
                    "swap",
                    ActionArgs {
                        vocabulary: Some(vocab.iter().map(|v| v.to_string()).collect()),
                        ..ActionArgs::default()
                    },
                )
        })
        .collect()
}

/// One-hot for the categoricals, identity for the numerics (already unit scale).
pub fn encoder() -> TabularEncoder {
    TabularEncoder::new(
        CATEGORICAL_COLUMNS
            .iter()
            .map(|(_, vocab)| ColumnEncoding::Categorical {
                vocabulary: vocab.iter().map(|v| v.to_string()).collect(),
            })
            .chain(NUMERIC_COLUMNS.iter().map(|_| ColumnEncoding::Numeric { mean: 0.0, scale: 1.0 }))
            .collect(),
    )
}
