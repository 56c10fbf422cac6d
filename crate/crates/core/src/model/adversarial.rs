//! Adversarial training: each epoch swaps part of the training set for
//! adversarial objects found against the model as it currently stands.

use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::builtin::BuiltinModel;
use super::train::{accuracy, train_epoch, TrainParams, TrainReport};
use super::ModelHandle;
use crate::error::{Error, Result};
use crate::search::{Explorer, Sample};
use crate::state::InputState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvTrainParams {
    pub train: TrainParams,
    /// Fraction of the training set replaced by adversarial objects each epoch.
    pub mix_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainReport {
    #[serde(flatten)]
    pub train: TrainReport,
    /// Explorations run over all epochs, and how many found an adversarial object.
    pub explorations: usize,
    pub adversarial_found: usize,
}

/// Trains `model` in place. With `mix_ratio == 0` the weight trajectory is
/// identical to [`train_builtin`](super::train::train_builtin) with the same
/// parameters: the shuffle stream never sees the attack's random draws.
pub fn adversarial_train(
    model: &mut BuiltinModel,
    states: &[InputState],
    labels: &[usize],
    explorer: &Explorer,
    params: &AdvTrainParams,
) -> Result<AdvTrainReport> {
    if !(0.0..=1.0).contains(&params.mix_ratio) {
        return Err(Error::invalid("mix_ratio must lie in [0, 1]"));
    }
    if states.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: states.len(),
            found: labels.len(),
        });
    }
    let clean: Vec<Vec<f64>> = states
        .iter()
        .map(|s| explorer.extractor.extract(s))
        .collect::<Result<_>>()?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(params.train.seed);
    let mut picker = ChaCha8Rng::seed_from_u64(params.train.seed);
    picker.set_stream(1);
    let replace = (params.mix_ratio * states.len() as f64).round() as usize;
    let mut explorations = 0;
    let mut found = 0;
    let mut final_loss = f64::NAN;
    for epoch in 0..params.train.epochs {
        let mut x = clean.clone();
        if replace > 0 {
            let chosen = index::sample(&mut picker, states.len(), replace).into_vec();
            let handle = Arc::new(ModelHandle::builtin(model.clone()));
            let attacker = explorer.clone().with_seed(explorer.seed ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let records: Vec<_> = chosen
                .par_iter()
                .map(|&i| attacker.explore(i, &Sample::labelled(states[i].clone(), labels[i]), &handle))
                .collect();
            for (&i, rec) in chosen.iter().zip(&records) {
                explorations += 1;
                if rec.success && !rec.edge_sequence.is_empty() {
                    found += 1;
                }
                if rec.error.is_none() {
                    x[i] = explorer.extractor.extract(&rec.final_state)?;
                }
            }
        }
        final_loss = train_epoch(model, &x, labels, &params.train, &mut shuffle)?;
    }
    Ok(AdvTrainReport {
        train: TrainReport {
            epochs: params.train.epochs,
            final_loss,
            train_accuracy: accuracy(model, &clean, labels),
        },
        explorations,
        adversarial_found: found,
    })
}
