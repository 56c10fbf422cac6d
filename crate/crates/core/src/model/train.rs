//! Seeded minibatch SGD for the built-in models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::builtin::BuiltinModel;
use super::Classifier;
use crate::error::{Error, Result};
use crate::scoring::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// L2 penalty applied to every parameter.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 50,
            lr: 0.1,
            batch_size: 32,
            l2: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

fn check_data(model: &BuiltinModel, x: &[Vec<f64>], y: &[usize]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if let Some(row) = x.iter().find(|r| r.len() != model.feature_dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim(),
            found: row.len(),
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= model.num_classes()) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: model.num_classes(),
        });
    }
    Ok(())
}

/// One pass over the data in an order drawn from `rng`; returns the mean loss.
pub fn train_epoch(
    model: &mut BuiltinModel,
    x: &[Vec<f64>],
    y: &[usize],
    params: &TrainParams,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    check_data(model, x, y)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(rng);
    let mut grad = vec![0.0; model.params().len()];
    let mut total = 0.0;
    for batch in order.chunks(params.batch_size.max(1)) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &i in batch {
            total += model.loss_grad(&x[i], y[i], &mut grad);
        }
        let scale = params.lr / batch.len() as f64;
        let decay = params.lr * params.l2;
        for (p, g) in model.params_mut().iter_mut().zip(&grad) {
            *p -= scale * g + decay * *p;
        }
    }
    let mean = total / x.len() as f64;
    if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence(format!("training loss became {mean}")));
    }
    Ok(mean)
}

pub fn accuracy(model: &BuiltinModel, x: &[Vec<f64>], y: &[usize]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let hits = x
        .iter()
        .zip(y)
        .filter(|(row, &label)| argmax(&model.probabilities(row)) == label)
        .count();
    hits as f64 / x.len() as f64
}

/// Trains in place. The shuffle order depends only on `params.seed`, so
/// equal inputs give bit-identical weights.
pub fn train_builtin(model: &mut BuiltinModel, x: &[Vec<f64>], y: &[usize], params: &TrainParams) -> Result<TrainReport> {
    check_data(model, x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut final_loss = f64::NAN;
    for _ in 0..params.epochs {
        final_loss = train_epoch(model, x, y, params, &mut rng)?;
    }
    Ok(TrainReport {
        epochs: params.epochs,
        final_loss,
        train_accuracy: accuracy(model, x, y),
    })
}
