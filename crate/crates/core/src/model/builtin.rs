//! Multinomial logistic regression and a one-hidden-layer tanh MLP.
//!
//! Both keep their parameters in one flat vector so the trainer can treat
//! them uniformly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, Classifier, ModelKind};
use crate::error::{Error, Result};

fn logsumexp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `params = [W (classes x dim, row-major), b (classes)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_dim: usize,
    pub num_classes: usize,
    pub params: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(feature_dim: usize, num_classes: usize) -> Self {
        LogisticModel {
            feature_dim,
            num_classes,
            params: vec![0.0; num_classes * feature_dim + num_classes],
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (d, c) = (self.feature_dim, self.num_classes);
        let (w, b) = self.params.split_at(c * d);
        (0..c)
            .map(|k| b[k] + w[k * d..(k + 1) * d].iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>())
            .collect()
    }

    fn loss_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        let (d, c) = (self.feature_dim, self.num_classes);
        let z = self.logits(x);
        let p = softmax(&z);
        let (gw, gb) = grad.split_at_mut(c * d);
        for k in 0..c {
            let dz = p[k] - if k == y { 1.0 } else { 0.0 };
            gb[k] += dz;
            for (g, xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                *g += dz * xi;
            }
        }
        logsumexp(&z) - z[y]
    }
}

/// `params = [W1 (hidden x dim), b1 (hidden), W2 (classes x hidden), b2 (classes)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub feature_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub params: Vec<f64>,
}

impl MlpModel {
    /// Xavier-uniform initialisation from `seed`; biases start at zero.
    pub fn new(feature_dim: usize, hidden: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(hidden * feature_dim + hidden + num_classes * hidden + num_classes);
        let a1 = (6.0 / (feature_dim + hidden) as f64).sqrt();
        params.extend((0..hidden * feature_dim).map(|_| rng.gen_range(-a1..a1)));
        params.extend(std::iter::repeat(0.0).take(hidden));
        let a2 = (6.0 / (hidden + num_classes) as f64).sqrt();
        params.extend((0..num_classes * hidden).map(|_| rng.gen_range(-a2..a2)));
        params.extend(std::iter::repeat(0.0).take(num_classes));
        MlpModel {
            feature_dim,
            hidden,
            num_classes,
            params,
        }
    }

    fn offsets(&self) -> [usize; 4] {
        let (d, h, c) = (self.feature_dim, self.hidden, self.num_classes);
        let w1 = 0;
        let b1 = w1 + h * d;
        let w2 = b1 + h;
        let b2 = w2 + c * h;
        [w1, b1, w2, b2]
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h, c) = (self.feature_dim, self.hidden, self.num_classes);
        let [w1, b1, w2, b2] = self.offsets();
        let p = &self.params;
        let hid: Vec<f64> = (0..h)
            .map(|j| {
                let row = &p[w1 + j * d..w1 + (j + 1) * d];
                (p[b1 + j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()).tanh()
            })
            .collect();
        let z: Vec<f64> = (0..c)
            .map(|k| {
                let row = &p[w2 + k * h..w2 + (k + 1) * h];
                p[b2 + k] + row.iter().zip(&hid).map(|(w, hj)| w * hj).sum::<f64>()
            })
            .collect();
        (hid, z)
    }

    fn loss_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        let (d, h, c) = (self.feature_dim, self.hidden, self.num_classes);
        let [w1, b1, w2, b2] = self.offsets();
        let (hid, z) = self.forward(x);
        let prob = softmax(&z);
        let mut dh = vec![0.0; h];
        for k in 0..c {
            let dz = prob[k] - if k == y { 1.0 } else { 0.0 };
            grad[b2 + k] += dz;
            for j in 0..h {
                grad[w2 + k * h + j] += dz * hid[j];
                dh[j] += dz * self.params[w2 + k * h + j];
            }
        }
        for j in 0..h {
            let da = dh[j] * (1.0 - hid[j] * hid[j]);
            grad[b1 + j] += da;
            for (i, xi) in x.iter().enumerate().take(d) {
                grad[w1 + j * d + i] += da * xi;
            }
        }
        logsumexp(&z) - z[y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BuiltinModel {
    #[serde(rename = "builtin_logistic")]
    Logistic(LogisticModel),
    #[serde(rename = "builtin_mlp")]
    Mlp(MlpModel),
}

impl BuiltinModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            BuiltinModel::Logistic(_) => ModelKind::BuiltinLogistic,
            BuiltinModel::Mlp(_) => ModelKind::BuiltinMlp,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            BuiltinModel::Logistic(m) => &m.params,
            BuiltinModel::Mlp(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            BuiltinModel::Logistic(m) => &mut m.params,
            BuiltinModel::Mlp(m) => &mut m.params,
        }
    }

    /// Adds d(loss)/d(params) for one example to `grad` and returns the
    /// cross-entropy loss of that example.
    pub fn loss_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        match self {
            BuiltinModel::Logistic(m) => m.loss_grad(x, y, grad),
            BuiltinModel::Mlp(m) => m.loss_grad(x, y, grad),
        }
    }

    pub fn loss(&self, x: &[f64], y: usize) -> f64 {
        let z = self.logits(x);
        logsumexp(&z) - z[y]
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BuiltinModel::Logistic(m) => m.logits(x),
            BuiltinModel::Mlp(m) => m.forward(x).1,
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (expected, found) = match self {
            BuiltinModel::Logistic(m) => (m.num_classes * m.feature_dim + m.num_classes, m.params.len()),
            BuiltinModel::Mlp(m) => (
                m.hidden * m.feature_dim + m.hidden + m.num_classes * m.hidden + m.num_classes,
                m.params.len(),
            ),
        };
        if expected != found {
            return Err(Error::DimensionMismatch { expected, found });
        }
        if self.num_classes_() < 2 {
            return Err(Error::invalid("a classifier needs at least 2 classes"));
        }
        Ok(())
    }

    fn num_classes_(&self) -> usize {
        match self {
            BuiltinModel::Logistic(m) => m.num_classes,
            BuiltinModel::Mlp(m) => m.num_classes,
        }
    }
}

impl Classifier for BuiltinModel {
    fn num_classes(&self) -> usize {
        self.num_classes_()
    }

    fn feature_dim(&self) -> usize {
        match self {
            BuiltinModel::Logistic(m) => m.feature_dim,
            BuiltinModel::Mlp(m) => m.feature_dim,
        }
    }

    fn predict_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(batch.iter().map(|x| self.probabilities(x)).collect())
    }
}
