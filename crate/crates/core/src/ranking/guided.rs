//! Model-guided ranker: a linear action-value model over a hashed state
//! feature map, trained with temporal-difference updates while the source of
//! each action shifts from a pre-generated "ideal" walk towards the policy.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sort_desc, unscored, RankedEdges};
use crate::constraints::BudgetLedger;
use crate::error::{Error, Result};
use crate::scoring::Objective;
use crate::state::{Edge, EdgeKey, InputState};
use crate::transform::InputModel;

/// Probabilities of drawing the next action from each source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceMix {
    pub ideal: f64,
    pub policy: f64,
    pub random: f64,
}

impl SourceMix {
    fn validate(&self) -> Result<()> {
        let parts = [self.ideal, self.policy, self.random];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("source mix {self:?} is not a distribution")));
        }
        Ok(())
    }
}

/// Linear interpolation between `start` (first episode) and `end` (last).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSchedule {
    pub start: SourceMix,
    pub end: SourceMix,
}

impl Default for MixSchedule {
    fn default() -> Self {
        MixSchedule {
            start: SourceMix {
                ideal: 0.7,
                policy: 0.1,
                random: 0.2,
            },
            end: SourceMix {
                ideal: 0.1,
                policy: 0.7,
                random: 0.2,
            },
        }
    }
}

impl MixSchedule {
    pub fn validate(&self) -> Result<()> {
        self.start.validate()?;
        self.end.validate()?;
        if self.end.policy < self.start.policy {
            return Err(Error::invalid("policy share must not decrease over training"));
        }
        Ok(())
    }

    pub fn at(&self, episode: usize, episodes: usize) -> SourceMix {
        let f = if episodes <= 1 {
            0.0
        } else {
            episode.min(episodes - 1) as f64 / (episodes - 1) as f64
        };
        let lerp = |a: f64, b: f64| (1.0 - f) * a + f * b;
        SourceMix {
            ideal: lerp(self.start.ideal, self.end.ideal),
            policy: lerp(self.start.policy, self.end.policy),
            random: lerp(self.start.random, self.end.random),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidedParams {
    pub episodes: usize,
    /// Length of the pre-generated ideal walk and of each episode.
    pub horizon: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Weight of the score improvement in the reward; the rest rewards
    /// agreement with the ideal walk.
    pub blend: f64,
    pub feature_dim: usize,
    pub schedule: MixSchedule,
    pub seed: u64,
}

impl Default for GuidedParams {
    fn default() -> Self {
        GuidedParams {
            episodes: 200,
            horizon: 3,
            gamma: 0.9,
            learning_rate: 0.01,
            blend: 0.5,
            feature_dim: 64,
            schedule: MixSchedule::default(),
            seed: 0,
        }
    }
}

impl GuidedParams {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::invalid("guided training needs at least one episode"));
        }
        if self.horizon == 0 || self.feature_dim < 2 {
            return Err(Error::invalid("horizon must be ≥ 1 and feature_dim ≥ 2"));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.blend) || !(self.learning_rate >= 0.0) {
            return Err(Error::invalid("gamma must be in [0,1), blend in [0,1], learning_rate ≥ 0"));
        }
        self.schedule.validate()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedPolicy {
    pub feature_dim: usize,
    /// Arity of the states the policy was trained on.
    pub arity: usize,
    weights: BTreeMap<EdgeKey, Vec<f64>>,
}

pub const GUIDED_FORMAT: &str = "evgraph-guided";
pub const GUIDED_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    version: u32,
    feature_dim: usize,
    arity: usize,
    weights: Vec<PolicyEntry>,
}

#[derive(Serialize, Deserialize)]
struct PolicyEntry {
    #[serde(flatten)]
    key: EdgeKey,
    w: Vec<f64>,
}

impl GuidedPolicy {
    pub fn new(feature_dim: usize, arity: usize) -> Self {
        GuidedPolicy {
            feature_dim,
            arity,
            weights: BTreeMap::new(),
        }
    }

    /// Slot 0 is a bias; every leaf hashes into the remaining slots.
    pub fn features(&self, state: &InputState) -> Result<Vec<f64>> {
        if state.arity() != self.arity {
            return Err(Error::FeatureMapMismatch {
                expected: self.arity,
                found: state.arity(),
            });
        }
        let d = self.feature_dim;
        let slot = |key: String| 1 + (fnv1a(key.as_bytes()) % (d as u64 - 1)) as usize;
        let mut phi = vec![0.0; d];
        phi[0] = 1.0;
        for (i, leaf) in state.leaves().into_iter().enumerate() {
            match leaf {
                InputState::Int(_) | InputState::Float(_) => {
                    phi[slot(format!("{i}#num"))] += leaf.as_f64().unwrap().tanh();
                }
                InputState::Text(t) => {
                    let chars: Vec<char> = t.chars().collect();
                    let n = chars.len().max(1) as f64;
                    phi[slot(format!("{i}#len"))] += chars.len() as f64 / 16.0;
                    for c in &chars {
                        phi[slot(format!("{i}#c{c}"))] += 1.0 / n;
                    }
                }
                other => phi[slot(format!("{i}={other}"))] += 1.0,
            }
        }
        Ok(phi)
    }

    pub fn value(&self, phi: &[f64], key: &EdgeKey) -> f64 {
        self.weights
            .get(key)
            .map_or(0.0, |w| w.iter().zip(phi).map(|(a, b)| a * b).sum())
    }

    pub fn weights(&self, key: &EdgeKey) -> Option<&[f64]> {
        self.weights.get(key).map(Vec::as_slice)
    }

    /// One temporal-difference step towards `reward + gamma * max_a' Q(s', a')`
    /// (no bootstrap when `next` is `None`). Returns the TD error.
    pub fn td_update(
        &mut self,
        phi: &[f64],
        key: &EdgeKey,
        reward: f64,
        next: Option<(&[f64], &[EdgeKey])>,
        gamma: f64,
        lr: f64,
    ) -> Result<f64> {
        let future = match next {
            Some((phi2, keys)) if !keys.is_empty() => keys
                .iter()
                .map(|k| self.value(phi2, k))
                .fold(f64::NEG_INFINITY, f64::max),
            _ => 0.0,
        };
        let err = reward + gamma * future - self.value(phi, key);
        let w = self
            .weights
            .entry(key.clone())
            .or_insert_with(|| vec![0.0; phi.len()]);
        for (wi, xi) in w.iter_mut().zip(phi) {
            *wi += lr * err * xi;
        }
        if !err.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("value weights for {key:?} became non-finite")));
        }
        Ok(err)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PolicyFile {
            format: GUIDED_FORMAT.into(),
            version: GUIDED_VERSION,
            feature_dim: self.feature_dim,
            arity: self.arity,
            weights: self
                .weights
                .iter()
                .map(|(k, w)| PolicyEntry {
                    key: k.clone(),
                    w: w.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text)?;
        if file.format != GUIDED_FORMAT || file.version != GUIDED_VERSION {
            return Err(Error::Format(format!(
                "expected {GUIDED_FORMAT} v{GUIDED_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let mut policy = GuidedPolicy::new(file.feature_dim, file.arity);
        for e in file.weights {
            if e.w.len() != file.feature_dim {
                return Err(Error::FeatureMapMismatch {
                    expected: file.feature_dim,
                    found: e.w.len(),
                });
            }
            policy.weights.insert(e.key, e.w);
        }
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Ideal,
    Policy,
    Random,
}

fn draw_source(mix: SourceMix, rng: &mut ChaCha8Rng) -> Source {
    let u: f64 = rng.gen();
    if u < mix.ideal {
        Source::Ideal
    } else if u < mix.ideal + mix.policy {
        Source::Policy
    } else {
        Source::Random
    }
}

fn random_walk(
    start: &InputState,
    input_model: &InputModel,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Edge>> {
    let mut state = start.clone();
    let mut ledger = BudgetLedger::new(start.clone());
    let mut walk = Vec::new();
    for _ in 0..horizon {
        let mut succ = input_model.successors(&state, &ledger)?;
        if succ.is_empty() {
            break;
        }
        let (edge, next) = succ.swap_remove(rng.gen_range(0..succ.len()));
        ledger.record(&edge);
        walk.push(edge);
        state = next;
    }
    Ok(walk)
}

/// Trains a policy over `samples` (cycled in order, one per episode).
pub fn train_guided_policy(
    samples: &[InputState],
    input_model: &InputModel,
    mut objective_for: impl FnMut(&InputState) -> Result<Objective>,
    params: &GuidedParams,
) -> Result<GuidedPolicy> {
    params.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("guided training needs at least one sample"))?;
    let mut policy = GuidedPolicy::new(params.feature_dim, first.arity());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for episode in 0..params.episodes {
        let sample = &samples[episode % samples.len()];
        let objective = objective_for(sample)?;
        let ideal = random_walk(sample, input_model, params.horizon, &mut rng)?;
        let mix = params.schedule.at(episode, params.episodes);

        let mut ledger = BudgetLedger::new(sample.clone());
        let mut score = objective.evaluate(sample)?.value;
        let mut succ = input_model.successors(sample, &ledger)?;
        let mut phi = policy.features(sample)?;
        for t in 0..params.horizon {
            if succ.is_empty() {
                break;
            }
            let ideal_idx = ideal.get(t).and_then(|e| succ.iter().position(|(c, _)| c == e));
            let idx = match (draw_source(mix, &mut rng), ideal_idx) {
                (Source::Ideal, Some(i)) => i,
                (Source::Policy, _) => {
                    let mut best = 0;
                    let mut best_q = f64::NEG_INFINITY;
                    for (i, (e, _)) in succ.iter().enumerate() {
                        let q = policy.value(&phi, &e.key());
                        if q > best_q {
                            best = i;
                            best_q = q;
                        }
                    }
                    best
                }
                _ => rng.gen_range(0..succ.len()),
            };
            let (edge, next) = succ[idx].clone();
            let v = objective.evaluate(&next)?;
            let matched = ideal.get(t) == Some(&edge);
            let reward = params.blend * (v.value - score) + (1.0 - params.blend) * f64::from(u8::from(matched));
            ledger.record(&edge);
            let terminal = v.is_adversarial || t + 1 == params.horizon;
            let next_succ = if terminal {
                Vec::new()
            } else {
                input_model.successors(&next, &ledger)?
            };
            let next_phi = policy.features(&next)?;
            let next_keys: Vec<EdgeKey> = next_succ.iter().map(|(e, _)| e.key()).collect();
            let bootstrap = (!terminal).then_some((next_phi.as_slice(), next_keys.as_slice()));
            policy.td_update(&phi, &edge.key(), reward, bootstrap, params.gamma, params.learning_rate)?;
            if terminal {
                break;
            }
            score = v.value;
            succ = next_succ;
            phi = next_phi;
        }
    }
    Ok(policy)
}

/// Orders edges by predicted value; no model queries.
pub fn rank_guided(state: &InputState, edges: &[Edge], policy: &GuidedPolicy) -> Result<RankedEdges> {
    let phi = policy.features(state)?;
    let mut entries: Vec<_> = edges
        .iter()
        .enumerate()
        .map(|(i, e)| unscored(i, e.clone(), policy.value(&phi, &e.key())))
        .collect();
    sort_desc(&mut entries);
    Ok(RankedEdges {
        entries,
        unusable: Vec::new(),
        sorted: true,
    })
}
