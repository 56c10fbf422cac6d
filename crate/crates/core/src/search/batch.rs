use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{beam_search, simulated_annealing, AnnealParams, BeamParams, Clock, ClockKind, SearchOutcome};
use crate::error::{Error, Result};
use crate::model::features::FeatureExtractor;
use crate::model::ModelHandle;
use crate::ranking::{Ranker, RankerKind};
use crate::scoring::{Objective, Scorer};
use crate::state::{Edge, InputState};
use crate::transform::InputModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "args", rename_all = "snake_case")]
pub enum SearchParams {
    BeamSearch(BeamParams),
    SimulatedAnnealing(AnnealParams),
}

impl SearchParams {
    /// Upper bound on applied edges per record.
    pub fn max_transforms(&self) -> usize {
        match self {
            SearchParams::BeamSearch(p) => p.depth,
            SearchParams::SimulatedAnnealing(p) => p.max_transforms,
        }
    }
}

/// One input to explore. `label` defaults to the model's prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: InputState,
    #[serde(default)]
    pub label: Option<usize>,
    #[serde(default)]
    pub target_features: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(state: InputState) -> Self {
        Sample {
            state,
            label: None,
            target_features: None,
        }
    }

    pub fn labelled(state: InputState, label: usize) -> Self {
        Sample {
            state,
            label: Some(label),
            target_features: None,
        }
    }
}

/// Per-sample result; one line of the results file. When `error` is set the
/// sample was not explored and both scores are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub index: usize,
    pub original: InputState,
    #[serde(rename = "final")]
    pub final_state: InputState,
    pub edge_sequence: Vec<Edge>,
    pub success: bool,
    pub transforms_used: usize,
    pub elapsed: f64,
    pub best_score: f64,
    pub original_score: f64,
    pub original_label: usize,
    pub predicted_label: usize,
    pub evaluations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub successes: usize,
    pub errors: usize,
    pub success_rate: f64,
    /// Mean over successful records only; absent when there are none.
    pub avg_transforms: Option<f64>,
    pub avg_time_per_sample: f64,
}

impl MetricsReport {
    pub fn from_records(records: &[GenerationRecord]) -> Self {
        let samples = records.len();
        let successes: Vec<&GenerationRecord> = records.iter().filter(|r| r.success).collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| xs.sum::<f64>() / n as f64;
        MetricsReport {
            samples,
            successes: successes.len(),
            errors: records.iter().filter(|r| r.error.is_some()).count(),
            success_rate: if samples == 0 {
                0.0
            } else {
                successes.len() as f64 / samples as f64
            },
            avg_transforms: (!successes.is_empty())
                .then(|| mean(&mut successes.iter().map(|r| r.transforms_used as f64), successes.len())),
            avg_time_per_sample: if samples == 0 {
                0.0
            } else {
                mean(&mut records.iter().map(|r| r.elapsed), samples)
            },
        }
    }
}

/// Everything needed to explore a sample except the model.
#[derive(Clone)]
pub struct Explorer {
    pub input_model: Arc<InputModel>,
    pub scorer: Scorer,
    pub ranker: Ranker,
    pub search: SearchParams,
    pub extractor: Arc<dyn FeatureExtractor>,
    pub clock: ClockKind,
    pub seed: u64,
}

impl std::fmt::Debug for Explorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Explorer")
            .field("input_model", &self.input_model)
            .field("scorer", &self.scorer)
            .field("ranker", &self.ranker.kind())
            .field("search", &self.search)
            .field("clock", &self.clock)
            .field("seed", &self.seed)
            .finish()
    }
}

impl Explorer {
    pub fn new(
        input_model: Arc<InputModel>,
        scorer: Scorer,
        ranker: Ranker,
        search: SearchParams,
        extractor: Arc<dyn FeatureExtractor>,
    ) -> Result<Self> {
        let explorer = Explorer {
            input_model,
            scorer,
            ranker,
            search,
            extractor,
            clock: ClockKind::Wall,
            seed: 0,
        };
        explorer.validate()?;
        Ok(explorer)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_clock(mut self, clock: ClockKind) -> Self {
        self.clock = clock;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.search {
            SearchParams::BeamSearch(p) => p.validate()?,
            SearchParams::SimulatedAnnealing(p) => {
                p.validate()?;
                if self.ranker.kind() != RankerKind::Random {
                    return Err(Error::InvalidPairing(format!(
                        "simulated_annealing proposes edges uniformly and cannot use the {:?} ranker",
                        self.ranker.kind()
                    )));
                }
            }
        }
        self.clock.validate()
    }

    /// Random stream for sample `index`: independent of worker scheduling.
    pub fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    pub fn objective(&self, sample: &Sample, model: &Arc<ModelHandle>) -> Result<Objective> {
        Objective::for_sample(
            &self.scorer,
            model.clone(),
            self.extractor.clone(),
            &sample.state,
            sample.label,
            sample.target_features.clone(),
        )
    }

    fn search(&self, sample: &Sample, objective: &Objective, rng: &mut ChaCha8Rng) -> Result<SearchOutcome> {
        match &self.search {
            SearchParams::BeamSearch(p) => {
                beam_search(&sample.state, &self.input_model, objective, &self.ranker, p, rng)
            }
            SearchParams::SimulatedAnnealing(p) => {
                simulated_annealing(&sample.state, &self.input_model, objective, p, self.clock, rng)
            }
        }
    }

    /// Explores one sample. Failures are captured in the record.
    pub fn explore(&self, index: usize, sample: &Sample, model: &Arc<ModelHandle>) -> GenerationRecord {
        let clock = Clock::start(self.clock);
        let mut rng = self.rng_for(index);
        let failed = |error: String, label: usize, evaluations: u64| GenerationRecord {
            index,
            original: sample.state.clone(),
            final_state: sample.state.clone(),
            edge_sequence: Vec::new(),
            success: false,
            transforms_used: 0,
            elapsed: clock.elapsed(evaluations),
            best_score: 0.0,
            original_score: 0.0,
            original_label: label,
            predicted_label: label,
            evaluations,
            error: Some(error),
        };
        let objective = match self.objective(sample, model) {
            Ok(o) => o,
            Err(e) => return failed(e.to_string(), sample.label.unwrap_or(0), 0),
        };
        let outcome = match self.search(sample, &objective, &mut rng) {
            Ok(o) => o,
            Err(e) => return failed(e.to_string(), objective.original_label(), objective.evaluations()),
        };
        let violations = self
            .input_model
            .check_final(&outcome.final_state, &sample.state, &outcome.edges);
        if !violations.is_empty() {
            let detail: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return failed(
                format!("emitted state failed re-validation: {}", detail.join("; ")),
                objective.original_label(),
                objective.evaluations(),
            );
        }
        GenerationRecord {
            index,
            original: sample.state.clone(),
            transforms_used: outcome.edges.len(),
            final_state: outcome.final_state,
            edge_sequence: outcome.edges,
            success: outcome.success,
            elapsed: clock.elapsed(objective.evaluations()),
            best_score: outcome.best_score,
            original_score: outcome.original_score,
            original_label: objective.original_label(),
            predicted_label: outcome.predicted_label,
            evaluations: objective.evaluations(),
            error: None,
        }
    }
}

/// Runs the configured search over every sample, on `workers` threads
/// (serially when `workers <= 1`). Records come back in sample order.
pub fn explore_batch(
    explorer: &Explorer,
    samples: &[Sample],
    model: &Arc<ModelHandle>,
    workers: usize,
) -> Result<(Vec<GenerationRecord>, MetricsReport)> {
    explorer.validate()?;
    let records: Vec<GenerationRecord> = if workers <= 1 {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| explorer.explore(i, s, model))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            samples
                .par_iter()
                .enumerate()
                .map(|(i, s)| explorer.explore(i, s, model))
                .collect()
        })
    };
    let report = MetricsReport::from_records(&records);
    Ok((records, report))
}
