use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Clock, ClockKind, SearchOutcome};
use crate::constraints::BudgetLedger;
use crate::error::{Error, Result};
use crate::scoring::Objective;
use crate::state::{Edge, InputState};
use crate::transform::InputModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealParams {
    /// Seconds per sample.
    pub time_budget: f64,
    pub max_transforms: usize,
    #[serde(default = "default_temperature")]
    pub initial_temperature: f64,
    #[serde(default = "default_cooling")]
    pub cooling: f64,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_cooling() -> f64 {
    0.95
}

impl AnnealParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_budget > 0.0 && self.time_budget.is_finite()) {
            return Err(Error::invalid("time_budget must be positive"));
        }
        if self.max_transforms == 0 {
            return Err(Error::invalid("max_transforms must be at least 1"));
        }
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return Err(Error::invalid("initial_temperature must be positive"));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::invalid("cooling must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Metropolis rule: improvements always pass, a loss of `-delta` passes when
/// `u < exp(delta / T)`.
pub fn accept(delta: f64, temperature: f64, u: f64) -> bool {
    delta >= 0.0 || u < (delta / temperature).exp()
}

#[derive(Clone)]
struct Path {
    state: InputState,
    ledger: BudgetLedger,
    edges: Vec<Edge>,
    score: f64,
    predicted: usize,
}

/// Random-length random walks from the current vertex, accepted by the
/// Metropolis rule under a geometrically cooling temperature, until the time
/// budget runs out or a goal is found. Rejected proposals leave the budget
/// untouched; a path whose budget is spent restarts from the original.
pub fn simulated_annealing(
    original: &InputState,
    input_model: &InputModel,
    objective: &Objective,
    params: &AnnealParams,
    clock: ClockKind,
    rng: &mut ChaCha8Rng,
) -> Result<SearchOutcome> {
    params.validate()?;
    clock.validate()?;
    let start_evals = objective.evaluations();
    let clock = Clock::start(clock);
    let root_score = objective.evaluate(original)?;
    let fresh = || Path {
        state: original.clone(),
        ledger: BudgetLedger::new(original.clone()),
        edges: Vec::new(),
        score: root_score.value,
        predicted: root_score.predicted_label,
    };
    let finish = |p: Path, success: bool| SearchOutcome {
        final_state: p.state,
        edges: p.edges,
        success,
        best_score: p.score,
        original_score: root_score.value,
        predicted_label: p.predicted,
    };
    if root_score.is_adversarial {
        return Ok(finish(fresh(), true));
    }
    let mut current = fresh();
    let mut best = fresh();
    let mut temperature = params.initial_temperature;
    while clock.elapsed(objective.evaluations() - start_evals) < params.time_budget {
        let remaining = params.max_transforms - current.edges.len();
        if remaining == 0 {
            current = fresh();
            continue;
        }
        let length = rng.gen_range(1..=remaining);
        let mut state = current.state.clone();
        let mut ledger = current.ledger.clone();
        let mut edges = current.edges.clone();
        for _ in 0..length {
            let mut succ = input_model.successors(&state, &ledger)?;
            if succ.is_empty() {
                break;
            }
            let (edge, next) = succ.swap_remove(rng.gen_range(0..succ.len()));
            ledger.record(&edge);
            edges.push(edge);
            state = next;
        }
        if edges.len() == current.edges.len() {
            if current.edges.is_empty() {
                // The original has no admissible edge at all.
                break;
            }
            current = fresh();
            continue;
        }
        let v = objective.evaluate(&state)?;
        let proposal = Path {
            state,
            ledger,
            edges,
            score: v.value,
            predicted: v.predicted_label,
        };
        if v.is_adversarial {
            return Ok(finish(proposal, true));
        }
        let delta = v.value - current.score;
        let ok = delta >= 0.0 || accept(delta, temperature, rng.gen());
        if v.value > best.score {
            best = proposal.clone();
        }
        if ok {
            current = proposal;
        }
        temperature *= params.cooling;
    }
    Ok(finish(best, false))
}
