use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SearchOutcome;
use crate::constraints::BudgetLedger;
use crate::error::{Error, Result};
use crate::ranking::{Ranker, RankerKind};
use crate::scoring::{Objective, VertexScore};
use crate::state::{Edge, InputState};
use crate::transform::InputModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamParams {
    pub width: usize,
    /// Maximum number of applied edges.
    pub depth: usize,
}

impl BeamParams {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 {
            return Err(Error::invalid("beam width and depth must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Node {
    state: InputState,
    ledger: BudgetLedger,
    edges: Vec<Edge>,
    score: VertexScore,
}

impl Node {
    fn outcome(self, original_score: f64, success: bool) -> SearchOutcome {
        SearchOutcome {
            final_state: self.state,
            edges: self.edges,
            success,
            best_score: self.score.value,
            original_score,
            predicted_label: self.score.predicted_label,
        }
    }
}

/// Level-by-level expansion keeping the global top `width` successors.
/// Stops at the first goal vertex; otherwise returns the best vertex seen.
pub fn beam_search(
    original: &InputState,
    input_model: &InputModel,
    objective: &Objective,
    ranker: &Ranker,
    params: &BeamParams,
    rng: &mut ChaCha8Rng,
) -> Result<SearchOutcome> {
    params.validate()?;
    let root = Node {
        state: original.clone(),
        ledger: BudgetLedger::new(original.clone()),
        edges: Vec::new(),
        score: objective.evaluate(original)?,
    };
    let original_score = root.score.value;
    if root.score.is_adversarial {
        return Ok(root.outcome(original_score, true));
    }
    let mut best = root.clone();
    let mut beam = vec![root];
    for _ in 0..params.depth {
        let mut pool: Vec<Node> = Vec::new();
        let mut seen: HashSet<(InputState, BudgetLedger)> = HashSet::new();
        for parent in &beam {
            let candidates = input_model.successors(&parent.state, &parent.ledger)?;
            if candidates.is_empty() {
                continue;
            }
            let ranked = ranker.rank(&parent.state, &candidates, params.width, objective, rng)?;
            let take = match ranker.kind() {
                RankerKind::BruteForce => ranked.entries.len(),
                _ => params.width.min(ranked.entries.len()),
            };
            for entry in ranked.entries.into_iter().take(take) {
                let (edge, after) = &candidates[entry.index];
                let mut ledger = parent.ledger.clone();
                ledger.record(edge);
                if !seen.insert((after.clone(), ledger.clone())) {
                    continue;
                }
                let score = match entry.vertex {
                    Some(v) => v,
                    None => match objective.evaluate(after) {
                        Ok(v) => v,
                        Err(_) => continue,
                    },
                };
                let mut edges = parent.edges.clone();
                edges.push(edge.clone());
                let child = Node {
                    state: after.clone(),
                    ledger,
                    edges,
                    score,
                };
                if child.score.is_adversarial {
                    return Ok(child.outcome(original_score, true));
                }
                if child.score.value > best.score.value {
                    best = child.clone();
                }
                pool.push(child);
            }
        }
        if pool.is_empty() {
            break;
        }
        pool.sort_by(|a, b| b.score.value.total_cmp(&a.score.value));
        pool.truncate(params.width);
        beam = pool;
    }
    Ok(best.outcome(original_score, false))
}
