//! Edge ranking: decides which outgoing edges of a vertex to follow first.

pub mod guided;
pub mod lookup;

use std::sync::Arc;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{Objective, VertexScore};
use crate::state::{Edge, InputState};

pub use guided::{GuidedParams, GuidedPolicy, MixSchedule, SourceMix};
pub use lookup::{DefaultWeight, EdgeWeightTable};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    /// Position of the edge in the candidate enumeration.
    pub index: usize,
    pub edge: Edge,
    pub estimated_score: f64,
    /// Present only when the ranker visited the successor (Brute-Force).
    pub resulting_state: Option<InputState>,
    pub vertex: Option<VertexScore>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedEdges {
    pub entries: Vec<RankedEntry>,
    /// Edges whose evaluation failed, with the reason.
    pub unusable: Vec<(Edge, String)>,
    /// False for the random ranker, whose order carries no meaning.
    pub sorted: bool,
}

impl RankedEdges {
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.entries.iter().map(|e| &e.edge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerKind {
    Random,
    BruteForce,
    Lookup,
    Guided,
}

/// A configured ranker. Trained artefacts are shared read-only.
#[derive(Debug, Clone)]
pub enum Ranker {
    Random,
    BruteForce,
    Lookup {
        table: Arc<EdgeWeightTable>,
        default_weight: DefaultWeight,
    },
    Guided(Arc<GuidedPolicy>),
}

impl Ranker {
    pub fn kind(&self) -> RankerKind {
        match self {
            Ranker::Random => RankerKind::Random,
            Ranker::BruteForce => RankerKind::BruteForce,
            Ranker::Lookup { .. } => RankerKind::Lookup,
            Ranker::Guided(_) => RankerKind::Guided,
        }
    }

    /// Ranks the successors of `state`. `k` bounds how many edges the
    /// random ranker draws; the others return every candidate.
    pub fn rank(
        &self,
        state: &InputState,
        candidates: &[(Edge, InputState)],
        k: usize,
        objective: &Objective,
        rng: &mut ChaCha8Rng,
    ) -> Result<RankedEdges> {
        let edges: Vec<Edge> = candidates.iter().map(|(e, _)| e.clone()).collect();
        match self {
            Ranker::Random => rank_random(&edges, k, rng),
            Ranker::BruteForce => rank_bruteforce(candidates, objective),
            Ranker::Lookup { table, default_weight } => Ok(lookup::rank_lookup(&edges, table, *default_weight)),
            Ranker::Guided(policy) => guided::rank_guided(state, &edges, policy),
        }
    }
}

fn unscored(index: usize, edge: Edge, estimated_score: f64) -> RankedEntry {
    RankedEntry {
        index,
        edge,
        estimated_score,
        resulting_state: None,
        vertex: None,
    }
}

/// Stable descending sort; ties keep enumeration order and NaN sorts last.
pub(crate) fn sort_desc(entries: &mut [RankedEntry]) {
    entries.sort_by(|a, b| match (a.estimated_score.is_nan(), b.estimated_score.is_nan()) {
        (false, false) => b.estimated_score.partial_cmp(&a.estimated_score).unwrap(),
        (x, y) => x.cmp(&y),
    });
}

/// `k` edges drawn uniformly without replacement; no model queries.
pub fn rank_random(edges: &[Edge], k: usize, rng: &mut ChaCha8Rng) -> Result<RankedEdges> {
    if edges.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let take = k.min(edges.len());
    let entries = index::sample(rng, edges.len(), take)
        .into_iter()
        .map(|i| unscored(i, edges[i].clone(), 0.0))
        .collect();
    Ok(RankedEdges {
        entries,
        unusable: Vec::new(),
        sorted: false,
    })
}

/// Scores every successor with the true vertex score (one query each).
pub fn rank_bruteforce(candidates: &[(Edge, InputState)], objective: &Objective) -> Result<RankedEdges> {
    if candidates.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let mut out = RankedEdges {
        sorted: true,
        ..RankedEdges::default()
    };
    for (index, (edge, after)) in candidates.iter().enumerate() {
        match objective.evaluate(after) {
            Ok(v) => out.entries.push(RankedEntry {
                index,
                edge: edge.clone(),
                estimated_score: v.value,
                resulting_state: Some(after.clone()),
                vertex: Some(v),
            }),
            Err(e) => out.unusable.push((edge.clone(), e.to_string())),
        }
    }
    sort_desc(&mut out.entries);
    Ok(out)
}
