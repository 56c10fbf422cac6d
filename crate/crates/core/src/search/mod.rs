//! Graph exploration: beam search and simulated annealing, plus the batch
//! driver that runs either over many samples.

pub mod anneal;
pub mod batch;
pub mod beam;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::state::{Edge, InputState};

pub use anneal::{simulated_annealing, AnnealParams};
pub use batch::{explore_batch, Explorer, GenerationRecord, MetricsReport, Sample, SearchParams};
pub use beam::{beam_search, BeamParams};

/// What one exploration produced, before timing is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub final_state: InputState,
    pub edges: Vec<Edge>,
    pub success: bool,
    pub best_score: f64,
    pub original_score: f64,
    pub predicted_label: usize,
}

/// How elapsed time is measured.
///
/// `Virtual` advances a fixed amount per evaluated vertex, which makes time
/// budgets and reported timings reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClockKind {
    #[default]
    Wall,
    Virtual { seconds_per_evaluation: f64 },
}

impl ClockKind {
    pub fn validate(&self) -> crate::error::Result<()> {
        if let ClockKind::Virtual { seconds_per_evaluation } = *self {
            if !(seconds_per_evaluation > 0.0 && seconds_per_evaluation.is_finite()) {
                return Err(crate::error::Error::invalid("seconds_per_evaluation must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Clock {
    kind: ClockKind,
    start: Instant,
}

impl Clock {
    pub fn start(kind: ClockKind) -> Self {
        Clock {
            kind,
            start: Instant::now(),
        }
    }

    /// Seconds since `start`, given the number of evaluations so far.
    pub fn elapsed(&self, evaluations: u64) -> f64 {
        match self.kind {
            ClockKind::Wall => self.start.elapsed().as_secs_f64(),
            ClockKind::Virtual { seconds_per_evaluation } => evaluations as f64 * seconds_per_evaluation,
        }
    }
}
