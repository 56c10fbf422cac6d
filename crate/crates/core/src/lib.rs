//! Config-driven generation of semantically valid adversarial inputs by
//! searching a graph whose vertices are input states and whose edges are
//! constraint-preserving transformations.
//!
//! The pieces, bottom up:
//!
//! - [`state`]: input states (vertices) and edges.
//! - [`transform`]: transformers that enumerate and apply edges.
//! - [`constraints`]: budgets, value bounds and cross-field dependencies.
//! - [`scoring`]: classifier-loss and feature-distance objectives.
//! - [`ranking`]: random, brute-force, lookup-table and guided edge rankers.
//! - [`search`]: beam search, simulated annealing and the batch driver.
//! - [`model`]: built-in classifiers, the external-process protocol,
//!   feature extractors and (adversarial) training.

pub mod constraints;
pub mod error;
pub mod model;
pub mod processor;
pub mod ranking;
pub mod registry;
pub mod scoring;
pub mod search;
pub mod state;
pub mod synth;
pub mod transform;

pub use constraints::{
    apply_dependencies, edit_distance, BudgetLedger, ConstraintSet, ConstraintSpec, DependencyFunction,
    DependencyKind, Direction, LpOrder, Violation,
};
pub use error::{Error, Result};
pub use model::features::{ColumnEncoding, DomainStats, FeatureExtractor, Identity, TabularEncoder};
pub use model::{BuiltinModel, Classifier, LogisticModel, MlpModel, ModelFile, ModelHandle, ModelKind};
pub use processor::{run_input_processor, InputProcessor, Phase, ProcessorContext, TldSplit};
pub use ranking::{DefaultWeight, EdgeWeightTable, GuidedParams, GuidedPolicy, RankedEdges, Ranker, RankerKind};
pub use registry::Registry;
pub use scoring::{is_goal, DistanceKind, Objective, ScoreKind, Scorer, ScorerSpec, VertexScore};
pub use search::{
    beam_search, explore_batch, simulated_annealing, AnnealParams, BeamParams, ClockKind, Explorer,
    GenerationRecord, MetricsReport, Sample, SearchOutcome, SearchParams,
};
pub use state::{Edge, EdgeKey, EdgeParam, InputState};
pub use transform::{ActionArgs, CustomTransformer, InputModel, Transformer, TransformerSpec, TransformerType};
