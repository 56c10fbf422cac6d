//! Explorer configuration: one JSON document naming the input schema,
//! transformers, constraints, scorer, ranker, search, extractor and model.
//!
//! Key names follow the usual explorer vocabulary (`transformer_params`,
//! `subtransformer_args`, `input_constraints`, `input_processor_name`,
//! `scoring_alg`, `ranking_alg`, `search_alg`, `multi_feature_input`,
//! `predict_function_name`). Unknown keys are rejected everywhere, and
//! relative paths resolve against the directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use evgraph_core::model::external::{ExternalConfig, ExternalExtractor};
use evgraph_core::model::train::TrainParams;
use evgraph_core::model::ExternalProcessModel;
use evgraph_core::ranking::guided::GuidedParams;
use evgraph_core::{
    BuiltinModel, ClockKind, ColumnEncoding, ConstraintSpec, DefaultWeight, DependencyFunction, DependencyKind,
    EdgeWeightTable, Error, Explorer, FeatureExtractor, GuidedPolicy, Identity, InputModel, InputState,
    LogisticModel, MlpModel, ModelFile, ModelHandle, ModelKind, Ranker, RankerKind, Registry, ScoreKind, Scorer,
    ScorerSpec, SearchParams, TabularEncoder, TransformerSpec, TransformerType,
};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{read_to_string, HarnessError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Comma-separated with a header row; every row becomes a vector state.
    #[default]
    Csv,
    /// One text state per line.
    Text,
}

/// Type and vocabulary of one dataset column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ColumnSchema {
    Categorical {
        name: String,
        vocabulary: Vec<String>,
    },
    /// Cells hold the index into a vocabulary of `size` slots.
    #[serde(rename = "onehot")]
    OneHot { name: String, size: usize },
    /// `mean` and `scale` standardise the column in the default encoder.
    Int {
        name: String,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Float {
        name: String,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Bool {
        name: String,
    },
    Text {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        charset: Option<String>,
    },
}

fn one() -> f64 {
    1.0
}

impl ColumnSchema {
    pub fn name(&self) -> &str {
        match self {
            ColumnSchema::Categorical { name, .. }
            | ColumnSchema::OneHot { name, .. }
            | ColumnSchema::Int { name, .. }
            | ColumnSchema::Float { name, .. }
            | ColumnSchema::Bool { name }
            | ColumnSchema::Text { name, .. } => name,
        }
    }

    /// Encoding used by the default tabular extractor; text has none.
    pub fn encoding(&self) -> Option<ColumnEncoding> {
        Some(match self {
            ColumnSchema::Categorical { vocabulary, .. } => ColumnEncoding::Categorical {
                vocabulary: vocabulary.clone(),
            },
            ColumnSchema::OneHot { size, .. } => ColumnEncoding::OneHot { size: *size },
            ColumnSchema::Int { mean, scale, .. } | ColumnSchema::Float { mean, scale, .. } => ColumnEncoding::Numeric {
                mean: *mean,
                scale: *scale,
            },
            ColumnSchema::Bool { .. } => ColumnEncoding::Bool,
            ColumnSchema::Text { .. } => return None,
        })
    }

    /// Parses one cell; the error says what was wrong with it.
    pub fn parse(&self, cell: &str) -> std::result::Result<InputState, String> {
        let name = self.name();
        match self {
            ColumnSchema::Categorical { vocabulary, .. } => {
                if vocabulary.iter().any(|v| v == cell) {
                    Ok(InputState::Categorical(cell.to_string()))
                } else {
                    Err(format!("`{cell}` is not in the vocabulary of column `{name}`"))
                }
            }
            ColumnSchema::OneHot { size, .. } => match cell.parse::<usize>() {
                Ok(i) if i < *size => Ok(InputState::OneHot(i)),
                _ => Err(format!("`{cell}` is not an index below {size} in column `{name}`")),
            },
            ColumnSchema::Int { .. } => cell
                .parse()
                .map(InputState::Int)
                .map_err(|_| format!("`{cell}` is not an integer in column `{name}`")),
            ColumnSchema::Float { .. } => match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(InputState::Float(v)),
                _ => Err(format!("`{cell}` is not a finite number in column `{name}`")),
            },
            ColumnSchema::Bool { .. } => match cell {
                "true" | "1" => Ok(InputState::Bool(true)),
                "false" | "0" => Ok(InputState::Bool(false)),
                _ => Err(format!("`{cell}` is not a boolean in column `{name}`")),
            },
            ColumnSchema::Text { charset, .. } => match charset {
                Some(cs) if cell.chars().any(|c| !cs.contains(c)) => {
                    Err(format!("`{cell}` leaves the charset of column `{name}`"))
                }
                _ => Ok(InputState::Text(cell.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSchema {
    #[serde(default)]
    pub format: DatasetFormat,
    /// Columns of a CSV dataset, in field order; empty for text datasets.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<ColumnSchema>,
    /// CSV column holding integer class labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    /// File with one label per dataset row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<String>,
    /// Allowed characters of text datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charset: Option<String>,
}

impl InputSchema {
    pub fn is_tabular(&self) -> bool {
        self.format == DatasetFormat::Csv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencySpec {
    pub name: String,
    /// A built-in kind (`sum`, `mean`, `max`, `min`, `copy`) or a registered hook.
    pub function: String,
    pub reads: Vec<usize>,
    pub writes: Vec<usize>,
}

/// Which training inputs a ranker is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSelection {
    /// Drawn at random (seeded) from the dataset.
    pub samples: usize,
    /// Skip inputs the model misclassifies (needs labels).
    pub only_correct: bool,
}

impl Default for SampleSelection {
    fn default() -> Self {
        SampleSelection {
            samples: 500,
            only_correct: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupArgs {
    /// Table file, written by `train-ranker` and read by `generate`.
    pub table: String,
    #[serde(default)]
    pub default_weight: DefaultWeight,
    #[serde(default)]
    pub selection: SampleSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidedArgs {
    /// Policy file, written by `train-ranker` and read by `generate`.
    pub policy: String,
    #[serde(default)]
    pub selection: SampleSelection,
    #[serde(default)]
    pub training: GuidedParams,
}

/// `{"type": ..., "args": {...}}` with a closed argument set per ranker.
#[derive(Debug, Clone, PartialEq)]
pub enum RankingAlg {
    Random,
    BruteForce,
    Lookup(LookupArgs),
    Guided(GuidedArgs),
}

impl RankingAlg {
    pub fn kind(&self) -> RankerKind {
        match self {
            RankingAlg::Random => RankerKind::Random,
            RankingAlg::BruteForce => RankerKind::BruteForce,
            RankingAlg::Lookup(_) => RankerKind::Lookup,
            RankingAlg::Guided(_) => RankerKind::Guided,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlg {
    #[serde(rename = "type")]
    kind: RankerKind,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    args: Value,
}

impl Serialize for RankingAlg {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let args = match self {
            RankingAlg::Random | RankingAlg::BruteForce => Value::Null,
            RankingAlg::Lookup(a) => serde_json::to_value(a).map_err(serde::ser::Error::custom)?,
            RankingAlg::Guided(a) => serde_json::to_value(a).map_err(serde::ser::Error::custom)?,
        };
        RawAlg { kind: self.kind(), args }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RankingAlg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawAlg::deserialize(d)?;
        let no_args = |alg: RankingAlg| match &raw.args {
            Value::Null => Ok(alg),
            Value::Object(m) if m.is_empty() => Ok(alg),
            _ => Err(de::Error::custom(format!("ranker `{:?}` takes no args", raw.kind))),
        };
        match raw.kind {
            RankerKind::Random => no_args(RankingAlg::Random),
            RankerKind::BruteForce => no_args(RankingAlg::BruteForce),
            RankerKind::Lookup => serde_json::from_value(raw.args.clone())
                .map(RankingAlg::Lookup)
                .map_err(|e| de::Error::custom(format!("lookup args: {e}"))),
            RankerKind::Guided => serde_json::from_value(raw.args.clone())
                .map(RankingAlg::Guided)
                .map_err(|e| de::Error::custom(format!("guided args: {e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtractorSpec {
    /// The state already is a numeric vector (or a single number).
    Identity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    /// One-hot and standardised columns; derived from the schema when omitted.
    BuiltinTabularEncoder {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        columns: Option<Vec<ColumnEncoding>>,
    },
    RegisteredHook {
        name: String,
    },
    ExternalProcess {
        command: Vec<String>,
        output_dim: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_pool")]
        pool_size: usize,
    },
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_pool() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    BuiltinLogistic {
        /// Model file read by `generate`; training commands write `--out`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default = "two")]
        num_classes: usize,
    },
    BuiltinMlp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default = "two")]
        num_classes: usize,
    },
    ExternalProcess(ExternalConfig),
}

fn two() -> usize {
    2
}

fn default_hidden() -> usize {
    16
}

/// Label an untargeted attack moves away from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// The model's prediction on the original input.
    #[default]
    Prediction,
    /// The dataset label (inputs the model already gets wrong succeed at once).
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub train: TrainParams,
    /// Share of the training set replaced by adversarial objects each epoch.
    pub mix_ratio: f64,
    /// Trailing share of the dataset held out for evaluation.
    pub test_fraction: f64,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        TrainingSpec {
            train: TrainParams::default(),
            mix_ratio: 0.5,
            test_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorerConfig {
    pub input_schema: InputSchema,
    pub transformer_params: Vec<TransformerSpec>,
    #[serde(default)]
    pub multi_feature_input: bool,
    /// Constraints over the whole state, across transformers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_constraints: Vec<ConstraintSpec>,
    /// Run in declaration order after every edge.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dependencies: Vec<DependencySpec>,
    #[serde(default = "ScorerSpec::classifier_loss")]
    pub scoring_alg: ScorerSpec,
    pub ranking_alg: RankingAlg,
    pub search_alg: SearchParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_extractor: Option<ExtractorSpec>,
    pub model: ModelSpec,
    #[serde(default = "default_predict")]
    pub predict_function_name: String,
    #[serde(default)]
    pub label_source: LabelSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockKind,
    #[serde(default)]
    pub training: TrainingSpec,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_predict() -> String {
    "predict".to_string()
}

/// Parses without validating. Errors carry line, column and the field path.
pub fn parse_config(text: &str, path: &Path) -> Result<ExplorerConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ExplorerConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        HarnessError::Parse {
            path: path.to_path_buf(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

/// Loads and fully validates a config against the bundled hooks.
pub fn load_config(path: &Path) -> Result<ExplorerConfig> {
    load_config_with(path, &Registry::with_builtins())
}

/// Loads and validates a config against a caller-supplied hook registry.
pub fn load_config_with(path: &Path, registry: &Registry) -> Result<ExplorerConfig> {
    let cfg = parse_config(&read_to_string(path)?, path)?;
    cfg.validate(registry)?;
    Ok(cfg)
}

fn hook_error(e: Error) -> HarnessError {
    match e {
        Error::UnknownTransformer(name) => HarnessError::UnknownTransformerType(name),
        Error::UnknownProcessor(name) => HarnessError::UnresolvedHook(format!("input processor `{name}`")),
        Error::InvalidPairing(msg) => HarnessError::InvalidPairing(msg),
        other => HarnessError::Core(other),
    }
}

impl ExplorerConfig {
    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self).map_err(Error::from)? + "\n")
    }

    pub fn validate(&self, registry: &Registry) -> Result<()> {
        self.check_schema()?;
        self.input_model(registry)?;
        self.scorer(registry)?;
        self.check_search()?;
        self.check_extractor(registry)?;
        self.check_model()?;
        self.check_training()?;
        Ok(())
    }

    fn check_schema(&self) -> Result<()> {
        let schema = &self.input_schema;
        match schema.format {
            DatasetFormat::Csv => {
                if schema.columns.is_empty() {
                    return Err(HarnessError::config("a csv input_schema needs columns"));
                }
                let mut names = HashSet::new();
                for c in &schema.columns {
                    if !names.insert(c.name()) {
                        return Err(HarnessError::config(format!("column `{}` is declared twice", c.name())));
                    }
                }
                if let Some(label) = &schema.label_column {
                    if names.contains(label.as_str()) {
                        return Err(HarnessError::config(format!("label column `{label}` is also a feature column")));
                    }
                }
                for t in &self.transformer_params {
                    match t.field {
                        Some(f) if f < schema.columns.len() => {}
                        Some(f) => {
                            return Err(HarnessError::config(format!(
                                "transformer `{}` targets field {f} but the schema has {} columns",
                                t.id(),
                                schema.columns.len()
                            )))
                        }
                        None => {
                            return Err(HarnessError::config(format!(
                                "transformer `{}` needs a `field` for tabular input",
                                t.id()
                            )))
                        }
                    }
                }
            }
            DatasetFormat::Text => {
                if !schema.columns.is_empty() || schema.label_column.is_some() {
                    return Err(HarnessError::config(
                        "a text input_schema takes no columns; give labels through labels_path",
                    ));
                }
                if let Some(t) = self.transformer_params.iter().find(|t| t.field.is_some()) {
                    return Err(HarnessError::config(format!(
                        "transformer `{}` sets a field, but text inputs have none",
                        t.id()
                    )));
                }
            }
        }
        let field_level = self.transformer_params.iter().filter(|t| t.field.is_some()).count();
        let expected = schema.is_tabular() && field_level > 1;
        if self.multi_feature_input != expected {
            return Err(HarnessError::config(format!(
                "multi_feature_input must be {expected}: it is true exactly when a tabular input has more than one field-level transformer ({field_level} here)"
            )));
        }
        Ok(())
    }

    /// Transformer specs with vocabularies and one-hot sizes filled in from
    /// the schema where the config leaves them out.
    pub fn transformer_specs(&self) -> Vec<TransformerSpec> {
        let mut specs = self.transformer_params.clone();
        for spec in &mut specs {
            let Some(column) = spec.field.and_then(|f| self.input_schema.columns.get(f)) else {
                continue;
            };
            let action = match spec.transformer_type {
                TransformerType::Categorical | TransformerType::OneHot => "swap",
                _ => continue,
            };
            if spec.subtransformer_args.is_empty() {
                spec.subtransformer_args.insert(action.to_string(), Default::default());
            }
            for args in spec.subtransformer_args.values_mut() {
                match column {
                    ColumnSchema::Categorical { vocabulary, .. } if args.vocabulary.is_none() => {
                        args.vocabulary = Some(vocabulary.clone());
                    }
                    ColumnSchema::OneHot { size, .. } if args.size.is_none() => args.size = Some(*size),
                    _ => {}
                }
            }
        }
        specs
    }

    pub fn dependency_functions(&self, registry: &Registry) -> Result<Vec<DependencyFunction>> {
        self.dependencies
            .iter()
            .map(|d| {
                let kind = match DependencyKind::builtin(&d.function) {
                    Some(k) => k,
                    None => DependencyKind::Custom(registry.dependency(&d.function).ok_or_else(|| {
                        HarnessError::UnresolvedHook(format!("dependency function `{}`", d.function))
                    })?),
                };
                Ok(DependencyFunction::new(&d.name, kind, d.reads.clone(), d.writes.clone())?)
            })
            .collect()
    }

    pub fn input_model(&self, registry: &Registry) -> Result<InputModel> {
        let deps = self.dependency_functions(registry)?;
        let model = InputModel::from_specs(&self.transformer_specs(), registry)
            .and_then(|m| m.with_global_constraints(self.input_constraints.clone()))
            .map_err(hook_error)?;
        Ok(model.with_dependencies(deps))
    }

    pub fn scorer(&self, registry: &Registry) -> Result<Scorer> {
        if let ScoreKind::Custom(name) = &self.scoring_alg.kind {
            if registry.scorer(name).is_none() {
                return Err(HarnessError::UnresolvedHook(format!("scorer `{name}`")));
            }
        }
        Ok(Scorer::new(self.scoring_alg.clone(), registry)?)
    }

    fn check_search(&self) -> Result<()> {
        match &self.search_alg {
            SearchParams::BeamSearch(p) => p.validate()?,
            SearchParams::SimulatedAnnealing(p) => {
                p.validate()?;
                if self.ranking_alg.kind() != RankerKind::Random {
                    return Err(HarnessError::InvalidPairing(format!(
                        "simulated_annealing proposes edges uniformly and cannot be paired with the {:?} ranker",
                        self.ranking_alg.kind()
                    )));
                }
            }
        }
        self.clock.validate()?;
        match &self.ranking_alg {
            RankingAlg::Lookup(a) if a.selection.samples == 0 => {
                Err(HarnessError::config("lookup training needs at least one sample"))
            }
            RankingAlg::Guided(a) => {
                if a.selection.samples == 0 {
                    return Err(HarnessError::config("guided training needs at least one sample"));
                }
                Ok(a.training.validate()?)
            }
            _ => Ok(()),
        }
    }

    fn derived_encoder(&self) -> Result<TabularEncoder> {
        if !self.input_schema.is_tabular() {
            return Err(HarnessError::config(
                "text inputs need an explicit feature_extractor (e.g. the `domain_stats` hook)",
            ));
        }
        let columns = self
            .input_schema
            .columns
            .iter()
            .map(|c| {
                c.encoding().ok_or_else(|| {
                    HarnessError::config(format!(
                        "text column `{}` has no default encoding; configure a feature_extractor",
                        c.name()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(TabularEncoder::new(columns))
    }

    fn default_identity_dim(&self) -> usize {
        if self.input_schema.is_tabular() {
            self.input_schema.columns.len()
        } else {
            1
        }
    }

    fn check_extractor(&self, registry: &Registry) -> Result<()> {
        match &self.feature_extractor {
            Some(ExtractorSpec::ExternalProcess { command, output_dim, .. }) => {
                if command.is_empty() || *output_dim == 0 {
                    return Err(HarnessError::config("external extractor needs a command and output_dim > 0"));
                }
                Ok(())
            }
            _ => self.extractor(registry).map(|_| ()),
        }
    }

    /// Builds the feature extractor; external extractors start their process.
    pub fn extractor(&self, registry: &Registry) -> Result<Arc<dyn FeatureExtractor>> {
        Ok(match &self.feature_extractor {
            None => Arc::new(self.derived_encoder()?),
            Some(ExtractorSpec::Identity { dim }) => Arc::new(Identity {
                dim: dim.unwrap_or_else(|| self.default_identity_dim()),
            }),
            Some(ExtractorSpec::BuiltinTabularEncoder { columns: Some(columns) }) => {
                Arc::new(TabularEncoder::new(columns.clone()))
            }
            Some(ExtractorSpec::BuiltinTabularEncoder { columns: None }) => Arc::new(self.derived_encoder()?),
            Some(ExtractorSpec::RegisteredHook { name }) => registry
                .extractor(name)
                .ok_or_else(|| HarnessError::UnresolvedHook(format!("feature extractor `{name}`")))?,
            Some(ExtractorSpec::ExternalProcess {
                command,
                output_dim,
                timeout_ms,
                pool_size,
            }) => Arc::new(ExternalExtractor {
                process: ExternalProcessModel::spawn(ExternalConfig {
                    command: command.clone(),
                    num_classes: 2,
                    feature_dim: 0,
                    timeout_ms: *timeout_ms,
                    pool_size: *pool_size,
                    op: "extract".into(),
                })?,
                output_dim: *output_dim,
            }),
        })
    }

    fn check_model(&self) -> Result<()> {
        if self.predict_function_name.is_empty() {
            return Err(HarnessError::config("predict_function_name must not be empty"));
        }
        match &self.model {
            ModelSpec::BuiltinLogistic { num_classes, .. } | ModelSpec::BuiltinMlp { num_classes, .. }
                if *num_classes < 2 =>
            {
                Err(HarnessError::config("a classifier needs at least 2 classes"))
            }
            ModelSpec::BuiltinMlp { hidden: 0, .. } => Err(HarnessError::config("builtin_mlp needs hidden >= 1")),
            ModelSpec::ExternalProcess(c) => {
                if c.command.is_empty() || c.num_classes < 2 || c.feature_dim == 0 {
                    return Err(HarnessError::config(
                        "external model needs a command, num_classes >= 2 and feature_dim > 0",
                    ));
                }
                if c.op != "predict" && c.op != self.predict_function_name {
                    return Err(HarnessError::config(format!(
                        "model.op `{}` conflicts with predict_function_name `{}`",
                        c.op, self.predict_function_name
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn check_training(&self) -> Result<()> {
        let t = &self.training;
        if !(0.0..=1.0).contains(&t.mix_ratio) {
            return Err(HarnessError::config("training.mix_ratio must lie in [0, 1]"));
        }
        if !(t.test_fraction > 0.0 && t.test_fraction < 1.0) {
            return Err(HarnessError::config("training.test_fraction must lie in (0, 1)"));
        }
        if t.train.epochs == 0 || t.train.batch_size == 0 {
            return Err(HarnessError::config("training.train needs epochs and batch_size >= 1"));
        }
        Ok(())
    }

    /// Opens the configured model: loads a built-in from its file or starts
    /// the external process.
    pub fn model(&self) -> Result<Arc<ModelHandle>> {
        let handle = match &self.model {
            ModelSpec::BuiltinLogistic { path, .. } | ModelSpec::BuiltinMlp { path, .. } => {
                let path = path.as_deref().ok_or_else(|| {
                    HarnessError::config("model.path is required to load a built-in model (train one with train-model)")
                })?;
                let path = self.resolve(path);
                let file = ModelFile::from_json(&read_to_string(&path)?)?;
                let expected = match self.model {
                    ModelSpec::BuiltinLogistic { .. } => ModelKind::BuiltinLogistic,
                    _ => ModelKind::BuiltinMlp,
                };
                if file.model.kind() != expected {
                    return Err(HarnessError::config(format!(
                        "{} holds a {:?} model but the config asks for {:?}",
                        path.display(),
                        file.model.kind(),
                        expected
                    )));
                }
                ModelHandle::builtin(file.model)
            }
            ModelSpec::ExternalProcess(c) => {
                let mut c = c.clone();
                c.op = self.predict_function_name.clone();
                ModelHandle::new(Arc::new(ExternalProcessModel::spawn(c)?), ModelKind::ExternalProcess)
            }
        };
        Ok(Arc::new(handle.with_predict_entry(&self.predict_function_name)))
    }

    /// A freshly initialised built-in model for training.
    pub fn fresh_model(&self, feature_dim: usize) -> Result<BuiltinModel> {
        match &self.model {
            ModelSpec::BuiltinLogistic { num_classes, .. } => {
                Ok(BuiltinModel::Logistic(LogisticModel::zeros(feature_dim, *num_classes)))
            }
            ModelSpec::BuiltinMlp {
                hidden, num_classes, ..
            } => Ok(BuiltinModel::Mlp(MlpModel::new(
                feature_dim,
                *hidden,
                *num_classes,
                self.training.train.seed,
            ))),
            ModelSpec::ExternalProcess(_) => Err(HarnessError::config("only built-in models can be trained")),
        }
    }

    /// The configured ranker, loading a trained table or policy from disk.
    pub fn ranker(&self) -> Result<Ranker> {
        Ok(match &self.ranking_alg {
            RankingAlg::Random => Ranker::Random,
            RankingAlg::BruteForce => Ranker::BruteForce,
            RankingAlg::Lookup(a) => Ranker::Lookup {
                table: Arc::new(EdgeWeightTable::from_json(&read_to_string(&self.resolve(&a.table))?)?),
                default_weight: a.default_weight,
            },
            RankingAlg::Guided(a) => {
                Ranker::Guided(Arc::new(GuidedPolicy::from_json(&read_to_string(&self.resolve(&a.policy))?)?))
            }
        })
    }

    pub fn explorer(
        &self,
        registry: &Registry,
        ranker: Ranker,
        extractor: Arc<dyn FeatureExtractor>,
        seed: u64,
    ) -> Result<Explorer> {
        let explorer = Explorer::new(
            Arc::new(self.input_model(registry)?),
            self.scorer(registry)?,
            ranker,
            self.search_alg,
            extractor,
        )
        .map_err(hook_error)?;
        Ok(explorer.with_seed(seed).with_clock(self.clock))
    }
}
