//! Transformers: typed edge enumeration and application.
//!
//! A [`Transformer`] owns one field of a vector state (or the whole state)
//! and knows how to list and apply its edges. An [`InputModel`] combines the
//! transformers of one exploration task with global constraints and
//! dependency functions, and is the only thing the search code talks to.

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::constraints::{
    apply_dependencies, BudgetLedger, ConstraintSet, ConstraintSpec, DependencyFunction, Scope, Violation,
};
use crate::error::{Error, Result};
use crate::processor::InputProcessor;
use crate::registry::Registry;
use crate::state::{Edge, EdgeParam, InputState};

pub const DEFAULT_CHARSET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";
pub const DEFAULT_RELATIVE_STEPS: [f64; 8] = [0.01, -0.01, 0.05, -0.05, 0.1, -0.1, 0.3, -0.3];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TransformerType {
    Numeric,
    Boolean,
    Categorical,
    OneHot,
    String,
    /// A transformer registered by name at runtime.
    Custom(String),
}

impl TransformerType {
    pub fn as_str(&self) -> &str {
        match self {
            TransformerType::Numeric => "numeric",
            TransformerType::Boolean => "boolean",
            TransformerType::Categorical => "categorical",
            TransformerType::OneHot => "onehot",
            TransformerType::String => "string",
            TransformerType::Custom(name) => name,
        }
    }

    pub fn parse(s: &str) -> Self {
        match s {
            "numeric" => TransformerType::Numeric,
            "boolean" => TransformerType::Boolean,
            "categorical" => TransformerType::Categorical,
            "onehot" => TransformerType::OneHot,
            "string" => TransformerType::String,
            other => TransformerType::Custom(other.to_string()),
        }
    }

    fn default_actions(&self) -> &'static [&'static str] {
        match self {
            TransformerType::Numeric => &["step"],
            TransformerType::Boolean => &["flip"],
            TransformerType::Categorical | TransformerType::OneHot => &["swap"],
            TransformerType::String => &["insert", "substitute", "delete"],
            TransformerType::Custom(_) => &[],
        }
    }

    fn accepts(&self, state: &InputState) -> bool {
        match self {
            TransformerType::Numeric => matches!(state, InputState::Int(_) | InputState::Float(_)),
            TransformerType::Boolean => matches!(state, InputState::Bool(_)),
            TransformerType::Categorical => matches!(state, InputState::Categorical(_)),
            TransformerType::OneHot => matches!(state, InputState::OneHot(_)),
            TransformerType::String => matches!(state, InputState::Text(_)),
            TransformerType::Custom(_) => true,
        }
    }
}

impl fmt::Display for TransformerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for TransformerType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TransformerType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(TransformerType::parse(&String::deserialize(d)?))
    }
}

/// Per-action initialisation arguments. Which fields apply depends on the
/// transformer type; unknown keys are rejected at load time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionArgs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub charset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_steps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absolute_steps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<String>>,
}

impl ActionArgs {
    pub fn charset(&self) -> Vec<char> {
        self.charset.as_deref().unwrap_or(DEFAULT_CHARSET).chars().collect()
    }

    /// (relative, amount) pairs in step-id order.
    pub fn steps(&self) -> Vec<(bool, f64)> {
        let rel = match (&self.relative_steps, &self.absolute_steps) {
            (None, None) => DEFAULT_RELATIVE_STEPS.to_vec(),
            (r, _) => r.clone().unwrap_or_default(),
        };
        rel.into_iter()
            .map(|a| (true, a))
            .chain(self.absolute_steps.iter().flatten().map(|&a| (false, a)))
            .collect()
    }
}

/// Declarative description of one transformer, as found in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Field index for vector (tabular) inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<usize>,
    pub transformer_type: TransformerType,
    #[serde(default)]
    pub subtransformer_args: IndexMap<String, ActionArgs>,
    #[serde(default)]
    pub input_constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_processor_name: Option<String>,
}

impl TransformerSpec {
    pub fn new(transformer_type: TransformerType) -> Self {
        TransformerSpec {
            name: None,
            field: None,
            transformer_type,
            subtransformer_args: IndexMap::new(),
            input_constraints: Vec::new(),
            input_processor_name: None,
        }
    }

    pub fn id(&self) -> String {
        match (&self.name, self.field) {
            (Some(name), _) => name.clone(),
            (None, Some(field)) => format!("f{field}"),
            (None, None) => self.transformer_type.to_string(),
        }
    }

    pub fn with_action(mut self, action: &str, args: ActionArgs) -> Self {
        self.subtransformer_args.insert(action.to_string(), args);
        self
    }

    pub fn with_constraint(mut self, c: ConstraintSpec) -> Self {
        self.input_constraints.push(c);
        self
    }

    pub fn at_field(mut self, field: usize) -> Self {
        self.field = Some(field);
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }
}

/// User-defined transformer. Enumeration and application must be
/// deterministic; the engine treats these exactly like built-ins.
pub trait CustomTransformer: Send + Sync {
    fn actions(&self) -> Vec<String>;

    /// Parameters of `action` available at `state`, in a stable order.
    fn enumerate(&self, state: &InputState, action: &str, args: &ActionArgs) -> Result<Vec<EdgeParam>>;

    fn apply(&self, state: &InputState, action: &str, param: &EdgeParam) -> Result<InputState>;
}

type EnumerateFn = dyn Fn(&InputState, &str, &ActionArgs) -> Result<Vec<EdgeParam>> + Send + Sync;
type ApplyFn = dyn Fn(&InputState, &str, &EdgeParam) -> Result<InputState> + Send + Sync;

/// Closure-backed [`CustomTransformer`].
pub struct FnTransformer {
    actions: Vec<String>,
    enumerate: Box<EnumerateFn>,
    apply: Box<ApplyFn>,
}

impl FnTransformer {
    pub fn new(
        actions: &[&str],
        enumerate: impl Fn(&InputState, &str, &ActionArgs) -> Result<Vec<EdgeParam>> + Send + Sync + 'static,
        apply: impl Fn(&InputState, &str, &EdgeParam) -> Result<InputState> + Send + Sync + 'static,
    ) -> Self {
        FnTransformer {
            actions: actions.iter().map(|s| s.to_string()).collect(),
            enumerate: Box::new(enumerate),
            apply: Box::new(apply),
        }
    }
}

impl CustomTransformer for FnTransformer {
    fn actions(&self) -> Vec<String> {
        self.actions.clone()
    }

    fn enumerate(&self, state: &InputState, action: &str, args: &ActionArgs) -> Result<Vec<EdgeParam>> {
        (self.enumerate)(state, action, args)
    }

    fn apply(&self, state: &InputState, action: &str, param: &EdgeParam) -> Result<InputState> {
        (self.apply)(state, action, param)
    }
}

/// Interface-only stand-in for executable-header transformations. Every
/// action is enumerable and applying one leaves the state unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct BinaryHeaderDemo;

impl BinaryHeaderDemo {
    pub const ACTIONS: [&'static str; 6] = [
        "toggle_packing",
        "add_section",
        "rename_section",
        "add_import",
        "remove_debug_info",
        "append_header_data",
    ];
}

impl CustomTransformer for BinaryHeaderDemo {
    fn actions(&self) -> Vec<String> {
        Self::ACTIONS.iter().map(|s| s.to_string()).collect()
    }

    fn enumerate(&self, _state: &InputState, action: &str, _args: &ActionArgs) -> Result<Vec<EdgeParam>> {
        Ok(vec![EdgeParam::Custom { value: action.to_string() }])
    }

    fn apply(&self, state: &InputState, _action: &str, _param: &EdgeParam) -> Result<InputState> {
        Ok(state.clone())
    }
}

#[derive(Clone)]
enum Kind {
    Builtin(TransformerType),
    Custom(Arc<dyn CustomTransformer>),
}

/// A compiled transformer bound to its field, processor and constraints.
#[derive(Clone)]
pub struct Transformer {
    pub id: String,
    pub field: Option<usize>,
    pub transformer_type: TransformerType,
    kind: Kind,
    actions: Vec<(String, ActionArgs)>,
    processor: Option<Arc<dyn InputProcessor>>,
    constraints: ConstraintSet,
}

impl fmt::Debug for Transformer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transformer")
            .field("id", &self.id)
            .field("field", &self.field)
            .field("type", &self.transformer_type)
            .field("actions", &self.actions.iter().map(|(a, _)| a).collect::<Vec<_>>())
            .finish()
    }
}

impl Transformer {
    pub fn compile(spec: &TransformerSpec, registry: &Registry) -> Result<Self> {
        let id = spec.id();
        let kind = match &spec.transformer_type {
            TransformerType::Custom(name) => Kind::Custom(registry.transformer(name)?),
            builtin => Kind::Builtin(builtin.clone()),
        };
        let known: Vec<String> = match &kind {
            Kind::Builtin(t) => match t {
                TransformerType::String => vec!["insert".into(), "substitute".into(), "delete".into()],
                other => other.default_actions().iter().map(|s| s.to_string()).collect(),
            },
            Kind::Custom(c) => c.actions(),
        };
        let actions: Vec<(String, ActionArgs)> = if spec.subtransformer_args.is_empty() {
            known.iter().map(|a| (a.clone(), ActionArgs::default())).collect()
        } else {
            spec.subtransformer_args.iter().map(|(a, args)| (a.clone(), args.clone())).collect()
        };
        for (action, args) in &actions {
            if !known.contains(action) {
                return Err(Error::UnknownAction {
                    transformer: id.clone(),
                    action: action.clone(),
                });
            }
            if let Some(steps) = &args.relative_steps {
                if steps.iter().any(|s| !s.is_finite() || *s <= -1.0) {
                    return Err(Error::invalid(format!("{id}.{action}: relative steps must be finite and > -1")));
                }
            }
            if let Some(vocab) = &args.vocabulary {
                if vocab.len() < 2 {
                    return Err(Error::EmptyVocabulary(id.clone()));
                }
            }
            if let (TransformerType::OneHot, Some(size)) = (&spec.transformer_type, args.size) {
                if size < 2 {
                    return Err(Error::EmptyVocabulary(id.clone()));
                }
            }
        }
        for c in &spec.input_constraints {
            c.validate()?;
            if let ConstraintSpec::MaxActionsPerType { limits } = c {
                if let Some(missing) = limits.keys().find(|a| !actions.iter().any(|(x, _)| x == *a)) {
                    return Err(Error::UnknownAction {
                        transformer: id.clone(),
                        action: missing.clone(),
                    });
                }
            }
        }
        let processor = spec
            .input_processor_name
            .as_deref()
            .map(|name| registry.processor(name))
            .transpose()?;
        let constraints = ConstraintSet::new(
            Scope {
                transformer_id: Some(id.clone()),
                field: spec.field,
                processor: processor.clone(),
            },
            spec.input_constraints.clone(),
        );
        Ok(Transformer {
            id,
            field: spec.field,
            transformer_type: spec.transformer_type.clone(),
            kind,
            actions,
            processor,
            constraints,
        })
    }

    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.actions.iter().map(|(a, _)| a.as_str())
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// The value this transformer operates on.
    pub fn scoped<'a>(&self, state: &'a InputState) -> Result<&'a InputState> {
        match self.field {
            None => Ok(state),
            Some(i) => state.field(i).ok_or(Error::IndexOutOfRange {
                index: i,
                arity: state.arity(),
            }),
        }
    }

    fn check_type(&self, value: &InputState) -> Result<()> {
        if self.transformer_type.accepts(value) {
            Ok(())
        } else {
            Err(Error::TypeMismatch {
                transformer: self.id.clone(),
                expected: self.transformer_type.to_string(),
                found: value.kind().to_string(),
            })
        }
    }

    fn split(&self, value: &InputState) -> Result<(InputState, Option<crate::processor::ProcessorContext>)> {
        match &self.processor {
            Some(p) => p.pre(value).map(|(core, ctx)| (core, Some(ctx))),
            None => Ok((value.clone(), None)),
        }
    }

    /// Every edge of this transformer at `state`, ignoring constraints.
    pub fn candidate_edges(&self, state: &InputState) -> Result<Vec<Edge>> {
        let value = self.scoped(state)?;
        self.check_type(value)?;
        let (core, _) = self.split(value)?;
        let mut out = Vec::new();
        for (action, args) in &self.actions {
            let params = match &self.kind {
                Kind::Custom(c) => c.enumerate(&core, action, args)?,
                Kind::Builtin(t) => self.builtin_params(t, &core, action, args)?,
            };
            out.extend(params.into_iter().map(|p| Edge::new(self.id.clone(), action.clone(), p)));
        }
        Ok(out)
    }

    fn builtin_params(&self, t: &TransformerType, core: &InputState, action: &str, args: &ActionArgs) -> Result<Vec<EdgeParam>> {
        Ok(match (t, core) {
            (TransformerType::Boolean, InputState::Bool(_)) => vec![EdgeParam::Flip],
            (TransformerType::Categorical, InputState::Categorical(label)) => {
                let vocab = args.vocabulary.as_ref().ok_or_else(|| Error::EmptyVocabulary(self.id.clone()))?;
                if vocab.len() < 2 {
                    return Err(Error::EmptyVocabulary(self.id.clone()));
                }
                if !vocab.contains(label) {
                    return Err(Error::UnknownLabel {
                        transformer: self.id.clone(),
                        label: label.clone(),
                    });
                }
                vocab
                    .iter()
                    .filter(|l| *l != label)
                    .map(|l| EdgeParam::Label { label: l.clone() })
                    .collect()
            }
            (TransformerType::OneHot, InputState::OneHot(index)) => {
                let size = args.size.ok_or_else(|| Error::EmptyVocabulary(self.id.clone()))?;
                if size < 2 {
                    return Err(Error::EmptyVocabulary(self.id.clone()));
                }
                if *index >= size {
                    return Err(Error::IndexOutOfRange { index: *index, arity: size });
                }
                (0..size).filter(|i| i != index).map(|i| EdgeParam::Index { index: i }).collect()
            }
            (TransformerType::Numeric, value) => {
                let cur = value.as_f64().unwrap_or_default();
                args.steps()
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, (relative, amount))| step_value(value, relative, amount).as_f64() != Some(cur))
                    .map(|(id, (relative, amount))| EdgeParam::Step { id, amount, relative })
                    .collect()
            }
            (TransformerType::String, InputState::Text(text)) => {
                let chars: Vec<char> = text.chars().collect();
                match action {
                    "substitute" => {
                        let charset = args.charset();
                        (0..chars.len())
                            .flat_map(|pos| {
                                let cur = chars[pos];
                                charset
                                    .iter()
                                    .filter(move |&&c| c != cur)
                                    .map(move |&ch| EdgeParam::Substitute { pos, ch })
                            })
                            .collect()
                    }
                    "insert" => {
                        let charset = args.charset();
                        (0..=chars.len())
                            .flat_map(|pos| charset.iter().map(move |&ch| EdgeParam::Insert { pos, ch }))
                            .collect()
                    }
                    "delete" => (0..chars.len()).map(|pos| EdgeParam::Delete { pos }).collect(),
                    other => {
                        return Err(Error::UnknownAction {
                            transformer: self.id.clone(),
                            action: other.to_string(),
                        })
                    }
                }
            }
            (_, other) => {
                return Err(Error::TypeMismatch {
                    transformer: self.id.clone(),
                    expected: t.to_string(),
                    found: other.kind().to_string(),
                })
            }
        })
    }

    /// Applies `edge` to the scoped value and writes it back into `state`.
    /// No constraints are checked here.
    pub fn apply_raw(&self, state: &InputState, edge: &Edge) -> Result<InputState> {
        let (action, args) = self
            .actions
            .iter()
            .find(|(a, _)| *a == edge.action_id)
            .ok_or_else(|| Error::UnknownAction {
                transformer: self.id.clone(),
                action: edge.action_id.clone(),
            })?;
        let value = self.scoped(state)?;
        self.check_type(value)?;
        let (core, ctx) = self.split(value)?;
        let new_core = match &self.kind {
            Kind::Custom(c) => c.apply(&core, action, &edge.param)?,
            Kind::Builtin(_) => self.apply_builtin(&core, action, args, &edge.param)?,
        };
        let new_value = match (&self.processor, ctx) {
            (Some(p), Some(ctx)) => p.post(&new_core, &ctx)?,
            _ => new_core,
        };
        Ok(match self.field {
            None => new_value,
            Some(i) => {
                let InputState::Vector(mut fields) = state.clone() else {
                    unreachable!("scoped() succeeded on a non-vector state")
                };
                fields[i] = new_value;
                InputState::Vector(fields)
            }
        })
    }

    fn apply_builtin(&self, core: &InputState, action: &str, args: &ActionArgs, param: &EdgeParam) -> Result<InputState> {
        let bad = || {
            Error::MalformedInput(format!("edge parameter {param:?} does not fit {}.{action} on {}", self.id, core.kind()))
        };
        Ok(match (core, param) {
            (InputState::Bool(b), EdgeParam::Flip) => InputState::Bool(!b),
            (InputState::Categorical(_), EdgeParam::Label { label }) => {
                let vocab = args.vocabulary.as_ref().ok_or_else(|| Error::EmptyVocabulary(self.id.clone()))?;
                if !vocab.contains(label) {
                    return Err(Error::UnknownLabel {
                        transformer: self.id.clone(),
                        label: label.clone(),
                    });
                }
                InputState::Categorical(label.clone())
            }
            (InputState::OneHot(_), EdgeParam::Index { index }) => {
                let size = args.size.ok_or_else(|| Error::EmptyVocabulary(self.id.clone()))?;
                if *index >= size {
                    return Err(Error::IndexOutOfRange { index: *index, arity: size });
                }
                InputState::OneHot(*index)
            }
            (InputState::Int(_) | InputState::Float(_), EdgeParam::Step { amount, relative, .. }) => {
                step_value(core, *relative, *amount)
            }
            (InputState::Text(text), p) => {
                let mut chars: Vec<char> = text.chars().collect();
                match p {
                    EdgeParam::Substitute { pos, ch } if *pos < chars.len() => chars[*pos] = *ch,
                    EdgeParam::Insert { pos, ch } if *pos <= chars.len() => chars.insert(*pos, *ch),
                    EdgeParam::Delete { pos } if *pos < chars.len() => {
                        chars.remove(*pos);
                    }
                    _ => return Err(bad()),
                }
                InputState::Text(chars.into_iter().collect())
            }
            _ => return Err(bad()),
        })
    }

    /// Constraint-admissible edges of this transformer alone.
    pub fn enumerate_edges(&self, state: &InputState, ledger: &BudgetLedger) -> Result<Vec<Edge>> {
        let mut out = Vec::new();
        for edge in self.candidate_edges(state)? {
            let after = self.apply_raw(state, &edge)?;
            if self.constraints.admits(state, &after, &edge, ledger) {
                out.push(edge);
            }
        }
        Ok(out)
    }

    pub fn apply_edge(&self, state: &InputState, edge: &Edge, ledger: &BudgetLedger) -> Result<InputState> {
        let after = self.apply_raw(state, edge)?;
        if !self.constraints.admits(state, &after, edge, ledger) {
            return Err(Error::ConstraintViolation(format!("{edge} rejected by constraints of `{}`", self.id)));
        }
        Ok(after)
    }
}

fn step_value(value: &InputState, relative: bool, amount: f64) -> InputState {
    match *value {
        InputState::Int(v) => {
            let delta = if relative { v as f64 * amount } else { amount };
            InputState::Int((v as f64 + delta).round() as i64)
        }
        InputState::Float(v) => InputState::Float(if relative { v + v * amount } else { v + amount }),
        ref other => other.clone(),
    }
}

/// The exploration graph of one task: transformers, global constraints and
/// dependency functions.
#[derive(Clone, Default)]
pub struct InputModel {
    transformers: Vec<Transformer>,
    global: ConstraintSet,
    dependencies: Vec<DependencyFunction>,
}

impl fmt::Debug for InputModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InputModel")
            .field("transformers", &self.transformers)
            .field("global", &self.global.constraints)
            .field("dependencies", &self.dependencies)
            .finish()
    }
}

impl InputModel {
    pub fn new(transformers: Vec<Transformer>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &transformers {
            if !seen.insert(t.id.clone()) {
                return Err(Error::DuplicateName(t.id.clone()));
            }
        }
        Ok(InputModel {
            transformers,
            global: ConstraintSet::default(),
            dependencies: Vec::new(),
        })
    }

    pub fn from_specs(specs: &[TransformerSpec], registry: &Registry) -> Result<Self> {
        let compiled = specs
            .iter()
            .map(|s| Transformer::compile(s, registry))
            .collect::<Result<Vec<_>>>()?;
        Self::new(compiled)
    }

    pub fn with_global_constraints(mut self, constraints: Vec<ConstraintSpec>) -> Result<Self> {
        for c in &constraints {
            c.validate()?;
        }
        self.global = ConstraintSet::new(Scope::global(), constraints);
        Ok(self)
    }

    pub fn with_dependencies(mut self, deps: Vec<DependencyFunction>) -> Self {
        self.dependencies = deps;
        self
    }

    pub fn transformers(&self) -> &[Transformer] {
        &self.transformers
    }

    pub fn transformer(&self, id: &str) -> Result<&Transformer> {
        self.transformers
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::UnknownTransformer(id.to_string()))
    }

    fn constraint_sets(&self) -> impl Iterator<Item = &ConstraintSet> {
        self.transformers
            .iter()
            .map(|t| &t.constraints)
            .chain(std::iter::once(&self.global))
            .filter(|c| !c.is_empty())
    }

    fn admits(&self, before: &InputState, after: &InputState, edge: &Edge, ledger: &BudgetLedger) -> bool {
        self.constraint_sets().all(|c| c.admits(before, after, edge, ledger))
    }

    fn step(&self, state: &InputState, edge: &Edge) -> Result<InputState> {
        let after = self.transformer(&edge.transformer_id)?.apply_raw(state, edge)?;
        apply_dependencies(&after, &self.dependencies)
    }

    /// Admissible edges at `state` together with the states they lead to
    /// (dependencies applied). Edges whose result would break a constraint,
    /// including through a dependency rewrite, are dropped.
    pub fn successors(&self, state: &InputState, ledger: &BudgetLedger) -> Result<Vec<(Edge, InputState)>> {
        let mut out = Vec::new();
        for t in &self.transformers {
            for edge in t.candidate_edges(state)? {
                let after = self.step(state, &edge)?;
                if self.admits(state, &after, &edge, ledger) {
                    out.push((edge, after));
                }
            }
        }
        Ok(out)
    }

    pub fn enumerate_edges(&self, state: &InputState, ledger: &BudgetLedger) -> Result<Vec<Edge>> {
        Ok(self.successors(state, ledger)?.into_iter().map(|(e, _)| e).collect())
    }

    /// Applies one edge and its dependencies; the result is a new state.
    pub fn apply_edge(&self, state: &InputState, edge: &Edge, ledger: &BudgetLedger) -> Result<InputState> {
        let after = self.step(state, edge)?;
        if !self.admits(state, &after, edge, ledger) {
            return Err(Error::ConstraintViolation(format!("edge {edge} is not admissible at {state}")));
        }
        Ok(after)
    }

    /// Re-applies an edge sequence from `original`, checking admissibility at
    /// every step. Returns the final state and ledger.
    pub fn replay(&self, original: &InputState, edges: &[Edge]) -> Result<(InputState, BudgetLedger)> {
        let mut ledger = BudgetLedger::new(original.clone());
        let mut state = original.clone();
        for edge in edges {
            state = self.apply_edge(&state, edge, &ledger)?;
            ledger.record(edge);
        }
        Ok((state, ledger))
    }

    pub fn check_final(&self, state: &InputState, original: &InputState, edges: &[Edge]) -> Vec<Violation> {
        let mut out: Vec<Violation> = self
            .constraint_sets()
            .flat_map(|c| c.check_final(state, original, edges))
            .collect();
        if state.arity() != original.arity() {
            out.push(Violation {
                constraint: "arity".into(),
                scope: "global".into(),
                detail: format!("arity changed from {} to {}", original.arity(), state.arity()),
            });
        }
        out
    }
}
