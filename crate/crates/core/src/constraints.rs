//! Input constraints, cross-field dependency constraints and transformation
//! budgets.
//!
//! Constraints are attached to a [`Scope`]: either one transformer (and the
//! field it owns) or the whole state. Counting constraints only see edges of
//! their own transformer; value constraints look at the scoped value after
//! every edge, including edges of other transformers, because dependency
//! functions may rewrite fields they do not own.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processor::InputProcessor;
use crate::state::{Edge, EdgeParam, InputState};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
}

/// Order of an Lp norm; serialises as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LpOrder {
    Finite(f64),
    Infinite(InfTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfTag {
    #[serde(rename = "inf")]
    Inf,
}

impl LpOrder {
    pub const INF: LpOrder = LpOrder::Infinite(InfTag::Inf);

    pub fn norm(&self, diffs: impl Iterator<Item = f64>) -> f64 {
        match *self {
            LpOrder::Infinite(_) => diffs.fold(0.0, |m, d| m.max(d.abs())),
            LpOrder::Finite(p) => diffs.map(|d| d.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    MaxTotalActions { n: usize },
    MaxActionsPerType { limits: IndexMap<String, usize> },
    /// Number of deletions, as a fraction of the original (processed) length.
    MaxDeleteFraction { ratio: f64 },
    /// Each edit stays within `fraction` of the value before the edit.
    RelativeValueBound { fraction: f64 },
    /// Total change from the original stays within `fraction * maximum`.
    RelativeMaxBound { fraction: f64, maximum: f64 },
    AbsoluteRange { lo: f64, hi: f64 },
    Monotonic { direction: Direction },
    EditDistanceCap { n: usize },
    LpNormBound { p: LpOrder, eps: f64 },
}

impl ConstraintSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintSpec::MaxTotalActions { .. } => "max_total_actions",
            ConstraintSpec::MaxActionsPerType { .. } => "max_actions_per_type",
            ConstraintSpec::MaxDeleteFraction { .. } => "max_delete_fraction",
            ConstraintSpec::RelativeValueBound { .. } => "relative_value_bound",
            ConstraintSpec::RelativeMaxBound { .. } => "relative_max_bound",
            ConstraintSpec::AbsoluteRange { .. } => "absolute_range",
            ConstraintSpec::Monotonic { .. } => "monotonic",
            ConstraintSpec::EditDistanceCap { .. } => "edit_distance_cap",
            ConstraintSpec::LpNormBound { .. } => "lp_norm_bound",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fraction = |f: f64, what: &str| {
            if f.is_finite() && f > 0.0 && f <= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must lie in (0, 1], got {f}")))
            }
        };
        match self {
            ConstraintSpec::MaxDeleteFraction { ratio } => fraction(*ratio, "max_delete_fraction.ratio"),
            ConstraintSpec::RelativeValueBound { fraction: f } => fraction(*f, "relative_value_bound.fraction"),
            ConstraintSpec::RelativeMaxBound { fraction: f, maximum } => {
                fraction(*f, "relative_max_bound.fraction")?;
                if !(maximum.is_finite() && *maximum > 0.0) {
                    return Err(Error::invalid("relative_max_bound.maximum must be finite and positive"));
                }
                Ok(())
            }
            ConstraintSpec::AbsoluteRange { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && lo <= hi {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("absolute_range needs finite lo <= hi, got [{lo}, {hi}]")))
                }
            }
            ConstraintSpec::LpNormBound { p, eps } => {
                if let LpOrder::Finite(p) = p {
                    if !(p.is_finite() && *p >= 1.0) {
                        return Err(Error::invalid(format!("lp_norm_bound.p must be >= 1 or \"inf\", got {p}")));
                    }
                }
                if !(eps.is_finite() && *eps > 0.0) {
                    return Err(Error::invalid(format!("lp_norm_bound.eps must be positive, got {eps}")));
                }
                Ok(())
            }
            ConstraintSpec::MaxTotalActions { .. }
            | ConstraintSpec::MaxActionsPerType { .. }
            | ConstraintSpec::Monotonic { .. }
            | ConstraintSpec::EditDistanceCap { .. } => Ok(()),
        }
    }
}

/// Path-local usage counters. Cloned whenever a search path branches.
#[derive(Debug, Clone)]
pub struct BudgetLedger {
    original: Arc<InputState>,
    total_actions_used: usize,
    per_transformer_used: BTreeMap<String, usize>,
    per_action_used: BTreeMap<(String, String), usize>,
    deletions_from_original: BTreeMap<String, usize>,
}

impl PartialEq for BudgetLedger {
    fn eq(&self, other: &Self) -> bool {
        self.total_actions_used == other.total_actions_used
            && self.per_transformer_used == other.per_transformer_used
            && self.per_action_used == other.per_action_used
            && self.deletions_from_original == other.deletions_from_original
    }
}

impl Eq for BudgetLedger {}

impl std::hash::Hash for BudgetLedger {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.total_actions_used.hash(state);
        self.per_transformer_used.hash(state);
        self.per_action_used.hash(state);
        self.deletions_from_original.hash(state);
    }
}

impl BudgetLedger {
    pub fn new(original: InputState) -> Self {
        Self::with_original(Arc::new(original))
    }

    pub fn with_original(original: Arc<InputState>) -> Self {
        BudgetLedger {
            original,
            total_actions_used: 0,
            per_transformer_used: BTreeMap::new(),
            per_action_used: BTreeMap::new(),
            deletions_from_original: BTreeMap::new(),
        }
    }

    /// Ledger that has already spent the given edges.
    pub fn from_edges(original: InputState, edges: &[Edge]) -> Self {
        let mut ledger = Self::new(original);
        edges.iter().for_each(|e| ledger.record(e));
        ledger
    }

    pub fn original(&self) -> &InputState {
        &self.original
    }

    pub fn original_arc(&self) -> &Arc<InputState> {
        &self.original
    }

    pub fn total_actions_used(&self) -> usize {
        self.total_actions_used
    }

    pub fn transformer_used(&self, transformer: &str) -> usize {
        self.per_transformer_used.get(transformer).copied().unwrap_or(0)
    }

    pub fn action_used(&self, transformer: &str, action: &str) -> usize {
        self.per_action_used
            .get(&(transformer.to_string(), action.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Uses of `action` summed over all transformers.
    pub fn action_used_anywhere(&self, action: &str) -> usize {
        self.per_action_used
            .iter()
            .filter(|((_, a), _)| a == action)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn deletions(&self, transformer: &str) -> usize {
        self.deletions_from_original.get(transformer).copied().unwrap_or(0)
    }

    pub fn total_deletions(&self) -> usize {
        self.deletions_from_original.values().sum()
    }

    pub fn record(&mut self, edge: &Edge) {
        self.total_actions_used += 1;
        *self.per_transformer_used.entry(edge.transformer_id.clone()).or_default() += 1;
        *self
            .per_action_used
            .entry((edge.transformer_id.clone(), edge.action_id.clone()))
            .or_default() += 1;
        if matches!(edge.param, EdgeParam::Delete { .. }) {
            *self.deletions_from_original.entry(edge.transformer_id.clone()).or_default() += 1;
        }
    }
}

/// Where a constraint set applies.
#[derive(Clone, Default)]
pub struct Scope {
    /// Owning transformer; `None` for global constraints.
    pub transformer_id: Option<String>,
    /// Field of a vector state; `None` for the whole state.
    pub field: Option<usize>,
    pub processor: Option<Arc<dyn InputProcessor>>,
}

impl fmt::Debug for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scope")
            .field("transformer_id", &self.transformer_id)
            .field("field", &self.field)
            .field("processor", &self.processor.is_some())
            .finish()
    }
}

impl Scope {
    pub fn global() -> Self {
        Scope::default()
    }

    fn label(&self) -> String {
        match (&self.transformer_id, self.field) {
            (Some(t), _) => t.clone(),
            (None, Some(f)) => format!("field {f}"),
            (None, None) => "global".to_string(),
        }
    }

    fn counts(&self, edge: &Edge) -> bool {
        match &self.transformer_id {
            Some(t) => *t == edge.transformer_id,
            None => true,
        }
    }

    fn used(&self, ledger: &BudgetLedger) -> usize {
        match &self.transformer_id {
            Some(t) => ledger.transformer_used(t),
            None => ledger.total_actions_used(),
        }
    }

    fn action_used(&self, ledger: &BudgetLedger, action: &str) -> usize {
        match &self.transformer_id {
            Some(t) => ledger.action_used(t, action),
            None => ledger.action_used_anywhere(action),
        }
    }

    fn deletions(&self, ledger: &BudgetLedger) -> usize {
        match &self.transformer_id {
            Some(t) => ledger.deletions(t),
            None => ledger.total_deletions(),
        }
    }

    /// Scoped value with the processor's protected context stripped.
    fn view(&self, state: &InputState) -> Option<InputState> {
        let scoped = match self.field {
            Some(i) => state.field(i)?.clone(),
            None => state.clone(),
        };
        match &self.processor {
            Some(p) => p.pre(&scoped).ok().map(|(core, _)| core),
            None => Some(scoped),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub scope: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.constraint, self.scope, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    pub scope: Scope,
    pub constraints: Vec<ConstraintSpec>,
}

fn text_len(s: &InputState) -> Option<usize> {
    s.as_text().map(|t| t.chars().count())
}

/// Levenshtein distance for text, number of differing leaves otherwise.
pub fn edit_distance(a: &InputState, b: &InputState) -> usize {
    match (a, b) {
        (InputState::Text(x), InputState::Text(y)) => strsim::levenshtein(x, y),
        _ => {
            let (la, lb) = (a.leaves(), b.leaves());
            let differing = la.iter().zip(lb.iter()).filter(|(x, y)| x != y).count();
            differing + la.len().abs_diff(lb.len())
        }
    }
}

fn leaf_pairs(a: &InputState, b: &InputState) -> Vec<(f64, f64)> {
    a.numeric_leaves().into_iter().zip(b.numeric_leaves()).collect()
}

impl ConstraintSet {
    pub fn new(scope: Scope, constraints: Vec<ConstraintSpec>) -> Self {
        ConstraintSet { scope, constraints }
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Would moving from `before` to `after` via `edge` keep every constraint?
    /// `after` already has dependencies applied. Pure; `ledger` is the usage
    /// before the edge.
    pub fn admits(&self, before: &InputState, after: &InputState, edge: &Edge, ledger: &BudgetLedger) -> bool {
        let counts = self.scope.counts(edge);
        let views = (
            self.scope.view(ledger.original()),
            self.scope.view(before),
            self.scope.view(after),
        );
        let (Some(orig), Some(prev), Some(next)) = views else {
            return false;
        };
        self.constraints.iter().all(|c| match c {
            ConstraintSpec::MaxTotalActions { n } => !counts || self.scope.used(ledger) < *n,
            ConstraintSpec::MaxActionsPerType { limits } => match limits.get(&edge.action_id) {
                Some(limit) if counts => self.scope.action_used(ledger, &edge.action_id) < *limit,
                _ => true,
            },
            ConstraintSpec::MaxDeleteFraction { ratio } => {
                if !(counts && matches!(edge.param, EdgeParam::Delete { .. })) {
                    return true;
                }
                let len = text_len(&orig).unwrap_or(0) as f64;
                (self.scope.deletions(ledger) + 1) as f64 <= ratio * len + TOL
            }
            ConstraintSpec::RelativeValueBound { fraction } => leaf_pairs(&prev, &next)
                .into_iter()
                .all(|(b, a)| (a - b).abs() <= fraction * b.abs() * (1.0 + TOL) + TOL * TOL),
            ConstraintSpec::Monotonic { direction } => monotone(&prev, &next, *direction),
            other => value_ok(other, &orig, &next),
        })
    }

    /// Re-validates a finished sample against the original. Counting
    /// constraints are evaluated from `edges`; per-edge relative bounds are
    /// checked through the interval reachable with the number of edits made.
    pub fn check_final(&self, state: &InputState, original: &InputState, edges: &[Edge]) -> Vec<Violation> {
        let violation = |c: &ConstraintSpec, detail: String| Violation {
            constraint: c.name().to_string(),
            scope: self.scope.label(),
            detail,
        };
        let (Some(orig), Some(fin)) = (self.scope.view(original), self.scope.view(state)) else {
            return vec![Violation {
                constraint: "input_processor".into(),
                scope: self.scope.label(),
                detail: "scoped value could not be processed".into(),
            }];
        };
        let mine: Vec<&Edge> = edges.iter().filter(|e| self.scope.counts(e)).collect();
        let mut out = Vec::new();
        for c in &self.constraints {
            match c {
                ConstraintSpec::MaxTotalActions { n } => {
                    if mine.len() > *n {
                        out.push(violation(c, format!("{} actions used, cap {n}", mine.len())));
                    }
                }
                ConstraintSpec::MaxActionsPerType { limits } => {
                    for (action, limit) in limits {
                        let used = mine.iter().filter(|e| e.action_id == *action).count();
                        if used > *limit {
                            out.push(violation(c, format!("`{action}` used {used} times, cap {limit}")));
                        }
                    }
                }
                ConstraintSpec::MaxDeleteFraction { ratio } => {
                    let deletes = mine.iter().filter(|e| matches!(e.param, EdgeParam::Delete { .. })).count();
                    let len = text_len(&orig).unwrap_or(0) as f64;
                    if deletes as f64 > ratio * len + TOL {
                        out.push(violation(c, format!("{deletes} deletions from length {len}, ratio {ratio}")));
                    }
                }
                ConstraintSpec::RelativeValueBound { fraction } => {
                    let k = mine.len() as i32;
                    for (o, v) in leaf_pairs(&orig, &fin) {
                        let a = o * (1.0 - fraction).powi(k);
                        let b = o * (1.0 + fraction).powi(k);
                        let (lo, hi) = (a.min(b), a.max(b));
                        let slack = TOL * (1.0 + o.abs()) * (1.0 + fraction).powi(k);
                        if v < lo - slack || v > hi + slack {
                            out.push(violation(c, format!("{v} unreachable from {o} in {k} edits")));
                        }
                    }
                }
                ConstraintSpec::Monotonic { direction } => {
                    if !monotone(&orig, &fin, *direction) {
                        out.push(violation(c, format!("not monotone ({direction:?}) from {orig} to {fin}")));
                    }
                }
                other => {
                    if !value_ok(other, &orig, &fin) {
                        out.push(violation(other, format!("{orig} -> {fin}")));
                    }
                }
            }
        }
        out
    }
}

fn monotone(prev: &InputState, next: &InputState, direction: Direction) -> bool {
    let ok = |a: f64, b: f64| match direction {
        Direction::Increase => b >= a,
        Direction::Decrease => b <= a,
    };
    if let (Some(a), Some(b)) = (text_len(prev), text_len(next)) {
        return ok(a as f64, b as f64);
    }
    leaf_pairs(prev, next).into_iter().all(|(a, b)| ok(a, b))
}

/// Value constraints measured against the original.
fn value_ok(c: &ConstraintSpec, orig: &InputState, next: &InputState) -> bool {
    match c {
        ConstraintSpec::RelativeMaxBound { fraction, maximum } => leaf_pairs(orig, next)
            .into_iter()
            .all(|(o, v)| (v - o).abs() <= fraction * maximum + TOL),
        ConstraintSpec::AbsoluteRange { lo, hi } => leaf_pairs(orig, next)
            .into_iter()
            .all(|(o, v)| v == o || (*lo <= v && v <= *hi)),
        ConstraintSpec::EditDistanceCap { n } => edit_distance(orig, next) <= *n,
        ConstraintSpec::LpNormBound { p, eps } => {
            p.norm(leaf_pairs(orig, next).into_iter().map(|(o, v)| v - o)) <= eps + TOL
        }
        _ => true,
    }
}

pub type DependencyFn = dyn Fn(&InputState, &[usize], &[usize]) -> Result<InputState> + Send + Sync;

#[derive(Clone)]
pub enum DependencyKind {
    /// Every written field becomes the sum of the read fields.
    Sum,
    Mean,
    Max,
    Min,
    /// `writes[i] = reads[i]`.
    Copy,
    Custom(Arc<DependencyFn>),
}

impl fmt::Debug for DependencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DependencyKind::Sum => write!(f, "Sum"),
            DependencyKind::Mean => write!(f, "Mean"),
            DependencyKind::Max => write!(f, "Max"),
            DependencyKind::Min => write!(f, "Min"),
            DependencyKind::Copy => write!(f, "Copy"),
            DependencyKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl DependencyKind {
    pub fn builtin(name: &str) -> Option<Self> {
        Some(match name {
            "sum" => DependencyKind::Sum,
            "mean" => DependencyKind::Mean,
            "max" => DependencyKind::Max,
            "min" => DependencyKind::Min,
            "copy" => DependencyKind::Copy,
            _ => return None,
        })
    }
}

/// A function enforcing a relationship between fields of a vector state.
#[derive(Debug, Clone)]
pub struct DependencyFunction {
    pub name: String,
    pub reads: Vec<usize>,
    pub writes: Vec<usize>,
    pub kind: DependencyKind,
}

impl DependencyFunction {
    pub fn new(name: impl Into<String>, kind: DependencyKind, reads: Vec<usize>, writes: Vec<usize>) -> Result<Self> {
        let dep = DependencyFunction {
            name: name.into(),
            reads,
            writes,
            kind,
        };
        if !matches!(dep.kind, DependencyKind::Custom(_)) && dep.writes.iter().any(|w| dep.reads.contains(w)) {
            return Err(Error::invalid(format!(
                "dependency `{}` writes a field it reads; built-in dependencies must be idempotent",
                dep.name
            )));
        }
        if matches!(dep.kind, DependencyKind::Copy) && dep.reads.len() != dep.writes.len() {
            return Err(Error::invalid(format!("copy dependency `{}` needs as many reads as writes", dep.name)));
        }
        Ok(dep)
    }

    pub fn apply(&self, state: &InputState) -> Result<InputState> {
        let InputState::Vector(fields) = state else {
            return Err(Error::TypeMismatch {
                transformer: self.name.clone(),
                expected: "vector".into(),
                found: state.kind().into(),
            });
        };
        let arity = fields.len();
        if let Some(&index) = self.reads.iter().chain(&self.writes).find(|&&i| i >= arity) {
            return Err(Error::IndexOutOfRange { index, arity });
        }
        let read_num = || -> Result<Vec<f64>> {
            self.reads
                .iter()
                .map(|&i| {
                    fields[i].as_f64().ok_or_else(|| Error::TypeMismatch {
                        transformer: self.name.clone(),
                        expected: "numeric field".into(),
                        found: fields[i].kind().into(),
                    })
                })
                .collect()
        };
        let aggregate = |f: fn(&[f64]) -> f64| -> Result<InputState> {
            let value = f(&read_num()?);
            let mut out = fields.clone();
            for &w in &self.writes {
                out[w] = match out[w] {
                    InputState::Int(_) => InputState::Int(value.round() as i64),
                    _ => InputState::Float(value),
                };
            }
            Ok(InputState::Vector(out))
        };
        match &self.kind {
            DependencyKind::Sum => aggregate(|v| v.iter().sum()),
            DependencyKind::Mean => aggregate(|v| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }),
            DependencyKind::Max => aggregate(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            DependencyKind::Min => aggregate(|v| v.iter().copied().fold(f64::INFINITY, f64::min)),
            DependencyKind::Copy => {
                let mut out = fields.clone();
                for (&r, &w) in self.reads.iter().zip(&self.writes) {
                    out[w] = fields[r].clone();
                }
                Ok(InputState::Vector(out))
            }
            DependencyKind::Custom(f) => {
                let out = f(state, &self.reads, &self.writes)?;
                if let InputState::Vector(new) = &out {
                    let foreign = new
                        .iter()
                        .zip(fields)
                        .enumerate()
                        .any(|(i, (a, b))| a != b && !self.writes.contains(&i));
                    if new.len() != arity || foreign {
                        return Err(Error::ConstraintViolation(format!(
                            "dependency `{}` modified undeclared fields",
                            self.name
                        )));
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Applies dependencies in declared order.
pub fn apply_dependencies(state: &InputState, deps: &[DependencyFunction]) -> Result<InputState> {
    deps.iter().try_fold(state.clone(), |s, dep| dep.apply(&s))
}
