//! Input states (graph vertices) and transformation edges.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// One vertex of the exploration graph: an input object or a feature vector.
///
/// Vocabularies and charsets live in the transformer configuration, not in
/// the state itself, so a `Categorical` carries only its label and a `OneHot`
/// only its index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputState {
    Int(i64),
    Float(f64),
    Bool(bool),
    Categorical(String),
    OneHot(usize),
    Text(String),
    Vector(Vec<InputState>),
}

// Structural equality with bitwise float comparison, so states can key hash maps.
impl Eq for InputState {}

impl Hash for InputState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            InputState::Int(v) => v.hash(state),
            InputState::Float(v) => v.to_bits().hash(state),
            InputState::Bool(v) => v.hash(state),
            InputState::Categorical(v) | InputState::Text(v) => v.hash(state),
            InputState::OneHot(v) => v.hash(state),
            InputState::Vector(v) => v.hash(state),
        }
    }
}

impl InputState {
    pub fn kind(&self) -> &'static str {
        match self {
            InputState::Int(_) => "int",
            InputState::Float(_) => "float",
            InputState::Bool(_) => "bool",
            InputState::Categorical(_) => "categorical",
            InputState::OneHot(_) => "onehot",
            InputState::Text(_) => "text",
            InputState::Vector(_) => "vector",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            InputState::Int(v) => Some(*v as f64),
            InputState::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            InputState::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Field `index` of a vector state.
    pub fn field(&self, index: usize) -> Option<&InputState> {
        match self {
            InputState::Vector(fields) => fields.get(index),
            _ => None,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            InputState::Vector(fields) => fields.len(),
            _ => 1,
        }
    }

    /// Numeric leaves in depth-first order (ints and floats only).
    pub fn numeric_leaves(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_numeric(&mut out);
        out
    }

    fn collect_numeric(&self, out: &mut Vec<f64>) {
        match self {
            InputState::Vector(fields) => fields.iter().for_each(|f| f.collect_numeric(out)),
            other => {
                if let Some(v) = other.as_f64() {
                    out.push(v);
                }
            }
        }
    }

    /// All scalar leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&InputState> {
        match self {
            InputState::Vector(fields) => fields.iter().flat_map(|f| f.leaves()).collect(),
            other => vec![other],
        }
    }
}

impl fmt::Display for InputState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputState::Int(v) => write!(f, "{v}"),
            InputState::Float(v) => write!(f, "{v}"),
            InputState::Bool(v) => write!(f, "{v}"),
            InputState::Categorical(v) => write!(f, "{v}"),
            InputState::OneHot(v) => write!(f, "#{v}"),
            InputState::Text(v) => write!(f, "{v:?}"),
            InputState::Vector(fields) => {
                write!(f, "[")?;
                for (i, field) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{field}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Action-specific payload of an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum EdgeParam {
    Flip,
    Label { label: String },
    Index { index: usize },
    Substitute { pos: usize, ch: char },
    Insert { pos: usize, ch: char },
    Delete { pos: usize },
    /// Numeric step; `relative` steps scale the current value.
    Step { id: usize, amount: f64, relative: bool },
    Custom { value: String },
}

impl EdgeParam {
    /// Position-free bucket used to identify "the same" edge across vertices.
    pub fn bucket(&self) -> String {
        match self {
            EdgeParam::Flip => "flip".to_string(),
            EdgeParam::Label { label } => label.clone(),
            EdgeParam::Index { index } => index.to_string(),
            EdgeParam::Substitute { ch, .. } | EdgeParam::Insert { ch, .. } => ch.to_string(),
            EdgeParam::Delete { .. } => String::new(),
            EdgeParam::Step { id, .. } => format!("step{id}"),
            EdgeParam::Custom { value } => value.clone(),
        }
    }
}

/// One graph edge: transformer, action (subtransformer) and its parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub transformer_id: String,
    pub action_id: String,
    pub param: EdgeParam,
}

impl Edge {
    pub fn new(transformer_id: impl Into<String>, action_id: impl Into<String>, param: EdgeParam) -> Self {
        Edge {
            transformer_id: transformer_id.into(),
            action_id: action_id.into(),
            param,
        }
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey {
            transformer_id: self.transformer_id.clone(),
            action_id: self.action_id.clone(),
            bucket: self.param.bucket(),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}(", self.transformer_id, self.action_id)?;
        match &self.param {
            EdgeParam::Flip => write!(f, ")"),
            EdgeParam::Label { label } => write!(f, "{label})"),
            EdgeParam::Index { index } => write!(f, "{index})"),
            EdgeParam::Substitute { pos, ch } | EdgeParam::Insert { pos, ch } => write!(f, "{pos}, {ch:?})"),
            EdgeParam::Delete { pos } => write!(f, "{pos})"),
            EdgeParam::Step { amount, relative, .. } => {
                if *relative {
                    write!(f, "{:+}%)", amount * 100.0)
                } else {
                    write!(f, "{amount:+})")
                }
            }
            EdgeParam::Custom { value } => write!(f, "{value})"),
        }
    }
}

/// Edge identity across vertices: position information is dropped so keys
/// observed on one input generalise to others.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub transformer_id: String,
    pub action_id: String,
    pub bucket: String,
}
