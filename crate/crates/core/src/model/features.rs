//! Feature extractors E: objects to the fixed-length vectors a classifier reads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::InputState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Identity,
    BuiltinTabularEncoder,
    RegisteredHook,
    ExternalProcess,
}

pub trait FeatureExtractor: Send + Sync {
    fn output_dim(&self) -> usize;
    fn extract(&self, state: &InputState) -> Result<Vec<f64>>;

    fn kind(&self) -> ExtractorKind {
        ExtractorKind::RegisteredHook
    }
}

/// For inputs that already are numeric feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity {
    pub dim: usize,
}

impl FeatureExtractor for Identity {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, state: &InputState) -> Result<Vec<f64>> {
        let out = match state {
            InputState::Vector(fields) => fields
                .iter()
                .map(|f| {
                    f.as_f64()
                        .ok_or_else(|| Error::Encoding(format!("identity extractor got a {} field", f.kind())))
                })
                .collect::<Result<Vec<_>>>()?,
            s => vec![s
                .as_f64()
                .ok_or_else(|| Error::Encoding(format!("identity extractor got a {} state", s.kind())))?],
        };
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: out.len(),
            });
        }
        Ok(out)
    }

    fn kind(&self) -> ExtractorKind {
        ExtractorKind::Identity
    }
}

/// How one column of a tabular row is encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ColumnEncoding {
    /// One-hot over the vocabulary, in vocabulary order.
    Categorical { vocabulary: Vec<String> },
    /// One-hot over `size` slots.
    OneHot { size: usize },
    /// `(x - mean) / scale`.
    Numeric {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Bool,
}

fn one() -> f64 {
    1.0
}

impl ColumnEncoding {
    fn width(&self) -> usize {
        match self {
            ColumnEncoding::Categorical { vocabulary } => vocabulary.len(),
            ColumnEncoding::OneHot { size } => *size,
            ColumnEncoding::Numeric { .. } | ColumnEncoding::Bool => 1,
        }
    }
}

/// One-hot expands categorical fields and concatenates everything in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularEncoder {
    pub columns: Vec<ColumnEncoding>,
}

impl TabularEncoder {
    pub fn new(columns: Vec<ColumnEncoding>) -> Self {
        TabularEncoder { columns }
    }

    /// Sets every numeric column's mean and scale from `rows` (population std,
    /// with a zero spread mapped to scale 1).
    pub fn fit_numeric(&mut self, rows: &[InputState]) -> Result<()> {
        for (i, col) in self.columns.iter_mut().enumerate() {
            if let ColumnEncoding::Numeric { mean, scale } = col {
                let vals = rows
                    .iter()
                    .map(|r| {
                        r.field(i)
                            .and_then(InputState::as_f64)
                            .ok_or_else(|| Error::Encoding(format!("column {i} is not numeric")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if vals.is_empty() {
                    continue;
                }
                let n = vals.len() as f64;
                let m = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                *mean = m;
                *scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
        }
        Ok(())
    }
}

impl FeatureExtractor for TabularEncoder {
    fn output_dim(&self) -> usize {
        self.columns.iter().map(ColumnEncoding::width).sum()
    }

    fn extract(&self, state: &InputState) -> Result<Vec<f64>> {
        let InputState::Vector(fields) = state else {
            return Err(Error::Encoding(format!("tabular encoder needs a vector, got {}", state.kind())));
        };
        if fields.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                found: fields.len(),
            });
        }
        let mut out = Vec::with_capacity(self.output_dim());
        for (i, (col, field)) in self.columns.iter().zip(fields).enumerate() {
            match (col, field) {
                (ColumnEncoding::Categorical { vocabulary }, InputState::Categorical(label)) => {
                    let pos = vocabulary
                        .iter()
                        .position(|v| v == label)
                        .ok_or_else(|| Error::Encoding(format!("unknown category `{label}` in column {i}")))?;
                    out.extend((0..vocabulary.len()).map(|k| if k == pos { 1.0 } else { 0.0 }));
                }
                (ColumnEncoding::OneHot { size }, InputState::OneHot(idx)) => {
                    if idx >= size {
                        return Err(Error::Encoding(format!("one-hot index {idx} out of {size} in column {i}")));
                    }
                    out.extend((0..*size).map(|k| if k == *idx { 1.0 } else { 0.0 }));
                }
                (ColumnEncoding::Numeric { mean, scale }, f) if f.as_f64().is_some() => {
                    out.push((f.as_f64().unwrap() - mean) / scale);
                }
                (ColumnEncoding::Bool, InputState::Bool(b)) => out.push(if *b { 1.0 } else { 0.0 }),
                (col, f) => {
                    return Err(Error::Encoding(format!(
                        "column {i}: {} value does not fit a {col:?} encoding",
                        f.kind()
                    )))
                }
            }
        }
        Ok(out)
    }

    fn kind(&self) -> ExtractorKind {
        ExtractorKind::BuiltinTabularEncoder
    }
}

/// Lexical statistics of a domain name, computed on the label left of the
/// last dot.
#[derive(Debug, Clone, Copy, Default)]
pub struct DomainStats;

const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";

impl DomainStats {
    pub const DIM: usize = 6 + ALPHABET.len();
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

impl FeatureExtractor for DomainStats {
    fn output_dim(&self) -> usize {
        Self::DIM
    }

    fn extract(&self, state: &InputState) -> Result<Vec<f64>> {
        let text = state
            .as_text()
            .ok_or_else(|| Error::Encoding(format!("domain_stats needs text, got {}", state.kind())))?;
        let core = match text.rfind('.') {
            Some(i) if i > 0 => &text[..i],
            _ => text,
        };
        let chars: Vec<char> = core.chars().flat_map(char::to_lowercase).collect();
        let n = chars.len().max(1) as f64;
        let mut counts = [0usize; ALPHABET.len()];
        for c in &chars {
            if let Some(p) = ALPHABET.find(*c) {
                counts[p] += 1;
            }
        }
        let digits = chars.iter().filter(|c| c.is_ascii_digit()).count() as f64;
        let vowels = chars.iter().filter(|c| is_vowel(**c)).count() as f64;
        let entropy: f64 = counts
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| {
                let p = k as f64 / n;
                -p * p.ln()
            })
            .sum();
        let mut run = 0usize;
        let mut longest = 0usize;
        for c in &chars {
            if c.is_ascii_alphabetic() && !is_vowel(*c) {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        let distinct = counts.iter().filter(|&&k| k > 0).count() as f64;
        let mut out = vec![
            chars.len() as f64 / 16.0,
            digits / n,
            vowels / n,
            entropy / (ALPHABET.len() as f64).ln(),
            longest as f64 / n,
            distinct / n,
        ];
        out.extend(counts.iter().map(|&k| k as f64 / n));
        Ok(out)
    }
}
