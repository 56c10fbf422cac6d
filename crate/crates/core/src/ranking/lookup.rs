//! Lookup-table ranker: running means of observed edge scores, keyed by
//! position-free edge identity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sort_desc, unscored, RankedEdges};
use crate::constraints::BudgetLedger;
use crate::error::{Error, Result};
use crate::scoring::Objective;
use crate::state::{Edge, EdgeKey, InputState};
use crate::transform::InputModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub mean: f64,
    pub observations: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeWeightTable {
    entries: BTreeMap<EdgeKey, WeightEntry>,
}

/// Weight given to edges the table has never seen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultWeight {
    /// Mean over every observation in the table.
    #[default]
    TableMean,
    /// Rank unseen edges last.
    Lowest,
    Fixed(f64),
}

pub const LOOKUP_FORMAT: &str = "evgraph-lookup";
pub const LOOKUP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    version: u32,
    entries: Vec<FileEntry>,
}

#[derive(Serialize, Deserialize)]
struct FileEntry {
    #[serde(flatten)]
    key: EdgeKey,
    mean: f64,
    observations: u64,
}

impl EdgeWeightTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: EdgeKey, score: f64) {
        let e = self.entries.entry(key).or_insert(WeightEntry {
            mean: 0.0,
            observations: 0,
        });
        e.observations += 1;
        e.mean += (score - e.mean) / e.observations as f64;
    }

    pub fn get(&self, key: &EdgeKey) -> Option<&WeightEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EdgeKey, &WeightEntry)> {
        self.entries.iter()
    }

    pub fn table_mean(&self) -> Option<f64> {
        let n: u64 = self.entries.values().map(|e| e.observations).sum();
        (n > 0).then(|| self.entries.values().map(|e| e.mean * e.observations as f64).sum::<f64>() / n as f64)
    }

    pub fn weight(&self, key: &EdgeKey, default: DefaultWeight) -> f64 {
        match self.entries.get(key) {
            Some(e) => e.mean,
            None => match default {
                DefaultWeight::TableMean => self.table_mean().unwrap_or(0.0),
                DefaultWeight::Lowest => f64::NEG_INFINITY,
                DefaultWeight::Fixed(v) => v,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TableFile {
            format: LOOKUP_FORMAT.into(),
            version: LOOKUP_VERSION,
            entries: self
                .entries
                .iter()
                .map(|(k, e)| FileEntry {
                    key: k.clone(),
                    mean: e.mean,
                    observations: e.observations,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        if file.format != LOOKUP_FORMAT || file.version != LOOKUP_VERSION {
            return Err(Error::Format(format!(
                "expected {LOOKUP_FORMAT} v{LOOKUP_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let mut entries = BTreeMap::new();
        for e in file.entries {
            if e.observations == 0 || !e.mean.is_finite() {
                return Err(Error::Format(format!("bad table entry for {:?}", e.key)));
            }
            entries.insert(
                e.key,
                WeightEntry {
                    mean: e.mean,
                    observations: e.observations,
                },
            );
        }
        Ok(EdgeWeightTable { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Explores the one-hop neighbourhood of every sample and records each
/// admissible edge's true vertex score. `observe` sees every observation as
/// it is logged.
pub fn train_lookup_table(
    samples: &[InputState],
    input_model: &InputModel,
    mut objective_for: impl FnMut(&InputState) -> Result<Objective>,
    mut observe: impl FnMut(&EdgeKey, f64),
) -> Result<EdgeWeightTable> {
    if samples.is_empty() {
        return Err(Error::invalid("lookup training needs at least one sample"));
    }
    let mut table = EdgeWeightTable::new();
    for sample in samples {
        let objective = objective_for(sample)?;
        let ledger = BudgetLedger::new(sample.clone());
        for (edge, after) in input_model.successors(sample, &ledger)? {
            let Ok(v) = objective.evaluate(&after) else { continue };
            let key = edge.key();
            observe(&key, v.value);
            table.record(key, v.value);
        }
    }
    Ok(table)
}

/// Orders edges by their table weight; no model queries.
pub fn rank_lookup(edges: &[Edge], table: &EdgeWeightTable, default: DefaultWeight) -> RankedEdges {
    let mut entries: Vec<_> = edges
        .iter()
        .enumerate()
        .map(|(i, e)| unscored(i, e.clone(), table.weight(&e.key(), default)))
        .collect();
    sort_desc(&mut entries);
    RankedEdges {
        entries,
        unusable: Vec::new(),
        sorted: true,
    }
}
