//! Dataset ingestion: CSV rows become vector states, text lines become text
//! states. Labels come from a CSV column or a parallel file with one label
//! per row.
//!
//! In strict mode the first bad row aborts the load; otherwise bad rows are
//! skipped and counted, and `rows` keeps the source position of every row
//! that was kept so per-row side files stay aligned.

use std::path::Path;

use evgraph_core::synth::{column_names, SynthData};
use evgraph_core::InputState;

use crate::config::{DatasetFormat, InputSchema};
use crate::error::{read_to_string, HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub states: Vec<InputState>,
    pub labels: Option<Vec<usize>>,
    /// Zero-based source row of each kept state (CSV header excluded).
    pub rows: Vec<usize>,
    pub skipped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn mismatch(path: &Path, line: u64, detail: impl Into<String>) -> HarnessError {
    HarnessError::SchemaMismatch {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// One parsed label per line of a labels file.
fn read_labels(path: &Path) -> Result<Vec<std::result::Result<usize, String>>> {
    Ok(read_to_string(path)?
        .lines()
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| format!("label `{}` in {} is not a class index", l.trim(), path.display()))
        })
        .collect())
}

struct Builder<'a> {
    path: &'a Path,
    strict: bool,
    out: Dataset,
    labels: Vec<usize>,
}

impl Builder<'_> {
    fn push(&mut self, row: usize, line: u64, parsed: std::result::Result<(InputState, Option<usize>), String>) -> Result<()> {
        match parsed {
            Ok((state, label)) => {
                self.out.states.push(state);
                self.out.rows.push(row);
                if let Some(l) = label {
                    self.labels.push(l);
                }
                Ok(())
            }
            Err(detail) if self.strict => Err(mismatch(self.path, line, detail)),
            Err(_) => {
                self.out.skipped += 1;
                Ok(())
            }
        }
    }
}

/// Loads `path` according to `schema`. `labels_path`, when given, overrides
/// any label column.
pub fn load_dataset(path: &Path, schema: &InputSchema, labels_path: Option<&Path>, strict: bool) -> Result<Dataset> {
    let file_labels = labels_path.map(read_labels).transpose()?;
    let mut b = Builder {
        path,
        strict,
        out: Dataset::default(),
        labels: Vec::new(),
    };
    let has_labels = file_labels.is_some() || (schema.is_tabular() && schema.label_column.is_some());
    let label_at = |row: usize| -> std::result::Result<Option<usize>, String> {
        match &file_labels {
            Some(labels) => labels.get(row).cloned().transpose(),
            None => Ok(None),
        }
    };
    let total_rows = match schema.format {
        DatasetFormat::Text => {
            let text = read_to_string(path)?;
            let mut n = 0;
            for (row, line) in text.lines().enumerate() {
                n += 1;
                let parsed = (|| {
                    if line.is_empty() {
                        return Err("empty line".to_string());
                    }
                    if let Some(cs) = &schema.charset {
                        if let Some(c) = line.chars().find(|c| !cs.contains(*c)) {
                            return Err(format!("character {c:?} is outside the charset"));
                        }
                    }
                    Ok((InputState::Text(line.to_string()), label_at(row)?))
                })();
                b.push(row, row as u64 + 1, parsed)?;
            }
            n
        }
        DatasetFormat::Csv => {
            let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
            let headers = rdr.headers()?.clone();
            let index_of = |name: &str| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| mismatch(path, 1, format!("missing column `{name}`")))
            };
            let cols = schema
                .columns
                .iter()
                .map(|c| index_of(c.name()))
                .collect::<Result<Vec<_>>>()?;
            let label_col = match (&file_labels, &schema.label_column) {
                (None, Some(name)) => Some(index_of(name)?),
                _ => None,
            };
            let mut n = 0;
            for (row, rec) in rdr.records().enumerate() {
                n += 1;
                let line = row as u64 + 2;
                let rec = match rec {
                    Ok(r) => r,
                    Err(e) if matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. }) => {
                        b.push(row, line, Err(e.to_string()))?;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let parsed = (|| {
                    let fields = schema
                        .columns
                        .iter()
                        .zip(&cols)
                        .map(|(c, &i)| c.parse(&rec[i]))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    let label = match label_col {
                        Some(i) => Some(
                            rec[i]
                                .parse::<usize>()
                                .map_err(|_| format!("label `{}` is not a class index", &rec[i]))?,
                        ),
                        None => label_at(row)?,
                    };
                    Ok((InputState::Vector(fields), label))
                })();
                b.push(row, line, parsed)?;
            }
            n
        }
    };
    if let Some(labels) = &file_labels {
        if labels.len() != total_rows {
            return Err(mismatch(
                path,
                0,
                format!("{} rows but {} labels in the labels file", total_rows, labels.len()),
            ));
        }
    }
    let mut out = b.out;
    if has_labels {
        out.labels = Some(b.labels);
    }
    Ok(out)
}

/// One target feature vector per line, numbers separated by commas or
/// whitespace; blank lines are ignored.
pub fn load_target_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| mismatch(path, i as u64 + 1, format!("`{t}` is not a finite number")))
                })
                .collect()
        })
        .collect()
}

/// Writes a synthetic dataset as CSV with a trailing `label` column.
pub fn write_synth_csv(path: &Path, data: &SynthData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = column_names();
    header.push("label");
    w.write_record(&header)?;
    for (state, label) in data.states.iter().zip(&data.labels) {
        let InputState::Vector(fields) = state else {
            unreachable!("synthetic rows are vectors")
        };
        let mut record: Vec<String> = fields.iter().map(cell).collect();
        record.push(label.to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn cell(state: &InputState) -> String {
    match state {
        InputState::Categorical(s) | InputState::Text(s) => s.clone(),
        other => other.to_string(),
    }
}
