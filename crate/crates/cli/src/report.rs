//! Plain-text result tables and the JSON run reports.

use evgraph_core::{MetricsReport, ModelKind, RankerKind, SearchParams};
use serde::{Deserialize, Serialize};

/// One row of the generation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub model: String,
    pub method: String,
    pub metrics: MetricsReport,
    /// Dataset rows dropped by lenient parsing.
    pub skipped_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCells {
    pub natural: f64,
    pub adversarial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainSummary {
    pub model: String,
    pub method: String,
    pub test_samples: usize,
    pub standard: AccuracyCells,
    pub adversarial: AccuracyCells,
    /// Explorations run during hardening, and how many found an adversarial object.
    pub explorations: usize,
    pub adversarial_found: usize,
}

pub fn model_label(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::BuiltinLogistic => "LR",
        ModelKind::BuiltinMlp => "MLP",
        ModelKind::ExternalProcess => "External",
    }
}

pub fn method_label(search: &SearchParams, ranker: RankerKind) -> String {
    match search {
        SearchParams::SimulatedAnnealing(_) => "Simulated Annealing".to_string(),
        SearchParams::BeamSearch(_) => {
            let r = match ranker {
                RankerKind::Random => "Random",
                RankerKind::BruteForce => "Brute-Force",
                RankerKind::Lookup => "Lookup",
                RankerKind::Guided => "Guided",
            };
            format!("Beam({r})")
        }
    }
}

fn percent(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// Left-aligned columns separated by ` | `, with a rule under the header.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn generation_table(reports: &[GenerateReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.method.clone(),
                percent(r.metrics.success_rate),
                r.metrics
                    .avg_transforms
                    .map_or_else(|| "n/a".to_string(), |t| format!("{t:.3}")),
                format!("{:.2} ms", 1000.0 * r.metrics.avg_time_per_sample),
            ]
        })
        .collect();
    render_table(
        &["Model", "Method", "Success Rate", "Avg. # of Transforms", "Avg. Time per sample"],
        &rows,
    )
}

pub fn accuracy_table(s: &AdvTrainSummary) -> String {
    let rows = vec![
        vec![
            "Standard Training".to_string(),
            percent(s.standard.natural),
            percent(s.standard.adversarial),
        ],
        vec![
            "Adversarial Training (adversarial objects)".to_string(),
            percent(s.adversarial.natural),
            percent(s.adversarial.adversarial),
        ],
    ];
    render_table(&["Training", "Natural Accuracy", "Adversarial Accuracy"], &rows)
}
