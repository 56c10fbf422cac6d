//! The subcommands, as library functions: each loads its config, does the
//! work and returns a summary for the binary to print.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use evgraph_core::model::adversarial::{adversarial_train, AdvTrainParams};
use evgraph_core::model::train::{accuracy, train_builtin};
use evgraph_core::ranking::guided::train_guided_policy;
use evgraph_core::ranking::lookup::train_lookup_table;
use evgraph_core::scoring::argmax;
use evgraph_core::synth::SynthParams;
use evgraph_core::{
    explore_batch, BuiltinModel, Explorer, FeatureExtractor, GenerationRecord, InputState, ModelFile, ModelHandle,
    Objective, Registry, Sample,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{load_config_with, ExplorerConfig, LabelSource, RankingAlg, SampleSelection};
use crate::dataset::{load_dataset, load_target_features, write_synth_csv, Dataset};
use crate::error::{HarnessError, Result};
use crate::report::{method_label, model_label, AccuracyCells, AdvTrainSummary, GenerateReport};

/// Settings shared by the subcommands; flags and environment variables
/// override the config.
#[derive(Clone)]
pub struct RunOptions {
    /// Replaces the config's `seed`.
    pub seed: Option<u64>,
    pub workers: usize,
    pub strict_schema: bool,
    /// Replaces the schema's `labels_path`.
    pub labels: Option<PathBuf>,
    pub registry: Registry,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: None,
            workers: 1,
            strict_schema: false,
            labels: None,
            registry: Registry::with_builtins(),
        }
    }
}

struct Session {
    cfg: ExplorerConfig,
    seed: u64,
    data: Dataset,
    extractor: Arc<dyn FeatureExtractor>,
}

impl Session {
    fn open(config: &Path, dataset: &Path, opts: &RunOptions) -> Result<Self> {
        let cfg = load_config_with(config, &opts.registry)?;
        let labels = opts
            .labels
            .clone()
            .or_else(|| cfg.input_schema.labels_path.as_deref().map(|p| cfg.resolve(p)));
        let data = load_dataset(dataset, &cfg.input_schema, labels.as_deref(), opts.strict_schema)?;
        let extractor = cfg.extractor(&opts.registry)?;
        Ok(Session {
            seed: opts.seed.unwrap_or(cfg.seed),
            cfg,
            data,
            extractor,
        })
    }

    fn labels(&self) -> Result<&[usize]> {
        self.data
            .labels
            .as_deref()
            .ok_or_else(|| HarnessError::config("this command needs labels (label_column or labels_path)"))
    }

    fn features(&self, states: &[InputState]) -> Result<Vec<Vec<f64>>> {
        Ok(states
            .iter()
            .map(|s| self.extractor.extract(s))
            .collect::<evgraph_core::Result<_>>()?)
    }

    fn model(&self) -> Result<Arc<ModelHandle>> {
        let model = self.cfg.model()?;
        check_dims(&model, self.extractor.as_ref())?;
        Ok(model)
    }

    fn explorer(&self, registry: &Registry) -> Result<Explorer> {
        self.cfg
            .explorer(registry, self.cfg.ranker()?, self.extractor.clone(), self.seed)
    }

    fn samples(&self) -> Result<Vec<Sample>> {
        let targets = match &self.cfg.scoring_alg.target_features_path {
            Some(p) => {
                let rows = load_target_features(&self.cfg.resolve(p))?;
                let aligned = self
                    .data
                    .rows
                    .iter()
                    .map(|&r| {
                        rows.get(r).cloned().ok_or_else(|| {
                            HarnessError::config(format!("target features file has no row {}", r + 1))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(aligned)
            }
            None => None,
        };
        let labels = match self.cfg.label_source {
            LabelSource::Prediction => None,
            LabelSource::Dataset => Some(self.labels()?),
        };
        Ok(self
            .data
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| Sample {
                state: s.clone(),
                label: labels.map(|l| l[i]),
                target_features: targets.as_ref().map(|t| t[i].clone()),
            })
            .collect())
    }
}

fn check_dims(model: &ModelHandle, extractor: &dyn FeatureExtractor) -> Result<()> {
    if model.feature_dim() != extractor.output_dim() {
        return Err(HarnessError::config(format!(
            "model expects {} features but the extractor produces {}",
            model.feature_dim(),
            extractor.output_dim()
        )));
    }
    Ok(())
}

/// One JSON record per line, in sample order.
pub fn write_records(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(evgraph_core::Error::from)?;
        writeln!(w, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<GenerationRecord>> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| HarnessError::io(path, e))?;
            Ok(serde_json::from_str(&l).map_err(evgraph_core::Error::from)?)
        })
        .collect()
}

/// Runs the configured exploration over the dataset and writes the records.
pub fn run_generate(config: &Path, dataset: &Path, out: &Path, opts: &RunOptions) -> Result<GenerateReport> {
    let s = Session::open(config, dataset, opts)?;
    let model = s.model()?;
    let explorer = s.explorer(&opts.registry)?;
    let samples = s.samples()?;
    let (records, metrics) = explore_batch(&explorer, &samples, &model, opts.workers)?;
    write_records(out, &records)?;
    Ok(GenerateReport {
        model: model_label(model.kind()).to_string(),
        method: method_label(&s.cfg.search_alg, explorer.ranker.kind()),
        metrics,
        skipped_rows: s.data.skipped,
    })
}

/// Up to `selection.samples` inputs in a seeded random order, optionally
/// only those the model classifies correctly.
pub fn select_training_samples(
    states: &[InputState],
    labels: Option<&[usize]>,
    selection: &SampleSelection,
    model: &ModelHandle,
    extractor: &dyn FeatureExtractor,
    seed: u64,
) -> Result<Vec<InputState>> {
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(selection.samples.min(states.len()));
    for i in order {
        if out.len() == selection.samples {
            break;
        }
        if let (true, Some(labels)) = (selection.only_correct, labels) {
            let probs = model.predict_one(&extractor.extract(&states[i])?)?;
            if argmax(&probs) != labels[i] {
                continue;
            }
        }
        out.push(states[i].clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRankerReport {
    pub ranker: String,
    pub samples: usize,
    /// Table keys or policy action keys learned.
    pub entries: usize,
    pub path: PathBuf,
}

/// Trains the lookup table or guided policy named by `ranking_alg` and
/// writes it to `out` (default: the path in the config).
pub fn run_train_ranker(config: &Path, dataset: &Path, out: Option<&Path>, opts: &RunOptions) -> Result<TrainRankerReport> {
    let s = Session::open(config, dataset, opts)?;
    let model = s.model()?;
    let input_model = s.cfg.input_model(&opts.registry)?;
    let scorer = s.cfg.scorer(&opts.registry)?;
    let objective_for =
        |st: &InputState| Objective::for_sample(&scorer, model.clone(), s.extractor.clone(), st, None, None);
    let pick = |sel: &SampleSelection| {
        select_training_samples(
            &s.data.states,
            s.data.labels.as_deref(),
            sel,
            &model,
            s.extractor.as_ref(),
            s.seed,
        )
    };
    match &s.cfg.ranking_alg {
        RankingAlg::Lookup(a) => {
            let samples = pick(&a.selection)?;
            let table = train_lookup_table(&samples, &input_model, objective_for, |_, _| {})?;
            let path = out.map_or_else(|| s.cfg.resolve(&a.table), Path::to_path_buf);
            table.save(&path).map_err(|e| wrap_io(&path, e))?;
            Ok(TrainRankerReport {
                ranker: "lookup".into(),
                samples: samples.len(),
                entries: table.len(),
                path,
            })
        }
        RankingAlg::Guided(a) => {
            let samples = pick(&a.selection)?;
            let policy = train_guided_policy(&samples, &input_model, objective_for, &a.training)?;
            let path = out.map_or_else(|| s.cfg.resolve(&a.policy), Path::to_path_buf);
            policy.save(&path).map_err(|e| wrap_io(&path, e))?;
            let entries = policy.to_json()?.matches("\"w\"").count();
            Ok(TrainRankerReport {
                ranker: "guided".into(),
                samples: samples.len(),
                entries,
                path,
            })
        }
        other => Err(HarnessError::config(format!(
            "the {:?} ranker has nothing to train; use lookup or guided",
            other.kind()
        ))),
    }
}

fn wrap_io(path: &Path, e: evgraph_core::Error) -> HarnessError {
    match e {
        evgraph_core::Error::Io(io) => HarnessError::io(path, io),
        other => other.into(),
    }
}

fn save_model(path: &Path, model: BuiltinModel) -> Result<()> {
    ModelFile::new(model).save(path).map_err(|e| wrap_io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainModelReport {
    pub model: String,
    pub samples: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Trains the configured built-in model on the whole dataset.
pub fn run_train_model(config: &Path, dataset: &Path, out: &Path, opts: &RunOptions) -> Result<TrainModelReport> {
    let s = Session::open(config, dataset, opts)?;
    let x = s.features(&s.data.states)?;
    let y = s.labels()?;
    let mut model = s.cfg.fresh_model(s.extractor.output_dim())?;
    let report = train_builtin(&mut model, &x, y, &s.cfg.training.train)?;
    let label = model_label(model.kind()).to_string();
    save_model(out, model)?;
    Ok(TrainModelReport {
        model: label,
        samples: x.len(),
        final_loss: report.final_loss,
        train_accuracy: report.train_accuracy,
    })
}

/// Where `adv-train` writes the standard-trained model next to `out`.
pub fn standard_model_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.standard.json"))
}

/// Fraction of `samples` the attack fails on (cleanly, without errors).
pub fn adversarial_accuracy(explorer: &Explorer, samples: &[Sample], model: BuiltinModel, workers: usize) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let handle = Arc::new(ModelHandle::builtin(model));
    let (records, _) = explore_batch(explorer, samples, &handle, workers)?;
    let robust = records.iter().filter(|r| !r.success && r.error.is_none()).count();
    Ok(robust as f64 / samples.len() as f64)
}

/// Trains a standard and an adversarially hardened model on the leading
/// part of the dataset and scores both on the held-out tail, naturally and
/// under the configured attack.
pub fn run_adv_train(config: &Path, dataset: &Path, out: &Path, opts: &RunOptions) -> Result<AdvTrainSummary> {
    let s = Session::open(config, dataset, opts)?;
    let labels = s.labels()?;
    let explorer = s.explorer(&opts.registry)?;
    let n = s.data.len();
    let n_test = ((n as f64) * s.cfg.training.test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(HarnessError::config(format!(
            "test_fraction {} leaves no train or test data out of {n} rows",
            s.cfg.training.test_fraction
        )));
    }
    let (train_states, test_states) = s.data.states.split_at(n - n_test);
    let (train_labels, test_labels) = labels.split_at(n - n_test);
    let x_train = s.features(train_states)?;
    let x_test = s.features(test_states)?;
    let dim = s.extractor.output_dim();

    let mut standard = s.cfg.fresh_model(dim)?;
    train_builtin(&mut standard, &x_train, train_labels, &s.cfg.training.train)?;
    let mut hardened = s.cfg.fresh_model(dim)?;
    let adv = adversarial_train(
        &mut hardened,
        train_states,
        train_labels,
        &explorer,
        &AdvTrainParams {
            train: s.cfg.training.train.clone(),
            mix_ratio: s.cfg.training.mix_ratio,
        },
    )?;

    let attack: Vec<Sample> = test_states
        .iter()
        .zip(test_labels)
        .map(|(st, &l)| Sample::labelled(st.clone(), l))
        .collect();
    let cells = |m: &BuiltinModel| -> Result<AccuracyCells> {
        Ok(AccuracyCells {
            natural: accuracy(m, &x_test, test_labels),
            adversarial: adversarial_accuracy(&explorer, &attack, m.clone(), opts.workers)?,
        })
    };
    let summary = AdvTrainSummary {
        model: model_label(hardened.kind()).to_string(),
        method: method_label(&s.cfg.search_alg, explorer.ranker.kind()),
        test_samples: n_test,
        standard: cells(&standard)?,
        adversarial: cells(&hardened)?,
        explorations: adv.explorations,
        adversarial_found: adv.adversarial_found,
    };
    save_model(out, hardened)?;
    save_model(&standard_model_path(out), standard)?;
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub records: usize,
    pub verified: usize,
    /// Records that carried an error and were not replayed.
    pub skipped: usize,
    /// `(record index, reason)` for every record that did not reproduce.
    pub mismatches: Vec<(usize, String)>,
}

/// Re-applies every record's edge sequence to its original and checks the
/// final state, constraints and the model's prediction.
pub fn run_replay(config: &Path, results: &Path, opts: &RunOptions) -> Result<ReplayReport> {
    let cfg = load_config_with(config, &opts.registry)?;
    let extractor = cfg.extractor(&opts.registry)?;
    let model = cfg.model()?;
    check_dims(&model, extractor.as_ref())?;
    let input_model = cfg.input_model(&opts.registry)?;
    let mut report = ReplayReport::default();
    for rec in read_records(results)? {
        report.records += 1;
        if rec.error.is_some() {
            report.skipped += 1;
            continue;
        }
        let check = || -> std::result::Result<(), String> {
            let (state, _) = input_model
                .replay(&rec.original, &rec.edge_sequence)
                .map_err(|e| e.to_string())?;
            if state != rec.final_state {
                return Err(format!("replay gives {state}, record says {}", rec.final_state));
            }
            let violations = input_model.check_final(&state, &rec.original, &rec.edge_sequence);
            if let Some(v) = violations.first() {
                return Err(v.to_string());
            }
            let features = extractor.extract(&state).map_err(|e| e.to_string())?;
            let predicted = argmax(&model.predict_one(&features).map_err(|e| e.to_string())?);
            if predicted != rec.predicted_label {
                return Err(format!("model predicts {predicted}, record says {}", rec.predicted_label));
            }
            Ok(())
        };
        match check() {
            Ok(()) => report.verified += 1,
            Err(reason) => report.mismatches.push((rec.index, reason)),
        }
    }
    Ok(report)
}

/// Loads and validates a config; returns a one-paragraph description.
pub fn run_validate(config: &Path, opts: &RunOptions) -> Result<String> {
    let cfg = load_config_with(config, &opts.registry)?;
    let im = cfg.input_model(&opts.registry)?;
    Ok(format!(
        "{}: ok\n  transformers: {}\n  dependencies: {}\n  ranker: {:?}\n  search: {}\n  model: {:?}\n  predict_function_name: {}\n",
        config.display(),
        im.transformers().iter().map(|t| t.id.as_str()).collect::<Vec<_>>().join(", "),
        cfg.dependencies.len(),
        cfg.ranking_alg.kind(),
        method_label(&cfg.search_alg, cfg.ranking_alg.kind()),
        cfg.model,
        cfg.predict_function_name,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthPreset {
    /// Categorical fields dominate; attack comparisons are informative.
    #[default]
    Default,
    /// Numeric fields dominate; hardening costs little natural accuracy.
    Robustness,
}

impl SynthPreset {
    pub fn params(self) -> SynthParams {
        match self {
            SynthPreset::Default => SynthParams::default(),
            SynthPreset::Robustness => SynthParams::robustness(),
        }
    }
}

/// Writes `rows` synthetic applicant records to `out`.
pub fn run_synth(out: &Path, rows: usize, seed: u64, preset: SynthPreset) -> Result<()> {
    write_synth_csv(out, &preset.params().generate(rows, seed))
}
