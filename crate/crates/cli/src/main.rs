use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evgraph_cli::report::{accuracy_table, generation_table};
use evgraph_cli::runner::{self, RunOptions, SynthPreset};
use evgraph_cli::Result;
use serde::Serialize;

/// Generate adversarial inputs by searching over constraint-preserving
/// transformations, driven by a JSON explorer config.
#[derive(Parser)]
#[command(name = "evgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Explorer config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, env = "EVGRAPH_SEED")]
    seed: Option<u64>,
    /// Samples explored in parallel.
    #[arg(long, env = "EVGRAPH_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Abort on the first dataset row that does not match the schema
    /// instead of skipping it.
    #[arg(long)]
    strict_schema: bool,
    /// File with one class label per dataset row.
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            workers: self.workers.max(1),
            strict_schema: self.strict_schema,
            labels: self.labels.clone(),
            ..RunOptions::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Robustness,
}

#[derive(Subcommand)]
enum Command {
    /// Explore every dataset row and write one JSON record per line.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the metrics as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the lookup table or guided policy named by the config.
    TrainRanker {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Defaults to the path given in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured built-in model on a labelled dataset.
    TrainModel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare standard and adversarial training on a held-out split.
    AdvTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Hardened model; the standard one goes to `<stem>.standard.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Re-apply recorded edge sequences and check they reproduce; exits 2
    /// on any mismatch.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: PathBuf,
    },
    /// Parse and validate a config without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic tabular dataset as CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, env = "EVGRAPH_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
    },
}

fn write_json(path: &std::path::Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(evgraph_core::Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| evgraph_cli::HarnessError::io(path, e))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            common,
            dataset,
            out,
            report,
        } => {
            let r = runner::run_generate(&common.config, &dataset, &out, &common.options())?;
            print!("{}", generation_table(std::slice::from_ref(&r)));
            if r.skipped_rows > 0 {
                eprintln!("skipped {} dataset rows that did not match the schema", r.skipped_rows);
            }
            if let Some(p) = report {
                write_json(&p, &r)?;
            }
        }
        Command::TrainRanker { common, dataset, out } => {
            let r = runner::run_train_ranker(&common.config, &dataset, out.as_deref(), &common.options())?;
            println!(
                "trained {} ranker on {} samples ({} entries) -> {}",
                r.ranker,
                r.samples,
                r.entries,
                r.path.display()
            );
        }
        Command::TrainModel { common, dataset, out } => {
            let r = runner::run_train_model(&common.config, &dataset, &out, &common.options())?;
            println!(
                "trained {} on {} samples: loss {:.4}, accuracy {:.1}% -> {}",
                r.model,
                r.samples,
                r.final_loss,
                100.0 * r.train_accuracy,
                out.display()
            );
        }
        Command::AdvTrain {
            common,
            dataset,
            out,
            report,
        } => {
            let r = runner::run_adv_train(&common.config, &dataset, &out, &common.options())?;
            println!("{} / {} on {} held-out samples", r.model, r.method, r.test_samples);
            print!("{}", accuracy_table(&r));
            if let Some(p) = report {
                write_json(&p, &r)?;
            }
        }
        Command::Replay { common, results } => {
            let r = runner::run_replay(&common.config, &results, &common.options())?;
            for (index, reason) in &r.mismatches {
                eprintln!("record {index}: {reason}");
            }
            println!(
                "{} records: {} reproduced, {} mismatched, {} skipped (errors)",
                r.records,
                r.verified,
                r.mismatches.len(),
                r.skipped
            );
            if !r.mismatches.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::ValidateConfig { config } => {
            print!("{}", runner::run_validate(&config, &RunOptions::default())?);
        }
        Command::Synth {
            out,
            rows,
            seed,
            preset,
        } => {
            let preset = match preset {
                Preset::Default => SynthPreset::Default,
                Preset::Robustness => SynthPreset::Robustness,
            };
            runner::run_synth(&out, rows, seed, preset)?;
            println!("wrote {rows} rows -> {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
