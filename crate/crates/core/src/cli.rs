//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure (and 1 from `grad-check` when the error bound is exceeded).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::TrainConfig;
use crate::corpus::{generate_synthetic_corpus, load_corpus, save_corpus, synthetic_vocabulary_vectors, SynthParams};
use crate::encoder::{EmbeddingTable, PrecomputedVectors};
use crate::harness::{
    ablate, evaluate, grad_check_config, train, whole_model_grad_check, Dataset, MetricReport,
};
use crate::model::Model;
use crate::numeric::Checkpoint;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Tolerance for `grad-check`.
pub const GRAD_CHECK_TOL: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "semsyngtn", version, about = "Event argument extraction with graph transformer channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (and optionally matching word vectors).
    GenData {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// JSON object of generator parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        embeddings_out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        #[arg(long, default_value_t = 0.1)]
        cluster_noise: f64,
    },
    /// Train, keep the best dev checkpoint, and write metrics.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint path (overrides the `checkpoint` key).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus to score; defaults to a split of the checkpoint's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "dev", "test"])]
        split: String,
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score the full model and every single-switch variant.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the whole-model gradient on a fixture.
    GradCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the five structure matrices of every instance as JSON.
    DumpStructures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => base,
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::from_checkpoint(Checkpoint::load(path)?)
}

fn load_vectors(explicit: Option<&PathBuf>, config: &TrainConfig) -> Result<Option<PrecomputedVectors>> {
    match explicit.map(PathBuf::as_path).or(config.vectors.as_deref().map(Path::new)) {
        Some(p) => Ok(Some(PrecomputedVectors::load(p)?)),
        None => Ok(None),
    }
}

#[derive(Serialize)]
struct StructureDump<'a> {
    id: &'a str,
    a: usize,
    e: usize,
    structures: crate::structures::StructureSet,
}

#[derive(Serialize)]
struct GradCheckSummary {
    max_rel_error: f64,
    worst_param: Option<String>,
    tolerance: f64,
    passed: bool,
    params: Vec<crate::numeric::ParamCheck>,
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::GenData {
            seed,
            n,
            out,
            params,
            embeddings_out,
            dim,
            cluster_noise,
        } => {
            let params: SynthParams = match params {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                    .map_err(|e| Error::Config(format!("generator params: {e}")))?,
                None => SynthParams::default(),
            };
            let corpus = generate_synthetic_corpus(seed, n, &params)?;
            save_corpus(&corpus, &out)?;
            if let Some(path) = embeddings_out {
                let table = EmbeddingTable::from_rows(synthetic_vocabulary_vectors(seed, &params, dim, cluster_noise))?;
                table.save(path)?;
            }
            eprintln!("wrote {} sentences to {}", corpus.len(), out.display());
        }
        Command::Train { cfg, checkpoint, out } => {
            let mut config = load_config(&cfg, TrainConfig::default())?;
            if let Some(p) = checkpoint {
                config.checkpoint = Some(p.display().to_string());
            }
            let data = Dataset::from_config(&config)?;
            let outcome = train(&config, &data)?;
            for r in &outcome.history {
                eprintln!("epoch {:>3}  loss {:.4}  dev F1 {:.2}", r.epoch, r.loss, r.f1);
            }
            if let Some(p) = &config.checkpoint {
                outcome.model.to_checkpoint().save(p)?;
            }
            let test = evaluate(&outcome.model, &data.test, data.vectors())?;
            let report = MetricReport {
                config_hash: config.hash(),
                best_epoch: outcome.best_epoch,
                history: outcome.history,
                buckets: test.buckets.clone(),
                test,
            };
            emit(&report, out.as_deref())?;
        }
        Command::Eval {
            checkpoint,
            corpus,
            split,
            vectors,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let pre = load_vectors(vectors.as_ref(), &model.config)?;
            let corpus = match corpus {
                Some(p) => load_corpus(p)?,
                None => {
                    let data = Dataset::from_config(&model.config)?;
                    match split.as_str() {
                        "train" => data.train,
                        "dev" => data.dev,
                        _ => data.test,
                    }
                }
            };
            emit(&evaluate(&model, &corpus, pre.as_ref())?, out.as_deref())?;
        }
        Command::Ablate { cfg, out } => {
            let config = load_config(&cfg, TrainConfig::default())?;
            let data = Dataset::from_config(&config)?;
            let rows = ablate(&config, &data, |row| {
                eprintln!("{:<18} dev F1 {:6.2}  test F1 {:6.2}", row.name, row.dev.f1, row.test.f1);
            })?;
            emit(&rows, out.as_deref())?;
        }
        Command::GradCheck { cfg, eps, out } => {
            let config = load_config(&cfg, grad_check_config())?;
            let report = whole_model_grad_check(&config, eps)?;
            let passed = report.max_rel_error < GRAD_CHECK_TOL;
            println!("max relative error {:.3e}", report.max_rel_error);
            if out.is_some() {
                let summary = GradCheckSummary {
                    max_rel_error: report.max_rel_error,
                    worst_param: report.worst_param,
                    tolerance: GRAD_CHECK_TOL,
                    passed,
                    params: report.params,
                };
                emit(&summary, out.as_deref())?;
            }
            return Ok(if passed { EXIT_OK } else { EXIT_USAGE });
        }
        Command::DumpStructures {
            checkpoint,
            corpus,
            vectors,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let pre = load_vectors(vectors.as_ref(), &model.config)?;
            let corpus = load_corpus(corpus)?;
            let mut dumps = Vec::new();
            for inst in corpus.instances() {
                dumps.push(StructureDump {
                    id: &inst.example.sentence_id,
                    a: inst.a,
                    e: inst.e,
                    structures: model.structures(&inst, pre.as_ref())?,
                });
            }
            emit(&dumps, out.as_deref())?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            EXIT_RUNTIME
        }
    }
}
