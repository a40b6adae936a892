//! `causalkg`: the pipeline as separate subcommands, each producing an
//! inspectable artifact.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error,
//! 3 numeric failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use causalkg::eval::{Candidates, FilterMode, Task};
use causalkg::kg::Variant;
use causalkg::models::ModelKind;
use causalkg::{Error, Result};
use clap::{Args, Parser, Subcommand};

use commands::{BuildArgs, EvaluateArgs, PreprocessArgs, QueryArgs, SplitArgs, TrainArgs, GRAD_CHECK_TOL};
use config::{load_config, RunConfig};

const THREADS_VAR: &str = "CAUSALKG_THREADS";

#[derive(Parser)]
#[command(name = "causalkg", version, about = "Causal knowledge graph construction, training and evaluation")]
struct Cli {
    /// Run configuration (JSON). Omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prune a CEG corpus into causal networks and report rejections.
    Preprocess {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Output directory; receives networks.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build the causal knowledge graph from preprocessed networks.
    BuildKg {
        /// networks.json, or the directory holding it.
        #[arg(long)]
        networks: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Attach mediator qualifiers (`--mediated false` turns them off).
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        mediated: Option<bool>,
        /// JSON array of {head, label, tail} context statements (CT only).
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Split a graph into train/valid/test parts.
    Split {
        #[arg(long)]
        kg: Option<PathBuf>,
        /// Output directory; receives train.ckg, valid.ckg and test.ckg.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Three comma-separated fractions, e.g. 0.8,0.1,0.1.
        #[arg(long)]
        ratios: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model on a split and write a checkpoint.
    Train {
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-epoch loss and validation MRR as JSON Lines.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Filtered ranking metrics for one task on the test part.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Full graph, used for the type-only candidate pool.
        #[arg(long)]
        kg: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "prediction")]
        task: Task,
        #[arg(long)]
        filter: Option<FilterMode>,
        #[arg(long)]
        candidates: Option<Candidates>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Most likely effect types for a cause.
    Predict(QueryFlags),
    /// Most likely cause types for an effect.
    Explain(QueryFlags),
    /// Counts for a graph file or a split directory.
    Stats {
        #[arg(long)]
        kg: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    GradCheck {
        #[arg(long)]
        model: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct QueryFlags {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    anchor: String,
    /// Comma-separated relation=entity pairs, e.g. hasMediator=n1/b,hasMediatorType=type/M.
    #[arg(long)]
    qualifiers: Option<String>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long)]
    candidates: Option<Candidates>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_io() {
        2
    } else if err.is_numeric() {
        3
    } else {
        1
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Validation(format!("{THREADS_VAR}={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Validation(format!("{THREADS_VAR}: {e}")))
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => {
            output::require_inputs(&[p])?;
            load_config(p)?
        }
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Preprocess { input, out, report } => {
            commands::preprocess(&cfg, PreprocessArgs { input, out, report })?;
        }
        Command::BuildKg {
            networks,
            out,
            variant,
            mediated,
            context,
        } => {
            cfg.variant = variant.unwrap_or(cfg.variant);
            cfg.mediated = mediated.unwrap_or(cfg.mediated);
            commands::build(&cfg, BuildArgs { networks, out, context })?;
        }
        Command::Split { kg, out, ratios, seed } => {
            if let Some(r) = ratios {
                cfg.ratios = commands::parse_ratios(&r)?;
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            commands::split(&cfg, SplitArgs { kg, out })?;
        }
        Command::Train {
            split,
            model,
            out,
            history,
            seed,
            epochs,
        } => {
            cfg.model.kind = model.unwrap_or(cfg.model.kind);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.validate()?;
            commands::train_model(&cfg, TrainArgs { split, out, history })?;
        }
        Command::Evaluate {
            checkpoint,
            kg,
            split,
            task,
            filter,
            candidates,
            out,
        } => {
            cfg.eval.filter = filter.unwrap_or(cfg.eval.filter);
            cfg.eval.candidates = candidates.unwrap_or(cfg.eval.candidates);
            let args = EvaluateArgs {
                checkpoint,
                kg,
                split,
                task,
                out,
            };
            commands::evaluate_model(&cfg, args)?;
        }
        Command::Predict(q) => query(&mut cfg, Task::Prediction, q)?,
        Command::Explain(q) => query(&mut cfg, Task::Explanation, q)?,
        Command::Stats { kg } => commands::stats(&cfg, kg)?,
        Command::GradCheck { model, seed } => {
            let err = commands::grad_check_model(model, seed)?;
            println!("grad-check {model} seed {seed}: max relative error {err:.3e}");
            // NaN fails too.
            if err.is_nan() || err >= GRAD_CHECK_TOL {
                eprintln!("error: relative error {err:.3e} is not below {GRAD_CHECK_TOL:.0e}");
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn query(cfg: &mut RunConfig, task: Task, q: QueryFlags) -> Result<()> {
    cfg.eval.candidates = q.candidates.unwrap_or(cfg.eval.candidates);
    let args = QueryArgs {
        checkpoint: q.checkpoint,
        split: q.split,
        anchor: q.anchor,
        qualifiers: q.qualifiers,
        n: q.n,
    };
    commands::query(cfg, task, args)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
