mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use pairctx::trainer::StoppingCriterion;

use config::{Precision, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "pairctx-re", version, about = "Gene-disease function-change relation extraction pipeline")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory holding every stage's artifacts
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a corpus and its gold annotations and write canonical copies
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Align tagger output, build the labeled pair dataset and the alignment audit
    Prepare {
        #[arg(long)]
        ner: Option<PathBuf>,
    },
    /// Document-level train/dev split with matched label distributions
    Split {
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        kl_threshold: Option<f64>,
        #[arg(long)]
        max_seed_trials: Option<u64>,
    },
    /// Encode both sides of the split into model input sequences
    Encode {
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        lowercase: bool,
        #[arg(long)]
        no_title: bool,
    },
    /// Train with random restarts; one model per stopping criterion
    Train {
        /// macro_f1_all, macro_f1_pos, or both separated by a comma
        #[arg(long, value_delimiter = ',')]
        criterion: Vec<StoppingCriterion>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        precision: Option<Precision>,
    },
    /// Score trained models on dev, or score a gold/prediction TSV
    Evaluate {
        #[arg(long, value_delimiter = ',')]
        criterion: Vec<StoppingCriterion>,
        /// `gold<TAB>pred` lines instead of a trained model
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum)]
        precision: Option<Precision>,
    },
    /// Random baseline sampling labels from the train distribution
    Baseline {
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn criteria(flag: Vec<StoppingCriterion>, cfg: &RunConfig) -> Vec<StoppingCriterion> {
    let mut out = if flag.is_empty() {
        vec![cfg.train.stopping_criterion]
    } else {
        flag
    };
    out.dedup();
    out
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set(&mut cfg.paths.output_dir, cli.output_dir);
    let command = cli.command;
    match &command {
        Command::Ingest { corpus, annotations } => {
            cfg.paths.corpus = corpus.clone().or(cfg.paths.corpus.take());
            cfg.paths.annotations = annotations.clone().or(cfg.paths.annotations.take());
        }
        Command::Prepare { ner } => cfg.paths.ner = ner.clone().or(cfg.paths.ner.take()),
        Command::Split {
            ratio,
            kl_threshold,
            max_seed_trials,
        } => {
            set(&mut cfg.split.ratio, *ratio);
            set(&mut cfg.split.kl_threshold_bits, *kl_threshold);
            set(&mut cfg.split.max_seed_trials, *max_seed_trials);
        }
        Command::Encode {
            vocab,
            max_len,
            lowercase,
            no_title,
        } => {
            cfg.paths.vocab = vocab.clone().or(cfg.paths.vocab.take());
            set(&mut cfg.encode.max_len, *max_len);
            cfg.encode.lowercase |= lowercase;
            cfg.encode.include_title &= !no_title;
        }
        Command::Train {
            restarts,
            max_epochs,
            patience,
            batch_size,
            learning_rate,
            seed,
            precision,
            ..
        } => {
            set(&mut cfg.train.num_restarts, *restarts);
            set(&mut cfg.train.max_epochs, *max_epochs);
            set(&mut cfg.train.patience, *patience);
            set(&mut cfg.train.batch_size, *batch_size);
            set(&mut cfg.train.learning_rate, *learning_rate);
            set(&mut cfg.train.master_seed, *seed);
            set(&mut cfg.precision, *precision);
        }
        Command::Evaluate { precision, .. } => set(&mut cfg.precision, *precision),
        Command::Baseline { runs, seed } => {
            set(&mut cfg.report.baseline_runs, *runs);
            set(&mut cfg.train.master_seed, *seed);
        }
    }
    log::info!("effective configuration:\n{}", cfg.to_toml());
    match command {
        Command::Ingest { .. } => stages::ingest(&cfg),
        Command::Prepare { .. } => stages::prepare(&cfg),
        Command::Split { .. } => stages::split(&cfg),
        Command::Encode { .. } => stages::encode(&cfg),
        Command::Train { criterion, .. } => {
            cfg.train.validate()?;
            let c = criteria(criterion, &cfg);
            stages::train(&cfg, &c)
        }
        Command::Evaluate {
            criterion, predictions, ..
        } => {
            let c = criteria(criterion, &cfg);
            stages::evaluate(&cfg, &c, predictions.as_deref())
        }
        Command::Baseline { .. } => stages::baseline(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
