use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdtruth::{Error, LabelMethod, Pipeline, TaskConfig};

/// Aggregates crowd annotations with disagreement-aware metrics and evaluates
/// the resulting labels. Flags override values from the config file.
#[derive(Parser)]
#[command(name = "crowdtruth", version)]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Options {
    /// Flat `key = value` task configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// closed or open_ended
    #[arg(long, global = true)]
    task_type: Option<String>,
    /// Crowdtruth score threshold
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Standard-deviation multiplier for spam detection
    #[arg(long, global = true)]
    spam_k: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    embedding_file: Option<PathBuf>,
    #[arg(long, global = true)]
    similarity_threshold: Option<f64>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    judgments: Option<PathBuf>,
    #[arg(long, global = true)]
    vocabulary: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Log stage progress
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Crowdtruth,
    Majority,
    Single,
}

impl From<Method> for LabelMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Crowdtruth => LabelMethod::Crowdtruth,
            Method::Majority => LabelMethod::MajorityVote,
            Method::Single => LabelMethod::Single,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate judgments, apply effort checks
    Ingest,
    /// Build worker vectors and reduce open-ended answers
    Vectorize,
    /// Worker metrics and unit-annotation scores on all workers
    Metrics,
    /// Flag spammers, filter them out and recompute scores
    Spam,
    /// Turn filtered vectors into labels
    Aggregate {
        #[arg(long, value_enum, default_value = "crowdtruth")]
        method: Method,
    },
    /// Score every aggregation method against trusted labels
    Evaluate {
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Evaluate crowdtruth labels over a threshold grid
    Sweep {
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Evaluate with at most m workers per unit
    Ablate {
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// McNemar test between two label files (default: crowdtruth vs the others)
    Mcnemar {
        #[arg(long, requires = "b")]
        a: Option<PathBuf>,
        #[arg(long, requires = "a")]
        b: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Pick the threshold agreeing most with expert labels
    Calibrate {
        #[arg(long)]
        expert: Option<PathBuf>,
    },
    /// Write a human-readable summary of existing outputs
    Report,
    /// Run every stage in order
    All {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        expert: Option<PathBuf>,
    },
}

const EXIT_OTHER: u8 = 1;
const EXIT_MISSING_INPUT: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::MissingFile { .. }) => EXIT_MISSING_INPUT,
        Some(Error::Config(_) | Error::EmptyGrid) => EXIT_CONFIG,
        Some(
            Error::Validation { .. }
            | Error::Parse { .. }
            | Error::MissingColumn { .. }
            | Error::DuplicateRow { .. }
            | Error::InvalidVocabulary(_)
            | Error::UnknownToken { .. }
            | Error::UnknownAnnotation { .. }
            | Error::MixedLengths { .. },
        ) => EXIT_VALIDATION,
        _ => EXIT_OTHER,
    }
}

fn build_config(opts: &Options) -> anyhow::Result<TaskConfig> {
    let mut cfg = match &opts.config {
        Some(p) => TaskConfig::load(p)?,
        None => TaskConfig::default(),
    };
    let mut set = |key: &str, value: Option<String>| -> crowdtruth::Result<()> {
        match value {
            Some(v) => cfg.set(key, &v, None),
            None => Ok(()),
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    set("task_type", opts.task_type.clone())?;
    set(
        "crowdtruth_threshold",
        opts.threshold.map(|v| v.to_string()),
    )?;
    set("spam_k", opts.spam_k.map(|v| v.to_string()))?;
    set("random_seed", opts.seed.map(|v| v.to_string()))?;
    set("embedding_file", path(&opts.embedding_file))?;
    set(
        "embedding_similarity_threshold",
        opts.similarity_threshold.map(|v| v.to_string()),
    )?;
    set("stopword_file", path(&opts.stopwords))?;
    set("judgments_file", path(&opts.judgments))?;
    set("vocabulary_file", path(&opts.vocabulary))?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = build_config(&cli.opts)?;
    let truth = match &cli.command {
        Command::Evaluate { truth }
        | Command::Sweep { truth }
        | Command::Ablate { truth }
        | Command::Mcnemar { truth, .. }
        | Command::All { truth, .. } => truth.clone(),
        _ => None,
    };
    if truth.is_some() {
        cfg.truth_file = truth;
    }
    if let Command::All {
        expert: Some(e), ..
    } = &cli.command
    {
        cfg.expert_file = Some(e.clone());
    }

    let pipeline = Pipeline::new(cfg, &cli.opts.out_dir);
    let lines = match &cli.command {
        Command::Ingest => vec![pipeline.ingest()?],
        Command::Vectorize => vec![pipeline.vectorize()?],
        Command::Metrics => vec![pipeline.metrics()?],
        Command::Spam => vec![pipeline.spam()?],
        Command::Aggregate { method } => vec![pipeline.aggregate((*method).into())?],
        Command::Evaluate { .. } => vec![pipeline.evaluate()?],
        Command::Sweep { .. } => vec![pipeline.sweep()?],
        Command::Ablate { .. } => vec![pipeline.ablate()?],
        Command::Mcnemar { a, b, .. } => {
            let pair = a.as_deref().zip(b.as_deref());
            vec![pipeline.mcnemar(pair)?]
        }
        Command::Calibrate { expert } => vec![pipeline.calibrate(expert.as_deref())?],
        Command::Report => vec![pipeline.report()?],
        Command::All { .. } => pipeline
            .run_all()
            .with_context(|| format!("pipeline run into {}", cli.opts.out_dir.display()))?,
    };
    for line in lines {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let level = if cli.opts.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
