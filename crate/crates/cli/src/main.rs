use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use newsvote::bundle::ModelBundle;
use newsvote::config::PipelineConfig;
use newsvote::error::PipelineError;
use newsvote::eval::text_table;
use newsvote::ingest::load_csv;
use newsvote::pipeline::{
    cmd_evaluate, cmd_train, format_prediction, inspect, predict_documents, predict_texts, EvalSource,
};

/// Fake-news detection with a majority vote over nine classifiers.
#[derive(Parser)]
#[command(name = "newsvote", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every enabled learner and write a model bundle.
    Train(TrainArgs),
    /// Score a bundle on its held-out split or on a labeled file.
    Evaluate(EvaluateArgs),
    /// Classify new texts.
    Predict(PredictArgs),
    /// Print bundle metadata.
    Inspect {
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV; overrides `data.path`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training share of the split, in (0, 1).
    #[arg(long)]
    ratio: Option<f64>,
    /// Output directory for the bundle.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Labeled CSV to evaluate on instead of the held-out split.
    #[arg(long, conflicts_with = "train_partition")]
    data: Option<PathBuf>,
    /// Evaluate on the training partition of the stored split.
    #[arg(long)]
    train_partition: bool,
    /// Report directory; defaults to `report/` next to the bundle.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the per-model ROC point files.
    #[arg(long)]
    no_roc: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// One text to classify.
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    text: Option<String>,
    /// A CSV with the bundle's columns, or plain text with one input per line.
    #[arg(long)]
    file: Option<PathBuf>,
}

fn train(args: TrainArgs) -> Result<(), PipelineError> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(data) = args.data {
        config.data.path = data;
    }
    config.apply_overrides(args.ratio, args.seed, args.out)?;
    let (path, _, summary) = cmd_train(&config)?;
    print!("{}", summary.render());
    println!("bundle written to {}", path.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), PipelineError> {
    let source = match (args.data, args.train_partition) {
        (Some(path), _) => EvalSource::External(path),
        (None, true) => EvalSource::TrainPartition,
        (None, false) => EvalSource::HeldOut,
    };
    let out = args
        .out
        .unwrap_or_else(|| args.bundle.parent().unwrap_or(Path::new(".")).join("report"));
    let (eval, files) = cmd_evaluate(&args.bundle, &source, &out, !args.no_roc)?;
    for w in &eval.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", text_table(&eval.rows));
    println!(
        "reports written to {}",
        files.json.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<(), PipelineError> {
    let bundle = ModelBundle::load(&args.bundle)?;
    let preds = match (args.text, args.file) {
        (Some(text), _) => predict_texts(&bundle, &[text])?,
        (None, Some(path)) if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => {
            let corpus = load_csv(&path, &bundle.config.data.columns)?;
            predict_documents(&bundle, &corpus.documents)?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PipelineError::Data(format!("cannot read {}: {e}", path.display())))?;
            let lines: Vec<String> = text.lines().map(str::to_string).collect();
            predict_texts(&bundle, &lines)?
        }
        (None, None) => unreachable!("clap requires --text or --file"),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for p in &preds {
        let _ = writeln!(out, "{}", format_prediction(p, &bundle.voters));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Predict(args) => predict(args),
        Command::Inspect { bundle } => ModelBundle::load(&bundle)
            .map(|b| print!("{}", inspect(&b)))
            .map_err(PipelineError::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
