//! Command-line front end: segmentation, example building, training,
//! prediction, evaluation and synthetic data generation.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use knowsel::checkpoint::load_checkpoint;
use knowsel::corpus::{
    build_examples, load_corpus, read_jsonl, segment_document, write_jsonl, BuildConfig,
    CandidateMode, CorpusFormat, DialogueExample, HistoryAvailability, RawDocument, Segmentation,
};
use knowsel::inference::{batch_predict, Prediction};
use knowsel::metrics::{evaluate, Reference};
use knowsel::synthetic::{generate, SyntheticConfig};
use knowsel::trainer::{train_from_config, TrainConfig};
use knowsel::{Error, Result};
use log::info;

#[derive(Parser, Debug)]
#[command(
    name = "knowsel",
    version,
    about = "Multi-passage knowledge identification for dialogue"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split raw documents into passages of semantic units.
    Segment(SegmentArgs),
    /// Turn a corpus directory into one example per grounded agent turn.
    BuildExamples(BuildArgs),
    /// Train a model from a TOML config.
    Train(TrainArgs),
    /// Predict knowledge spans for an examples file.
    Predict(PredictArgs),
    /// Score predictions against references.
    Evaluate(EvaluateArgs),
    /// Write a small synthetic corpus with lexically cued gold spans.
    GenSynthetic(SyntheticArgs),
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Raw `documents.jsonl`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "sections")]
    strategy: Segmentation,
    /// Segmented documents, one per line.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// Directory holding `documents.jsonl` and `dialogues.jsonl`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "doc2dial")]
    format: CorpusFormat,
    #[arg(long, default_value = "sections")]
    segmentation: Segmentation,
    #[arg(long, default_value = "all")]
    history: HistoryAvailability,
    #[arg(long, default_value_t = 20)]
    max_candidates: usize,
    /// Sample negatives with this seed instead of taking the first passages.
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Examples file written by `build-examples`.
    #[arg(long)]
    examples: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Overrides the checkpoint's span length limit.
    #[arg(long)]
    max_knowledge_len: Option<usize>,
    #[arg(long)]
    log_prob_scoring: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Examples file, or JSONL with `example_id`, `passage_id` and `text`.
    #[arg(long)]
    references: PathBuf,
    /// JSON object mapping example ids to split names.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 32)]
    dialogues: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    passages_per_doc: usize,
    #[arg(long, default_value_t = 4)]
    sus_per_passage: usize,
    #[arg(long, default_value_t = 60)]
    vocab_size: usize,
    /// Output directory for `documents.jsonl` and `dialogues.jsonl`.
    #[arg(long)]
    output: PathBuf,
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    create_parent(path)?;
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn segment(args: SegmentArgs) -> Result<()> {
    let raw: Vec<RawDocument> = read_jsonl(&args.input)?;
    let docs = raw
        .iter()
        .map(|d| segment_document(d, args.strategy))
        .collect::<Result<Vec<_>>>()?;
    create_parent(&args.output)?;
    write_jsonl(&args.output, &docs)?;
    info!("segmented {} documents", docs.len());
    Ok(())
}

fn build(args: BuildArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus, args.format, args.segmentation)?;
    let mode = match args.train_seed {
        Some(seed) => CandidateMode::Train { seed },
        None => CandidateMode::Inference,
    };
    let config = BuildConfig {
        max_candidates: args.max_candidates,
        mode,
        history: args.history,
    };
    let (examples, report) = build_examples(&corpus, &config)?;
    create_parent(&args.output)?;
    write_jsonl(&args.output, &examples)?;
    println!("{}", serde_json::to_string(&report).expect("serializable"));
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config = TrainConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dir) = args.output_dir {
        config.output_dir = Some(dir);
    }
    config.validate()?;
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let out = train_from_config(&config)?;
    println!(
        "{}",
        serde_json::json!({
            "best_epoch": out.best_epoch,
            "epochs_run": out.epochs_run,
            "dev": out.best_dev,
        })
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut icfg = ckpt.train_config.map(|c| c.inference).unwrap_or_default();
    if let Some(n) = args.max_knowledge_len {
        icfg.max_knowledge_len = n;
    }
    icfg.log_prob_scoring |= args.log_prob_scoring;
    if icfg.max_knowledge_len == 0 {
        return Err(Error::Config("--max-knowledge-len must be >= 1".into()));
    }
    let examples: Vec<DialogueExample> = read_jsonl(&args.examples)?;
    create_parent(&args.output)?;
    let preds = batch_predict(&ckpt.model, &examples, &icfg, &args.output)?;
    info!("wrote {} predictions", preds.len());
    Ok(())
}

fn read_references(path: &Path) -> Result<Vec<Reference>> {
    let rows: Vec<serde_json::Value> = read_jsonl(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let parsed = if v.get("gold").is_some() {
                serde_json::from_value::<DialogueExample>(v).map(|ex| Reference::from(&ex))
            } else {
                serde_json::from_value::<Reference>(v)
            };
            parsed.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let preds: Vec<Prediction> = read_jsonl(&args.predictions)?;
    let refs = read_references(&args.references)?;
    let splits: Option<HashMap<String, String>> = match &args.splits {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let report = evaluate(&preds, &refs, splits.as_ref())?;
    write_json(&args.output, &report)?;
    println!(
        "EM {:.4}  F1 {:.4}  passage acc {:.4}  n {}",
        report.em, report.f1, report.passage_acc, report.n
    );
    Ok(())
}

fn gen_synthetic(args: SyntheticArgs) -> Result<()> {
    let config = SyntheticConfig {
        dialogues: args.dialogues,
        passages_per_doc: args.passages_per_doc,
        sus_per_passage: args.sus_per_passage,
        vocab_size: args.vocab_size,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let (docs, dialogues) = generate(&config)?;
    fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    write_jsonl(&args.output.join("documents.jsonl"), &docs)?;
    write_jsonl(&args.output.join("dialogues.jsonl"), &dialogues)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment(a) => segment(a),
        Command::BuildExamples(a) => build(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
