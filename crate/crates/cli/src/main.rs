use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use revsplit_core::evaluation::{render_accuracy_table, render_index_table, render_ocr_table};
use revsplit_core::llm_splitter::{builtin_few_shot, PromptOptions};
use revsplit_core::pipeline::{
    exclusion_log_path, run_eval, run_eval_ocr, run_recover, run_split, EvalMode, EvalOutput,
    SplitConfig, SplitMethod,
};
use revsplit_core::synth::{generate, SynthOptions};
use revsplit_core::DEFAULT_FUZZY_THRESHOLD;

const EXIT_INPUT: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "revsplit", version, about = "Split OCR'd review volumes into documents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract every catalogued document from a set of scanned pages.
    Split(SplitArgs),
    /// Map extracted texts back to character offsets in the page text.
    Recover(RecoverArgs),
    /// Score extraction results or recovered indexes against gold data.
    Eval(EvalArgs),
    /// Compare OCR outputs of one or more engines with reference pages.
    EvalOcr(EvalOcrArgs),
    /// Write a synthetic corpus with gold answers.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Regex,
    Llm,
    Vote,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Text,
    Index,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    pages_dir: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "regex")]
    method: MethodArg,
    /// TOML file with `[[backend]]` tables.
    #[arg(long)]
    backends: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = DEFAULT_FUZZY_THRESHOLD)]
    fuzzy_threshold: f64,
    /// Include worked examples in the prompt.
    #[arg(long)]
    few_shot: bool,
    /// Tell the model what to answer for an empty review.
    #[arg(long)]
    empty_review_clause: bool,
    /// Skip rows already present in the output file.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct RecoverArgs {
    /// Extraction results from `split`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    pages_dir: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    mode: ModeArg,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalOcrArgs {
    /// One directory per engine; the directory name labels the column.
    #[arg(long = "candidates", required = true, num_args = 1..)]
    candidates: Vec<PathBuf>,
    #[arg(long)]
    references: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    documents: usize,
    #[arg(long, default_value_t = 2)]
    volumes: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    not_reviewed_fraction: f64,
    /// Damage printed titles the way OCR does.
    #[arg(long)]
    noisy_titles: bool,
    /// Insert stray spaces into review bodies.
    #[arg(long)]
    noisy_bodies: bool,
}

fn split(args: SplitArgs) -> anyhow::Result<u8> {
    let method = match args.method {
        MethodArg::Regex => SplitMethod::Regex,
        MethodArg::Llm => SplitMethod::Llm,
        MethodArg::Vote => SplitMethod::Vote,
    };
    let config = SplitConfig {
        method,
        backends: args.backends,
        workers: args.workers,
        fuzzy_threshold: args.fuzzy_threshold,
        prompt: PromptOptions {
            few_shot: if args.few_shot { builtin_few_shot() } else { Vec::new() },
            empty_review_clause: args.empty_review_clause,
        },
        resume: args.resume,
        ..SplitConfig::new(args.pages_dir, args.metadata, &args.out)
    };
    let s = run_split(&config)?;
    println!(
        "{} rows, {} excluded (see {}), {} written, {} already present, {} failed",
        s.rows,
        s.excluded,
        exclusion_log_path(&args.out).display(),
        s.written,
        s.resumed,
        s.failed
    );
    Ok(if s.failed > 0 { EXIT_PARTIAL } else { 0 })
}

fn recover(args: RecoverArgs) -> anyhow::Result<u8> {
    let s = run_recover(&args.results, &args.metadata, &args.pages_dir, &args.out)?;
    println!(
        "{} records: {} found, {} not reviewed, {} unsuccessful",
        s.records, s.found, s.not_reviewed, s.unsuccessful
    );
    for e in &s.errors {
        eprintln!("document {}: {}", e.zbmath_internal_id, e.message);
    }
    Ok(if s.errors.is_empty() { 0 } else { EXIT_PARTIAL })
}

fn eval(args: EvalArgs) -> anyhow::Result<u8> {
    let mode = match args.mode {
        ModeArg::Text => EvalMode::Text,
        ModeArg::Index => EvalMode::Index,
    };
    let report = run_eval(&args.results, &args.gold, mode)?;
    match &report {
        EvalOutput::Text(r) => print!("{}", render_accuracy_table(&[(r.method.clone(), r.clone())])),
        EvalOutput::Index(s) => print!("{}", render_index_table(s)),
    }
    if let Some(out) = args.out {
        std::fs::write(&out, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(0)
}

fn eval_ocr(args: EvalOcrArgs) -> anyhow::Result<u8> {
    let rows = run_eval_ocr(&args.candidates, &args.references)?;
    print!("{}", render_ocr_table(&rows));
    Ok(0)
}

fn synth(args: SynthArgs) -> anyhow::Result<u8> {
    let corpus = generate(&SynthOptions {
        documents: args.documents,
        volumes: args.volumes,
        seed: args.seed,
        not_reviewed_fraction: args.not_reviewed_fraction,
        title_noise: args.noisy_titles,
        body_space_noise: args.noisy_bodies,
        ..SynthOptions::default()
    });
    let paths = corpus
        .write_to(&args.out)
        .with_context(|| format!("writing corpus to {}", args.out.display()))?;
    info!("{} pages written", corpus.pages.len());
    println!(
        "metadata {}\npages {}\ngold {}",
        paths.metadata.display(),
        paths.pages_dir.display(),
        paths.gold.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split(a) => split(a),
        Command::Recover(a) => recover(a),
        Command::Eval(a) => eval(a),
        Command::EvalOcr(a) => eval_ocr(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
