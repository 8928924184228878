//! Batch driver: load inputs, extract every retained row in parallel and
//! stream JSON-lines output in row order.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{
    assemble_task, exclude_incomplete, load_metadata, load_pages, CorpusError, CorpusTable,
    ExclusionReport, PageStore, SplitTask,
};
use crate::evaluation::{
    load_gold, ocr_eval, score_indexes, score_splitting, EvalError, EvalReport, IndexScores,
    OcrMetricsRow,
};
use crate::extraction::{ExtractionResult, ExtractionStatus, Method};
use crate::index_recovery::{recover_for_task, IndexOutcome, IndexStatus};
use crate::llm_splitter::{load_backends, validate_backends, ConfigError, LlmSplitter, PromptOptions};
use crate::regex_splitter::RegexSplitter;
use crate::textnorm::DEFAULT_FUZZY_THRESHOLD;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    BadRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMethod {
    Regex,
    Llm,
    Vote,
}

/// How rows are turned into extraction results.
#[derive(Debug, Clone)]
pub enum Extractor {
    Regex(RegexSplitter),
    Single(LlmSplitter),
    Vote(LlmSplitter),
}

impl Extractor {
    pub fn extract(&self, task: &SplitTask) -> ExtractionResult {
        match self {
            Extractor::Regex(s) => s.split(task),
            Extractor::Single(s) => s.extract_single(task),
            Extractor::Vote(s) => s.extract_vote(task),
        }
    }

    fn method(&self) -> Method {
        match self {
            Extractor::Regex(_) => Method::Regex,
            Extractor::Single(_) => Method::LlmSingle,
            Extractor::Vote(_) => Method::LlmVote,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitConfig {
    pub pages_dir: PathBuf,
    pub metadata: PathBuf,
    pub output: PathBuf,
    pub method: SplitMethod,
    pub backends: Option<PathBuf>,
    pub workers: usize,
    pub fuzzy_threshold: f64,
    pub prompt: PromptOptions,
    pub resume: bool,
}

impl SplitConfig {
    pub fn new(pages_dir: impl Into<PathBuf>, metadata: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        SplitConfig {
            pages_dir: pages_dir.into(),
            metadata: metadata.into(),
            output: output.into(),
            method: SplitMethod::Regex,
            backends: None,
            workers: 4,
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            prompt: PromptOptions::default(),
            resume: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitSummary {
    pub rows: usize,
    pub excluded: usize,
    pub written: usize,
    /// Rows already present in the output when resuming.
    pub resumed: usize,
    pub failed: usize,
}

/// Inputs after exclusion of rows with missing pages.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub table: CorpusTable,
    pub store: PageStore,
    pub exclusions: ExclusionReport,
}

pub fn load_inputs(metadata: &Path, pages_dir: &Path) -> Result<Inputs, PipelineError> {
    let table = load_metadata(metadata)?;
    let store = load_pages(pages_dir)?;
    for (id, reason) in store.missing() {
        warn!("page {id} unusable: {reason}");
    }
    let (table, exclusions) = exclude_incomplete(&table, &store);
    Ok(Inputs {
        table,
        store,
        exclusions,
    })
}

pub fn build_extractor(config: &SplitConfig) -> Result<Extractor, PipelineError> {
    if !(0.0..=1.0).contains(&config.fuzzy_threshold) {
        return Err(PipelineError::Invalid(format!(
            "fuzzy threshold {} outside [0, 1]",
            config.fuzzy_threshold
        )));
    }
    if config.method == SplitMethod::Regex {
        return Ok(Extractor::Regex(RegexSplitter::new(config.fuzzy_threshold)));
    }
    let path = config
        .backends
        .as_ref()
        .ok_or_else(|| PipelineError::Invalid("LLM methods need a backend configuration".into()))?;
    let backends = load_backends(path)?;
    if config.method == SplitMethod::Vote {
        validate_backends(&backends)?;
        if backends.len() != 3 {
            return Err(PipelineError::Invalid(format!(
                "voting needs exactly three backends, got {}",
                backends.len()
            )));
        }
    }
    let best_count = backends.iter().filter(|b| b.is_best).count();
    if best_count != 1 {
        return Err(ConfigError::BestCount(best_count).into());
    }
    let splitter = LlmSplitter::from_configs(&backends, config.prompt.clone())
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    Ok(match config.method {
        SplitMethod::Vote => Extractor::Vote(splitter),
        _ => Extractor::Single(splitter),
    })
}

/// Load, extract, write. Excluded rows go to `<output>.excluded.jsonl`.
pub fn run_split(config: &SplitConfig) -> Result<SplitSummary, PipelineError> {
    let extractor = build_extractor(config)?;
    let inputs = load_inputs(&config.metadata, &config.pages_dir)?;
    split_inputs(&inputs, &extractor, &config.output, config.workers, config.resume)
}

pub fn exclusion_log_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".excluded.jsonl");
    output.with_file_name(name)
}

/// Extract every retained row of `inputs` with `workers` threads. Output
/// order follows the metadata order regardless of scheduling.
pub fn split_inputs(
    inputs: &Inputs,
    extractor: &Extractor,
    output: &Path,
    workers: usize,
    resume: bool,
) -> Result<SplitSummary, PipelineError> {
    if workers == 0 {
        return Err(PipelineError::Invalid("worker count must be at least 1".into()));
    }
    write_jsonl(&exclusion_log_path(output), &inputs.exclusions.excluded)?;

    let done: HashSet<i64> = if resume && output.exists() {
        truncate_to_complete::<ExtractionResult>(output)?
            .into_iter()
            .map(|r| r.zbmath_internal_id)
            .collect()
    } else {
        HashSet::new()
    };
    let todo: Vec<usize> = inputs
        .table
        .retained_indices()
        .filter(|&i| !done.contains(&inputs.table.rows()[i].zbmath_internal_id))
        .collect();

    let file = if resume {
        OpenOptions::new().create(true).append(true).open(output)
    } else {
        File::create(output)
    }
    .map_err(io_err(output))?;
    let mut out = BufWriter::new(file);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let method = extractor.method();
    let mut summary = SplitSummary {
        rows: inputs.table.len(),
        excluded: inputs.exclusions.len(),
        resumed: done.len(),
        ..Default::default()
    };
    for chunk in todo.chunks(workers * 4) {
        let results: Vec<ExtractionResult> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&i| match assemble_task(&inputs.table, &inputs.store, i) {
                    Ok(task) => extractor.extract(&task),
                    Err(e) => ExtractionResult::new(
                        inputs.table.rows()[i].zbmath_internal_id,
                        ExtractionStatus::failed(e.to_string()),
                        method,
                    ),
                })
                .collect()
        });
        for r in results {
            summary.failed += usize::from(r.is_failed());
            write_line(&mut out, &r, output)?;
        }
        out.flush().map_err(io_err(output))?;
        info!("{} of {} rows written", summary.written + chunk.len(), todo.len());
        summary.written += chunk.len();
    }
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RecoverSummary {
    pub records: usize,
    pub found: usize,
    pub not_reviewed: usize,
    pub unsuccessful: usize,
    /// Records that could not be matched to a task; written as unsuccessful.
    pub errors: Vec<RecordError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub zbmath_internal_id: i64,
    pub message: String,
}

/// Map each extraction in `results` back to offsets in its task content.
/// Records whose task cannot be rebuilt are reported, not fatal.
pub fn run_recover(
    results: &Path,
    metadata: &Path,
    pages_dir: &Path,
    output: &Path,
) -> Result<RecoverSummary, PipelineError> {
    let extractions: Vec<ExtractionResult> = read_jsonl(results)?;
    let inputs = load_inputs(metadata, pages_dir)?;
    let mut outcomes = Vec::with_capacity(extractions.len());
    let mut summary = RecoverSummary::default();
    for e in &extractions {
        let task = match inputs.table.position_of(e.zbmath_internal_id) {
            Some(idx) => assemble_task(&inputs.table, &inputs.store, idx).map_err(|err| err.to_string()),
            None => Err("not in the metadata".to_string()),
        };
        let outcome = match task {
            Ok(task) => recover_for_task(&task, e),
            Err(err) => {
                warn!("document {}: {err}", e.zbmath_internal_id);
                summary.errors.push(RecordError {
                    zbmath_internal_id: e.zbmath_internal_id,
                    message: err,
                });
                IndexOutcome {
                    zbmath_internal_id: e.zbmath_internal_id,
                    status: IndexStatus::Unsuccessful,
                    source_pages: Vec::new(),
                    page_offsets: Vec::new(),
                }
            }
        };
        match outcome.status {
            IndexStatus::Found { .. } => summary.found += 1,
            IndexStatus::NotReviewed => summary.not_reviewed += 1,
            IndexStatus::Unsuccessful => summary.unsuccessful += 1,
        }
        outcomes.push(outcome);
    }
    summary.records = outcomes.len();
    write_jsonl(output, &outcomes)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Text,
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EvalOutput {
    Text(EvalReport),
    Index(IndexScores),
}

pub fn run_eval(results: &Path, gold: &Path, mode: EvalMode) -> Result<EvalOutput, PipelineError> {
    let gold = load_gold(gold)?;
    Ok(match mode {
        EvalMode::Text => EvalOutput::Text(score_splitting(&read_jsonl(results)?, &gold)?),
        EvalMode::Index => EvalOutput::Index(score_indexes(&read_jsonl(results)?, &gold)?),
    })
}

/// Compare page texts in each candidate directory against the reference
/// directory, matching files by name. `.json` page records contribute their
/// `latex` field, anything else is read as plain text.
pub fn run_eval_ocr(candidates: &[PathBuf], references: &Path) -> Result<Vec<OcrMetricsRow>, PipelineError> {
    let refs = read_page_texts(references)?;
    if refs.is_empty() {
        return Err(EvalError::NoPairs.into());
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for dir in candidates {
        let cands = read_page_texts(dir)?;
        let names: Vec<&String> = cands.iter().map(|(n, _)| n).collect();
        let ref_names: Vec<&String> = refs.iter().map(|(n, _)| n).collect();
        if names != ref_names {
            let unmatched = names
                .iter()
                .find(|n| !ref_names.contains(n))
                .or_else(|| ref_names.iter().find(|n| !names.contains(n)))
                .map_or_else(String::new, |n| n.to_string());
            return Err(PipelineError::Invalid(format!(
                "{}: file {unmatched} has no counterpart",
                dir.display()
            )));
        }
        let pairs: Vec<(&str, &str)> = cands
            .iter()
            .zip(&refs)
            .map(|((_, c), (_, r))| (c.as_str(), r.as_str()))
            .collect();
        let engine = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        rows.push(ocr_eval(&pairs, &engine)?);
    }
    Ok(rows)
}

fn read_page_texts(dir: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut out = Vec::with_capacity(entries.len());
    for path in entries {
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        let text = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&raw).map_err(|e| PipelineError::BadRecord {
                path: path.clone(),
                line: 1,
                message: e.to_string(),
            })?;
            v["latex"].as_str().map(str::to_string).ok_or_else(|| PipelineError::BadRecord {
                path: path.clone(),
                line: 1,
                message: "no latex field".into(),
            })?
        } else {
            raw
        };
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        out.push((name, text));
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::BadRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PipelineError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in records {
        write_line(&mut out, r, path)?;
    }
    out.flush().map_err(io_err(path))
}

fn write_line<T: Serialize>(out: &mut impl Write, record: &T, path: &Path) -> Result<(), PipelineError> {
    let line = serde_json::to_string(record).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    writeln!(out, "{line}").map_err(io_err(path))
}

/// Keep the longest prefix of newline-terminated, parseable records and cut
/// the file there.
fn truncate_to_complete<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let data = fs::read(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut keep = 0usize;
    let mut pos = 0usize;
    while let Some(nl) = data[pos..].iter().position(|&b| b == b'\n') {
        let line = &data[pos..pos + nl];
        match serde_json::from_slice::<T>(line) {
            Ok(r) => records.push(r),
            Err(_) => break,
        }
        pos += nl + 1;
        keep = pos;
    }
    if keep < data.len() {
        warn!("{}: dropping {} trailing bytes", path.display(), data.len() - keep);
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(keep as u64).map_err(io_err(path))?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthOptions};

    fn inputs() -> Inputs {
        let c = generate(&SynthOptions {
            documents: 12,
            ..Default::default()
        });
        let (table, exclusions) = exclude_incomplete(&c.table(), &c.store());
        Inputs {
            table,
            store: c.store(),
            exclusions,
        }
    }

    #[test]
    fn output_order_independent_of_workers() {
        let dir = tempfile::tempdir().unwrap();
        let ex = Extractor::Regex(RegexSplitter::new(DEFAULT_FUZZY_THRESHOLD));
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        split_inputs(&inputs(), &ex, &a, 1, false).unwrap();
        split_inputs(&inputs(), &ex, &b, 5, false).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn resume_drops_partial_line() {
        let dir = tempfile::tempdir().unwrap();
        let ex = Extractor::Regex(RegexSplitter::new(DEFAULT_FUZZY_THRESHOLD));
        let full = dir.path().join("full.jsonl");
        split_inputs(&inputs(), &ex, &full, 2, false).unwrap();
        let bytes = fs::read(&full).unwrap();

        let part = dir.path().join("part.jsonl");
        fs::write(&part, &bytes[..bytes.len() / 2]).unwrap();
        let s = split_inputs(&inputs(), &ex, &part, 3, true).unwrap();
        assert!(s.resumed > 0);
        assert_eq!(fs::read(&part).unwrap(), bytes);
    }

    #[test]
    fn exclusion_log_name() {
        assert_eq!(
            exclusion_log_path(Path::new("/tmp/out.jsonl")),
            PathBuf::from("/tmp/out.jsonl.excluded.jsonl")
        );
    }
}
