//! Splitting accuracy, index accuracy, OCR quality and error-indicator
//! analyses.

mod confidence;
mod metrics;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use confidence::{
    confidence_correlation, ConfidenceReport, ConfidenceSummary, DocumentConfidence,
    DocumentCorrectness, DEFAULT_LOWEST_K,
};
pub use metrics::{bleu, normalized_edit_distance, BLEU_MAX_ORDER};

use crate::extraction::{ExtractionResult, ExtractionStatus};
use crate::index_recovery::{IndexOutcome, IndexStatus};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("result for document {0} has no gold record")]
    UnknownId(i64),
    #[error("document {0} appears more than once")]
    DuplicateId(i64),
    #[error("gold record {0} is text but has no gold indexes")]
    MissingGoldIndexes(i64),
    #[error("gold line {line}: {message}")]
    InvalidGold { line: usize, message: String },
    #[error("no page pairs to evaluate")]
    NoPairs,
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoldAnswer {
    Text(String),
    NotReviewed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub zbmath_internal_id: i64,
    pub gold: GoldAnswer,
    /// `start..end` characters in the task content, end exclusive.
    pub gold_indexes: Option<(usize, usize)>,
}

/// One line of a gold JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLine {
    pub zbmath_internal_id: i64,
    pub gold_text: Option<String>,
    pub not_reviewed: bool,
    pub gold_start: Option<usize>,
    pub gold_end: Option<usize>,
}

impl From<&GoldRecord> for GoldLine {
    fn from(g: &GoldRecord) -> Self {
        GoldLine {
            zbmath_internal_id: g.zbmath_internal_id,
            gold_text: match &g.gold {
                GoldAnswer::Text(t) => Some(t.clone()),
                GoldAnswer::NotReviewed => None,
            },
            not_reviewed: g.gold == GoldAnswer::NotReviewed,
            gold_start: g.gold_indexes.map(|i| i.0),
            gold_end: g.gold_indexes.map(|i| i.1),
        }
    }
}

impl TryFrom<GoldLine> for GoldRecord {
    type Error = String;

    fn try_from(l: GoldLine) -> Result<Self, String> {
        let gold = match (l.not_reviewed, l.gold_text) {
            (true, _) => GoldAnswer::NotReviewed,
            (false, Some(t)) if !t.trim().is_empty() => GoldAnswer::Text(t),
            (false, _) => return Err("gold_text is required unless not_reviewed is true".into()),
        };
        let gold_indexes = match (l.gold_start, l.gold_end) {
            (Some(s), Some(e)) if s < e => Some((s, e)),
            (Some(s), Some(e)) => return Err(format!("gold_start {s} is not before gold_end {e}")),
            (None, None) => None,
            _ => return Err("gold_start and gold_end must be given together".into()),
        };
        Ok(GoldRecord {
            zbmath_internal_id: l.zbmath_internal_id,
            gold,
            gold_indexes,
        })
    }
}

pub fn parse_gold(reader: impl BufRead) -> Result<Vec<GoldRecord>, EvalError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| EvalError::InvalidGold {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GoldLine = serde_json::from_str(&line).map_err(|e| EvalError::InvalidGold {
            line: line_no,
            message: e.to_string(),
        })?;
        let rec = GoldRecord::try_from(parsed).map_err(|message| EvalError::InvalidGold {
            line: line_no,
            message,
        })?;
        if !seen.insert(rec.zbmath_internal_id) {
            return Err(EvalError::DuplicateId(rec.zbmath_internal_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldRecord>, EvalError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_gold(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub attempted: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_status: BTreeMap<String, usize>,
    pub method: String,
}

fn gold_index(gold: &[GoldRecord]) -> HashMap<i64, &GoldRecord> {
    gold.iter().map(|g| (g.zbmath_internal_id, g)).collect()
}

fn check_ids(ids: impl Iterator<Item = i64>, gold: &HashMap<i64, &GoldRecord>) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !gold.contains_key(&id) {
            return Err(EvalError::UnknownId(id));
        }
        if !seen.insert(id) {
            return Err(EvalError::DuplicateId(id));
        }
    }
    Ok(())
}

/// Text equality after trimming outer whitespace; both-not-reviewed counts
/// as correct; failures count as attempted and wrong.
pub fn is_correct_text(result: &ExtractionStatus, gold: &GoldAnswer) -> bool {
    match (result, gold) {
        (ExtractionStatus::NotReviewed, GoldAnswer::NotReviewed) => true,
        (ExtractionStatus::Text { text }, GoldAnswer::Text(g)) => text.trim() == g.trim(),
        _ => false,
    }
}

/// Accuracy over the documents for which a result exists.
pub fn score_splitting(results: &[ExtractionResult], gold: &[GoldRecord]) -> Result<EvalReport, EvalError> {
    let by_id = gold_index(gold);
    check_ids(results.iter().map(|r| r.zbmath_internal_id), &by_id)?;
    let mut per_status = BTreeMap::new();
    let mut correct = 0;
    for r in results {
        *per_status.entry(r.status.kind().to_string()).or_insert(0) += 1;
        if is_correct_text(&r.status, &by_id[&r.zbmath_internal_id].gold) {
            correct += 1;
        }
    }
    let methods: HashSet<_> = results.iter().map(|r| r.method).collect();
    let method = match methods.len() {
        0 => "none".to_string(),
        1 => serde_json::to_value(results[0].method)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        _ => "mixed".to_string(),
    };
    let attempted = results.len();
    Ok(EvalReport {
        total: gold.len(),
        attempted,
        correct,
        accuracy: ratio(correct, attempted),
        per_status,
        method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexScores {
    pub total: usize,
    pub covered: usize,
    pub correct: usize,
    pub coverage: f64,
    pub accuracy_on_covered: f64,
    pub overall: f64,
}

pub fn score_indexes(outcomes: &[IndexOutcome], gold: &[GoldRecord]) -> Result<IndexScores, EvalError> {
    let by_id = gold_index(gold);
    check_ids(outcomes.iter().map(|o| o.zbmath_internal_id), &by_id)?;
    if let Some(g) = gold
        .iter()
        .find(|g| matches!(g.gold, GoldAnswer::Text(_)) && g.gold_indexes.is_none())
    {
        return Err(EvalError::MissingGoldIndexes(g.zbmath_internal_id));
    }
    let mut covered = 0;
    let mut correct = 0;
    for o in outcomes {
        let g = by_id[&o.zbmath_internal_id];
        match (o.status, &g.gold) {
            (IndexStatus::Unsuccessful, _) => {}
            (IndexStatus::NotReviewed, gold) => {
                covered += 1;
                correct += usize::from(*gold == GoldAnswer::NotReviewed);
            }
            (IndexStatus::Found { start, end }, _) => {
                covered += 1;
                correct += usize::from(g.gold_indexes == Some((start, end)));
            }
        }
    }
    let total = gold.len();
    Ok(IndexScores {
        total,
        covered,
        correct,
        coverage: ratio(covered, total),
        accuracy_on_covered: ratio(correct, covered),
        overall: ratio(correct, total),
    })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrMetricsRow {
    pub engine: String,
    pub pages: usize,
    pub average_bleu: f64,
    pub average_edit_distance: f64,
}

/// Macro-average of per-page BLEU and normalized edit distance.
pub fn ocr_eval<C: AsRef<str>, R: AsRef<str>>(
    pairs: &[(C, R)],
    engine_name: &str,
) -> Result<OcrMetricsRow, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let n = pairs.len() as f64;
    let (b, d) = pairs.iter().fold((0.0, 0.0), |(b, d), (c, r)| {
        (
            b + bleu(c.as_ref(), r.as_ref()),
            d + normalized_edit_distance(c.as_ref(), r.as_ref()),
        )
    });
    Ok(OcrMetricsRow {
        engine: engine_name.to_string(),
        pages: pairs.len(),
        average_bleu: b / n,
        average_edit_distance: d / n,
    })
}

/// Metrics as rows, engines as columns.
pub fn render_ocr_table(rows: &[OcrMetricsRow]) -> String {
    let mut header = vec!["Metric".to_string()];
    header.extend(rows.iter().map(|r| r.engine.clone()));
    let bleu_row: Vec<String> = std::iter::once("Average BLEU".to_string())
        .chain(rows.iter().map(|r| format!("{:.4}", r.average_bleu)))
        .collect();
    let ed_row: Vec<String> = std::iter::once("Average Edit Distance".to_string())
        .chain(rows.iter().map(|r| format!("{:.4}", r.average_edit_distance)))
        .collect();
    render_grid(&[header, bleu_row, ed_row])
}

/// One row per approach with its accuracy.
pub fn render_accuracy_table(reports: &[(String, EvalReport)]) -> String {
    let mut grid = vec![vec![
        "Approach".to_string(),
        "Accuracy".to_string(),
        "Correct".to_string(),
        "Attempted".to_string(),
        "Total".to_string(),
    ]];
    for (name, r) in reports {
        grid.push(vec![
            name.clone(),
            format!("{:.1}%", r.accuracy * 100.0),
            r.correct.to_string(),
            r.attempted.to_string(),
            r.total.to_string(),
        ]);
    }
    render_grid(&grid)
}

pub fn render_index_table(s: &IndexScores) -> String {
    render_grid(&[
        vec!["Measure".into(), "Value".into(), "Count".into()],
        vec![
            "Coverage".into(),
            format!("{:.1}%", s.coverage * 100.0),
            format!("{}/{}", s.covered, s.total),
        ],
        vec![
            "Accuracy on covered".into(),
            format!("{:.1}%", s.accuracy_on_covered * 100.0),
            format!("{}/{}", s.correct, s.covered),
        ],
        vec![
            "Overall accuracy".into(),
            format!("{:.1}%", s.overall * 100.0),
            format!("{}/{}", s.correct, s.total),
        ],
    ])
}

fn render_grid(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let rule: String = {
        let mut s = String::from("+");
        for w in &widths {
            s.push_str(&"-".repeat(w + 2));
            s.push('+');
        }
        s
    };
    let mut out = String::new();
    out.push_str(&rule);
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        out.push('|');
        for (c, w) in widths.iter().enumerate() {
            let cell = row.get(c).map(String::as_str).unwrap_or("");
            let pad = w - cell.chars().count();
            let _ = write!(out, " {cell}{} |", " ".repeat(pad));
        }
        out.push('\n');
        if i == 0 {
            out.push_str(&rule);
            out.push('\n');
        }
    }
    out.push_str(&rule);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Method;

    fn gold_text(id: i64, t: &str, idx: Option<(usize, usize)>) -> GoldRecord {
        GoldRecord {
            zbmath_internal_id: id,
            gold: GoldAnswer::Text(t.into()),
            gold_indexes: idx,
        }
    }

    fn gold_nr(id: i64) -> GoldRecord {
        GoldRecord {
            zbmath_internal_id: id,
            gold: GoldAnswer::NotReviewed,
            gold_indexes: None,
        }
    }

    fn res(id: i64, status: ExtractionStatus) -> ExtractionResult {
        ExtractionResult::new(id, status, Method::Regex)
    }

    fn text(t: &str) -> ExtractionStatus {
        ExtractionStatus::Text { text: t.into() }
    }

    fn idx(id: i64, status: IndexStatus) -> IndexOutcome {
        IndexOutcome {
            zbmath_internal_id: id,
            status,
            source_pages: vec![],
            page_offsets: vec![],
        }
    }

    #[test]
    fn two_of_three() {
        let gold = vec![gold_text(1, "A", None), gold_text(2, "B", None), gold_text(3, "C", None)];
        let results = vec![
            res(1, text("A")),
            res(2, text(" B\n")),
            res(3, ExtractionStatus::failed("row title not found")),
        ];
        let r = score_splitting(&results, &gold).unwrap();
        assert_eq!((r.correct, r.attempted, r.total), (2, 3, 3));
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_status["failed"], 1);
        assert_eq!(r.method, "regex");
    }

    #[test]
    fn not_reviewed_matches_and_one_char_off_does_not() {
        let gold = vec![gold_nr(1), gold_text(2, "Body text.", None)];
        let results = vec![res(1, ExtractionStatus::NotReviewed), res(2, text("Body text,"))];
        let r = score_splitting(&results, &gold).unwrap();
        assert_eq!(r.correct, 1);
    }

    #[test]
    fn unknown_result_id_is_named() {
        let gold = vec![gold_nr(1)];
        let err = score_splitting(&[res(2, ExtractionStatus::NotReviewed)], &gold).unwrap_err();
        assert!(matches!(err, EvalError::UnknownId(2)));
        assert!(err.to_string().contains('2'));
    }

    #[test]
    fn index_scores_ten_docs() {
        // 9 covered and correct, 1 unsuccessful.
        let mut gold = Vec::new();
        let mut out = Vec::new();
        for i in 0..10 {
            gold.push(gold_text(i, "x", Some((i as usize, i as usize + 5))));
            out.push(idx(
                i,
                if i == 9 {
                    IndexStatus::Unsuccessful
                } else {
                    IndexStatus::Found { start: i as usize, end: i as usize + 5 }
                },
            ));
        }
        let s = score_indexes(&out, &gold).unwrap();
        assert!((s.coverage - 0.9).abs() < 1e-12);
        assert_eq!(s.accuracy_on_covered, 1.0);
        assert!((s.overall - 0.9).abs() < 1e-12);
    }

    #[test]
    fn index_scores_degenerate_and_perfect() {
        let gold = vec![gold_text(1, "x", Some((0, 1))), gold_nr(2)];
        let none = vec![idx(1, IndexStatus::Unsuccessful), idx(2, IndexStatus::Unsuccessful)];
        let s = score_indexes(&none, &gold).unwrap();
        assert_eq!((s.coverage, s.overall, s.accuracy_on_covered), (0.0, 0.0, 0.0));
        let all = vec![
            idx(1, IndexStatus::Found { start: 0, end: 1 }),
            idx(2, IndexStatus::NotReviewed),
        ];
        let s = score_indexes(&all, &gold).unwrap();
        assert_eq!((s.coverage, s.accuracy_on_covered, s.overall), (1.0, 1.0, 1.0));
    }

    #[test]
    fn index_scores_require_gold_indexes() {
        let gold = vec![gold_text(1, "x", None)];
        assert!(matches!(
            score_indexes(&[], &gold),
            Err(EvalError::MissingGoldIndexes(1))
        ));
    }

    #[test]
    fn ocr_rows() {
        let row = ocr_eval(&[("a b c d", "a b c d"), ("x y z w", "x y z w")], "engine").unwrap();
        assert_eq!((row.average_bleu, row.average_edit_distance), (1.0, 0.0));
        assert!(matches!(ocr_eval::<&str, &str>(&[], "e"), Err(EvalError::NoPairs)));
        let table = render_ocr_table(&[row]);
        assert!(table.contains("Average BLEU"));
        assert!(table.contains("Average Edit Distance"));
        assert!(table.contains("1.0000"));
    }

    #[test]
    fn gold_lines() {
        let data = r#"{"zbmath_internal_id": 1, "gold_text": "Body", "not_reviewed": false, "gold_start": 3, "gold_end": 7}
{"zbmath_internal_id": 2, "gold_text": null, "not_reviewed": true, "gold_start": null, "gold_end": null}
"#;
        let g = parse_gold(data.as_bytes()).unwrap();
        assert_eq!(g[0], gold_text(1, "Body", Some((3, 7))));
        assert_eq!(g[1], gold_nr(2));
        assert_eq!(GoldLine::from(&g[0]).gold_start, Some(3));

        let bad = r#"{"zbmath_internal_id": 1, "gold_text": null, "not_reviewed": false, "gold_start": null, "gold_end": null}"#;
        assert!(matches!(parse_gold(bad.as_bytes()), Err(EvalError::InvalidGold { line: 1, .. })));
    }
}
