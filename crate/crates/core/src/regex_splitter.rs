//! Metadata-anchored splitting: find the document's title and the next
//! document's title in the concatenated page LaTeX, take what lies between,
//! then strip page furniture.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::corpus::{title_candidates, SplitTask};
use crate::extraction::{ExtractionResult, ExtractionStatus, Method};
use crate::textnorm::{Match, MatchMode, SearchText, TitleLocator, DEFAULT_FUZZY_THRESHOLD};

/// How far into the span the row's source citation is searched for.
pub const SOURCE_SEARCH_WINDOW: usize = 200;

const MODES: [MatchMode; 3] = [MatchMode::Exact, MatchMode::Normalized, MatchMode::Fuzzy];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegexSplitter {
    locator: TitleLocator,
}

impl Default for RegexSplitter {
    fn default() -> Self {
        RegexSplitter::new(DEFAULT_FUZZY_THRESHOLD)
    }
}

impl RegexSplitter {
    pub fn new(fuzzy_threshold: f64) -> Self {
        RegexSplitter {
            locator: TitleLocator::new(fuzzy_threshold),
        }
    }

    pub fn split(&self, task: &SplitTask) -> ExtractionResult {
        let id = task.row.zbmath_internal_id;
        let text = SearchText::new(&task.latex_content);

        let Some(open) = self.cascade(&text, &title_candidates(&task.row), 0) else {
            return ExtractionResult::new(
                id,
                ExtractionStatus::failed("row title not found"),
                Method::Regex,
            );
        };
        let Some(close) = self.cascade(&text, &task.next_titles(), open.end) else {
            return ExtractionResult::new(
                id,
                ExtractionStatus::failed("next title not found"),
                Method::Regex,
            );
        };

        let span = text.slice(open.end, close.start);
        let body = trim_extraneous_with_source(&span, &task.row.source);
        let mut result = ExtractionResult::new(id, ExtractionStatus::from_text(body), Method::Regex);
        result.boundary_modes = Some((open.mode, close.mode));
        result
    }

    /// Try every title in every mode, strictest mode first.
    fn cascade(&self, text: &SearchText<'_>, titles: &[&str], from: usize) -> Option<Match> {
        MODES.iter().find_map(|&mode| {
            titles
                .iter()
                .find_map(|t| self.locator.locate_from(text, t, mode, from))
        })
    }
}

/// Split with the default fuzzy threshold.
pub fn split_document(task: &SplitTask) -> ExtractionResult {
    RegexSplitter::default().split(task)
}

// A leading line that is only citation residue: volume/page/year numbers and
// punctuation, optionally ending in a parenthesised year.
static CITATION_RESIDUE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^[\s\d.,;:()\[\]/\-\u{2013}]*(?:\(\d{4}\))?[\s.,;:]*$").unwrap()
});

static PAGE_NUMBER_LINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*(?:\d{1,4}|[ivxlcdmIVXLCDM]{1,8})[.,]?\s*$").unwrap());

// "H. Hasse (Marburg)." / "E. Landau." / "Landau."
static SIGNATURE_NAME_PLACE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^(?:\p{Lu}\.\s?)*\p{Lu}[\p{L}'\-]+(?:\s+\p{Lu}[\p{L}'\-]+)*\s*\([^()\n]{1,40}\)\.?$")
        .unwrap()
});
static SIGNATURE_NAME: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^(?:(?:\p{Lu}\.\s?)+\p{Lu}[\p{L}'\-]+\.?|\p{Lu}[\p{Ll}'\-]+\.)$").unwrap()
});

const MAX_SIGNATURE_LEN: usize = 60;

/// Remove leading citation residue, page-number lines, a trailing reviewer
/// signature and surrounding whitespace.
pub fn trim_extraneous(text: &str) -> String {
    trim_lines(text)
}

/// [`trim_extraneous`], first cutting through the row's source citation if it
/// appears (fuzzily) near the start of the text.
pub fn trim_extraneous_with_source(text: &str, source: &str) -> String {
    let source = source.trim();
    if source.is_empty() {
        return trim_lines(text);
    }
    let head: String = text.chars().take(SOURCE_SEARCH_WINDOW).collect();
    match TitleLocator::new(DEFAULT_FUZZY_THRESHOLD).locate(&head, source, MatchMode::Fuzzy) {
        Some(m) => {
            let rest: String = text.chars().skip(m.end).collect();
            trim_lines(&rest)
        }
        None => trim_lines(text),
    }
}

fn trim_lines(text: &str) -> String {
    let mut lines: Vec<&str> = text.split('\n').collect();

    // Leading residue, skipping blank lines before it.
    let mut first = 0;
    while first < lines.len() {
        let line = lines[first];
        if line.trim().is_empty() || CITATION_RESIDUE.is_match(line) {
            first += 1;
        } else {
            break;
        }
    }
    lines.drain(..first);

    lines.retain(|l| !PAGE_NUMBER_LINE.is_match(l));

    if let Some(last) = lines.iter().rposition(|l| !l.trim().is_empty()) {
        let line = lines[last].trim();
        if lines[..last].iter().any(|l| !l.trim().is_empty())
            && line.chars().count() <= MAX_SIGNATURE_LEN
            && (SIGNATURE_NAME_PLACE.is_match(line) || SIGNATURE_NAME.is_match(line))
        {
            lines.truncate(last);
        }
    }
    lines.join("\n").trim().to_string()
}
