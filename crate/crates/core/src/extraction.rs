//! Per-document extraction outcome shared by both splitters.

use serde::{Deserialize, Serialize};

use crate::textnorm::MatchMode;

/// The canonical answer for a catalogue entry without review text.
pub const NOT_REVIEWED: &str = "not reviewed.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Regex,
    LlmSingle,
    LlmVote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExtractionStatus {
    Text { text: String },
    NotReviewed,
    Failed { reason: String },
}

impl ExtractionStatus {
    /// `Text` for non-blank text, `NotReviewed` otherwise.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        if text.trim().is_empty() {
            ExtractionStatus::NotReviewed
        } else {
            ExtractionStatus::Text { text }
        }
    }

    pub fn failed(reason: impl Into<String>) -> Self {
        ExtractionStatus::Failed {
            reason: reason.into(),
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            ExtractionStatus::Text { text } => Some(text),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExtractionStatus::Text { .. } => "text",
            ExtractionStatus::NotReviewed => "not_reviewed",
            ExtractionStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Unanimous,
    Pair,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendFailure {
    pub backend: String,
    pub error: String,
}

/// How an LLM answer was reached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteSummary {
    pub agreement: Agreement,
    pub decided_by: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backend_errors: Vec<BackendFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub zbmath_internal_id: i64,
    #[serde(flatten)]
    pub status: ExtractionStatus,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_modes: Option<(MatchMode, MatchMode)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote: Option<VoteSummary>,
}

impl ExtractionResult {
    pub fn new(zbmath_internal_id: i64, status: ExtractionStatus, method: Method) -> Self {
        ExtractionResult {
            zbmath_internal_id,
            status,
            method,
            boundary_modes: None,
            vote: None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, ExtractionStatus::Failed { .. })
    }
}

/// True for the surface forms of the "not reviewed" answer: case-insensitive,
/// optional trailing period, surrounding whitespace and quotes ignored.
pub fn is_not_reviewed_answer(text: &str) -> bool {
    let t = text.trim().trim_matches(|c| c == '\'' || c == '"' || c == '\u{2018}' || c == '\u{2019}');
    let t = t.strip_suffix('.').unwrap_or(t).trim();
    t.eq_ignore_ascii_case("not reviewed")
}
