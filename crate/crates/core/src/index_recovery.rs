//! Map an extracted document back to character offsets in the source LaTeX.
//!
//! Both texts are compared with spaces and tabs removed, so an answer whose
//! only edits are whitespace fixes still locates exactly. Any other change
//! (corrected characters, dropped metadata mid-span, invented words) makes
//! the search fail, which is how hallucinated answers are filtered out.

use serde::{Deserialize, Serialize};

use crate::corpus::SplitTask;
use crate::extraction::{ExtractionResult, ExtractionStatus};
use crate::textnorm::{strip_spaces_with_map, IndexMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IndexStatus {
    /// `start..end` in characters of the task content, end exclusive.
    Found { start: usize, end: usize },
    NotReviewed,
    Unsuccessful,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexOutcome {
    pub zbmath_internal_id: i64,
    #[serde(flatten)]
    pub status: IndexStatus,
    #[serde(default)]
    pub source_pages: Vec<String>,
    /// Start offset of each source page within the task content.
    #[serde(default)]
    pub page_offsets: Vec<usize>,
}

/// Locate the extraction in `content`.
pub fn recover_indexes(content: &str, extraction: &ExtractionResult) -> IndexOutcome {
    IndexOutcome {
        zbmath_internal_id: extraction.zbmath_internal_id,
        status: recover_status(content, &extraction.status),
        source_pages: Vec::new(),
        page_offsets: Vec::new(),
    }
}

/// [`recover_indexes`] over a task, recording the pages the span may cover.
pub fn recover_for_task(task: &SplitTask, extraction: &ExtractionResult) -> IndexOutcome {
    IndexOutcome {
        source_pages: task.page_span.clone(),
        page_offsets: task.page_offsets.clone(),
        ..recover_indexes(&task.latex_content, extraction)
    }
}

fn recover_status(content: &str, status: &ExtractionStatus) -> IndexStatus {
    let text = match status {
        ExtractionStatus::NotReviewed => return IndexStatus::NotReviewed,
        ExtractionStatus::Failed { .. } => return IndexStatus::Unsuccessful,
        ExtractionStatus::Text { text } => text,
    };
    let hay = strip_spaces_with_map(content);
    let needle = strip_spaces_with_map(text);
    match find_stripped(&hay, &needle) {
        Some((start, end)) => IndexStatus::Found { start, end },
        None => IndexStatus::Unsuccessful,
    }
}

/// First occurrence of `needle.stripped` in `hay.stripped`, mapped back to
/// original character offsets.
fn find_stripped(hay: &IndexMap, needle: &IndexMap) -> Option<(usize, usize)> {
    if needle.is_empty() {
        return None;
    }
    let byte_pos = hay.stripped.find(&needle.stripped)?;
    let first = hay.stripped[..byte_pos].chars().count();
    let last = first + needle.len() - 1;
    Some((hay.to_original[first], hay.to_original[last] + 1))
}

/// Which page of a task a character offset falls on.
pub fn page_of_offset(outcome: &IndexOutcome, offset: usize) -> Option<&str> {
    let idx = outcome.page_offsets.partition_point(|&o| o <= offset);
    idx.checked_sub(1)
        .and_then(|i| outcome.source_pages.get(i))
        .map(String::as_str)
}
