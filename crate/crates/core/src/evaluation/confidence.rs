use serde::{Deserialize, Serialize};

use crate::corpus::PageStore;

pub const DEFAULT_LOWEST_K: usize = 10;

/// Whether one processed document was correct, and the pages it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentCorrectness {
    pub zbmath_internal_id: i64,
    pub pages: Vec<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentConfidence {
    pub zbmath_internal_id: i64,
    pub confidence: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSummary {
    pub mean_confidence: f64,
    pub errors_above_mean: usize,
    pub errors_at_or_below_mean: usize,
    pub correct_above_mean: usize,
    pub correct_at_or_below_mean: usize,
    pub lowest_k: usize,
    pub errors_in_lowest_k: usize,
}

/// Does OCR confidence separate correct from incorrect documents?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConfidenceReport {
    Available {
        documents: Vec<DocumentConfidence>,
        summary: ConfidenceSummary,
        /// Documents skipped because none of their pages carry a confidence.
        skipped: Vec<i64>,
    },
    Unavailable,
}

/// Average each document's page confidences, then split errors by the mean
/// over documents and count errors among the `k` least confident documents.
pub fn confidence_correlation(
    outcomes: &[DocumentCorrectness],
    pages: &PageStore,
    k: usize,
) -> ConfidenceReport {
    let mut documents = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        let confs: Vec<f64> = o
            .pages
            .iter()
            .filter_map(|p| pages.get(p).and_then(|p| p.confidence))
            .collect();
        if confs.is_empty() {
            skipped.push(o.zbmath_internal_id);
            continue;
        }
        documents.push(DocumentConfidence {
            zbmath_internal_id: o.zbmath_internal_id,
            confidence: confs.iter().sum::<f64>() / confs.len() as f64,
            correct: o.correct,
        });
    }
    if documents.is_empty() {
        return ConfidenceReport::Unavailable;
    }

    let mean = documents.iter().map(|d| d.confidence).sum::<f64>() / documents.len() as f64;
    let count = |above: bool, correct: bool| {
        documents
            .iter()
            .filter(|d| (d.confidence > mean) == above && d.correct == correct)
            .count()
    };

    let mut by_conf: Vec<&DocumentConfidence> = documents.iter().collect();
    by_conf.sort_by(|a, b| {
        a.confidence
            .total_cmp(&b.confidence)
            .then(a.zbmath_internal_id.cmp(&b.zbmath_internal_id))
    });
    let lowest_k = k.min(by_conf.len());
    let errors_in_lowest_k = by_conf[..lowest_k].iter().filter(|d| !d.correct).count();

    let summary = ConfidenceSummary {
        mean_confidence: mean,
        errors_above_mean: count(true, false),
        errors_at_or_below_mean: count(false, false),
        correct_above_mean: count(true, true),
        correct_at_or_below_mean: count(false, true),
        lowest_k,
        errors_in_lowest_k,
    };
    ConfidenceReport::Available {
        documents,
        summary,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ScanPage;

    fn store(confs: &[(String, Option<f64>)]) -> PageStore {
        PageStore::from_pages(confs.iter().map(|(id, c)| ScanPage {
            scan_document_id: id.clone(),
            latex_content: "x".into(),
            confidence: *c,
        }))
    }

    fn doc(id: i64, page: &str, correct: bool) -> DocumentCorrectness {
        DocumentCorrectness {
            zbmath_internal_id: id,
            pages: vec![page.into()],
            correct,
        }
    }

    #[test]
    fn constant_confidence_is_well_formed() {
        let pages: Vec<_> = (0..4).map(|i| (format!("001/{i:03}"), Some(0.9))).collect();
        let docs: Vec<_> = (0..4).map(|i| doc(i, &format!("001/{i:03}"), i % 2 == 0)).collect();
        match confidence_correlation(&docs, &store(&pages), DEFAULT_LOWEST_K) {
            ConfidenceReport::Available { summary, .. } => {
                assert_eq!(summary.errors_above_mean, 0);
                assert_eq!(summary.errors_at_or_below_mean, 2);
                assert_eq!(summary.lowest_k, 4);
            }
            ConfidenceReport::Unavailable => panic!("expected a report"),
        }
    }

    #[test]
    fn no_confidence_unavailable() {
        let pages = vec![("001/001".to_string(), None)];
        let docs = vec![doc(1, "001/001", true)];
        assert_eq!(
            confidence_correlation(&docs, &store(&pages), 10),
            ConfidenceReport::Unavailable
        );
    }

    #[test]
    fn no_errors_zero_counts() {
        let pages = vec![("001/001".to_string(), Some(0.5)), ("001/002".to_string(), Some(0.9))];
        let docs = vec![doc(1, "001/001", true), doc(2, "001/002", true)];
        let ConfidenceReport::Available { summary, .. } =
            confidence_correlation(&docs, &store(&pages), 10)
        else {
            panic!()
        };
        assert_eq!(summary.errors_above_mean + summary.errors_at_or_below_mean, 0);
        assert_eq!(summary.errors_in_lowest_k, 0);
    }
}
