use std::collections::HashMap;

use crate::textnorm::levenshtein_chars;

pub const BLEU_MAX_ORDER: usize = 4;

/// Sentence-level BLEU-4 on whitespace tokens, uniform weights, no smoothing.
///
/// Candidates shorter than four tokens use n-gram orders up to their own
/// length. An empty candidate scores 0.
pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let cand: Vec<&str> = candidate.split_whitespace().collect();
    let refr: Vec<&str> = reference.split_whitespace().collect();
    if cand.is_empty() {
        return 0.0;
    }
    let max_n = BLEU_MAX_ORDER.min(cand.len());
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refr, n);
        let clipped: usize = cand_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        let total = cand.len() + 1 - n;
        log_sum += (clipped as f64 / total as f64).ln() / max_n as f64;
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * log_sum.exp()
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Character edit distance divided by the longer length; 0 for two empty
/// strings.
pub fn normalized_edit_distance(candidate: &str, reference: &str) -> f64 {
    let a: Vec<char> = candidate.chars().collect();
    let b: Vec<char> = reference.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein_chars(&a, &b) as f64 / longest as f64
}
