use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, ModelOutput};
use crate::extraction::{is_not_reviewed_answer, Agreement, NOT_REVIEWED};

/// One backend's contribution to a vote. A failed call never matches
/// anything.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendAnswer {
    pub backend: String,
    pub output: Result<ModelOutput, BackendError>,
}

impl BackendAnswer {
    pub fn ok(output: ModelOutput) -> Self {
        BackendAnswer {
            backend: output.backend.clone(),
            output: Ok(output),
        }
    }

    pub fn failed(error: BackendError) -> Self {
        let backend = match &error {
            BackendError::Transport { backend, .. } | BackendError::Protocol { backend, .. } => {
                backend.clone()
            }
        };
        BackendAnswer {
            backend,
            output: Err(error),
        }
    }
}

/// A model answer after canonicalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Text(String),
    NotReviewed,
}

impl Answer {
    /// Map the "not reviewed" surface forms (and blank output) to
    /// [`Answer::NotReviewed`]; otherwise keep the trimmed text.
    pub fn canonical(raw: &str) -> Self {
        let t = raw.trim();
        if t.is_empty() || is_not_reviewed_answer(t) {
            Answer::NotReviewed
        } else {
            Answer::Text(t.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Answer::Text(t) => t,
            Answer::NotReviewed => NOT_REVIEWED,
        }
    }

    /// Equality key: outer whitespace trimmed, inner space runs collapsed.
    fn vote_key(&self) -> Option<String> {
        match self {
            Answer::NotReviewed => None,
            Answer::Text(t) => Some(collapse_spaces(t)),
        }
    }
}

fn collapse_spaces(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_run = false;
    for c in s.trim().chars() {
        if c == ' ' || c == '\t' {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            out.push(c);
            in_run = false;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    pub final_answer: Answer,
    pub agreement: Agreement,
    pub per_model: Vec<BackendAnswer>,
    pub decided_by: String,
}

impl VoteOutcome {
    pub fn final_text(&self) -> &str {
        self.final_answer.as_str()
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("majority voting needs exactly 3 outputs, got {0}")]
    WrongArity(usize),
    #[error("best backend `{0}` is not among the voters")]
    UnknownBest(String),
    #[error("all backends failed")]
    AllFailed,
    #[error("no two backends agree and the best backend `{0}` failed")]
    BestFailed(String),
}

/// Any two agreeing outputs win; otherwise the best backend decides.
pub fn majority_vote(outputs: Vec<BackendAnswer>, best: &str) -> Result<VoteOutcome, VoteError> {
    if outputs.len() != 3 {
        return Err(VoteError::WrongArity(outputs.len()));
    }
    if !outputs.iter().any(|o| o.backend == best) {
        return Err(VoteError::UnknownBest(best.to_string()));
    }
    let answers: Vec<Option<Answer>> = outputs
        .iter()
        .map(|o| o.output.as_ref().ok().map(|m| Answer::canonical(&m.text)))
        .collect();
    if answers.iter().all(Option::is_none) {
        return Err(VoteError::AllFailed);
    }

    // Largest group of equal answers; at most one group can reach size 2.
    let keys: Vec<Option<Option<String>>> = answers
        .iter()
        .map(|a| a.as_ref().map(Answer::vote_key))
        .collect();
    let mut group: Vec<usize> = Vec::new();
    for i in 0..3 {
        let Some(key) = &keys[i] else { continue };
        let members: Vec<usize> = (0..3).filter(|&j| keys[j].as_ref() == Some(key)).collect();
        if members.len() > group.len() {
            group = members;
        }
    }

    if group.len() >= 2 {
        let agreement = if group.len() == 3 {
            Agreement::Unanimous
        } else {
            Agreement::Pair
        };
        // Prefer the best backend's wording, else the smallest text, so the
        // result does not depend on input order.
        let chosen = group
            .iter()
            .copied()
            .find(|&i| outputs[i].backend == best)
            .unwrap_or_else(|| {
                *group
                    .iter()
                    .min_by(|&&a, &&b| {
                        let ka = (answers[a].as_ref().map(Answer::as_str), &outputs[a].backend);
                        let kb = (answers[b].as_ref().map(Answer::as_str), &outputs[b].backend);
                        ka.cmp(&kb)
                    })
                    .expect("group is non-empty")
            });
        let final_answer = answers[chosen].clone().expect("group members succeeded");
        let decided_by = outputs[chosen].backend.clone();
        return Ok(VoteOutcome {
            final_answer,
            agreement,
            per_model: outputs,
            decided_by,
        });
    }

    let best_idx = outputs
        .iter()
        .position(|o| o.backend == best)
        .expect("checked above");
    match answers[best_idx].clone() {
        Some(final_answer) => Ok(VoteOutcome {
            final_answer,
            agreement: Agreement::None,
            per_model: outputs,
            decided_by: best.to_string(),
        }),
        None => Err(VoteError::BestFailed(best.to_string())),
    }
}
