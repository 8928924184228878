//! LLM-backed extraction: prompt construction, chat-completions backends and
//! three-model majority voting.

mod backend;
mod prompt;
mod vote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use backend::{
    load_backends, parse_backends, parse_chat_response, query_backend, validate_backends,
    BackendConfig, BackendError, CompletionBackend, ConfigError, HttpBackend, ModelOutput,
    API_KEY_ENV_PREFIX, DEFAULT_MAX_TOKENS,
};
pub use prompt::{
    build_prompt, builtin_few_shot, render_task_section, FewShotExample, Prompt, PromptOptions,
    EMPTY_REVIEW_CLAUSE, INSTRUCTION, PROMPT_TEMPLATE_VERSION,
};
pub use vote::{majority_vote, Answer, BackendAnswer, VoteError, VoteOutcome};

use crate::corpus::SplitTask;
use crate::extraction::{
    Agreement, BackendFailure, ExtractionResult, ExtractionStatus, Method, VoteSummary,
};

/// Probability summaries of one generated answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenProbStats {
    pub first: f64,
    pub avg_first5: f64,
    pub avg_all: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("token probabilities unavailable")]
pub struct StatsUnavailable;

pub fn token_prob_stats(output: &ModelOutput) -> Result<TokenProbStats, StatsUnavailable> {
    let lps = output
        .token_logprobs
        .as_deref()
        .filter(|l| !l.is_empty())
        .ok_or(StatsUnavailable)?;
    let probs: Vec<f64> = lps.iter().map(|lp| lp.exp()).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(TokenProbStats {
        first: probs[0],
        avg_first5: mean(&probs[..probs.len().min(5)]),
        avg_all: mean(&probs),
    })
}

/// Runs prompts against one or three backends and turns answers into
/// extraction results.
#[derive(Clone)]
pub struct LlmSplitter {
    backends: Vec<Arc<dyn CompletionBackend>>,
    best: String,
    options: PromptOptions,
}

impl std::fmt::Debug for LlmSplitter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmSplitter")
            .field("backends", &self.backends.iter().map(|b| b.name()).collect::<Vec<_>>())
            .field("best", &self.best)
            .finish()
    }
}

impl LlmSplitter {
    /// `best` must name one of `backends`.
    pub fn new(
        backends: Vec<Arc<dyn CompletionBackend>>,
        best: impl Into<String>,
        options: PromptOptions,
    ) -> Result<Self, VoteError> {
        let best = best.into();
        if !backends.iter().any(|b| b.name() == best) {
            return Err(VoteError::UnknownBest(best));
        }
        Ok(LlmSplitter {
            backends,
            best,
            options,
        })
    }

    /// HTTP backends from configuration.
    pub fn from_configs(configs: &[BackendConfig], options: PromptOptions) -> Result<Self, BackendError> {
        let best = configs
            .iter()
            .find(|c| c.is_best)
            .map(|c| c.name.clone())
            .unwrap_or_default();
        let backends = configs
            .iter()
            .map(|c| HttpBackend::new(c.clone()).map(|b| Arc::new(b) as Arc<dyn CompletionBackend>))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LlmSplitter {
            backends,
            best,
            options,
        })
    }

    pub fn backend_count(&self) -> usize {
        self.backends.len()
    }

    pub fn best(&self) -> &str {
        &self.best
    }

    fn best_backend(&self) -> &Arc<dyn CompletionBackend> {
        self.backends
            .iter()
            .find(|b| b.name() == self.best)
            .expect("best backend validated on construction")
    }

    /// Ask only the best backend.
    pub fn extract_single(&self, task: &SplitTask) -> ExtractionResult {
        let id = task.row.zbmath_internal_id;
        let prompt = build_prompt(task, &self.options);
        let backend = self.best_backend();
        let status = match backend.complete(&prompt) {
            Ok(out) => answer_status(&Answer::canonical(&out.text)),
            Err(e) => ExtractionStatus::failed(e.to_string()),
        };
        let mut result = ExtractionResult::new(id, status, Method::LlmSingle);
        result.vote = Some(VoteSummary {
            agreement: Agreement::None,
            decided_by: backend.name().to_string(),
            backend_errors: Vec::new(),
        });
        result
    }

    /// Query all three backends concurrently and vote.
    pub fn extract_vote(&self, task: &SplitTask) -> ExtractionResult {
        let id = task.row.zbmath_internal_id;
        let prompt = build_prompt(task, &self.options);
        let answers: Vec<BackendAnswer> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .backends
                .iter()
                .map(|b| {
                    let prompt = &prompt;
                    s.spawn(move || match b.complete(prompt) {
                        Ok(out) => BackendAnswer::ok(out),
                        Err(e) => BackendAnswer {
                            backend: b.name().to_string(),
                            output: Err(e),
                        },
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("backend thread panicked"))
                .collect()
        });
        let backend_errors: Vec<BackendFailure> = answers
            .iter()
            .filter_map(|a| {
                a.output.as_ref().err().map(|e| BackendFailure {
                    backend: a.backend.clone(),
                    error: e.to_string(),
                })
            })
            .collect();
        match majority_vote(answers, &self.best) {
            Ok(outcome) => {
                let mut r = ExtractionResult::new(id, answer_status(&outcome.final_answer), Method::LlmVote);
                r.vote = Some(VoteSummary {
                    agreement: outcome.agreement,
                    decided_by: outcome.decided_by,
                    backend_errors,
                });
                r
            }
            Err(e) => {
                let mut r = ExtractionResult::new(id, ExtractionStatus::failed(e.to_string()), Method::LlmVote);
                r.vote = Some(VoteSummary {
                    agreement: Agreement::None,
                    decided_by: self.best.clone(),
                    backend_errors,
                });
                r
            }
        }
    }
}

fn answer_status(answer: &Answer) -> ExtractionStatus {
    match answer {
        Answer::NotReviewed => ExtractionStatus::NotReviewed,
        Answer::Text(t) => ExtractionStatus::Text { text: t.clone() },
    }
}
