use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::Prompt;

/// Environment variable prefix for per-backend API keys.
pub const API_KEY_ENV_PREFIX: &str = "REVSPLIT_API_KEY_";
pub const DEFAULT_MAX_TOKENS: u32 = 4096;
const MAX_BACKOFF: Duration = Duration::from_secs(30);

fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub name: String,
    /// Base URL; requests go to `<endpoint>/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default, rename = "best")]
    pub is_best: bool,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Upper bound on in-flight requests to this backend.
    #[serde(default)]
    pub max_concurrent: Option<usize>,
}

impl BackendConfig {
    pub fn new(name: &str, endpoint: &str, model: &str) -> Self {
        BackendConfig {
            name: name.to_string(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            timeout: default_timeout(),
            max_retries: default_retries(),
            is_best: false,
            initial_backoff_ms: default_backoff_ms(),
            max_tokens: default_max_tokens(),
            max_concurrent: None,
        }
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }

    pub fn api_key_var(&self) -> String {
        let suffix: String = self
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
            .collect();
        format!("{API_KEY_ENV_PREFIX}{suffix}")
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read backend config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid backend config")]
    Parse(#[from] toml::de::Error),
    #[error("backend config lists no backends")]
    Empty,
    #[error("exactly one backend must set best = true, found {0}")]
    BestCount(usize),
    #[error("duplicate backend name `{0}`")]
    DuplicateName(String),
    #[error("backend `{name}`: {message}")]
    Invalid { name: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendsFile {
    #[serde(rename = "backend")]
    backends: Vec<BackendConfig>,
}

/// Parse a TOML document of `[[backend]]` tables.
pub fn parse_backends(text: &str) -> Result<Vec<BackendConfig>, ConfigError> {
    let file: BackendsFile = toml::from_str(text)?;
    validate_backends(&file.backends)?;
    Ok(file.backends)
}

pub fn load_backends(path: impl AsRef<Path>) -> Result<Vec<BackendConfig>, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_backends(&text)
}

pub fn validate_backends(backends: &[BackendConfig]) -> Result<(), ConfigError> {
    if backends.is_empty() {
        return Err(ConfigError::Empty);
    }
    let best = backends.iter().filter(|b| b.is_best).count();
    if best != 1 {
        return Err(ConfigError::BestCount(best));
    }
    for (i, b) in backends.iter().enumerate() {
        if backends[..i].iter().any(|o| o.name == b.name) {
            return Err(ConfigError::DuplicateName(b.name.clone()));
        }
        if b.timeout.is_nan() || b.timeout <= 0.0 {
            return Err(ConfigError::Invalid {
                name: b.name.clone(),
                message: "timeout must be positive".into(),
            });
        }
        if b.max_concurrent == Some(0) {
            return Err(ConfigError::Invalid {
                name: b.name.clone(),
                message: "max_concurrent must be at least 1".into(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub backend: String,
    pub text: String,
    pub token_logprobs: Option<Vec<f64>>,
    /// Seconds.
    pub latency: f64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend `{backend}` unreachable after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("backend `{backend}` returned an unusable response: {message}")]
    Protocol { backend: String, message: String },
}

/// Anything that turns a prompt into a completion.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &Prompt) -> Result<ModelOutput, BackendError>;
}

/// Counting semaphore guarding in-flight requests.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

/// OpenAI-compatible chat-completions backend.
#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    limiter: Option<Limiter>,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build()
            .map_err(|e| BackendError::Transport {
                backend: config.name.clone(),
                attempts: 0,
                message: e.to_string(),
            })?;
        let api_key = std::env::var(config.api_key_var()).ok().filter(|k| !k.is_empty());
        let limiter = config.max_concurrent.map(Limiter::new);
        Ok(HttpBackend {
            config,
            client,
            api_key,
            limiter,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &Prompt) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt.render()}],
            "temperature": 0,
            "logprobs": true,
            "max_tokens": self.config.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.client.post(self.config.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            return Err(Attempt::Retry(format!("HTTP {status}: {}", snippet(&text))));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(format!("HTTP {status}: {}", snippet(&text))));
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fatal(format!("invalid JSON: {e}")))
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

fn snippet(s: &str) -> String {
    s.chars().take(200).collect()
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn complete(&self, prompt: &Prompt) -> Result<ModelOutput, BackendError> {
        let _slot = self.limiter.as_ref().map(Limiter::acquire);
        let body = self.request_body(prompt);
        let started = Instant::now();
        let attempts = self.config.max_retries + 1;
        let mut delay = Duration::from_millis(self.config.initial_backoff_ms);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&body) {
                Ok(json) => {
                    let (text, token_logprobs) =
                        parse_chat_response(&json).map_err(|message| BackendError::Protocol {
                            backend: self.config.name.clone(),
                            message,
                        })?;
                    return Ok(ModelOutput {
                        backend: self.config.name.clone(),
                        text,
                        token_logprobs,
                        latency: started.elapsed().as_secs_f64(),
                    });
                }
                Err(Attempt::Fatal(message)) => {
                    return Err(BackendError::Protocol {
                        backend: self.config.name.clone(),
                        message,
                    })
                }
                Err(Attempt::Retry(message)) => {
                    log::debug!(
                        "backend {} attempt {attempt}/{attempts} failed: {message}",
                        self.config.name
                    );
                    last = message;
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay = (delay * 2).min(MAX_BACKOFF);
                    }
                }
            }
        }
        Err(BackendError::Transport {
            backend: self.config.name.clone(),
            attempts,
            message: last,
        })
    }
}

/// Send one prompt to `backend`.
pub fn query_backend(backend: &BackendConfig, prompt: &Prompt) -> Result<ModelOutput, BackendError> {
    HttpBackend::new(backend.clone())?.complete(prompt)
}

/// Extract `choices[0].message.content` and, when present, the per-token
/// log-probabilities.
pub fn parse_chat_response(json: &Value) -> Result<(String, Option<Vec<f64>>), String> {
    let choice = json
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or("response has no choices[0]")?;
    let text = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or("choices[0].message.content is missing or not a string")?
        .to_string();
    let logprobs = match choice.get("logprobs").and_then(|l| l.get("content")) {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let lp = item
                    .get("logprob")
                    .and_then(Value::as_f64)
                    .ok_or("logprobs entry without numeric logprob")?;
                if lp > 0.0 || lp.is_nan() {
                    return Err(format!("logprob {lp} is not a log-probability"));
                }
                out.push(lp);
            }
            Some(out)
        }
        Some(_) => return Err("choices[0].logprobs.content is not an array".into()),
    };
    Ok((text, logprobs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config() {
        let text = r#"
[[backend]]
name = "calm"
endpoint = "http://127.0.0.1:8001/v1/"
model = "calm-7b"
best = true

[[backend]]
name = "maxine"
endpoint = "http://127.0.0.1:8002/v1"
model = "maxine-7b"
timeout = 30
max_retries = 1
"#;
        let b = parse_backends(text).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b[0].is_best && !b[1].is_best);
        assert_eq!(b[0].url(), "http://127.0.0.1:8001/v1/chat/completions");
        assert_eq!(b[1].timeout, 30.0);
        assert_eq!(b[0].max_retries, 3);
        assert_eq!(b[0].max_tokens, DEFAULT_MAX_TOKENS);
    }

    #[test]
    fn rejects_bad_best_counts() {
        let none = "[[backend]]\nname='a'\nendpoint='x'\nmodel='m'\n";
        assert!(matches!(parse_backends(none), Err(ConfigError::BestCount(0))));
        let two = "[[backend]]\nname='a'\nendpoint='x'\nmodel='m'\nbest=true\n[[backend]]\nname='b'\nendpoint='x'\nmodel='m'\nbest=true\n";
        assert!(matches!(parse_backends(two), Err(ConfigError::BestCount(2))));
        let dup = "[[backend]]\nname='a'\nendpoint='x'\nmodel='m'\nbest=true\n[[backend]]\nname='a'\nendpoint='x'\nmodel='m'\n";
        assert!(matches!(parse_backends(dup), Err(ConfigError::DuplicateName(_))));
    }

    #[test]
    fn api_key_variable_name() {
        let b = BackendConfig::new("calm-7b.v2", "http://x", "m");
        assert_eq!(b.api_key_var(), "REVSPLIT_API_KEY_CALM_7B_V2");
    }

    #[test]
    fn response_parsing() {
        let v = json!({"choices": [{"message": {"content": "answer"},
            "logprobs": {"content": [{"token": "a", "logprob": -0.01}, {"token": "b", "logprob": -0.2}]}}]});
        let (t, lp) = parse_chat_response(&v).unwrap();
        assert_eq!(t, "answer");
        assert_eq!(lp, Some(vec![-0.01, -0.2]));

        let v = json!({"choices": [{"message": {"content": "x"}, "logprobs": null}]});
        assert_eq!(parse_chat_response(&v).unwrap().1, None);

        assert!(parse_chat_response(&json!({"choices": []})).is_err());
        assert!(parse_chat_response(&json!({"choices": [{"message": {}}]})).is_err());
        let v = json!({"choices": [{"message": {"content": "x"}, "logprobs": {"content": [{"logprob": 0.5}]}}]});
        assert!(parse_chat_response(&v).is_err());
    }
}
