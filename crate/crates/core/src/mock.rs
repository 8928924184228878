//! Offline stand-ins for inference backends: in-process closures and a
//! minimal chat-completions HTTP server.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use crate::evaluation::{GoldAnswer, GoldRecord};
use crate::extraction::NOT_REVIEWED;
use crate::llm_splitter::{BackendError, CompletionBackend, ModelOutput, Prompt};
use crate::synth::SynthCorpus;

type Responder = dyn Fn(&Prompt) -> Result<String, BackendError> + Send + Sync;

/// A backend answering from a closure.
pub struct FnBackend {
    name: String,
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        name: impl Into<String>,
        respond: impl Fn(&Prompt) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        FnBackend {
            name: name.into(),
            respond: Box::new(respond),
        }
    }
}

impl CompletionBackend for FnBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &Prompt) -> Result<ModelOutput, BackendError> {
        (self.respond)(prompt).map(|text| ModelOutput {
            backend: self.name.clone(),
            text,
            token_logprobs: None,
            latency: 0.0,
        })
    }
}

/// Gold answers keyed by the title a prompt presents for the row.
#[derive(Debug, Clone, Default)]
pub struct GoldOracle {
    by_title: HashMap<String, (i64, String)>,
}

impl GoldOracle {
    pub fn from_corpus(corpus: &SynthCorpus) -> Self {
        let by_title = corpus
            .documents
            .iter()
            .map(|d| {
                let answer = gold_answer_text(&d.gold);
                (
                    d.row.preferred_title().to_string(),
                    (d.row.zbmath_internal_id, answer),
                )
            })
            .collect();
        GoldOracle { by_title }
    }

    /// Document id and gold answer for a prompt's row title.
    pub fn lookup(&self, row_title: &str) -> Option<(i64, &str)> {
        self.by_title
            .get(row_title)
            .map(|(id, a)| (*id, a.as_str()))
    }

    pub fn answer(&self, prompt: &Prompt) -> Option<(i64, &str)> {
        self.lookup(&prompt.row_title)
    }
}

pub fn gold_answer_text(gold: &GoldRecord) -> String {
    match &gold.gold {
        GoldAnswer::Text(t) => t.clone(),
        GoldAnswer::NotReviewed => NOT_REVIEWED.to_string(),
    }
}

/// Row title of a rendered prompt: the first `Title:` line of the task
/// section.
pub fn rendered_row_title(rendered: &str) -> Option<&str> {
    let task = rendered.rfind("### Task\n").map_or(rendered, |i| &rendered[i..]);
    task.lines().find_map(|l| l.strip_prefix("Title: "))
}

/// What the mock server does with one request.
#[derive(Debug, Clone)]
pub enum MockReply {
    /// A chat completion with this content.
    Content {
        text: String,
        logprobs: Option<Vec<f64>>,
    },
    /// An arbitrary status code and body.
    Status(u16, String),
    /// Close the connection without answering.
    Drop,
}

impl MockReply {
    pub fn text(text: impl Into<String>) -> Self {
        MockReply::Content {
            text: text.into(),
            logprobs: None,
        }
    }
}

/// Chat-completions response body.
pub fn chat_completion_json(text: &str, logprobs: Option<&[f64]>) -> Value {
    let mut choice = json!({
        "index": 0,
        "message": {"role": "assistant", "content": text},
        "finish_reason": "stop",
    });
    if let Some(lps) = logprobs {
        let content: Vec<Value> = lps
            .iter()
            .map(|lp| json!({"token": "", "logprob": lp}))
            .collect();
        choice["logprobs"] = json!({ "content": content });
    }
    json!({"object": "chat.completion", "choices": [choice]})
}

type Handler = dyn Fn(&Value) -> MockReply + Send + Sync;

/// Chat-completions server on a loopback port, one thread per connection.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<AtomicUsize>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// `handler` receives the parsed JSON request body.
    pub fn start(handler: impl Fn(&Value) -> MockReply + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let stop = Arc::clone(&stop);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = Arc::clone(&handler);
                    let requests = Arc::clone(&requests);
                    std::thread::spawn(move || {
                        let _ = serve(stream, &*handler, &requests);
                    });
                }
            })
        };
        Ok(MockServer {
            addr,
            stop,
            requests,
            thread: Some(thread),
        })
    }

    /// Answer every request from `oracle` after applying `transform` to the
    /// gold answer.
    pub fn with_oracle(
        oracle: GoldOracle,
        transform: impl Fn(i64, &str) -> MockReply + Send + Sync + 'static,
    ) -> std::io::Result<Self> {
        Self::start(move |body| {
            let content = body["messages"][0]["content"].as_str().unwrap_or("");
            match rendered_row_title(content).and_then(|t| oracle.lookup(t)) {
                Some((id, gold)) => transform(id, gold),
                None => MockReply::Status(400, "unknown document".into()),
            }
        })
    }

    /// Base URL to use as a backend endpoint.
    pub fn endpoint(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, handler: &Handler, requests: &AtomicUsize) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    requests.fetch_add(1, Ordering::SeqCst);

    let mut stream = stream;
    let parsed: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(_) => return respond(&mut stream, 400, "application/json", "{\"error\":\"bad json\"}"),
    };
    match handler(&parsed) {
        MockReply::Content { text, logprobs } => {
            let out = chat_completion_json(&text, logprobs.as_deref()).to_string();
            respond(&mut stream, 200, "application/json", &out)
        }
        MockReply::Status(code, body) => respond(&mut stream, code, "text/plain", &body),
        MockReply::Drop => stream.shutdown(Shutdown::Both),
    }
}

fn respond(stream: &mut TcpStream, code: u16, content_type: &str, body: &str) -> std::io::Result<()> {
    let reason = match code {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    write!(
        stream,
        "HTTP/1.1 {code} {reason}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}
