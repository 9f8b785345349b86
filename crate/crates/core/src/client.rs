//! JSON-over-HTTP clients for the external model services.
//!
//! Encoders, speech recognition, the answer generator and the judge are all
//! reached through [`ModelClient`]. Besides the real HTTP client there is an
//! in-process stub and a record/replay pair for offline runs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

pub trait ModelClient: Send + Sync {
    /// Sends one request. HTTP error statuses surface as
    /// [`Error::GeneratorError`], connection problems as [`Error::Transport`].
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value>;

    fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
        self.call(Method::Post, path, Some(body))
    }

    fn get_json(&self, path: &str) -> Result<Value> {
        self.call(Method::Get, path, None)
    }

    /// Label recorded alongside results, e.g. the base URL.
    fn id(&self) -> String;
}

pub struct HttpClient {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }
}

impl ModelClient for HttpClient {
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value> {
        let url = format!("{}{}", self.base_url, path);
        let response = match method {
            Method::Get => self.agent.get(&url).call(),
            Method::Post => self.agent.post(&url).send_json(body.unwrap_or(&Value::Null)),
        };
        let mut response = response.map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        if status >= 400 {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::GeneratorError { status, body });
        }
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| Error::InvalidResponse(format!("{url}: {e}")))
    }

    fn id(&self) -> String {
        self.base_url.clone()
    }
}

type Handler = dyn Fn(Method, &str, Option<&Value>) -> Result<Value> + Send + Sync;

/// In-process endpoint backed by a closure. Counts and records calls.
pub struct StubClient {
    name: String,
    handler: Box<Handler>,
    calls: AtomicUsize,
    log: Mutex<Vec<(Method, String, Option<Value>)>>,
}

impl StubClient {
    pub fn new<F>(name: &str, handler: F) -> Self
    where
        F: Fn(Method, &str, Option<&Value>) -> Result<Value> + Send + Sync + 'static,
    {
        StubClient {
            name: name.to_string(),
            handler: Box::new(handler),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Replies `{"answer": f(request)}` to every chat request.
    pub fn chat<F>(f: F) -> Self
    where
        F: Fn(&Value) -> String + Send + Sync + 'static,
    {
        StubClient::new("stub-chat", move |_, path, body| match path {
            "/v1/chat" => Ok(json!({ "answer": f(body.unwrap_or(&Value::Null)) })),
            other => Err(Error::GeneratorError {
                status: 404,
                body: format!("no route {other}"),
            }),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<(Method, String, Option<Value>)> {
        self.log.lock().expect("log lock").clone()
    }
}

impl ModelClient for StubClient {
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log
            .lock()
            .expect("log lock")
            .push((method, path.to_string(), body.cloned()));
        (self.handler)(method, path, body)
    }

    fn id(&self) -> String {
        self.name.clone()
    }
}

impl<C: ModelClient + ?Sized> ModelClient for Arc<C> {
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value> {
        (**self).call(method, path, body)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

impl<C: ModelClient + ?Sized> ModelClient for Box<C> {
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value> {
        (**self).call(method, path, body)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

/// Text of the last text part of the last message in a chat request.
pub fn last_text_part(request: &Value) -> Option<&str> {
    request["messages"]
        .as_array()?
        .last()?["content"]
        .as_array()?
        .iter()
        .rev()
        .find(|p| p["type"] == "text")?["text"]
        .as_str()
}

/// Deterministic unit vector derived from a string.
pub fn hashed_unit_vector(text: &str, dim: usize) -> Vec<f64> {
    let mut values = Vec::with_capacity(dim);
    let mut block = 0u32;
    while values.len() < dim {
        let digest = Sha256::new()
            .chain_update(text.as_bytes())
            .chain_update(block.to_le_bytes())
            .finalize();
        for chunk in digest.chunks_exact(4) {
            if values.len() == dim {
                break;
            }
            let raw = u32::from_le_bytes(chunk.try_into().unwrap());
            values.push(raw as f64 / u32::MAX as f64 * 2.0 - 1.0);
        }
        block += 1;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter().map(|v| v / norm).collect()
}

/// Offline stand-in for every service route.
///
/// * `/v1/chat` echoes the last text part (the question).
/// * `/v1/embed/text` and `/v1/embed/frames` return hashed unit vectors;
///   frame requests yield `frames` rows at 1 s spacing.
/// * `/v1/transcribe` returns `"transcript of <path>"` as one segment.
/// * `/healthz` reports `dim`.
pub fn builtin_stub(dim: usize, frames: usize) -> StubClient {
    StubClient::new("stub", move |method, path, body| {
        let body = body.cloned().unwrap_or(Value::Null);
        match (method, path) {
            (Method::Post, "/v1/chat") => {
                let text = last_text_part(&body).unwrap_or_default().to_string();
                Ok(json!({ "answer": text }))
            }
            (Method::Post, "/v1/embed/text") => {
                let texts: Vec<String> = serde_json::from_value(body["texts"].clone()).unwrap_or_default();
                if texts.is_empty() {
                    return Err(Error::GeneratorError {
                        status: 400,
                        body: r#"{"error":"empty list"}"#.into(),
                    });
                }
                let embeddings: Vec<Vec<f64>> = texts.iter().map(|t| hashed_unit_vector(t, dim)).collect();
                Ok(json!({ "dim": dim, "count": embeddings.len(), "embeddings": embeddings }))
            }
            (Method::Post, "/v1/embed/frames") => {
                let video = body["video_path"].as_str().unwrap_or_default();
                let embeddings: Vec<Vec<f64>> = (0..frames)
                    .map(|i| hashed_unit_vector(&format!("{video}#{i}"), dim))
                    .collect();
                let timestamps: Vec<f64> = (0..frames).map(|i| i as f64).collect();
                Ok(json!({
                    "dim": dim,
                    "count": frames,
                    "embeddings": embeddings,
                    "timestamps": timestamps,
                }))
            }
            (Method::Post, "/v1/transcribe") => {
                let video = body["video_path"].as_str().unwrap_or_default();
                let text = format!("transcript of {video}");
                Ok(json!({
                    "text": text,
                    "segments": [{ "start_s": 0.0, "end_s": 1.0, "text": text }],
                }))
            }
            (Method::Get, "/healthz") => Ok(json!({ "status": "ok", "encoder_id": "stub", "dim": dim })),
            (_, other) => Err(Error::GeneratorError {
                status: 404,
                body: format!("no route {other}"),
            }),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub method: Method,
    pub path: String,
    #[serde(default)]
    pub request: Option<Value>,
    pub status: u16,
    pub response: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub interactions: Vec<Interaction>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::schema("cassette", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("cassette serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn request_key(method: Method, path: &str, body: Option<&Value>) -> String {
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    let digest = Sha256::new()
        .chain_update(format!("{method:?} {path}\n").as_bytes())
        .chain_update(body.as_bytes())
        .finalize();
    hex::encode(digest)
}

fn replay_outcome(i: &Interaction) -> Result<Value> {
    if i.status >= 400 {
        Err(Error::GeneratorError {
            status: i.status,
            body: i.response.as_str().map_or_else(|| i.response.to_string(), str::to_string),
        })
    } else {
        Ok(i.response.clone())
    }
}

/// Wraps a client and keeps every exchange for later replay.
pub struct RecordingClient<C> {
    inner: C,
    cassette: Mutex<Cassette>,
}

impl<C: ModelClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        RecordingClient {
            inner,
            cassette: Mutex::new(Cassette::default()),
        }
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().expect("cassette lock").clone()
    }
}

impl<C: ModelClient> ModelClient for RecordingClient<C> {
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value> {
        let outcome = self.inner.call(method, path, body);
        let (status, response) = match &outcome {
            Ok(v) => (200, v.clone()),
            Err(Error::GeneratorError { status, body }) => (*status, Value::String(body.clone())),
            Err(_) => return outcome,
        };
        self.cassette.lock().expect("cassette lock").interactions.push(Interaction {
            method,
            path: path.to_string(),
            request: body.cloned(),
            status,
            response,
        });
        outcome
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

/// Answers from a recorded cassette; unknown requests are transport errors.
pub struct ReplayClient {
    name: String,
    responses: HashMap<String, Interaction>,
}

impl ReplayClient {
    pub fn new(name: &str, cassette: Cassette) -> Self {
        let responses = cassette
            .interactions
            .into_iter()
            .map(|i| (request_key(i.method, &i.path, i.request.as_ref()), i))
            .collect();
        ReplayClient {
            name: name.to_string(),
            responses,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(&format!("replay:{}", path.display()), Cassette::load(path)?))
    }
}

impl ModelClient for ReplayClient {
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value> {
        match self.responses.get(&request_key(method, path, body)) {
            Some(i) => replay_outcome(i),
            None => Err(Error::Transport(format!("no recorded response for {method:?} {path}"))),
        }
    }

    fn id(&self) -> String {
        self.name.clone()
    }
}

/// Builds a client from an endpoint string: an `http(s)://` base URL,
/// `stub` / `stub:<dim>` for the built-in stub, or `replay:<cassette>`.
pub fn client_from_endpoint(endpoint: &str, timeout: Duration) -> Result<Box<dyn ModelClient>> {
    if let Some(path) = endpoint.strip_prefix("replay:") {
        return Ok(Box::new(ReplayClient::load(Path::new(path))?));
    }
    if endpoint == "stub" {
        return Ok(Box::new(builtin_stub(64, 10)));
    }
    if let Some(dim) = endpoint.strip_prefix("stub:") {
        let dim = dim
            .parse()
            .ok()
            .filter(|&d: &usize| d > 0)
            .ok_or_else(|| Error::config("endpoints", format!("bad stub dimension in `{endpoint}`")))?;
        return Ok(Box::new(builtin_stub(dim, 10)));
    }
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        return Ok(Box::new(HttpClient::new(endpoint, timeout)));
    }
    Err(Error::config(
        "endpoints",
        format!("`{endpoint}` is not an http(s) URL, `stub`, or `replay:<file>`"),
    ))
}
