//! Generation clients: an HTTP model service and deterministic mocks.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tmk_core::bundle::{bundle_file_names, find_skill_in_dir};
use tmk_core::BundleTexts;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub schema_texts: Vec<String>,
    pub transcript_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repair_feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationResponse {
    pub task_text: String,
    pub method_text: String,
    pub knowledge_text: String,
}

impl From<BundleTexts> for GenerationResponse {
    fn from(t: BundleTexts) -> Self {
        Self {
            task_text: t.task,
            method_text: t.method,
            knowledge_text: t.knowledge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait GenerationClient {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, TransportError>;
}

/// Replays queued responses in order and records every request. Once the
/// queue is down to one entry, that entry is repeated.
#[derive(Debug, Default)]
pub struct ScriptedGenerationClient {
    script: Mutex<VecDeque<Result<GenerationResponse, TransportError>>>,
    requests: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedGenerationClient {
    pub fn new(script: impl IntoIterator<Item = Result<GenerationResponse, TransportError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            requests: Mutex::default(),
        }
    }

    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.requests.lock().expect("request log").clone()
    }
}

impl GenerationClient for ScriptedGenerationClient {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, TransportError> {
        self.requests.lock().expect("request log").push(request.clone());
        let mut script = self.script.lock().expect("script");
        match script.len() {
            0 => Err(TransportError("script exhausted".into())),
            1 => script[0].clone(),
            _ => script.pop_front().expect("non-empty"),
        }
    }
}

/// Answers every request with the bundle stored in a directory.
#[derive(Debug, Clone)]
pub struct FixtureGenerationClient {
    dir: PathBuf,
}

impl FixtureGenerationClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn read(dir: &Path) -> std::io::Result<GenerationResponse> {
        let skill = find_skill_in_dir(dir).map_err(|e| std::io::Error::other(e.to_string()))?;
        let [task, method, knowledge] = bundle_file_names(&skill).map(|f| std::fs::read_to_string(dir.join(f)));
        Ok(GenerationResponse {
            task_text: task?,
            method_text: method?,
            knowledge_text: knowledge?,
        })
    }
}

impl GenerationClient for FixtureGenerationClient {
    fn generate(&self, _request: &GenerationRequest) -> Result<GenerationResponse, TransportError> {
        Self::read(&self.dir).map_err(|e| TransportError(format!("{}: {e}", self.dir.display())))
    }
}

/// POSTs the request as JSON and expects a [`GenerationResponse`] body.
#[derive(Debug, Clone)]
pub struct HttpGenerationClient {
    endpoint: String,
    key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpGenerationClient {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            key,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("http client"),
        }
    }
}

pub(crate) fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    http: &reqwest::blocking::Client,
    endpoint: &str,
    key: Option<&str>,
    body: &Req,
) -> Result<Resp, TransportError> {
    let mut req = http.post(endpoint).json(body);
    if let Some(key) = key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| TransportError(e.to_string()))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(TransportError(format!("{endpoint} answered {status}")));
    }
    resp.json()
        .map_err(|e| TransportError(format!("unreadable response: {e}")))
}

impl GenerationClient for HttpGenerationClient {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, TransportError> {
        post_json(&self.http, &self.endpoint, self.key.as_deref(), request)
    }
}
