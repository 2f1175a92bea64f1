//! Likert-scale judging of a model along three dimensions.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tmk_core::metrics::{failure_modeling, guard_logic_score, structural_bindings};
use tmk_core::{parse_model_bundle, serialize_model, BundleTexts, TmkModel};

use crate::client::{post_json, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Dimension {
    CausalChaining,
    TeleologicalLinkage,
    ProceduralFidelity,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [
        Self::CausalChaining,
        Self::TeleologicalLinkage,
        Self::ProceduralFidelity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CausalChaining => "causalChaining",
            Self::TeleologicalLinkage => "teleologicalLinkage",
            Self::ProceduralFidelity => "proceduralFidelity",
        }
    }

    /// Rubric sent with each request. Written for this tool; not a
    /// reference rubric.
    pub fn rubric(self) -> &'static str {
        match self {
            Self::CausalChaining => {
                "Score 1-5: do the organizer's transitions encode the domain reasons that move the procedure \
from one state to the next, rather than generic sequencing?"
            }
            Self::TeleologicalLinkage => {
                "Score 1-5: is it clear which goal each task serves, how it breaks into subtasks, and which \
method achieves each task?"
            }
            Self::ProceduralFidelity => {
                "Score 1-5: does the organizer reproduce the procedure taught in the transcript, including its \
repetitions, branches and exceptional cases?"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgeRequest {
    pub component_texts: BundleTexts,
    pub transcript_text: String,
    pub dimension: Dimension,
    pub rubric_text: String,
}

pub trait JudgeClient {
    /// A raw score, expected in 1..=5.
    fn score(&self, request: &JudgeRequest) -> Result<i64, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JudgeError {
    #[error("judge returned {raw} for {dimension:?}; expected 1..=5")]
    InvalidJudgeResponse { dimension: Dimension, raw: i64 },
    #[error("judge transport error for {dimension:?}: {message}")]
    Transport { dimension: Dimension, message: String },
}

/// Maps 1..=5 onto [0, 1] as `(raw - 1) / 4`.
pub fn normalize_judge_score(raw: i64) -> Option<f64> {
    (1..=5).contains(&raw).then(|| (raw - 1) as f64 / 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgeScores {
    pub causal_chaining: f64,
    pub teleological_linkage: f64,
    pub procedural_fidelity: f64,
    pub raw: BTreeMap<Dimension, i64>,
}

impl JudgeScores {
    pub fn get(&self, d: Dimension) -> f64 {
        match d {
            Dimension::CausalChaining => self.causal_chaining,
            Dimension::TeleologicalLinkage => self.teleological_linkage,
            Dimension::ProceduralFidelity => self.procedural_fidelity,
        }
    }
}

/// One client call per dimension.
pub fn judge_model(client: &dyn JudgeClient, model: &TmkModel, transcript: &str) -> Result<JudgeScores, JudgeError> {
    let texts = serialize_model(model);
    let mut raw = BTreeMap::new();
    let mut norm = BTreeMap::new();
    for dimension in Dimension::ALL {
        let request = JudgeRequest {
            component_texts: texts.clone(),
            transcript_text: transcript.to_string(),
            dimension,
            rubric_text: dimension.rubric().to_string(),
        };
        let value = client.score(&request).map_err(|e| JudgeError::Transport {
            dimension,
            message: e.0,
        })?;
        let score = normalize_judge_score(value).ok_or(JudgeError::InvalidJudgeResponse { dimension, raw: value })?;
        raw.insert(dimension, value);
        norm.insert(dimension, score);
    }
    Ok(JudgeScores {
        causal_chaining: norm[&Dimension::CausalChaining],
        teleological_linkage: norm[&Dimension::TeleologicalLinkage],
        procedural_fidelity: norm[&Dimension::ProceduralFidelity],
        raw,
    })
}

/// Returns fixed raw scores per dimension and records requests.
#[derive(Debug, Default)]
pub struct FixedJudge {
    scores: BTreeMap<Dimension, i64>,
    requests: Mutex<Vec<JudgeRequest>>,
}

impl FixedJudge {
    pub fn new(causal: i64, teleological: i64, procedural: i64) -> Self {
        Self {
            scores: BTreeMap::from([
                (Dimension::CausalChaining, causal),
                (Dimension::TeleologicalLinkage, teleological),
                (Dimension::ProceduralFidelity, procedural),
            ]),
            requests: Mutex::default(),
        }
    }

    pub fn uniform(raw: i64) -> Self {
        Self::new(raw, raw, raw)
    }

    pub fn requests(&self) -> Vec<JudgeRequest> {
        self.requests.lock().expect("request log").clone()
    }
}

impl JudgeClient for FixedJudge {
    fn score(&self, request: &JudgeRequest) -> Result<i64, TransportError> {
        self.requests.lock().expect("request log").push(request.clone());
        Ok(self.scores[&request.dimension])
    }
}

/// Offline stand-in that derives a score from static metrics: guard logic
/// for causal chaining, task-method binding for teleological linkage, and
/// failure modeling for procedural fidelity.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicJudge;

impl JudgeClient for HeuristicJudge {
    fn score(&self, request: &JudgeRequest) -> Result<i64, TransportError> {
        let t = &request.component_texts;
        let Ok(model) = parse_model_bundle(&t.task, &t.method, &t.knowledge) else {
            return Ok(1);
        };
        let ratio = match request.dimension {
            Dimension::CausalChaining => guard_logic_score(&model).score,
            Dimension::TeleologicalLinkage => structural_bindings(&model).tm_binding,
            Dimension::ProceduralFidelity => failure_modeling(&model).score,
        };
        Ok(1 + (ratio * 4.0).round() as i64)
    }
}

#[derive(Deserialize)]
struct JudgeReply {
    score: i64,
}

/// POSTs a [`JudgeRequest`] and expects `{"score": n}`.
#[derive(Debug, Clone)]
pub struct HttpJudgeClient {
    endpoint: String,
    key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpJudgeClient {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            key,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
        }
    }
}

impl JudgeClient for HttpJudgeClient {
    fn score(&self, request: &JudgeRequest) -> Result<i64, TransportError> {
        post_json::<_, JudgeReply>(&self.http, &self.endpoint, self.key.as_deref(), request).map(|r| r.score)
    }
}
