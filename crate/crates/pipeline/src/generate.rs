//! Generate, validate, and re-prompt with the violations until valid.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tmk_core::validate::{Severity, Violation, ViolationCode};
use tmk_core::{parse_model_bundle, validate_schema, TmkModel, ValidationReport};

use crate::client::{GenerationClient, GenerationRequest, GenerationResponse};
use crate::prompt::{assemble_generation_prompt, default_schema_texts, PromptError};

pub const DEFAULT_MAX_REPAIRS: usize = 2;

/// First line of every repair request; the validation report follows as JSON.
pub const REPAIR_INSTRUCTION: &str =
    "The previous output failed validation. Return all three documents again with every violation below fixed.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttemptRecord {
    /// 1-based.
    pub attempt: usize,
    pub repair_feedback: Option<String>,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub attempts: Vec<AttemptRecord>,
}

impl GenerationLog {
    pub fn len(&self) -> usize {
        self.attempts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attempts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("transport error on attempt {attempt}: {message}")]
    Transport {
        attempt: usize,
        message: String,
        log: GenerationLog,
    },
    #[error("no valid model after {} attempts", log.len())]
    GenerationFailed { log: GenerationLog },
}

pub fn repair_feedback(report: &ValidationReport) -> String {
    format!(
        "{REPAIR_INSTRUCTION}\n{}",
        serde_json::to_string_pretty(report).expect("reports serialize")
    )
}

fn parse_response(resp: &GenerationResponse) -> Result<TmkModel, ValidationReport> {
    parse_model_bundle(&resp.task_text, &resp.method_text, &resp.knowledge_text).map_err(|e| {
        ValidationReport::new(vec![Violation {
            code: ViolationCode::MalformedDocument,
            path: String::new(),
            message: e.to_string(),
            severity: Severity::Error,
        }])
    })
}

/// Calls `client` up to `1 + max_repairs` times. Returns the first model
/// whose validation report has no errors, with the log of every attempt.
pub fn generate_raw_model(
    client: &dyn GenerationClient,
    transcript: &str,
    max_repairs: usize,
) -> Result<(TmkModel, GenerationLog), GenerationError> {
    let prompt = assemble_generation_prompt(transcript, &default_schema_texts())?;
    let mut log = GenerationLog::default();
    let mut feedback: Option<String> = None;
    for attempt in 1..=1 + max_repairs {
        let request = GenerationRequest {
            system_prompt: prompt.system_prompt.clone(),
            schema_texts: prompt.schema_texts.clone(),
            transcript_text: prompt.transcript.clone(),
            repair_feedback: feedback.clone(),
        };
        let response = client.generate(&request).map_err(|e| GenerationError::Transport {
            attempt,
            message: e.0,
            log: log.clone(),
        })?;
        let (model, report) = match parse_response(&response) {
            Ok(model) => {
                let report = validate_schema(&model);
                (Some(model), report)
            }
            Err(report) => (None, report),
        };
        log.attempts.push(AttemptRecord {
            attempt,
            repair_feedback: feedback.take(),
            report: report.clone(),
        });
        if let (Some(model), true) = (model, report.valid) {
            return Ok((model, log));
        }
        feedback = Some(repair_feedback(&report));
    }
    Err(GenerationError::GenerationFailed { log })
}
