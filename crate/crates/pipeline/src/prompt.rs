//! System prompt for schema-constrained model generation.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("transcript is empty")]
    EmptyTranscript,
}

/// Section headers of the system prompt, in emission order.
pub const SECTION_HEADERS: [&str; 5] = [
    "Objective and Setup",
    "Core Philosophy",
    "Modeling Instructions",
    "Mandatory Patterns",
    "Step-by-Step Workflow",
];

const SECTION_BODIES: [&str; 5] = [
    "You convert one lesson transcript into a Task-Method-Knowledge model of the skill it teaches. \
Return three JSON documents: a Task document, a Method document (an array of methods) and a Knowledge document. \
Each must conform to the schema given below.",
    "Stay with the source. Every task, method, concept and relation should name something the lesson actually teaches, \
using the lesson's own vocabulary. Do not add steps, checks or entities the transcript does not support.",
    "Tasks state goals with typed input and output parameters, preconditions (given) and effects (makes), and list the methods \
that achieve them under means. Methods realize a task as a finite-state organizer: each state invokes either a task or an \
atomic operation, and transitions move between states. Knowledge declares concepts with properties, instances with \
property values, and relations between concepts. Parameter types should name declared concepts.",
    "- Every organizer has at least one Done state (named Done or ending in _Done) and at least one Fail state \
(named Fail, ending in _Fail, or invoking FailureGoal).\n\
- Every transition carries a dataCondition written in the guard language: predicates such as p(x, y), combined with !, && \
and || and parentheses. Prefer conditions that test domain facts over bare existence checks.\n\
- Every task lists at least one method under means, and every means entry names a method in the Method document.",
    "1. Knowledge: list the concepts, their properties, instances and relations.\n\
2. Task: state the top-level goal and its subtasks, typing parameters with the concepts from step 1.\n\
3. Method: for each task, write the organizer with states, transitions and guards, including Done and Fail paths.",
];

/// The prompt handed to a generation client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptBundle {
    pub system_prompt: String,
    pub schema_texts: Vec<String>,
    pub transcript: String,
}

impl PromptBundle {
    /// System prompt, then schemas, then the transcript, as one document.
    pub fn full_text(&self) -> String {
        let mut out = self.system_prompt.clone();
        out.push_str("\n## Schemas\n");
        for schema in &self.schema_texts {
            out.push_str("\n```json\n");
            out.push_str(schema.trim_end());
            out.push_str("\n```\n");
        }
        out.push_str("\n## Transcript\n\n");
        out.push_str(&self.transcript);
        out
    }
}

pub fn system_prompt() -> String {
    let mut out = String::new();
    for (header, body) in SECTION_HEADERS.iter().zip(SECTION_BODIES) {
        out.push_str(&format!("## {header}\n\n{body}\n\n"));
    }
    out
}

pub fn assemble_generation_prompt(transcript: &str, schema_texts: &[String]) -> Result<PromptBundle, PromptError> {
    if transcript.trim().is_empty() {
        return Err(PromptError::EmptyTranscript);
    }
    Ok(PromptBundle {
        system_prompt: system_prompt(),
        schema_texts: schema_texts.to_vec(),
        transcript: transcript.to_string(),
    })
}

fn strings() -> Value {
    json!({"type": "array", "items": {"type": "string"}})
}

fn parameters() -> Value {
    json!({
        "type": "array",
        "items": {
            "type": "object",
            "required": ["name", "type"],
            "properties": {"name": {"type": "string"}, "type": {"type": "string"}}
        }
    })
}

/// JSON Schema texts for the Knowledge, Task and Method documents.
pub fn default_schema_texts() -> Vec<String> {
    let knowledge = json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "Knowledge",
        "type": "object",
        "properties": {
            "concepts": {"type": "array", "items": {
                "type": "object", "required": ["name"],
                "properties": {
                    "name": {"type": "string"},
                    "superConcept": {"type": "string"},
                    "properties": parameters()
                }
            }},
            "instances": {"type": "array", "items": {
                "type": "object", "required": ["name", "concept"],
                "properties": {
                    "name": {"type": "string"},
                    "concept": {"type": "string"},
                    "values": {"type": "object"}
                }
            }},
            "relations": {"type": "array", "items": {
                "type": "object", "required": ["name", "domain", "range"],
                "properties": {
                    "name": {"type": "string"},
                    "domain": {"type": "string"},
                    "range": {"type": "string"}
                }
            }}
        }
    });
    let task = json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "Task",
        "$defs": {"task": {
            "type": "object",
            "required": ["name", "means"],
            "properties": {
                "name": {"type": "string"},
                "description": {"type": "string"},
                "inputParameters": parameters(),
                "outputParameters": parameters(),
                "given": strings(),
                "makes": strings(),
                "means": strings(),
                "subtasks": {"type": "array", "items": {"$ref": "#/$defs/task"}}
            }
        }},
        "$ref": "#/$defs/task"
    });
    let method = json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "Method",
        "type": "array",
        "items": {
            "type": "object",
            "required": ["name", "organizer"],
            "properties": {
                "name": {"type": "string"},
                "description": {"type": "string"},
                "inputParameters": parameters(),
                "outputParameters": parameters(),
                "requires": strings(),
                "provides": strings(),
                "organizer": {
                    "type": "object",
                    "required": ["startState", "states", "transitions"],
                    "properties": {
                        "startState": {"type": "string"},
                        "states": {"type": "array", "items": {
                            "type": "object", "required": ["name"],
                            "properties": {
                                "name": {"type": "string"},
                                "goalInvocation": {
                                    "type": "object",
                                    "required": ["goalReference", "type"],
                                    "properties": {
                                        "goalReference": {"type": "string"},
                                        "type": {"enum": ["task", "operation"]},
                                        "actualArguments": strings()
                                    }
                                }
                            }
                        }},
                        "transitions": {"type": "array", "items": {
                            "type": "object",
                            "required": ["sourceState", "targetState", "dataCondition"],
                            "properties": {
                                "sourceState": {"type": "string"},
                                "targetState": {"type": "string"},
                                "dataCondition": {"type": "string"}
                            }
                        }}
                    }
                }
            }
        }
    });
    [knowledge, task, method]
        .iter()
        .map(|v| serde_json::to_string_pretty(v).expect("static schema"))
        .collect()
}
