//! Authoring workflow around [`tmk_core`]: generation prompts, the
//! generate-validate-repair loop, judge scoring, refinement sessions, model
//! diffs and report emission.

pub mod client;
pub mod diff;
pub mod generate;
pub mod judge;
pub mod prompt;
pub mod report;
pub mod session;

pub use client::{
    FixtureGenerationClient, GenerationClient, GenerationRequest, GenerationResponse, HttpGenerationClient,
    ScriptedGenerationClient, TransportError,
};
pub use diff::{apply_diff, diff_models, DiffEntry, DiffError, DiffKind, ModelDiff};
pub use generate::{generate_raw_model, AttemptRecord, GenerationError, GenerationLog, DEFAULT_MAX_REPAIRS};
pub use judge::{
    judge_model, normalize_judge_score, Dimension, FixedJudge, HeuristicJudge, HttpJudgeClient, JudgeClient,
    JudgeError, JudgeRequest, JudgeScores,
};
pub use prompt::{assemble_generation_prompt, default_schema_texts, PromptBundle, PromptError};
pub use report::{emit_report, ReportError, ReportInputs, ReportOutput};
pub use session::{refinement_reduction, RefinementSession, SessionError, SessionEvent, DEFAULT_MANUAL_BASELINE_HOURS};
