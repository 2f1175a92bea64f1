//! Core library for Task-Method-Knowledge (TMK) models of procedural skills.
//!
//! The crate covers the model itself ([`model`], [`bundle`]), the guard
//! language ([`condition`]), schema checks ([`validate`]), static metrics
//! ([`metrics`]), organizer execution ([`fsm`]), component flattening
//! ([`flatten`]) and similarity scoring ([`similarity`]).

pub mod bundle;
pub mod condition;
pub mod flatten;
pub mod fsm;
pub mod metrics;
pub mod model;
pub mod mutation;
pub mod similarity;
pub mod text;
pub mod validate;

pub use bundle::{
    from_documents, load_bundle_dir, parse_model_bundle, serialize_model, to_documents, write_bundle_dir, BundleError,
    BundleTexts, ComponentKind, ModelDocuments, ParseError,
};
pub use condition::{
    evaluate, is_trivial, parse_condition, print_condition, Condition, ConditionParseError, EvalError, PredicateEnv,
    PredicateSig, TrivialityRules,
};
pub use flatten::{canonical_flatten, FieldText};
pub use fsm::{check_reachability, enumerate_outcomes, trace, ExecutionTrace, FsmError, Outcome, ReachabilityReport};
pub use metrics::{analyze, analyze_with, AnalyzeOptions, StaticReport, Transcript};
pub use model::*;
pub use similarity::{aggregate, compare_models, CorpusAggregate, SimilarityReport};
pub use validate::{validate_schema, Severity, ValidationReport, Violation, ViolationCode};
