use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tmk_core::bundle::to_documents;
use tmk_core::condition::{PredicateEnv, PredicateEnvDoc};
use tmk_core::fsm::DEFAULT_STEP_LIMIT;
use tmk_core::similarity::aggregate;
use tmk_core::{
    analyze_with, compare_models, parse_model_bundle, trace, AnalyzeOptions, ExecutionTrace, FsmError,
    SimilarityReport, StaticReport, TmkModel, Transcript, ValidationReport,
};
use tmk_pipeline::{
    apply_diff, diff_models, emit_report, DiffEntry, ModelDiff, RefinementSession, ReportInputs, ReportOutput,
    SessionEvent, DEFAULT_MANUAL_BASELINE_HOURS,
};

use crate::error::{ApiError, ApiResult, Body};
use crate::store::{valid_skill_name, SkillSlot, SkillState, Store, Version, VersionLabel};

pub type AppState = Arc<Store>;

fn slot(store: &Store, skill: &str) -> ApiResult<Arc<SkillSlot>> {
    store
        .get(skill)
        .ok_or_else(|| ApiError::not_found("UNKNOWN_SKILL", format!("no skill named `{skill}`")))
}

fn version<'a>(state: &'a SkillState, selector: Option<&str>) -> ApiResult<&'a Version> {
    state.resolve(selector).ok_or_else(|| {
        ApiError::not_found(
            "UNKNOWN_VERSION",
            format!(
                "skill `{}` has no version `{}`",
                state.skill_name,
                selector.unwrap_or("")
            ),
        )
    })
}

/// A document given either as a JSON value or as its text.
fn document_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BundlePayload {
    task: Value,
    method: Value,
    knowledge: Value,
    #[serde(default)]
    skill_name: Option<String>,
}

impl BundlePayload {
    fn parse(&self) -> ApiResult<TmkModel> {
        let mut model = parse_model_bundle(
            &document_text(&self.task),
            &document_text(&self.method),
            &document_text(&self.knowledge),
        )
        .map_err(|e| {
            ApiError::bad_request("MALFORMED_DOCUMENT", e.to_string()).with_path(format!("/{}", e.component()))
        })?;
        if let Some(name) = &self.skill_name {
            model.skill_name = name.clone();
        }
        if !valid_skill_name(&model.skill_name) {
            return Err(ApiError::bad_request(
                "INVALID_SKILL_NAME",
                format!(
                    "skill name `{}` must be non-empty and use only letters, digits, `_`, `-`, `.`",
                    model.skill_name
                ),
            )
            .with_path("/task/skillName"));
        }
        Ok(model)
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationSummary {
    valid: bool,
    error_count: usize,
    warning_count: usize,
    codes: Vec<String>,
}

impl From<&ValidationReport> for ValidationSummary {
    fn from(r: &ValidationReport) -> Self {
        Self {
            valid: r.valid,
            error_count: r.errors().count(),
            warning_count: r.warnings().count(),
            codes: r.codes().into_iter().map(|c| c.as_str()).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VersionInfo {
    id: usize,
    label: VersionLabel,
    created_at: chrono::DateTime<Utc>,
    valid: bool,
}

impl From<&Version> for VersionInfo {
    fn from(v: &Version) -> Self {
        Self {
            id: v.id,
            label: v.label,
            created_at: v.created_at,
            valid: v.validation.valid,
        }
    }
}

fn check_bundle_allowed(report: &ValidationReport, allow_invalid: bool) -> ApiResult<()> {
    if report.valid || allow_invalid {
        return Ok(());
    }
    Err(ApiError::bad_request("VALIDATION_FAILED", report.summary()).with_report(report.clone()))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UploadRequest {
    #[serde(flatten)]
    bundle: BundlePayload,
    #[serde(default)]
    label: Option<VersionLabel>,
    #[serde(default)]
    allow_invalid: bool,
}

pub async fn upload(
    State(store): State<AppState>,
    Body(req): Body<UploadRequest>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let model = req.bundle.parse()?;
    let label = req.label.unwrap_or(VersionLabel::Raw);
    let report = tmk_core::validate_schema(&model);
    check_bundle_allowed(&report, req.allow_invalid)?;
    let state = store.append_version(model, label).map_err(ApiError::storage)?;
    let head = state.head();
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "skillName": state.skill_name,
            "version": VersionInfo::from(head),
            "versionToken": head.token(),
            "validation": head.validation,
        })),
    ))
}

pub async fn list_models(State(store): State<AppState>) -> Json<Value> {
    let items: Vec<Value> = store
        .snapshots()
        .iter()
        .map(|s| {
            json!({
                "skillName": s.skill_name,
                "versionCount": s.versions.len(),
                "head": VersionInfo::from(s.head()),
                "versionToken": s.head().token(),
            })
        })
        .collect();
    Json(json!({ "models": items }))
}

#[derive(Debug, Default, Deserialize)]
pub struct VersionQuery {
    version: Option<String>,
}

pub async fn get_model(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<Json<Value>> {
    let state = slot(&store, &skill)?.snapshot();
    let v = version(&state, q.version.as_deref())?;
    Ok(Json(json!({
        "skillName": state.skill_name,
        "version": VersionInfo::from(v),
        "versionToken": state.head().token(),
        "bundle": to_documents(&v.model),
        "validation": ValidationSummary::from(&v.validation),
        "versions": state.versions.iter().map(VersionInfo::from).collect::<Vec<_>>(),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UpdateRequest {
    version_token: String,
    #[serde(default)]
    bundle: Option<BundlePayload>,
    /// Diff entries applied to the head version.
    #[serde(default)]
    patch: Option<Vec<DiffEntry>>,
    #[serde(default)]
    allow_invalid: bool,
}

type MetricGetter = fn(&StaticReport) -> f64;

const DELTA_METRICS: [(&str, MetricGetter); 6] = [
    ("tmBinding", |r| r.tm_binding),
    ("mkBinding", |r| r.mk_binding),
    ("tkBinding", |r| r.tk_binding),
    ("guardLogic", |r| r.guard_logic),
    ("failureModeling", |r| r.failure_modeling),
    ("hierarchyDepth", |r| r.hierarchy_depth as f64),
];

fn analysis_delta(before: &StaticReport, after: &StaticReport) -> BTreeMap<&'static str, Value> {
    DELTA_METRICS
        .iter()
        .map(|(name, get)| {
            let (b, a) = (get(before), get(after));
            (*name, json!({ "before": b, "after": a, "delta": a - b }))
        })
        .collect()
}

pub async fn update_working(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<UpdateRequest>,
) -> ApiResult<Json<Value>> {
    let slot = slot(&store, &skill)?;
    let _guard = slot.lock();
    let state = slot.snapshot();
    let head = state.head();
    if req.version_token != head.token() {
        return Err(ApiError::conflict(
            "VERSION_CONFLICT",
            format!(
                "version token `{}` is stale; current is `{}`",
                req.version_token,
                head.token()
            ),
        ));
    }
    let model = match (&req.bundle, &req.patch) {
        (Some(bundle), None) => {
            let mut model = bundle.parse()?;
            if bundle.skill_name.is_none() && model.skill_name != skill {
                model.skill_name = skill.clone();
            }
            if model.skill_name != skill {
                return Err(ApiError::bad_request(
                    "SKILL_MISMATCH",
                    format!("bundle names skill `{}`, not `{skill}`", model.skill_name),
                ));
            }
            model
        }
        (None, Some(entries)) => {
            let diff = ModelDiff {
                skill_name: skill.clone(),
                entries: entries.clone(),
                summary: BTreeMap::new(),
            };
            apply_diff(&head.model, &diff).map_err(|e| {
                let err = ApiError::bad_request("INVALID_PATCH", e.to_string());
                match e {
                    tmk_pipeline::DiffError::PathNotFound(p) => err.with_path(p),
                    _ => err,
                }
            })?
        }
        _ => {
            return Err(ApiError::bad_request(
                "INVALID_PAYLOAD",
                "exactly one of `bundle` or `patch` is required",
            ))
        }
    };
    let next = Version::new(head.id + 1, VersionLabel::Working, model);
    check_bundle_allowed(&next.validation, req.allow_invalid)?;
    let options = AnalyzeOptions::default();
    let before = analyze_with(&head.model, None, &options);
    let after = analyze_with(&next.model, None, &options);
    let state = store.commit_version(&slot, next).map_err(ApiError::storage)?;
    let head = state.head();
    Ok(Json(json!({
        "skillName": skill,
        "version": VersionInfo::from(head),
        "versionToken": head.token(),
        "validation": head.validation,
        "analysis": after,
        "analysisDelta": analysis_delta(&before, &after),
    })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectRequest {
    #[serde(default)]
    version: Option<String>,
}

pub async fn validate(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<SelectRequest>,
) -> ApiResult<Json<ValidationReport>> {
    let state = slot(&store, &skill)?.snapshot();
    Ok(Json(version(&state, req.version.as_deref())?.validation.clone()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalyzeRequest {
    #[serde(default)]
    version: Option<String>,
    #[serde(default)]
    transcript: Option<String>,
    #[serde(default)]
    alignment_threshold: Option<f64>,
}

pub async fn analyze(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<AnalyzeRequest>,
) -> ApiResult<Json<StaticReport>> {
    let state = slot(&store, &skill)?.snapshot();
    let v = version(&state, req.version.as_deref())?;
    let mut options = AnalyzeOptions::default();
    if let Some(t) = req.alignment_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(
                ApiError::bad_request("INVALID_PAYLOAD", "alignmentThreshold must lie in [0, 1]")
                    .with_path("/alignmentThreshold"),
            );
        }
        options.alignment_threshold = t;
    }
    let transcript = req.transcript.as_deref().map(Transcript::new);
    Ok(Json(analyze_with(&v.model, transcript.as_ref(), &options)))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRequest {
    method: String,
    #[serde(default)]
    env: PredicateEnvDoc,
    #[serde(default)]
    version: Option<String>,
    #[serde(default)]
    step_limit: Option<usize>,
}

pub async fn trace_method(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<TraceRequest>,
) -> ApiResult<Json<ExecutionTrace>> {
    let state = slot(&store, &skill)?.snapshot();
    let v = version(&state, req.version.as_deref())?;
    let env = PredicateEnv::try_from(req.env)
        .map_err(|e| ApiError::bad_request("INVALID_PAYLOAD", e.to_string()).with_path("/env/predicates"))?;
    trace(
        &v.model,
        &req.method,
        &env,
        req.step_limit.unwrap_or(DEFAULT_STEP_LIMIT),
    )
    .map(Json)
    .map_err(|e| match e {
        FsmError::UnknownMethod(_) => ApiError::not_found("UNKNOWN_METHOD", e.to_string()),
        FsmError::GuardParseError { ref path, .. } => {
            ApiError::bad_request("GUARD_PARSE_ERROR", e.to_string()).with_path(path.clone())
        }
        FsmError::Eval { ref path, .. } => ApiError::bad_request("EVAL_ERROR", e.to_string()).with_path(path.clone()),
        FsmError::TooManyPredicates { .. } => ApiError::bad_request("TOO_MANY_PREDICATES", e.to_string()),
    })
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiffRequest {
    from_version: String,
    to_version: String,
}

pub async fn diff(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<DiffRequest>,
) -> ApiResult<Json<ModelDiff>> {
    let state = slot(&store, &skill)?.snapshot();
    let from = version(&state, Some(&req.from_version))?;
    let to = version(&state, Some(&req.to_version))?;
    diff_models(&from.model, &to.model)
        .map(Json)
        .map_err(|e| ApiError::bad_request("SKILL_MISMATCH", e.to_string()))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompareRequest {
    skill_a: String,
    #[serde(default)]
    version_a: Option<String>,
    skill_b: String,
    #[serde(default)]
    version_b: Option<String>,
}

pub async fn compare(
    State(store): State<AppState>,
    Body(req): Body<CompareRequest>,
) -> ApiResult<Json<SimilarityReport>> {
    let a = slot(&store, &req.skill_a)?.snapshot();
    let b = slot(&store, &req.skill_b)?.snapshot();
    let va = version(&a, req.version_a.as_deref())?;
    let vb = version(&b, req.version_b.as_deref())?;
    Ok(Json(compare_models(&va.model, &vb.model)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StartRequest {
    #[serde(default)]
    manual_baseline_hours: Option<f64>,
}

pub async fn start_session(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<StartRequest>,
) -> ApiResult<(StatusCode, Json<RefinementSession>)> {
    let slot = slot(&store, &skill)?;
    let _guard = slot.lock();
    let state = slot.snapshot();
    if state.open_session().is_some() {
        return Err(ApiError::conflict(
            "SESSION_OPEN",
            format!("skill `{skill}` already has an open session"),
        ));
    }
    let baseline = req.manual_baseline_hours.unwrap_or(DEFAULT_MANUAL_BASELINE_HOURS);
    let mut session = RefinementSession::start(&skill, baseline, Utc::now())
        .map_err(|e| ApiError::bad_request("INVALID_PAYLOAD", e.to_string()).with_path("/manualBaselineHours"))?;
    session.raw_model_ref = Some(state.head().token());
    let mut sessions = state.sessions.clone();
    sessions.push(session.clone());
    store.commit_sessions(&slot, sessions).map_err(ApiError::storage)?;
    Ok((StatusCode::CREATED, Json(session)))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventRequest {
    field_path: String,
    #[serde(default)]
    before: Option<Value>,
    #[serde(default)]
    after: Option<Value>,
    #[serde(default)]
    note: Option<String>,
}

fn with_open_session(
    store: &Store,
    skill: &str,
    f: impl FnOnce(&mut RefinementSession, &SkillState) -> ApiResult<()>,
) -> ApiResult<RefinementSession> {
    let slot = slot(store, skill)?;
    let _guard = slot.lock();
    let state = slot.snapshot();
    if state.open_session().is_none() {
        return Err(ApiError::conflict(
            "NO_OPEN_SESSION",
            format!("skill `{skill}` has no open session"),
        ));
    }
    let mut sessions = state.sessions.clone();
    let session = sessions.last_mut().expect("open session");
    f(session, &state)?;
    let session = session.clone();
    store.commit_sessions(&slot, sessions).map_err(ApiError::storage)?;
    Ok(session)
}

pub async fn session_event(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<EventRequest>,
) -> ApiResult<Json<RefinementSession>> {
    let session = with_open_session(&store, &skill, |s, _| {
        s.record(SessionEvent {
            timestamp: Utc::now(),
            field_path: req.field_path,
            before: req.before,
            after: req.after,
            note: req.note,
        })
        .map_err(|e| ApiError::conflict("NO_OPEN_SESSION", e.to_string()))
    })?;
    Ok(Json(session))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EndRequest {
    #[serde(default)]
    logged_hours: Option<f64>,
}

pub async fn end_session(
    State(store): State<AppState>,
    Path(skill): Path<String>,
    Body(req): Body<EndRequest>,
) -> ApiResult<Json<Value>> {
    let now = Utc::now();
    let session = with_open_session(&store, &skill, |s, state| {
        s.end(now, req.logged_hours)
            .map_err(|e| ApiError::bad_request("INVALID_PAYLOAD", e.to_string()).with_path("/loggedHours"))?;
        s.refined_model_ref = Some(state.head().token());
        Ok(())
    })?;
    let reduction = session.reduction(now).ok();
    Ok(Json(json!({
        "session": session,
        "refinementHours": session.refinement_hours(now),
        "manualBaselineHours": session.manual_baseline_hours,
        "reduction": reduction,
    })))
}

pub async fn list_sessions(State(store): State<AppState>, Path(skill): Path<String>) -> ApiResult<Json<Value>> {
    let state = slot(&store, &skill)?.snapshot();
    Ok(Json(json!({ "skillName": skill, "sessions": state.sessions })))
}

/// Raw column: newest `raw` version. Refined column: newest `refined`
/// version, else the head when it is not the raw version itself.
pub async fn report(State(store): State<AppState>, Path(skill): Path<String>) -> ApiResult<Json<ReportOutput>> {
    let state = slot(&store, &skill)?.snapshot();
    let raw = state.resolve(Some("raw"));
    let refined = state
        .resolve(Some("refined"))
        .or_else(|| Some(state.head()).filter(|h| raw.is_none_or(|r| r.id != h.id)));
    let analyze = |v: &Version| analyze_with(&v.model, None, &AnalyzeOptions::default());
    let mut inputs = ReportInputs {
        raw_static: raw.map(analyze).into_iter().collect(),
        refined_static: refined.map(analyze).into_iter().collect(),
        sessions: state.sessions.iter().filter(|s| s.is_ended()).cloned().collect(),
        ..Default::default()
    };
    if let (Some(r), Some(f)) = (raw, refined) {
        inputs.similarity.push((
            "Refined vs Raw".into(),
            aggregate(&[compare_models(&f.model, &r.model)]),
        ));
    }
    emit_report(&inputs)
        .map(Json)
        .map_err(|e| ApiError::not_found("NOTHING_TO_REPORT", e.to_string()))
}

pub const ENDPOINTS: [(&str, &str, &str); 17] = [
    ("GET", "/api", "this listing"),
    ("POST", "/models", "upload a bundle {task, method, knowledge, skillName?, label?, allowInvalid?}"),
    ("GET", "/models", "list stored skills"),
    ("GET", "/models/{skill}", "bundle, validation summary and version list; ?version= selects a version"),
    (
        "PUT",
        "/models/{skill}/working",
        "{versionToken, bundle | patch, allowInvalid?} appends a working version; returns validation, analysis, analysisDelta",
    ),
    ("POST", "/models/{skill}/validate", "{version?} validation report"),
    ("POST", "/models/{skill}/analyze", "{version?, transcript?, alignmentThreshold?} static metrics"),
    ("POST", "/models/{skill}/trace", "{method, env: {strict?, predicates}, version?, stepLimit?} execution trace"),
    ("POST", "/models/{skill}/diff", "{fromVersion, toVersion} structural diff"),
    ("POST", "/compare", "{skillA, versionA?, skillB, versionB?} similarity report"),
    ("GET", "/sessions/{skill}", "refinement sessions"),
    ("POST", "/sessions/{skill}/start", "{manualBaselineHours?} open a session"),
    ("POST", "/sessions/{skill}/event", "{fieldPath, before?, after?, note?} record an edit"),
    ("POST", "/sessions/{skill}/end", "{loggedHours?} close the session; returns the reduction"),
    ("GET", "/reports/{skill}", "markdown and CSV report for the skill"),
    ("*", "versions", "`latest`, `raw`, `refined`, `working` or a numeric id such as `3` / `v3`"),
    ("*", "errors", "{code, message, path?, report?} with 400, 404 or 409"),
];

pub async fn api_listing() -> Json<Value> {
    let endpoints: Vec<Value> = ENDPOINTS
        .iter()
        .map(|(method, path, summary)| json!({ "method": method, "path": path, "summary": summary }))
        .collect();
    Json(json!({ "name": "tmk-service", "version": env!("CARGO_PKG_VERSION"), "endpoints": endpoints }))
}
