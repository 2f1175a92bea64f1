//! Schema and structural-pattern validation.
//!
//! Every problem becomes a [`Violation`] located by a JSON pointer into the
//! bundle: `/task/...`, `/method/<i>/...` or `/knowledge/...`. Validation never
//! fails; the report says whether the model is usable.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::condition::parse_condition;
use crate::model::{Extra, GoalKind, MethodSpec, Parameter, TaskSpec, TmkModel, FAILURE_GOAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptySkillName,
    EmptyTaskName,
    MissingMeans,
    DanglingMeans,
    EmptyParameter,
    DuplicateParameter,
    EmptyMethodName,
    DuplicateMethodName,
    DanglingStartState,
    DanglingTransitionEndpoint,
    DuplicateStateName,
    MissingDataCondition,
    InvalidCondition,
    MissingDoneState,
    MissingFailState,
    MissingGoalInvocation,
    InvalidGoalType,
    EmptyGoalReference,
    UnresolvedGoalReference,
    EmptyConceptName,
    DuplicateConcept,
    DanglingSuperConcept,
    CyclicSuperConcept,
    DanglingInstanceConcept,
    UnknownInstanceProperty,
    EmptyRelationField,
    DanglingRelationConcept,
    UnknownField,
    /// Not produced by the validator; used when a generated document does not
    /// even parse.
    MalformedDocument,
}

impl ViolationCode {
    pub fn as_str(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev:<7} {} {}: {}", self.code, self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub valid: bool,
}

impl ValidationReport {
    pub fn new(violations: Vec<Violation>) -> Self {
        let valid = !violations.iter().any(|v| v.severity == Severity::Error);
        Self { violations, valid }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Warning)
    }

    pub fn error_codes(&self) -> BTreeSet<ViolationCode> {
        self.errors().map(|v| v.code).collect()
    }

    pub fn codes(&self) -> BTreeSet<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn summary(&self) -> String {
        format!(
            "{} violations ({} errors, {} warnings)",
            self.violations.len(),
            self.errors().count(),
            self.warnings().count()
        )
    }
}

/// Escape a key for use as a JSON pointer segment.
pub fn pointer_segment(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

#[derive(Default)]
struct Collector {
    out: Vec<Violation>,
}

impl Collector {
    fn error(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.push(code, path, message, Severity::Error);
    }

    fn warn(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.push(code, path, message, Severity::Warning);
    }

    fn push(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>, severity: Severity) {
        self.out.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
            severity,
        });
    }

    fn extras(&mut self, base: &str, extra: &Extra) {
        for key in extra.keys() {
            self.warn(
                ViolationCode::UnknownField,
                format!("{base}/{}", pointer_segment(key)),
                format!("unrecognized field `{key}`"),
            );
        }
    }

    fn parameters(&mut self, base: &str, field: &str, params: &[Parameter], seen: Option<&mut HashSet<String>>) {
        let mut local = HashSet::new();
        let seen = seen.unwrap_or(&mut local);
        for (i, p) in params.iter().enumerate() {
            let path = format!("{base}/{field}/{i}");
            if p.name.trim().is_empty() || p.type_name.trim().is_empty() {
                self.error(
                    ViolationCode::EmptyParameter,
                    path.clone(),
                    "parameter needs both a name and a type",
                );
            } else if !seen.insert(p.name.clone()) {
                self.error(
                    ViolationCode::DuplicateParameter,
                    format!("{path}/name"),
                    format!("parameter `{}` declared more than once", p.name),
                );
            }
            self.extras(&path, &p.extra);
        }
    }

    /// `given`/`makes`/`requires`/`provides` share the guard grammar but are
    /// only checked at warning level.
    fn soft_conditions(&mut self, base: &str, field: &str, conditions: &[String]) {
        for (i, text) in conditions.iter().enumerate() {
            if let Err(e) = parse_condition(text) {
                self.warn(
                    ViolationCode::InvalidCondition,
                    format!("{base}/{field}/{i}"),
                    format!("`{text}` is not a well-formed condition: {e}"),
                );
            }
        }
    }
}

/// Check a model against the normative schema and the mandatory structural
/// patterns (Done and Fail states, guarded transitions, `means` on every task).
pub fn validate_schema(model: &TmkModel) -> ValidationReport {
    let mut c = Collector::default();
    if model.skill_name.trim().is_empty() {
        c.error(ViolationCode::EmptySkillName, "/task/skillName", "skill name is empty");
    }

    let method_names: HashSet<&str> = model.methods.iter().map(|m| m.name.as_str()).collect();
    let all_tasks = model.tasks();
    let task_names: HashSet<&str> = all_tasks.iter().map(|t| t.name.as_str()).collect();

    for (rel, task) in model.task.iter_tasks_with_paths() {
        check_task(&mut c, &format!("/task{rel}"), task, &method_names);
    }

    let mut seen_methods = HashSet::new();
    for (i, method) in model.methods.iter().enumerate() {
        let base = format!("/method/{i}");
        if method.name.trim().is_empty() {
            c.error(
                ViolationCode::EmptyMethodName,
                format!("{base}/name"),
                "method name is empty",
            );
        } else if !seen_methods.insert(method.name.as_str()) {
            c.error(
                ViolationCode::DuplicateMethodName,
                format!("{base}/name"),
                format!("method `{}` declared more than once", method.name),
            );
        }
        check_method(&mut c, &base, method, &task_names);
    }

    check_knowledge(&mut c, model);
    ValidationReport::new(c.out)
}

fn check_task(c: &mut Collector, base: &str, task: &TaskSpec, methods: &HashSet<&str>) {
    if task.name.trim().is_empty() {
        c.error(
            ViolationCode::EmptyTaskName,
            format!("{base}/name"),
            "task name is empty",
        );
    }
    let mut seen = HashSet::new();
    c.parameters(base, "inputParameters", &task.input_parameters, Some(&mut seen));
    c.parameters(base, "outputParameters", &task.output_parameters, Some(&mut seen));
    c.soft_conditions(base, "given", &task.given);
    c.soft_conditions(base, "makes", &task.makes);
    if task.means.is_empty() {
        c.error(
            ViolationCode::MissingMeans,
            format!("{base}/means"),
            format!("task `{}` references no method", task.name),
        );
    }
    for (i, name) in task.means.iter().enumerate() {
        if !methods.contains(name.as_str()) {
            c.error(
                ViolationCode::DanglingMeans,
                format!("{base}/means/{i}"),
                format!("method `{name}` is not defined"),
            );
        }
    }
    c.extras(base, &task.extra);
}

fn check_method(c: &mut Collector, base: &str, method: &MethodSpec, tasks: &HashSet<&str>) {
    c.parameters(base, "inputParameters", &method.input_parameters, None);
    c.parameters(base, "outputParameters", &method.output_parameters, None);
    c.soft_conditions(base, "requires", &method.requires);
    c.soft_conditions(base, "provides", &method.provides);
    c.extras(base, &method.extra);

    let org = &method.organizer;
    let obase = format!("{base}/organizer");
    let mut state_names = HashSet::new();
    for (i, state) in org.states.iter().enumerate() {
        let spath = format!("{obase}/states/{i}");
        if !state_names.insert(state.name.as_str()) {
            c.error(
                ViolationCode::DuplicateStateName,
                format!("{spath}/name"),
                format!("state `{}` declared more than once", state.name),
            );
        }
        c.extras(&spath, &state.extra);
        match &state.goal_invocation {
            None if state.terminal().is_none() => c.warn(
                ViolationCode::MissingGoalInvocation,
                spath.clone(),
                format!("non-terminal state `{}` invokes no goal", state.name),
            ),
            None => {}
            Some(goal) => {
                let gpath = format!("{spath}/goalInvocation");
                c.extras(&gpath, &goal.extra);
                if goal.goal_reference.trim().is_empty() {
                    c.error(
                        ViolationCode::EmptyGoalReference,
                        format!("{gpath}/goalReference"),
                        "goalReference is empty",
                    );
                }
                match goal.goal_kind() {
                    None => c.error(
                        ViolationCode::InvalidGoalType,
                        format!("{gpath}/type"),
                        format!("goal type `{}` is neither `task` nor `operation`", goal.kind),
                    ),
                    Some(GoalKind::Task)
                        if goal.goal_reference != FAILURE_GOAL
                            && !goal.goal_reference.is_empty()
                            && !tasks.contains(goal.goal_reference.as_str()) =>
                    {
                        c.warn(
                            ViolationCode::UnresolvedGoalReference,
                            format!("{gpath}/goalReference"),
                            format!("task `{}` is not declared", goal.goal_reference),
                        )
                    }
                    Some(_) => {}
                }
            }
        }
    }

    if !state_names.contains(org.start_state.as_str()) {
        c.error(
            ViolationCode::DanglingStartState,
            format!("{obase}/startState"),
            format!("start state `{}` is not a declared state", org.start_state),
        );
    }

    for (i, t) in org.transitions.iter().enumerate() {
        let tpath = format!("{obase}/transitions/{i}");
        for (field, endpoint) in [("sourceState", &t.source_state), ("targetState", &t.target_state)] {
            if !state_names.contains(endpoint.as_str()) {
                c.error(
                    ViolationCode::DanglingTransitionEndpoint,
                    format!("{tpath}/{field}"),
                    format!("`{endpoint}` is not a declared state"),
                );
            }
        }
        match t.guard() {
            None => c.error(
                ViolationCode::MissingDataCondition,
                format!("{tpath}/dataCondition"),
                format!(
                    "transition {} -> {} has no dataCondition",
                    t.source_state, t.target_state
                ),
            ),
            Some(text) => {
                if let Err(e) = parse_condition(text) {
                    c.error(
                        ViolationCode::InvalidCondition,
                        format!("{tpath}/dataCondition"),
                        format!("`{text}`: {e}"),
                    );
                }
            }
        }
        c.extras(&tpath, &t.extra);
    }

    if !org.has_done_state() {
        c.error(
            ViolationCode::MissingDoneState,
            format!("{obase}/states"),
            "organizer has no Done state",
        );
    }
    if !org.has_fail_state() {
        c.error(
            ViolationCode::MissingFailState,
            format!("{obase}/states"),
            "organizer has no Fail state",
        );
    }
    c.extras(&obase, &org.extra);
}

fn check_knowledge(c: &mut Collector, model: &TmkModel) {
    let k = &model.knowledge;
    let mut concepts: HashMap<&str, usize> = HashMap::new();
    for (i, concept) in k.concepts.iter().enumerate() {
        let path = format!("/knowledge/concepts/{i}");
        if concept.name.trim().is_empty() {
            c.error(
                ViolationCode::EmptyConceptName,
                format!("{path}/name"),
                "concept name is empty",
            );
        } else if concepts.insert(concept.name.as_str(), i).is_some() {
            c.error(
                ViolationCode::DuplicateConcept,
                format!("{path}/name"),
                format!("concept `{}` declared more than once", concept.name),
            );
        }
        c.extras(&path, &concept.extra);
        for (j, prop) in concept.properties.iter().enumerate() {
            c.extras(&format!("{path}/properties/{j}"), &prop.extra);
        }
    }

    for (i, concept) in k.concepts.iter().enumerate() {
        if let Some(parent) = &concept.super_concept {
            if !concepts.contains_key(parent.as_str()) {
                c.error(
                    ViolationCode::DanglingSuperConcept,
                    format!("/knowledge/concepts/{i}/superConcept"),
                    format!("super concept `{parent}` is not declared"),
                );
            }
        }
    }

    // each cycle is reported once, at the member with the smallest index
    let parent_of =
        |name: &str| -> Option<&str> { concepts.get(name).and_then(|&i| k.concepts[i].super_concept.as_deref()) };
    let mut reported: BTreeSet<usize> = BTreeSet::new();
    for (i, concept) in k.concepts.iter().enumerate() {
        let mut chain = vec![concept.name.as_str()];
        let mut cursor = concept.name.as_str();
        while let Some(parent) = parent_of(cursor) {
            if let Some(pos) = chain.iter().position(|n| *n == parent) {
                let members: Vec<usize> = chain[pos..].iter().filter_map(|n| concepts.get(n).copied()).collect();
                let first = members.iter().copied().min().unwrap_or(i);
                if first == i && reported.insert(i) {
                    let mut cycle: Vec<&str> = chain[pos..].to_vec();
                    cycle.push(parent);
                    c.error(
                        ViolationCode::CyclicSuperConcept,
                        format!("/knowledge/concepts/{i}/superConcept"),
                        format!("superConcept chain is cyclic: {}", cycle.join(" -> ")),
                    );
                }
                break;
            }
            chain.push(parent);
            cursor = parent;
        }
    }

    for (i, inst) in k.instances.iter().enumerate() {
        let path = format!("/knowledge/instances/{i}");
        c.extras(&path, &inst.extra);
        if !concepts.contains_key(inst.concept.as_str()) {
            c.error(
                ViolationCode::DanglingInstanceConcept,
                format!("{path}/concept"),
                format!("concept `{}` is not declared", inst.concept),
            );
            continue;
        }
        let props = inherited_properties(model, &inst.concept);
        for key in inst.values.keys() {
            if !props.contains(key.as_str()) {
                c.error(
                    ViolationCode::UnknownInstanceProperty,
                    format!("{path}/values/{}", pointer_segment(key)),
                    format!("`{key}` is not a property of `{}`", inst.concept),
                );
            }
        }
    }

    for (i, rel) in k.relations.iter().enumerate() {
        let path = format!("/knowledge/relations/{i}");
        c.extras(&path, &rel.extra);
        for (field, value) in [("name", &rel.name), ("domain", &rel.domain), ("range", &rel.range)] {
            if value.trim().is_empty() {
                c.error(
                    ViolationCode::EmptyRelationField,
                    format!("{path}/{field}"),
                    format!("relation {field} is empty"),
                );
            } else if field != "name" && !concepts.contains_key(value.as_str()) {
                c.error(
                    ViolationCode::DanglingRelationConcept,
                    format!("{path}/{field}"),
                    format!("concept `{value}` is not declared"),
                );
            }
        }
    }
    c.extras("/knowledge", &k.extra);
}

/// Property names of `concept` including those inherited through
/// `superConcept`, stopping at cycles.
pub fn inherited_properties<'a>(model: &'a TmkModel, concept: &str) -> BTreeSet<&'a str> {
    let by_name: BTreeMap<&str, _> = model.knowledge.concepts.iter().map(|c| (c.name.as_str(), c)).collect();
    let mut props = BTreeSet::new();
    let mut visited = HashSet::new();
    let mut cursor = by_name.get(concept).copied();
    while let Some(c) = cursor {
        if !visited.insert(c.name.as_str()) {
            break;
        }
        props.extend(c.properties.iter().map(|p| p.name.as_str()));
        cursor = c.super_concept.as_deref().and_then(|p| by_name.get(p).copied());
    }
    props
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::parse_model_bundle;

    fn model(method: &str, knowledge: &str) -> TmkModel {
        let task = r#"{"name": "T", "means": ["M"]}"#;
        parse_model_bundle(task, method, knowledge).unwrap()
    }

    const GOOD_METHOD: &str = r#"{"name": "M", "organizer": {
        "startState": "S1",
        "states": [
            {"name": "S1", "goalInvocation": {"goalReference": "op", "type": "operation", "actualArguments": []}},
            {"name": "M_Done"},
            {"name": "M_Fail", "goalInvocation": {"goalReference": "FailureGoal", "type": "task", "actualArguments": []}}
        ],
        "transitions": [
            {"sourceState": "S1", "targetState": "M_Done", "dataCondition": "ok(x)"},
            {"sourceState": "S1", "targetState": "M_Fail", "dataCondition": "!ok(x)"}
        ]}}"#;

    #[test]
    fn minimal_model_is_clean() {
        let report = validate_schema(&model(GOOD_METHOD, r#"{"concepts": []}"#));
        assert!(report.valid, "{:?}", report.violations);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn transition_path_points_at_condition() {
        let method = GOOD_METHOD.replace(r#", "dataCondition": "ok(x)""#, "");
        let report = validate_schema(&model(&method, r#"{"concepts": []}"#));
        assert!(!report.valid);
        let v = report.errors().next().unwrap();
        assert_eq!(v.code, ViolationCode::MissingDataCondition);
        assert_eq!(v.path, "/method/0/organizer/transitions/0/dataCondition");
    }

    #[test]
    fn blank_condition_counts_as_missing() {
        let method = GOOD_METHOD.replace(r#""ok(x)""#, r#""  ""#);
        let report = validate_schema(&model(&method, r#"{"concepts": []}"#));
        assert_eq!(report.error_codes(), [ViolationCode::MissingDataCondition].into());
    }

    #[test]
    fn malformed_guard_is_error_but_soft_conditions_warn() {
        let method = GOOD_METHOD
            .replace(r#""ok(x)""#, r#""ok(x) &&""#)
            .replace(r#""name": "M","#, r#""name": "M", "requires": ["a >= b"],"#);
        let report = validate_schema(&model(&method, r#"{"concepts": []}"#));
        assert_eq!(report.error_codes(), [ViolationCode::InvalidCondition].into());
        assert_eq!(report.warnings().count(), 1);
        assert_eq!(report.warnings().next().unwrap().path, "/method/0/requires/0");
    }

    #[test]
    fn unknown_fields_are_warnings() {
        let report = validate_schema(&model(GOOD_METHOD, r#"{"concepts": [], "notes": "x"}"#));
        assert!(report.valid);
        let w = report.warnings().next().unwrap();
        assert_eq!(w.code, ViolationCode::UnknownField);
        assert_eq!(w.path, "/knowledge/notes");
    }

    #[test]
    fn cycle_reported_once() {
        let knowledge = r#"{"concepts": [
            {"name": "A", "superConcept": "B"},
            {"name": "B", "superConcept": "C"},
            {"name": "C", "superConcept": "A"},
            {"name": "D", "superConcept": "A"}
        ]}"#;
        let report = validate_schema(&model(GOOD_METHOD, knowledge));
        let cycles: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.code == ViolationCode::CyclicSuperConcept)
            .collect();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].path, "/knowledge/concepts/0/superConcept");
    }

    #[test]
    fn inherited_properties_allow_instance_values() {
        let knowledge = r#"{"concepts": [
            {"name": "Base", "properties": [{"name": "size", "type": "integer"}]},
            {"name": "Derived", "superConcept": "Base", "properties": []}
        ], "instances": [{"name": "d", "concept": "Derived", "values": {"size": 3}}]}"#;
        let report = validate_schema(&model(GOOD_METHOD, knowledge));
        assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn pointer_segments_escape() {
        assert_eq!(pointer_segment("a/b~c"), "a~1b~0c");
    }
}
