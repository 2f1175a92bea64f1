//! Syntactic quality metrics for a single model.
//!
//! * instructional alignment: share of model terms found in the lesson
//!   transcript under an edit-distance tolerance
//! * structural binding: task-method, method-knowledge and task-knowledge
//!   reference ratios
//! * guard logic: share of transitions with non-trivial guards
//! * failure modeling: share of organizers with an explicit Fail state
//! * hierarchy depth: longest task/operation chain in the decomposition tree

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::condition::{parse_condition, TrivialityRules};
use crate::model::{GoalKind, Parameter, TaskSpec, TmkModel, FAILURE_GOAL};
use crate::text;

pub const DEFAULT_ALIGNMENT_THRESHOLD: f64 = 0.8;

/// Lesson text with its normalized token segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub text: String,
    segments: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct TranscriptDoc {
    text: String,
}

impl Transcript {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let segments = text::segments(&text);
        Self { text, segments }
    }

    /// Accepts plain text or a JSON object `{"text": ...}`.
    pub fn from_contents(contents: &str) -> Self {
        if contents.trim_start().starts_with('{') {
            if let Ok(doc) = serde_json::from_str::<TranscriptDoc>(contents) {
                return Self::new(doc.text);
            }
        }
        Self::new(contents)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_contents(&fs::read_to_string(path)?))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().flatten().map(String::as_str)
    }

    pub fn segments(&self) -> &[Vec<String>] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermSource {
    Task,
    Method,
    Concept,
    Relation,
    Parameter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TermAlignment {
    pub term: String,
    pub source: TermSource,
    pub normalized: String,
    pub best_window: Option<String>,
    pub similarity: f64,
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AlignmentReport {
    pub score: f64,
    pub threshold: f64,
    pub aligned_count: usize,
    pub term_count: usize,
    pub terms: Vec<TermAlignment>,
}

/// Distinct model terms in a fixed order: tasks, methods, concepts,
/// relations, then parameters. Terms are deduplicated on their normalized form.
pub fn model_terms(model: &TmkModel) -> Vec<(String, TermSource)> {
    let tasks = model.tasks();
    let mut raw: Vec<(&str, TermSource)> = Vec::new();
    raw.extend(tasks.iter().map(|t| (t.name.as_str(), TermSource::Task)));
    raw.extend(model.methods.iter().map(|m| (m.name.as_str(), TermSource::Method)));
    raw.extend(
        model
            .knowledge
            .concepts
            .iter()
            .map(|c| (c.name.as_str(), TermSource::Concept)),
    );
    raw.extend(
        model
            .knowledge
            .relations
            .iter()
            .map(|r| (r.name.as_str(), TermSource::Relation)),
    );
    let task_params = tasks
        .iter()
        .flat_map(|t| t.input_parameters.iter().chain(&t.output_parameters));
    let method_params = model
        .methods
        .iter()
        .flat_map(|m| m.input_parameters.iter().chain(&m.output_parameters));
    raw.extend(
        task_params
            .chain(method_params)
            .map(|p| (p.name.as_str(), TermSource::Parameter)),
    );

    let mut seen = HashSet::new();
    raw.into_iter()
        .filter(|(term, _)| {
            let norm = text::normalize(term);
            !norm.is_empty() && seen.insert(norm)
        })
        .map(|(term, source)| (term.to_string(), source))
        .collect()
}

fn edit_ratio(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / max_len as f64
}

/// Candidate windows of `n` tokens; a segment shorter than `n` is a window on its own.
fn windows(transcript: &Transcript, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for seg in transcript.segments() {
        if seg.len() < n {
            let w = seg.join(" ");
            if seen.insert(w.clone()) {
                out.push(w);
            }
            continue;
        }
        for win in seg.windows(n) {
            let w = win.join(" ");
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
    }
    out
}

pub fn instructional_alignment(model: &TmkModel, transcript: &Transcript, threshold: f64) -> AlignmentReport {
    let mut cache: HashMap<usize, Vec<String>> = HashMap::new();
    let mut terms = Vec::new();
    for (term, source) in model_terms(model) {
        let tokens = text::tokenize(&term);
        let normalized = tokens.join(" ");
        let candidates = cache
            .entry(tokens.len())
            .or_insert_with(|| windows(transcript, tokens.len()));
        let mut best: Option<(&String, f64)> = None;
        for w in candidates.iter() {
            let sim = edit_ratio(&normalized, w);
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((w, sim));
                if sim >= 1.0 {
                    break;
                }
            }
        }
        let similarity = best.map_or(0.0, |(_, s)| s);
        terms.push(TermAlignment {
            term,
            source,
            normalized,
            best_window: best.map(|(w, _)| w.clone()),
            similarity,
            aligned: similarity >= threshold,
        });
    }
    let aligned_count = terms.iter().filter(|t| t.aligned).count();
    let term_count = terms.len();
    AlignmentReport {
        score: if term_count == 0 {
            0.0
        } else {
            aligned_count as f64 / term_count as f64
        },
        threshold,
        aligned_count,
        term_count,
        terms,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParamRef {
    pub owner: String,
    pub name: String,
    pub type_name: String,
    pub bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BindingReport {
    pub tm_binding: f64,
    pub mk_binding: f64,
    pub tk_binding: f64,
    pub bound_tasks: Vec<String>,
    pub unbound_tasks: Vec<String>,
    pub method_parameters: Vec<ParamRef>,
    pub task_parameters: Vec<ParamRef>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn param_refs<'a>(model: &TmkModel, owner: &str, params: impl Iterator<Item = &'a Parameter>) -> Vec<ParamRef> {
    params
        .map(|p| ParamRef {
            owner: owner.to_string(),
            name: p.name.clone(),
            type_name: p.type_name.clone(),
            bound: model.has_concept(&p.type_name),
        })
        .collect()
}

pub fn structural_bindings(model: &TmkModel) -> BindingReport {
    let (mut bound_tasks, mut unbound_tasks) = (Vec::new(), Vec::new());
    for task in model.tasks() {
        if task.means.iter().any(|m| model.method(m).is_some()) {
            bound_tasks.push(task.name.clone());
        } else {
            unbound_tasks.push(task.name.clone());
        }
    }
    let method_parameters: Vec<ParamRef> = model
        .methods
        .iter()
        .flat_map(|m| param_refs(model, &m.name, m.input_parameters.iter().chain(&m.output_parameters)))
        .collect();
    let task_parameters: Vec<ParamRef> = model
        .tasks()
        .into_iter()
        .flat_map(|t| param_refs(model, &t.name, t.input_parameters.iter().chain(&t.output_parameters)))
        .collect();
    let count_bound = |ps: &[ParamRef]| ps.iter().filter(|p| p.bound).count();
    BindingReport {
        tm_binding: ratio(bound_tasks.len(), bound_tasks.len() + unbound_tasks.len()),
        mk_binding: ratio(count_bound(&method_parameters), method_parameters.len()),
        tk_binding: ratio(count_bound(&task_parameters), task_parameters.len()),
        bound_tasks,
        unbound_tasks,
        method_parameters,
        task_parameters,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuardDetail {
    pub method: String,
    pub index: usize,
    pub condition: Option<String>,
    pub trivial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuardReport {
    pub score: f64,
    pub total: usize,
    pub non_trivial: usize,
    pub transitions: Vec<GuardDetail>,
}

/// Missing or unparseable guards count as trivial and are flagged.
pub fn guard_logic_score_with(model: &TmkModel, rules: &TrivialityRules) -> GuardReport {
    let mut transitions = Vec::new();
    for method in &model.methods {
        for (index, t) in method.organizer.transitions.iter().enumerate() {
            let (trivial, problem) = match t.guard() {
                None => (true, Some("missing dataCondition".to_string())),
                Some(text) => match parse_condition(text) {
                    Ok(cond) => (rules.is_trivial(&cond), None),
                    Err(e) => (true, Some(format!("unparseable: {e}"))),
                },
            };
            transitions.push(GuardDetail {
                method: method.name.clone(),
                index,
                condition: t.data_condition.clone(),
                trivial,
                problem,
            });
        }
    }
    let non_trivial = transitions.iter().filter(|d| !d.trivial).count();
    GuardReport {
        score: ratio(non_trivial, transitions.len()),
        total: transitions.len(),
        non_trivial,
        transitions,
    }
}

pub fn guard_logic_score(model: &TmkModel) -> GuardReport {
    guard_logic_score_with(model, &TrivialityRules::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrganizerFailure {
    pub method: String,
    pub has_fail_state: bool,
    pub fail_states: Vec<String>,
    /// Fail-named states that do not invoke `FailureGoal`.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FailureReport {
    pub score: f64,
    pub organizers: Vec<OrganizerFailure>,
}

/// A model without organizers scores 0: nothing models failure.
pub fn failure_modeling(model: &TmkModel) -> FailureReport {
    let organizers: Vec<OrganizerFailure> = model
        .methods
        .iter()
        .map(|m| {
            let fail_states: Vec<String> = m
                .organizer
                .states
                .iter()
                .filter(|s| s.is_fail_named() || s.invokes_failure_goal())
                .map(|s| s.name.clone())
                .collect();
            let warnings = m
                .organizer
                .states
                .iter()
                .filter(|s| s.is_fail_named() && !s.invokes_failure_goal())
                .map(|s| {
                    format!(
                        "state `{}` is named as a failure but does not invoke {FAILURE_GOAL}",
                        s.name
                    )
                })
                .collect();
            OrganizerFailure {
                method: m.name.clone(),
                has_fail_state: !fail_states.is_empty(),
                fail_states,
                warnings,
            }
        })
        .collect();
    let score = if organizers.is_empty() {
        0.0
    } else {
        organizers.iter().filter(|o| o.has_fail_state).count() as f64 / organizers.len() as f64
    };
    FailureReport { score, organizers }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Task,
    Method,
    Operation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecompositionNode {
    pub kind: NodeKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<DecompositionNode>,
    /// Task invocation that names no declared task.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unresolved: bool,
    /// Task already on the current path; expansion stopped here.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cycle: bool,
}

impl DecompositionNode {
    fn leaf(kind: NodeKind, name: &str) -> Self {
        Self {
            kind,
            name: name.to_string(),
            children: Vec::new(),
            unresolved: false,
            cycle: false,
        }
    }

    /// Task and operation nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let own = usize::from(self.kind != NodeKind::Method);
        own + self.children.iter().map(Self::depth).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DepthReport {
    pub depth: usize,
    pub tree: DecompositionNode,
    pub warnings: Vec<String>,
}

struct TreeBuilder<'a> {
    model: &'a TmkModel,
    tasks: HashMap<&'a str, &'a TaskSpec>,
    warnings: Vec<String>,
}

impl TreeBuilder<'_> {
    fn task_node(&mut self, task: &TaskSpec, path: &mut Vec<String>) -> DecompositionNode {
        let mut node = DecompositionNode::leaf(NodeKind::Task, &task.name);
        path.push(task.name.clone());
        for means in &task.means {
            let Some(method) = self.model.method(means) else {
                continue;
            };
            let mut mnode = DecompositionNode::leaf(NodeKind::Method, &method.name);
            for state in &method.organizer.states {
                let Some(goal) = &state.goal_invocation else {
                    continue;
                };
                match goal.goal_kind() {
                    Some(GoalKind::Operation) => {
                        mnode
                            .children
                            .push(DecompositionNode::leaf(NodeKind::Operation, &goal.goal_reference));
                    }
                    Some(GoalKind::Task) => {
                        let child = match self.tasks.get(goal.goal_reference.as_str()).copied() {
                            Some(_) if path.contains(&goal.goal_reference) => {
                                self.warnings.push(format!(
                                    "cycle: task `{}` invoked again below itself via `{}`",
                                    goal.goal_reference, method.name
                                ));
                                DecompositionNode {
                                    cycle: true,
                                    ..DecompositionNode::leaf(NodeKind::Task, &goal.goal_reference)
                                }
                            }
                            Some(sub) => self.task_node(sub, path),
                            None => DecompositionNode {
                                unresolved: true,
                                ..DecompositionNode::leaf(NodeKind::Task, &goal.goal_reference)
                            },
                        };
                        mnode.children.push(child);
                    }
                    None => {}
                }
            }
            node.children.push(mnode);
        }
        path.pop();
        node
    }
}

pub fn hierarchy_depth(model: &TmkModel) -> DepthReport {
    let mut builder = TreeBuilder {
        model,
        tasks: model.tasks().into_iter().map(|t| (t.name.as_str(), t)).collect(),
        warnings: Vec::new(),
    };
    let tree = builder.task_node(&model.task, &mut Vec::new());
    DepthReport {
        depth: tree.depth(),
        tree,
        warnings: builder.warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaticDetails {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentReport>,
    pub bindings: BindingReport,
    pub guards: GuardReport,
    pub failure: FailureReport,
    pub decomposition: DepthReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaticReport {
    pub alignment_score: Option<f64>,
    pub tm_binding: f64,
    pub mk_binding: f64,
    pub tk_binding: f64,
    pub guard_logic: f64,
    pub failure_modeling: f64,
    pub hierarchy_depth: usize,
    pub per_item_details: StaticDetails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub alignment_threshold: f64,
    pub triviality: TrivialityRules,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            alignment_threshold: DEFAULT_ALIGNMENT_THRESHOLD,
            triviality: TrivialityRules::default(),
        }
    }
}

pub fn analyze_with(model: &TmkModel, transcript: Option<&Transcript>, options: &AnalyzeOptions) -> StaticReport {
    let alignment = transcript.map(|t| instructional_alignment(model, t, options.alignment_threshold));
    let bindings = structural_bindings(model);
    let guards = guard_logic_score_with(model, &options.triviality);
    let failure = failure_modeling(model);
    let decomposition = hierarchy_depth(model);
    StaticReport {
        alignment_score: alignment.as_ref().map(|a| a.score),
        tm_binding: bindings.tm_binding,
        mk_binding: bindings.mk_binding,
        tk_binding: bindings.tk_binding,
        guard_logic: guards.score,
        failure_modeling: failure.score,
        hierarchy_depth: decomposition.depth,
        per_item_details: StaticDetails {
            alignment,
            bindings,
            guards,
            failure,
            decomposition,
        },
    }
}

pub fn analyze(model: &TmkModel, transcript: Option<&Transcript>) -> StaticReport {
    analyze_with(model, transcript, &AnalyzeOptions::default())
}
