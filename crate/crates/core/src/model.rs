//! Task-Method-Knowledge domain types.
//!
//! A [`TmkModel`] bundles the three components of a procedural skill: the
//! goal hierarchy ([`TaskSpec`]), the mechanisms realizing those goals
//! ([`MethodSpec`], each carrying a finite-state [`Organizer`]) and the domain
//! vocabulary ([`KnowledgeSpec`]).
//!
//! Every struct keeps keys it does not recognize in an `extra` map so that a
//! parse/serialize cycle never drops data produced by a generator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Reference name of the goal a Fail state invokes.
pub const FAILURE_GOAL: &str = "FailureGoal";

/// Unrecognized keys, preserved verbatim.
pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TmkModel {
    pub skill_name: String,
    pub task: TaskSpec,
    pub methods: Vec<MethodSpec>,
    pub knowledge: KnowledgeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_refs: Option<SourceRefs>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceRefs {
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_id: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub input_parameters: Vec<Parameter>,
    #[serde(default)]
    pub output_parameters: Vec<Parameter>,
    #[serde(default)]
    pub given: Vec<String>,
    #[serde(default)]
    pub makes: Vec<String>,
    /// Methods realizing this task. `mechanismReference` is read as an alias.
    #[serde(default, alias = "mechanismReference")]
    pub means: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtasks: Option<Vec<TaskSpec>>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    #[serde(default)]
    pub name: String,
    #[serde(default, rename = "type")]
    pub type_name: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MethodSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub input_parameters: Vec<Parameter>,
    #[serde(default)]
    pub output_parameters: Vec<Parameter>,
    #[serde(default)]
    pub requires: Vec<String>,
    #[serde(default)]
    pub provides: Vec<String>,
    #[serde(default)]
    pub organizer: Organizer,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Organizer {
    #[serde(default)]
    pub start_state: String,
    #[serde(default)]
    pub states: Vec<State>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct State {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_invocation: Option<GoalInvocation>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GoalInvocation {
    #[serde(default)]
    pub goal_reference: String,
    /// `task` or `operation`; kept as text so that bad values surface as
    /// validation findings instead of parse failures.
    #[serde(default, rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub actual_arguments: Vec<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalKind {
    Task,
    Operation,
}

impl GoalInvocation {
    pub fn goal_kind(&self) -> Option<GoalKind> {
        match self.kind.as_str() {
            "task" => Some(GoalKind::Task),
            "operation" => Some(GoalKind::Operation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transition {
    #[serde(default)]
    pub source_state: String,
    #[serde(default)]
    pub target_state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_condition: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Transition {
    /// The guard text, or `None` when absent or blank.
    pub fn guard(&self) -> Option<&str> {
        self.data_condition.as_deref().filter(|text| !text.trim().is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSpec {
    #[serde(default, alias = "Concept")]
    pub concepts: Vec<Concept>,
    #[serde(default, alias = "Instance")]
    pub instances: Vec<Instance>,
    #[serde(default, alias = "Relation")]
    pub relations: Vec<Relation>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Concept {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub super_concept: Option<String>,
    #[serde(default)]
    pub properties: Vec<Property>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Property {
    #[serde(default)]
    pub name: String,
    #[serde(default, rename = "type")]
    pub type_name: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub concept: String,
    #[serde(default)]
    pub values: Map<String, Value>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub range: String,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Terminal classification of an organizer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    Done,
    Fail,
}

/// `true` for `Done`, `SNS_Done` and the like: the marker is either the whole
/// name or the last underscore-delimited segment.
fn has_marker(name: &str, marker: &str) -> bool {
    name == marker || name.strip_suffix(marker).is_some_and(|prefix| prefix.ends_with('_'))
}

impl State {
    pub fn is_done_named(&self) -> bool {
        has_marker(&self.name, "Done")
    }

    pub fn is_fail_named(&self) -> bool {
        has_marker(&self.name, "Fail")
    }

    pub fn invokes_failure_goal(&self) -> bool {
        self.goal_invocation
            .as_ref()
            .is_some_and(|g| g.goal_reference == FAILURE_GOAL)
    }

    /// Fail takes precedence: a state invoking `FailureGoal` is a Fail state
    /// whatever its name.
    pub fn terminal(&self) -> Option<Terminal> {
        if self.is_fail_named() || self.invokes_failure_goal() {
            Some(Terminal::Fail)
        } else if self.is_done_named() {
            Some(Terminal::Done)
        } else {
            None
        }
    }
}

impl Organizer {
    pub fn state(&self, name: &str) -> Option<&State> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn has_done_state(&self) -> bool {
        self.states.iter().any(|s| s.terminal() == Some(Terminal::Done))
    }

    pub fn has_fail_state(&self) -> bool {
        self.states.iter().any(|s| s.terminal() == Some(Terminal::Fail))
    }

    /// Outgoing transitions of `state`, in declaration order, with their indices.
    pub fn outgoing<'a>(&'a self, state: &'a str) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.source_state == state)
    }
}

impl TaskSpec {
    /// This task followed by all nested subtasks, depth first.
    pub fn iter_tasks(&self) -> Vec<&TaskSpec> {
        let mut out = vec![self];
        for sub in self.subtasks.iter().flatten() {
            out.extend(sub.iter_tasks());
        }
        out
    }

    /// Like [`iter_tasks`](Self::iter_tasks) but paired with the JSON pointer of
    /// each task relative to the task document root.
    pub fn iter_tasks_with_paths(&self) -> Vec<(String, &TaskSpec)> {
        fn preorder<'a>(task: &'a TaskSpec, path: String, out: &mut Vec<(String, &'a TaskSpec)>) {
            for (i, sub) in task.subtasks.iter().flatten().enumerate() {
                let child = format!("{path}/subtasks/{i}");
                out.push((child.clone(), sub));
                preorder(sub, child, out);
            }
        }
        let mut out = vec![(String::new(), self)];
        preorder(self, String::new(), &mut out);
        out
    }
}

impl TmkModel {
    pub fn method(&self, name: &str) -> Option<&MethodSpec> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Root task and subtasks, depth first.
    pub fn tasks(&self) -> Vec<&TaskSpec> {
        self.task.iter_tasks()
    }

    pub fn find_task(&self, name: &str) -> Option<&TaskSpec> {
        self.tasks().into_iter().find(|t| t.name == name)
    }

    pub fn concept(&self, name: &str) -> Option<&Concept> {
        self.knowledge.concepts.iter().find(|c| c.name == name)
    }

    pub fn has_concept(&self, name: &str) -> bool {
        self.concept(name).is_some()
    }
}
