//! Organizer execution against a static predicate environment.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::{evaluate, parse_condition, Condition, EvalError, PredicateEnv, PredicateSig};
use crate::model::{GoalInvocation, GoalKind, Organizer, State, Terminal, TmkModel, FAILURE_GOAL};

pub const DEFAULT_STEP_LIMIT: usize = 256;
pub const MAX_ENUMERATED_PREDICATES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Done,
    Fail,
    Stuck,
    StepLimit,
}

impl From<Terminal> for Outcome {
    fn from(t: Terminal) -> Self {
        match t {
            Terminal::Done => Outcome::Done,
            Terminal::Fail => Outcome::Fail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluatedTransition {
    pub index: usize,
    pub target_state: String,
    pub condition: String,
    pub result: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceStep {
    pub state_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invoked_goal: Option<GoalInvocation>,
    pub evaluated_transitions: Vec<EvaluatedTransition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sub_trace: Option<Box<ExecutionTrace>>,
    /// Further means of the invoked task that were not followed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unexplored_methods: Vec<String>,
}

/// A `requires` entry evaluated when the method was entered. Recorded only;
/// it never blocks execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Requirement {
    pub condition: String,
    pub holds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionTrace {
    pub method: String,
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    pub final_state: Option<String>,
    pub requirements: Vec<Requirement>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmError {
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("{path}: {message}")]
    GuardParseError { path: String, message: String },
    #[error("{path}: {source}")]
    Eval { path: String, source: EvalError },
    #[error("{count} distinct predicates exceed the limit of {limit}")]
    TooManyPredicates { count: usize, limit: usize },
}

fn guard_path(method_index: usize, transition: usize) -> String {
    format!("/method/{method_index}/organizer/transitions/{transition}/dataCondition")
}

/// Parsed guard of every transition, in declaration order. `method_index`
/// only feeds error paths.
pub fn parse_guards(organizer: &Organizer, method_index: usize) -> Result<Vec<Condition>, FsmError> {
    organizer
        .transitions
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let text = t.guard().ok_or_else(|| FsmError::GuardParseError {
                path: guard_path(method_index, j),
                message: "missing dataCondition".into(),
            })?;
            parse_condition(text).map_err(|e| FsmError::GuardParseError {
                path: guard_path(method_index, j),
                message: e.to_string(),
            })
        })
        .collect()
}

fn terminal_of(organizer: &Organizer, name: &str) -> Option<Terminal> {
    match organizer.state(name) {
        Some(state) => state.terminal(),
        None => State {
            name: name.to_string(),
            ..Default::default()
        }
        .terminal(),
    }
}

struct Tracer<'a> {
    model: &'a TmkModel,
    env: &'a PredicateEnv,
    step_limit: usize,
    stack: Vec<String>,
}

impl Tracer<'_> {
    fn run(&mut self, method_name: &str) -> Result<ExecutionTrace, FsmError> {
        let method_index = self
            .model
            .methods
            .iter()
            .position(|m| m.name == method_name)
            .ok_or_else(|| FsmError::UnknownMethod(method_name.to_string()))?;
        let method = &self.model.methods[method_index];
        let organizer = &method.organizer;
        let guards = parse_guards(organizer, method_index)?;
        self.stack.push(method.name.clone());

        let requirements = method
            .requires
            .iter()
            .map(|text| match parse_condition(text) {
                Ok(cond) => match evaluate(&cond, self.env) {
                    Ok(v) => Requirement {
                        condition: text.clone(),
                        holds: Some(v),
                        note: None,
                    },
                    Err(e) => Requirement {
                        condition: text.clone(),
                        holds: None,
                        note: Some(e.to_string()),
                    },
                },
                Err(e) => Requirement {
                    condition: text.clone(),
                    holds: None,
                    note: Some(format!("unparseable: {e}")),
                },
            })
            .collect();

        let mut trace = ExecutionTrace {
            method: method.name.clone(),
            steps: Vec::new(),
            outcome: Outcome::StepLimit,
            final_state: None,
            requirements,
            warnings: Vec::new(),
        };
        let mut current = organizer.start_state.clone();
        for _ in 0..self.step_limit {
            let mut step = TraceStep {
                state_name: current.clone(),
                invoked_goal: organizer.state(&current).and_then(|s| s.goal_invocation.clone()),
                evaluated_transitions: Vec::new(),
                sub_trace: None,
                unexplored_methods: Vec::new(),
            };
            if let Some(goal) = step.invoked_goal.clone() {
                self.descend(&goal, &mut step, &mut trace.warnings)?;
            }
            trace.final_state = Some(current.clone());
            if let Some(t) = terminal_of(organizer, &current) {
                trace.steps.push(step);
                trace.outcome = t.into();
                self.stack.pop();
                return Ok(trace);
            }
            for (j, t) in organizer.outgoing(&current) {
                let result = evaluate(&guards[j], self.env).map_err(|source| FsmError::Eval {
                    path: guard_path(method_index, j),
                    source,
                })?;
                step.evaluated_transitions.push(EvaluatedTransition {
                    index: j,
                    target_state: t.target_state.clone(),
                    condition: t.data_condition.clone().unwrap_or_default(),
                    result,
                });
            }
            let mut taken = step.evaluated_transitions.iter().filter(|e| e.result);
            let Some(first) = taken.next() else {
                trace.steps.push(step);
                trace.outcome = Outcome::Stuck;
                self.stack.pop();
                return Ok(trace);
            };
            let skipped: Vec<String> = taken.map(|e| format!("{} (-> {})", e.index, e.target_state)).collect();
            if !skipped.is_empty() {
                trace.warnings.push(format!(
                    "nondeterminism at `{current}`: took transition {} (-> {}), skipped {}",
                    first.index,
                    first.target_state,
                    skipped.join(", ")
                ));
            }
            let next = first.target_state.clone();
            trace.steps.push(step);
            current = next;
        }
        self.stack.pop();
        Ok(trace)
    }

    fn descend(
        &mut self,
        goal: &GoalInvocation,
        step: &mut TraceStep,
        warnings: &mut Vec<String>,
    ) -> Result<(), FsmError> {
        if goal.goal_kind() != Some(GoalKind::Task) || goal.goal_reference == FAILURE_GOAL {
            return Ok(());
        }
        let Some(task) = self.model.find_task(&goal.goal_reference) else {
            warnings.push(format!("task `{}` is not declared; not expanded", goal.goal_reference));
            return Ok(());
        };
        let Some(first) = task.means.first() else {
            warnings.push(format!("task `{}` has no means; not expanded", task.name));
            return Ok(());
        };
        step.unexplored_methods = task.means[1..].to_vec();
        if self.model.method(first).is_none() {
            warnings.push(format!("means `{first}` of task `{}` names no method", task.name));
            return Ok(());
        }
        if self.stack.contains(first) {
            warnings.push(format!("recursive invocation of `{first}` cut"));
            return Ok(());
        }
        let sub = self.run(first)?;
        warnings.extend(sub.warnings.iter().map(|w| format!("{}: {w}", sub.method)));
        step.sub_trace = Some(Box::new(sub));
        Ok(())
    }
}

/// Walks the organizer of `method_name` from its start state. The first
/// declared true transition is taken; others that are also true produce a
/// nondeterminism warning. Task-type invocations are traced into the invoked
/// task's first means as nested sub-traces, which do not affect the outer
/// walk.
pub fn trace(
    model: &TmkModel,
    method_name: &str,
    env: &PredicateEnv,
    step_limit: usize,
) -> Result<ExecutionTrace, FsmError> {
    Tracer {
        model,
        env,
        step_limit,
        stack: Vec::new(),
    }
    .run(method_name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReachabilityReport {
    pub done_reachable: bool,
    pub fail_reachable: bool,
    pub unreachable_states: Vec<String>,
    /// Non-terminal states without outgoing transitions.
    pub dead_end_states: Vec<String>,
}

/// Graph search from the start state. Every transition is an edge except
/// those whose guard is the literal `false`; terminal states are not expanded.
pub fn check_reachability(organizer: &Organizer) -> ReachabilityReport {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue = VecDeque::new();
    let start = organizer.start_state.as_str();
    if organizer.state(start).is_some() {
        seen.insert(start);
        queue.push_back(start);
    }
    while let Some(name) = queue.pop_front() {
        if terminal_of(organizer, name).is_some() {
            continue;
        }
        for (_, t) in organizer.outgoing(name) {
            let blocked = t
                .guard()
                .and_then(|g| parse_condition(g).ok())
                .is_some_and(|c| c == Condition::False);
            let target = t.target_state.as_str();
            if !blocked && organizer.state(target).is_some() && seen.insert(target) {
                queue.push_back(target);
            }
        }
    }
    let reached = |kind: Terminal| {
        organizer
            .states
            .iter()
            .any(|s| s.terminal() == Some(kind) && seen.contains(s.name.as_str()))
    };
    ReachabilityReport {
        done_reachable: reached(Terminal::Done),
        fail_reachable: reached(Terminal::Fail),
        unreachable_states: organizer
            .states
            .iter()
            .filter(|s| !seen.contains(s.name.as_str()))
            .map(|s| s.name.clone())
            .collect(),
        dead_end_states: organizer
            .states
            .iter()
            .filter(|s| s.terminal().is_none() && organizer.outgoing(&s.name).next().is_none())
            .map(|s| s.name.clone())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutcomeRow {
    /// Truth value per predicate, aligned with [`OutcomeTable::predicates`].
    pub assignment: Vec<bool>,
    pub outcome: Outcome,
    pub final_state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutcomeTable {
    pub predicates: Vec<PredicateSig>,
    pub rows: Vec<OutcomeRow>,
}

impl OutcomeTable {
    /// Lenient environment matching `row`.
    pub fn env_for(&self, row: &OutcomeRow) -> PredicateEnv {
        let mut env = PredicateEnv::lenient();
        for (sig, v) in self.predicates.iter().zip(&row.assignment) {
            env.set(sig.clone(), *v);
        }
        env
    }
}

fn truth(cond: &Condition, predicates: &[PredicateSig], bits: u32, k: usize) -> bool {
    match cond {
        Condition::True => true,
        Condition::False => false,
        Condition::Predicate { name, args } => {
            let j = predicates
                .iter()
                .position(|p| &p.name == name && &p.args == args)
                .expect("predicate collected up front");
            bits >> (k - 1 - j) & 1 == 1
        }
        Condition::Not { child } => !truth(child, predicates, bits, k),
        Condition::And { left, right } => truth(left, predicates, bits, k) & truth(right, predicates, bits, k),
        Condition::Or { left, right } => truth(left, predicates, bits, k) | truth(right, predicates, bits, k),
    }
}

/// Outcome of a single-organizer walk for every truth assignment of the
/// predicates in its guards. Predicates are sorted; row `i` reads `i` as a
/// binary number whose most significant bit is the first predicate.
pub fn enumerate_outcomes(organizer: &Organizer, step_limit: usize) -> Result<OutcomeTable, FsmError> {
    let guards = parse_guards(organizer, 0)?;
    let predicates: Vec<PredicateSig> = guards
        .iter()
        .flat_map(Condition::predicates)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = predicates.len();
    if k > MAX_ENUMERATED_PREDICATES {
        return Err(FsmError::TooManyPredicates {
            count: k,
            limit: MAX_ENUMERATED_PREDICATES,
        });
    }
    let rows = (0..1u32 << k)
        .map(|bits| {
            let mut current = organizer.start_state.as_str();
            let mut row = OutcomeRow {
                assignment: (0..k).map(|j| bits >> (k - 1 - j) & 1 == 1).collect(),
                outcome: Outcome::StepLimit,
                final_state: None,
            };
            for _ in 0..step_limit {
                row.final_state = Some(current.to_string());
                if let Some(t) = terminal_of(organizer, current) {
                    row.outcome = t.into();
                    return row;
                }
                let next = organizer
                    .transitions
                    .iter()
                    .zip(&guards)
                    .find(|(t, g)| t.source_state == current && truth(g, &predicates, bits, k));
                match next {
                    Some((t, _)) => current = t.target_state.as_str(),
                    None => {
                        row.outcome = Outcome::Stuck;
                        return row;
                    }
                }
            }
            row
        })
        .collect();
    Ok(OutcomeTable { predicates, rows })
}
