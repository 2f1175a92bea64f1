//! Single-defect edits of a valid model, each paired with the violation the
//! validator must report for it.

use serde_json::Value;

use crate::model::{Instance, State, Terminal, TmkModel};
use crate::validate::ViolationCode;

const MISSING: &str = "__missing__";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    DropDataCondition,
    DropFailState,
    DropDoneState,
    DropMeans,
    DanglingMeans,
    DanglingStartState,
    DanglingTransitionEndpoint,
    DuplicateStateName,
    CyclicSuperConcept,
    DanglingInstanceConcept,
    UnknownInstanceProperty,
    EmptyTaskName,
}

impl Mutation {
    pub const ALL: [Mutation; 12] = [
        Self::DropDataCondition,
        Self::DropFailState,
        Self::DropDoneState,
        Self::DropMeans,
        Self::DanglingMeans,
        Self::DanglingStartState,
        Self::DanglingTransitionEndpoint,
        Self::DuplicateStateName,
        Self::CyclicSuperConcept,
        Self::DanglingInstanceConcept,
        Self::UnknownInstanceProperty,
        Self::EmptyTaskName,
    ];

    pub fn expected(self) -> ViolationCode {
        match self {
            Self::DropDataCondition => ViolationCode::MissingDataCondition,
            Self::DropFailState => ViolationCode::MissingFailState,
            Self::DropDoneState => ViolationCode::MissingDoneState,
            Self::DropMeans => ViolationCode::MissingMeans,
            Self::DanglingMeans => ViolationCode::DanglingMeans,
            Self::DanglingStartState => ViolationCode::DanglingStartState,
            Self::DanglingTransitionEndpoint => ViolationCode::DanglingTransitionEndpoint,
            Self::DuplicateStateName => ViolationCode::DuplicateStateName,
            Self::CyclicSuperConcept => ViolationCode::CyclicSuperConcept,
            Self::DanglingInstanceConcept => ViolationCode::DanglingInstanceConcept,
            Self::UnknownInstanceProperty => ViolationCode::UnknownInstanceProperty,
            Self::EmptyTaskName => ViolationCode::EmptyTaskName,
        }
    }

    /// The mutated copy, or `None` when the model lacks the parts this
    /// mutation edits.
    pub fn apply(self, model: &TmkModel) -> Option<TmkModel> {
        let mut m = model.clone();
        match self {
            Self::DropDataCondition => {
                let t = m.methods.first_mut()?.organizer.transitions.first_mut()?;
                t.data_condition = None;
            }
            Self::DropFailState | Self::DropDoneState => {
                let kind = if self == Self::DropFailState {
                    Terminal::Fail
                } else {
                    Terminal::Done
                };
                let org = &mut m.methods.first_mut()?.organizer;
                let doomed: Vec<String> = org
                    .states
                    .iter()
                    .filter(|s| s.terminal() == Some(kind))
                    .map(|s| s.name.clone())
                    .collect();
                if doomed.is_empty() {
                    return None;
                }
                org.states.retain(|s| !doomed.contains(&s.name));
                org.transitions
                    .retain(|t| !doomed.contains(&t.source_state) && !doomed.contains(&t.target_state));
            }
            Self::DropMeans => m.task.means.clear(),
            Self::DanglingMeans => m.task.means = vec![MISSING.to_string()],
            Self::DanglingStartState => m.methods.first_mut()?.organizer.start_state = MISSING.to_string(),
            Self::DanglingTransitionEndpoint => {
                m.methods.first_mut()?.organizer.transitions.first_mut()?.target_state = MISSING.to_string();
            }
            Self::DuplicateStateName => {
                let org = &mut m.methods.first_mut()?.organizer;
                let copy: State = org.state(&org.start_state)?.clone();
                org.states.push(copy);
            }
            Self::CyclicSuperConcept => {
                let concepts = &mut m.knowledge.concepts;
                match concepts.len() {
                    0 => return None,
                    1 => concepts[0].super_concept = Some(concepts[0].name.clone()),
                    _ => {
                        concepts[0].super_concept = Some(concepts[1].name.clone());
                        concepts[1].super_concept = Some(concepts[0].name.clone());
                    }
                }
            }
            Self::DanglingInstanceConcept => {
                ensure_instance(&mut m)?;
                let inst = &mut m.knowledge.instances[0];
                inst.concept = MISSING.to_string();
                inst.values.clear();
            }
            Self::UnknownInstanceProperty => {
                ensure_instance(&mut m)?;
                m.knowledge.instances[0]
                    .values
                    .insert(MISSING.to_string(), Value::String("x".into()));
            }
            Self::EmptyTaskName => m.task.name.clear(),
        }
        Some(m)
    }
}

fn ensure_instance(m: &mut TmkModel) -> Option<()> {
    if m.knowledge.instances.is_empty() {
        let concept = m.knowledge.concepts.first()?.name.clone();
        m.knowledge.instances.push(Instance {
            name: "mutationInstance".into(),
            concept,
            ..Default::default()
        });
    }
    Some(())
}
