mod common;

use std::collections::BTreeSet;

use common::{load, CONFORMANT};
use proptest::prelude::*;
use tmk_core::fsm::{check_reachability, enumerate_outcomes, trace, Outcome, DEFAULT_STEP_LIMIT};
use tmk_core::{MethodSpec, Organizer, PredicateEnv, PredicateSig, State, TmkModel, Transition};

fn organizer(start: &str, states: &[&str], edges: &[(&str, &str, &str)]) -> Organizer {
    Organizer {
        start_state: start.into(),
        states: states
            .iter()
            .map(|n| State {
                name: n.to_string(),
                ..Default::default()
            })
            .collect(),
        transitions: edges
            .iter()
            .map(|(a, b, g)| Transition {
                source_state: a.to_string(),
                target_state: b.to_string(),
                data_condition: Some(g.to_string()),
                ..Default::default()
            })
            .collect(),
        ..Default::default()
    }
}

fn wrap(org: Organizer) -> TmkModel {
    TmkModel {
        methods: vec![MethodSpec {
            name: "M".into(),
            organizer: org,
            ..Default::default()
        }],
        ..Default::default()
    }
}

fn three_predicate() -> TmkModel {
    wrap(organizer(
        "S",
        &["S", "A", "B", "Done", "Fail"],
        &[
            ("S", "A", "p && q"),
            ("S", "B", "p || r"),
            ("S", "Fail", "!p"),
            ("A", "Done", "r"),
            ("A", "S", "!r && q"),
            ("B", "Done", "q || !r"),
            ("B", "Fail", "true"),
        ],
    ))
}

/// Asserts trace/oracle agreement for every method and assignment; returns rows checked.
fn check_model(model: &TmkModel, step_limit: usize) -> usize {
    let mut rows = 0;
    for method in &model.methods {
        let table = enumerate_outcomes(&method.organizer, step_limit).unwrap();
        assert!(table.predicates.len() <= 10, "{}", method.name);
        assert_eq!(table.rows.len(), 1 << table.predicates.len());
        for row in &table.rows {
            let t = trace(model, &method.name, &table.env_for(row), step_limit).unwrap();
            assert_eq!(t.outcome, row.outcome, "{} {:?}", method.name, row.assignment);
            assert_eq!(t.final_state, row.final_state, "{} {:?}", method.name, row.assignment);
            rows += 1;
        }
    }
    rows
}

#[test]
fn oracle_equivalence_on_fixtures() {
    let mut models: Vec<TmkModel> = CONFORMANT.iter().map(|n| load(n)).collect();
    models.push(three_predicate());
    assert_eq!(models.len(), 6);
    for model in &models {
        assert!(check_model(model, DEFAULT_STEP_LIMIT) > 0);
    }
}

#[test]
fn three_predicate_table_has_eight_rows() {
    let model = three_predicate();
    let table = enumerate_outcomes(&model.methods[0].organizer, 32).unwrap();
    let names: Vec<String> = table.predicates.iter().map(|p| p.to_string()).collect();
    assert_eq!(names, ["p", "q", "r"]);
    let outcomes: Vec<Outcome> = table.rows.iter().map(|r| r.outcome).collect();
    // rows pqr = 000..111; at 110 the walk bounces S -> A -> S
    use Outcome::*;
    assert_eq!(outcomes, [Fail, Fail, Fail, Done, Done, Fail, StepLimit, Done]);
}

#[test]
fn sortlist_walk_and_reachability() {
    let model = load("sortlist");
    let sig = |n: &str, a: &[&str]| PredicateSig::new(n, a);
    let env = PredicateEnv::strict()
        .with(sig("unsortedRemaining", &["list"]), false)
        .with(sig("comparable", &["element", "predecessor"]), true);
    let t = trace(&model, "IterativeInsertion", &env, DEFAULT_STEP_LIMIT).unwrap();
    assert_eq!(t.outcome, Outcome::Done);
    assert_eq!(t.steps.len(), 2);
    assert_eq!(t.steps[0].evaluated_transitions.len(), 2);
    let r = check_reachability(&model.methods[0].organizer);
    assert!(r.done_reachable && r.fail_reachable);
    assert!(r.unreachable_states.is_empty());
    assert!(r.dead_end_states.is_empty());
}

#[test]
fn nested_task_invocation_is_traced() {
    let model = load("nomenclature");
    let t = trace(
        &model,
        "PrincipalGroupMechanism",
        &PredicateEnv::lenient(),
        DEFAULT_STEP_LIMIT,
    )
    .unwrap();
    let nested = t.steps.iter().filter(|s| s.sub_trace.is_some()).count();
    let invoking = t
        .steps
        .iter()
        .filter(|s| {
            s.invoked_goal
                .as_ref()
                .is_some_and(|g| g.goal_reference == "ParentNamingMechanism")
        })
        .count();
    assert_eq!(nested, invoking);
}

const STATE_NAMES: [&str; 6] = ["S0", "S1", "S2", "S3", "X_Done", "X_Fail"];
const GUARDS: [&str; 10] = [
    "a",
    "!a",
    "b",
    "a && b",
    "a || c",
    "!(b || c)",
    "true",
    "false",
    "c",
    "b && !c",
];

fn random_organizer() -> impl Strategy<Value = Organizer> {
    prop::collection::vec((0..6usize, 0..6usize, 0..GUARDS.len()), 0..12).prop_map(|edges| {
        let edges: Vec<(&str, &str, &str)> = edges
            .into_iter()
            .map(|(a, b, g)| (STATE_NAMES[a], STATE_NAMES[b], GUARDS[g]))
            .collect();
        organizer("S0", &STATE_NAMES, &edges)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_organizers_match_oracle(org in random_organizer(), limit in 1..40usize) {
        let model = wrap(org);
        let table = enumerate_outcomes(&model.methods[0].organizer, limit).unwrap();
        let reach = check_reachability(&model.methods[0].organizer);
        let unreachable: BTreeSet<&String> = reach.unreachable_states.iter().collect();
        for row in &table.rows {
            let env = table.env_for(row);
            let t = trace(&model, "M", &env, limit).unwrap();
            prop_assert_eq!(t.outcome, row.outcome);
            prop_assert!(t.steps.len() <= limit);
            prop_assert_eq!(&t, &trace(&model, "M", &env, limit).unwrap());
            for step in &t.steps {
                prop_assert!(!unreachable.contains(&step.state_name));
            }
            for pair in t.steps.windows(2) {
                let taken = pair[0].evaluated_transitions.iter().find(|e| e.result).unwrap();
                prop_assert_eq!(&taken.target_state, &pair[1].state_name);
            }
            let last = t.steps.last().map(|s| s.state_name.as_str());
            match t.outcome {
                Outcome::Done => prop_assert_eq!(last, Some("X_Done")),
                Outcome::Fail => prop_assert_eq!(last, Some("X_Fail")),
                _ => prop_assert!(last != Some("X_Done") && last != Some("X_Fail")),
            }
        }
    }
}
