mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::{load, CONFORMANT};
use tmk_core::mutation::Mutation;
use tmk_core::{parse_model_bundle, serialize_model, validate_schema, ParseError, ViolationCode};

#[test]
fn conformant_fixtures_are_clean() {
    for name in CONFORMANT {
        let report = validate_schema(&load(name));
        assert!(report.valid, "{name}: {:?}", report.violations);
        assert!(report.violations.is_empty(), "{name}: {:?}", report.violations);
    }
}

#[test]
fn every_mutation_fires_exactly_its_code() {
    let started = Instant::now();
    for mutation in Mutation::ALL {
        let mut applied = 0;
        for name in CONFORMANT {
            let Some(mutated) = mutation.apply(&load(name)) else {
                continue;
            };
            applied += 1;
            let report = validate_schema(&mutated);
            assert!(!report.valid, "{mutation:?} on {name}");
            let codes: BTreeSet<ViolationCode> = report.error_codes().into_iter().collect();
            assert_eq!(
                codes,
                BTreeSet::from([mutation.expected()]),
                "{mutation:?} on {name}: {:?}",
                report.violations
            );
        }
        assert!(applied >= 1, "{mutation:?} applied to no fixture");
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn serialize_parse_round_trip() {
    for name in CONFORMANT {
        let model = load(name);
        let texts = serialize_model(&model);
        let back = parse_model_bundle(&texts.task, &texts.method, &texts.knowledge).unwrap();
        assert_eq!(back, model, "{name}");
        assert_eq!(serialize_model(&back), texts, "{name}");
    }
}

#[test]
fn mechanism_reference_alias_and_unknown_keys_survive() {
    let task = r#"{"name": "T", "mechanismReference": ["M"], "note": {"k": 1}}"#;
    let method = r#"{"name": "M", "organizer": {"startState": "S", "states": [{"name": "S"}, {"name": "S_Done"}, {"name": "S_Fail"}],
        "transitions": [{"sourceState": "S", "targetState": "S_Done", "dataCondition": "ok"},
                        {"sourceState": "S", "targetState": "S_Fail", "dataCondition": "!ok"}]}}"#;
    let knowledge = r#"{"Concept": [{"name": "C"}], "Instance": [], "Relation": []}"#;
    let model = parse_model_bundle(task, method, knowledge).unwrap();
    assert_eq!(model.task.means, ["M"]);
    assert_eq!(model.knowledge.concepts[0].name, "C");
    assert_eq!(model.skill_name, "T");
    let texts = serialize_model(&model);
    assert!(texts.task.contains("\"means\""));
    assert!(texts.task.contains("\"note\""));
    let report = validate_schema(&model);
    assert!(report.valid);
    assert!(report.has(ViolationCode::UnknownField));
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse_model_bundle("{\"name\": \"T\",\n  oops}", "[]", "{}").unwrap_err();
    match err {
        ParseError::Syntax { line, column, .. } => {
            assert_eq!(line, 2);
            assert!(column >= 3);
        }
        other => panic!("{other:?}"),
    }
}
