//! One PASS/FAIL line per acceptance criterion. Runs offline; the service
//! check binds to localhost only.

use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::{json, Value};
use tmk_core::fsm::{enumerate_outcomes, trace};
use tmk_core::metrics::{
    guard_logic_score, hierarchy_depth, instructional_alignment, structural_bindings, DEFAULT_ALIGNMENT_THRESHOLD,
};
use tmk_core::mutation::Mutation;
use tmk_core::{
    compare_models, evaluate, load_bundle_dir, parse_condition, print_condition, serialize_model, validate_schema,
    Condition, MethodSpec, Organizer, PredicateEnv, PredicateSig, State, TaskSpec, TmkModel, Transcript, Transition,
};
use tmk_pipeline::{
    apply_diff, diff_models, generate_raw_model, normalize_judge_score, refinement_reduction, GenerationError,
    GenerationResponse, ScriptedGenerationClient,
};

const CONFORMANT: [&str; 5] = ["sortlist", "nomenclature", "binarysearch", "bfs", "gcd"];
const RAW_PAIRS: [&str; 4] = ["sortlist", "nomenclature", "binarysearch", "bfs"];

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn load(rel: &str) -> TmkModel {
    load_bundle_dir(&fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration) -> Check {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn validator_mutations() -> Check {
    let started = Instant::now();
    for name in CONFORMANT {
        let r = validate_schema(&load(name));
        ensure(r.valid && r.error_codes().is_empty(), || {
            format!("{name}: false positives {:?}", r.error_codes())
        })?;
    }
    for m in Mutation::ALL {
        let mutated = CONFORMANT
            .iter()
            .find_map(|n| m.apply(&load(n)))
            .ok_or_else(|| format!("{m:?} applies to no fixture"))?;
        let r = validate_schema(&mutated);
        let codes = r.error_codes();
        ensure(!r.valid && codes.len() == 1 && codes.contains(&m.expected()), || {
            format!("{m:?}: expected {:?}, got {codes:?}", m.expected())
        })?;
    }
    within(started, Duration::from_secs(1))
}

fn ident() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_]{0,7}".prop_filter("reserved", |s| s != "true" && s != "false")
}

fn ast() -> impl Strategy<Value = Condition> {
    let leaf = prop_oneof![
        1 => Just(Condition::True),
        1 => Just(Condition::False),
        6 => (ident(), prop::collection::vec(ident(), 0..3)).prop_map(|(name, args)| Condition::Predicate { name, args }),
    ];
    leaf.prop_recursive(6, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Condition::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Condition::and(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Condition::or(a, b)),
        ]
    })
}

fn condition_language() -> Check {
    let started = Instant::now();
    let p = |n: &str| PredicateSig::new(n, &[]);
    let prec = parse_condition("a || b && !c").map_err(|e| e.to_string())?;
    let expected = Condition::or(
        Condition::Predicate {
            name: "a".into(),
            args: vec![],
        },
        Condition::and(
            Condition::Predicate {
                name: "b".into(),
                args: vec![],
            },
            Condition::not(Condition::Predicate {
                name: "c".into(),
                args: vec![],
            }),
        ),
    );
    ensure(prec == expected, || format!("precedence: parsed {prec:?}"))?;
    let lhs = parse_condition("!(a && b)").unwrap();
    let rhs = parse_condition("!a || !b").unwrap();
    for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
        let env = PredicateEnv::strict().with(p("a"), a).with(p("b"), b);
        ensure(evaluate(&lhs, &env) == evaluate(&rhs, &env), || {
            format!("De Morgan at a={a}, b={b}")
        })?;
    }
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&ast(), |c| {
            let text = print_condition(&c);
            let back = parse_condition(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(print_condition(&back), text);
            Ok(())
        })
        .map_err(|e| format!("round trip: {e}"))?;
    within(started, Duration::from_secs(5))
}

fn three_predicate() -> TmkModel {
    let edges = [
        ("S", "A", "p && q"),
        ("S", "B", "p || r"),
        ("S", "Fail", "!p"),
        ("A", "Done", "r"),
        ("A", "S", "!r && q"),
        ("B", "Done", "q || !r"),
        ("B", "Fail", "true"),
    ];
    TmkModel {
        methods: vec![MethodSpec {
            name: "M".into(),
            organizer: Organizer {
                start_state: "S".into(),
                states: ["S", "A", "B", "Done", "Fail"]
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
            },
            ..Default::default()
        }],
        ..Default::default()
    }
}

fn fsm_oracle() -> Check {
    let started = Instant::now();
    let mut models: Vec<(String, TmkModel)> = CONFORMANT.iter().map(|n| (n.to_string(), load(n))).collect();
    models.push(("three_predicate".into(), three_predicate()));
    for (name, model) in &models {
        for method in &model.methods {
            let table = enumerate_outcomes(&method.organizer, 256).map_err(|e| format!("{name}: {e}"))?;
            ensure(table.predicates.len() <= 10, || {
                format!("{name}: {} predicates", table.predicates.len())
            })?;
            ensure(table.rows.len() == 1 << table.predicates.len(), || {
                format!("{name}: row count")
            })?;
            for row in &table.rows {
                let t = trace(model, &method.name, &table.env_for(row), 256).map_err(|e| format!("{name}: {e}"))?;
                ensure(t.outcome == row.outcome && t.final_state == row.final_state, || {
                    format!(
                        "{name}/{} at {:?}: trace {:?}, oracle {:?}",
                        method.name, row.assignment, t.outcome, row.outcome
                    )
                })?;
            }
        }
    }
    within(started, Duration::from_secs(10))
}

fn static_metrics() -> Check {
    let mut eight = load("sortlist");
    let edge = |a: &str, b: &str, g: &str| Transition {
        source_state: a.into(),
        target_state: b.into(),
        data_condition: Some(g.into()),
        ..Default::default()
    };
    let ts = &mut eight.methods[0].organizer.transitions;
    ts.push(edge(
        "II_Shift",
        "II_SelectNext",
        "atFront(element) && shifted(element)",
    ));
    ts.push(edge("II_Shift", "II_Fail", "true"));
    let g = guard_logic_score(&eight);
    ensure(g.total == 8 && g.score == 0.875, || {
        format!("guard logic {} over {}", g.score, g.total)
    })?;

    let mut two = load("sortlist");
    two.task.subtasks = Some(vec![TaskSpec {
        name: "Unbound".into(),
        ..Default::default()
    }]);
    let tm = structural_bindings(&two).tm_binding;
    ensure(tm == 0.5, || format!("tm binding {tm}"))?;

    let depth = hierarchy_depth(&load("nomenclature")).depth;
    ensure(depth == 3, || format!("depth {depth}"))?;

    let model = load("sortlist");
    let all = Transcript::load(&fixture("sortlist/transcript.txt")).map_err(|e| e.to_string())?;
    let hi = instructional_alignment(&model, &all, DEFAULT_ALIGNMENT_THRESHOLD).score;
    let lo = instructional_alignment(
        &model,
        &Transcript::new("zebra quartz fjord vexing nymph"),
        DEFAULT_ALIGNMENT_THRESHOLD,
    )
    .score;
    ensure((hi - 1.0).abs() <= 1e-9 && lo.abs() <= 1e-9, || {
        format!("alignment endpoints {hi} / {lo}")
    })
}

fn similarity_identity_symmetry() -> Check {
    for name in CONFORMANT {
        let m = load(name);
        for s in compare_models(&m, &m).scores() {
            ensure((s - 1.0).abs() <= 1e-9, || format!("{name}: self-similarity {s}"))?;
        }
    }
    for name in RAW_PAIRS {
        let (a, b) = (load(name), load(&format!("raw/{name}")));
        ensure(
            compare_models(&a, &b).scores() == compare_models(&b, &a).scores(),
            || format!("{name}: asymmetric"),
        )?;
    }
    Ok(())
}

fn reduction_and_normalization() -> Check {
    let r = refinement_reduction(7.0, 1.9).map_err(|e| e.to_string())?;
    ensure((r - 0.7286).abs() <= 1e-4, || format!("reduction {r}"))?;
    let norm: Vec<Option<f64>> = (1..=5).map(normalize_judge_score).collect();
    ensure(
        norm == [Some(0.0), Some(0.25), Some(0.5), Some(0.75), Some(1.0)],
        || format!("normalization {norm:?}"),
    )
}

fn retry_contract() -> Check {
    let valid = GenerationResponse::from(serialize_model(&load("sortlist")));
    let invalid = GenerationResponse::from(serialize_model(
        &Mutation::DropFailState.apply(&load("sortlist")).unwrap(),
    ));
    let t = "Sort the list by inserting each element.";

    let c = ScriptedGenerationClient::new([Ok(valid.clone())]);
    let (_, log) = generate_raw_model(&c, t, 2).map_err(|e| e.to_string())?;
    ensure(log.len() == 1, || format!("valid-first took {} attempts", log.len()))?;

    let c = ScriptedGenerationClient::new([Ok(invalid.clone()), Ok(valid)]);
    let (_, log) = generate_raw_model(&c, t, 2).map_err(|e| e.to_string())?;
    ensure(log.len() == 2, || {
        format!("invalid-then-valid took {} attempts", log.len())
    })?;
    let feedback = c.requests()[1].repair_feedback.clone().unwrap_or_default();
    for code in log.attempts[0].report.error_codes() {
        ensure(feedback.contains(&code.as_str()), || {
            format!("feedback lacks {}", code.as_str())
        })?;
    }

    let c = ScriptedGenerationClient::new([Ok(invalid)]);
    match generate_raw_model(&c, t, 2) {
        Err(GenerationError::GenerationFailed { log }) if log.len() == 3 => Ok(()),
        other => Err(format!("always-invalid: {other:?}")),
    }
}

fn diff_soundness() -> Check {
    for name in RAW_PAIRS {
        let (raw, refined) = (load(&format!("raw/{name}")), load(name));
        let d = diff_models(&raw, &refined).map_err(|e| format!("{name}: {e}"))?;
        let patched = apply_diff(&raw, &d).map_err(|e| format!("{name}: {e}"))?;
        ensure(patched == refined, || format!("{name}: patched model differs"))?;
    }
    Ok(())
}

async fn service_flow(dir: &std::path::Path) -> Check {
    use tmk_service::{Server, ServiceConfig};
    let config = ServiceConfig {
        store_dir: dir.to_path_buf(),
        cors_origin: None,
    };
    let start = |config: ServiceConfig| async move {
        let server = Server::bind(SocketAddr::from(([127, 0, 0, 1], 0)), &config)
            .await
            .unwrap();
        let base = format!("http://{}", server.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let handle = tokio::spawn(server.run_until(async {
            let _ = rx.await;
        }));
        (base, tx, handle)
    };
    let http = reqwest::Client::new();
    let call = |req: reqwest::RequestBuilder| async move {
        let resp = req.send().await.map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body: Value = resp.json().await.unwrap_or(Value::Null);
        Ok::<_, String>((status, body))
    };

    let (base, stop, handle) = start(config.clone()).await;
    let texts = serialize_model(&load("sortlist"));
    let (s, up) = call(http.post(format!("{base}/models")).json(&json!({
        "task": texts.task, "method": texts.method, "knowledge": texts.knowledge
    })))
    .await?;
    ensure(s == 201, || format!("upload {s}: {up}"))?;
    let token = up["versionToken"].clone();
    let (s, got) = call(http.get(format!("{base}/models/sortlist"))).await?;
    ensure(s == 200 && got["validation"]["valid"] == true, || {
        format!("get {s}: {got}")
    })?;
    call(
        http.post(format!("{base}/sessions/sortlist/start"))
            .json(&json!({"manualBaselineHours": 7.0})),
    )
    .await?;

    let mut bundle = got["bundle"].clone();
    *bundle
        .pointer_mut("/method/0/organizer/transitions/0/dataCondition")
        .unwrap() = json!("true");
    let (s, put) = call(
        http.put(format!("{base}/models/sortlist/working"))
            .json(&json!({"versionToken": token, "bundle": bundle})),
    )
    .await?;
    ensure(s == 200, || format!("edit {s}: {put}"))?;
    ensure(
        put["analysisDelta"]["guardLogic"]["delta"].as_f64().unwrap_or(0.0) < 0.0,
        || format!("delta {put}"),
    )?;
    let (s, stale) = call(
        http.put(format!("{base}/models/sortlist/working"))
            .json(&json!({"versionToken": token, "bundle": bundle})),
    )
    .await?;
    ensure(s == 409, || format!("stale token gave {s}: {stale}"))?;

    let (s, v) = call(http.post(format!("{base}/models/sortlist/validate"))).await?;
    ensure(s == 200 && v["valid"] == true, || format!("validate {s}: {v}"))?;
    let (s, a) = call(http.post(format!("{base}/models/sortlist/analyze")).json(&json!({}))).await?;
    ensure(s == 200 && a["guardLogic"].as_f64().is_some_and(|g| g < 1.0), || {
        format!("analyze {s}: {a}")
    })?;
    let (s, end) = call(
        http.post(format!("{base}/sessions/sortlist/end"))
            .json(&json!({"loggedHours": 1.9})),
    )
    .await?;
    let reduction = end["reduction"].as_f64().unwrap_or(f64::NAN);
    ensure(s == 200 && (reduction - 0.7286).abs() <= 1e-4, || {
        format!("end {s}: {end}")
    })?;

    let before = call(http.get(format!("{base}/models/sortlist"))).await?;
    stop.send(()).ok();
    handle.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;

    let (base, stop, handle) = start(config).await;
    let after = call(http.get(format!("{base}/models/sortlist"))).await?;
    ensure(before == after, || "store changed across restart".into())?;
    let (_, sessions) = call(http.get(format!("{base}/sessions/sortlist"))).await?;
    ensure(sessions["sessions"].as_array().is_some_and(|s| s.len() == 1), || {
        format!("sessions {sessions}")
    })?;
    stop.send(()).ok();
    handle.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
    Ok(())
}

fn service_round_trip() -> Check {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(service_flow(dir.path()))?;
    within(started, Duration::from_secs(10))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("validator mutation suite", validator_mutations),
        ("condition language", condition_language),
        ("fsm oracle equivalence", fsm_oracle),
        ("static metrics fixtures", static_metrics),
        ("similarity identity and symmetry", similarity_identity_symmetry),
        (
            "refinement reduction and judge normalization",
            reduction_and_normalization,
        ),
        ("pipeline retry contract", retry_contract),
        ("diff patch soundness", diff_soundness),
        ("service round trip", service_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = started.elapsed().as_millis();
        match result {
            Ok(()) => println!("PASS {name} ({ms} ms)"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name} ({ms} ms): {e}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
