use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tmk_core::{CorpusAggregate, ExecutionTrace, SimilarityReport, StaticReport, ValidationReport};
use tmk_pipeline::{JudgeScores, ModelDiff, ReportOutput};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn tmk(args: &[&str], cwd: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmk"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TMK_OUTPUT_DIR")
        .env_remove("TMK_CLIENT_ENDPOINT")
        .env_remove("TMK_CLIENT_KEY")
        .env_remove("TMK_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn f(rel: &str) -> String {
    fixture(rel).display().to_string()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = tmk(&["validate", &f("sortlist")], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("0 violations"));

    let bad = tmk(&["validate", &f("sortlist-noguard")], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("MISSING_DATA_CONDITION"));

    let json = tmk(&["validate", "--json", &f("sortlist-noguard")], dir.path());
    let report: ValidationReport = serde_json::from_slice(&json.stdout).unwrap();
    assert!(!report.valid);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmk(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = tmk(&["--json", "trace", &f("sortlist")], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["code"], "USAGE");
    let o = tmk(&["--alignment-threshold", "0", "analyze", &f("sortlist")], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmk(&["--json", "validate", "/definitely/not/here"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["code"], "LOAD_ERROR");
    assert!(err["message"].is_string());
    let o = tmk(&["diff", &f("sortlist"), &f("gcd")], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn payloads_round_trip_through_report_types() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmk(
        &["analyze", &f("sortlist"), "--transcript", &f("sortlist/transcript.txt")],
        dir.path(),
    );
    let r: StaticReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.alignment_score, Some(1.0));
    assert_eq!(r.guard_logic, 1.0);

    let o = tmk(&["analyze", &f("sortlist"), &f("gcd")], dir.path());
    let many: Vec<StaticReport> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(many.len(), 2);

    let o = tmk(&["compare", &f("sortlist"), &f("sortlist")], dir.path());
    let s: SimilarityReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(s.scores().iter().all(|v| (v - 1.0).abs() < 1e-9));

    let o = tmk(&["diff", &f("raw/sortlist"), &f("sortlist")], dir.path());
    let d: ModelDiff = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(d.entries.len(), 1);

    let env = dir.path().join("env.json");
    std::fs::write(&env, r#"{"predicates": {}}"#).unwrap();
    let o = tmk(
        &[
            "trace",
            &f("sortlist"),
            "--method",
            "IterativeInsertion",
            "--env",
            env.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let _: ExecutionTrace = serde_json::from_slice(&o.stdout).unwrap();

    let o = tmk(&["judge", &f("sortlist"), "--mock"], dir.path());
    let j: JudgeScores = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j.causal_chaining, 1.0);
}

#[test]
fn deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = tmk(&["compare", &f("sortlist"), &f("raw/sortlist")], dir.path());
    let b = tmk(&["compare", &f("sortlist"), &f("raw/sortlist")], dir.path());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn aggregate_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    let mut text = String::from("a,b\n");
    for n in ["sortlist", "nomenclature", "binarysearch", "bfs"] {
        text.push_str(&format!("{},{}\n", f(n), f(&format!("raw/{n}"))));
    }
    std::fs::write(&pairs, text).unwrap();
    let o = tmk(&["aggregate", pairs.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("component,metric,mean,sd,n\n"));
    assert_eq!(out.lines().count(), 10);
    let o = tmk(&["--json", "aggregate", pairs.to_str().unwrap()], dir.path());
    let agg: CorpusAggregate = serde_json::from_slice(&o.stdout).unwrap();
    assert!(agg.rows.iter().all(|r| r.n == 4));
}

#[test]
fn generate_with_mock_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("gen");
    let o = tmk(
        &[
            "generate",
            "--transcript",
            &f("gcd/transcript.txt"),
            "--mock",
            &f("gcd"),
            "--output-dir",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["log"]["attempts"].as_array().unwrap().len(), 1);
    let written = tmk_core::load_bundle_dir(&out_dir.join("gcd")).unwrap();
    assert_eq!(written, tmk_core::load_bundle_dir(&fixture("gcd")).unwrap());

    let o = tmk(
        &[
            "--json",
            "generate",
            "--transcript",
            &f("gcd/transcript.txt"),
            "--mock",
            &f("sortlist-noguard"),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["code"], "GENERATION_FAILED");
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tmk.toml"), "output_dir = \"file-out\"\n").unwrap();
    let args = ["report", "--raw", &f("raw/sortlist"), "--refined", &f("sortlist")];
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_tmk"));
        cmd.current_dir(dir.path())
            .env_remove("TMK_OUTPUT_DIR")
            .env_remove("TMK_CONFIG");
        if let Some(e) = env {
            cmd.env("TMK_OUTPUT_DIR", e);
        }
        if let Some(fl) = flag {
            cmd.args(["--output-dir", fl]);
        }
        let o = cmd.args(args).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(None, None);
    assert!(dir.path().join("file-out/report.md").exists());
    run(Some("env-out"), None);
    assert!(dir.path().join("env-out/report.csv").exists());
    run(Some("env-out2"), Some("flag-out"));
    assert!(dir.path().join("flag-out/report.md").exists());
    assert!(!dir.path().join("env-out2").exists());

    let help = tmk(&["--help"], dir.path());
    let text = stdout(&help);
    for key in [
        "TMK_CLIENT_ENDPOINT",
        "TMK_CLIENT_KEY",
        "TMK_OUTPUT_DIR",
        "command-line flags",
        "config file",
    ] {
        assert!(text.contains(key), "{key}");
    }
}

#[test]
fn report_json_matches_files() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("s.json");
    std::fs::write(
        &session,
        r#"{"skillName": "sortlist", "startedAt": "2026-03-02T10:00:00Z", "endedAt": "2026-03-02T12:00:00Z",
            "manualBaselineHours": 7.0, "loggedHours": 1.9}"#,
    )
    .unwrap();
    let o = tmk(
        &[
            "--json",
            "--output-dir",
            "out",
            "report",
            "--session",
            session.to_str().unwrap(),
            "--refined",
            &f("sortlist"),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: ReportOutput = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(
        std::fs::read_to_string(dir.path().join("out/report.md")).unwrap(),
        r.markdown
    );
    assert!(r.csv.contains("time,sortlist,reduction,value,0.7286"));
    let o = tmk(&["report"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
