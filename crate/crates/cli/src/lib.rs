//! The `tmk` command line.
//!
//! Payloads go to stdout, diagnostics to stderr. Exit codes: 0 success,
//! 1 domain failure (including an invalid model under `validate`), 2 usage
//! error.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use tmk_core::condition::{PredicateEnv, PredicateEnvDoc};
use tmk_core::fsm::DEFAULT_STEP_LIMIT;
use tmk_core::{
    aggregate, analyze_with, compare_models, load_bundle_dir, trace, validate_schema, write_bundle_dir, AnalyzeOptions,
    TmkModel, Transcript,
};
use tmk_pipeline::{
    diff_models, emit_report, generate_raw_model, judge_model, FixtureGenerationClient, GenerationClient,
    GenerationError, HeuristicJudge, HttpGenerationClient, HttpJudgeClient, JudgeClient, RefinementSession,
    ReportInputs,
};

use config::{CliConfig, FileConfig, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const CONFIG_HELP: &str = "\
Configuration precedence, highest first:
  1. command-line flags
  2. environment variables: TMK_CLIENT_ENDPOINT, TMK_CLIENT_KEY, TMK_OUTPUT_DIR,
     TMK_ALIGNMENT_THRESHOLD, TMK_MAX_REPAIRS, TMK_STRICT_EVAL, TMK_MANUAL_BASELINE_HOURS
  3. config file (--config or TMK_CONFIG, default ./tmk.toml) with `key = value` lines:
     model_dir, transcript, output_dir, alignment_threshold, max_repairs,
     client_endpoint, client_key, strict_eval, manual_baseline_hours
  4. built-in defaults: output_dir=tmk-out, alignment_threshold=0.8, max_repairs=2,
     manual_baseline_hours=7.0, strict_eval=false

Exit codes: 0 success, 1 domain failure, 2 usage error.";

#[derive(Debug, Parser)]
#[command(name = "tmk", version, about = "Validate, analyze, compare and refine TMK models", after_help = CONFIG_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Machine-readable output; errors go to stderr as {code, message}.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true, env = "TMK_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "TMK_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "TMK_ALIGNMENT_THRESHOLD")]
    pub alignment_threshold: Option<f64>,
    #[arg(long, global = true, env = "TMK_MAX_REPAIRS")]
    pub max_repairs: Option<usize>,
    #[arg(long, global = true, env = "TMK_CLIENT_ENDPOINT")]
    pub client_endpoint: Option<String>,
    #[arg(long, global = true, env = "TMK_CLIENT_KEY", hide_env_values = true)]
    pub client_key: Option<String>,
    /// Undefined predicates are errors instead of false.
    #[arg(long, global = true, env = "TMK_STRICT_EVAL")]
    pub strict_eval: bool,
    #[arg(long, global = true, env = "TMK_MANUAL_BASELINE_HOURS")]
    pub manual_baseline_hours: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a bundle directory; exit 1 on error-severity violations.
    Validate { dir: PathBuf },
    /// Static metrics for one or more bundle directories.
    Analyze {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Execute a method's organizer under a predicate assignment.
    Trace {
        dir: PathBuf,
        #[arg(long)]
        method: String,
        /// JSON file: {"strict": bool, "predicates": {"p(x)": true}}.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: usize,
    },
    /// Similarity of two bundles.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
    /// Corpus mean and SD over a CSV of bundle pairs (columns: a,b).
    Aggregate { pairs: PathBuf },
    /// Generate a model from a transcript with validate-and-repair.
    Generate {
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Serve the bundle in this directory instead of calling a client.
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    /// Likert judging on three dimensions.
    Judge {
        dir: PathBuf,
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Offline heuristic judge instead of the configured endpoint.
        #[arg(long)]
        mock: bool,
    },
    /// Field-level diff from a raw to a refined bundle.
    Diff { raw_dir: PathBuf, refined_dir: PathBuf },
    /// Write report.md and report.csv into the output directory.
    Report {
        /// Report input JSON files (rawStatic, refinedStatic, similarity, judge, sessions).
        inputs: Vec<PathBuf>,
        /// Raw bundle directories to analyze.
        #[arg(long = "raw")]
        raw_dirs: Vec<PathBuf>,
        /// Refined bundle directories to analyze.
        #[arg(long = "refined")]
        refined_dirs: Vec<PathBuf>,
        /// Session JSON files.
        #[arg(long = "session")]
        sessions: Vec<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "tmk-store")]
        store: PathBuf,
        /// Allowed CORS origin; any when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub exit: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: "USAGE".into(),
            message: message.into(),
            exit: EXIT_USAGE,
        }
    }

    pub fn failure(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            exit: EXIT_FAILURE,
        }
    }
}

/// Parses `args` and runs the command, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json_requested = args.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            if json_requested {
                let body = json!({"code": "USAGE", "message": e.kind().to_string(), "detail": e.to_string()});
                let _ = writeln!(err, "{body}");
            } else {
                let _ = write!(err, "{e}");
            }
            return EXIT_USAGE;
        }
    };
    let json_mode = cli.global.json;
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            if json_mode {
                let _ = writeln!(err, "{}", serde_json::to_string(&e).expect("errors serialize"));
            } else {
                let _ = writeln!(err, "error: {}", e.message);
            }
            e.exit
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let code = run(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    let _ = std::io::stdout().flush();
    code
}

fn overrides(g: &GlobalArgs) -> Overrides {
    Overrides {
        output_dir: g.output_dir.clone(),
        alignment_threshold: g.alignment_threshold,
        max_repairs: g.max_repairs,
        client_endpoint: g.client_endpoint.clone(),
        client_key: g.client_key.clone(),
        strict_eval: g.strict_eval,
        manual_baseline_hours: g.manual_baseline_hours,
    }
}

fn load(dir: &Path) -> Result<TmkModel, CliError> {
    load_bundle_dir(dir).map_err(|e| CliError::failure("LOAD_ERROR", e.to_string()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::failure("IO_ERROR", format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::failure("INVALID_INPUT", format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("payloads serialize");
    writeln!(out, "{text}").map_err(|e| CliError::failure("IO_ERROR", e.to_string()))
}

fn emit_text(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    write!(out, "{text}").map_err(|e| CliError::failure("IO_ERROR", e.to_string()))
}

fn transcript_path(flag: Option<PathBuf>, config: &CliConfig) -> Option<PathBuf> {
    flag.or_else(|| config.transcript_path.clone())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let config = CliConfig::resolve(overrides(&cli.global), FileConfig::load(cli.global.config.as_deref())?)?;
    let json_mode = cli.global.json;
    let options = AnalyzeOptions {
        alignment_threshold: config.alignment_threshold,
        ..Default::default()
    };
    match cli.command {
        Command::Validate { dir } => {
            let report = validate_schema(&load(&dir)?);
            if json_mode {
                emit(out, &report)?;
            } else {
                let mut text = format!("{} violations\n", report.violations.len());
                for v in &report.violations {
                    text.push_str(&format!(
                        "{:?} {} {} {}\n",
                        v.severity,
                        v.code.as_str(),
                        v.path,
                        v.message
                    ));
                }
                emit_text(out, &text)?;
            }
            Ok(if report.valid { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Analyze { dirs, transcript } => {
            let transcript = match transcript_path(transcript, &config) {
                Some(p) => Some(Transcript::load(&p).map_err(|e| CliError::failure("IO_ERROR", e.to_string()))?),
                None => None,
            };
            let reports = dirs
                .iter()
                .map(|d| Ok(analyze_with(&load(d)?, transcript.as_ref(), &options)))
                .collect::<Result<Vec<_>, CliError>>()?;
            match reports.as_slice() {
                [one] => emit(out, one)?,
                many => emit(out, &many)?,
            }
            Ok(EXIT_OK)
        }
        Command::Trace {
            dir,
            method,
            env,
            step_limit,
        } => {
            let model = load(&dir)?;
            let doc: PredicateEnvDoc = match env {
                Some(p) => read_json(&p)?,
                None => PredicateEnvDoc::default(),
            };
            let mut env = PredicateEnv::try_from(doc).map_err(|e| CliError::failure("INVALID_INPUT", e.to_string()))?;
            env.strict |= config.strict_eval;
            let t = trace(&model, &method, &env, step_limit)
                .map_err(|e| CliError::failure("TRACE_ERROR", e.to_string()))?;
            emit(out, &t)?;
            Ok(EXIT_OK)
        }
        Command::Compare { dir_a, dir_b } => {
            emit(out, &compare_models(&load(&dir_a)?, &load(&dir_b)?))?;
            Ok(EXIT_OK)
        }
        Command::Aggregate { pairs } => {
            let base = pairs.parent().unwrap_or(Path::new("."));
            let mut reader = csv::Reader::from_path(&pairs)
                .map_err(|e| CliError::failure("IO_ERROR", format!("{}: {e}", pairs.display())))?;
            let mut reports = Vec::new();
            for row in reader.records() {
                let row = row.map_err(|e| CliError::failure("INVALID_INPUT", e.to_string()))?;
                let (Some(a), Some(b)) = (row.get(0), row.get(1)) else {
                    return Err(CliError::failure("INVALID_INPUT", "each row needs two bundle paths"));
                };
                reports.push(compare_models(
                    &load(&base.join(a.trim()))?,
                    &load(&base.join(b.trim()))?,
                ));
            }
            let agg = aggregate(&reports);
            if json_mode {
                emit(out, &agg)?;
            } else {
                emit_text(out, &agg.to_csv())?;
            }
            Ok(EXIT_OK)
        }
        Command::Generate { transcript, mock } => {
            let path = transcript_path(transcript, &config)
                .ok_or_else(|| CliError::usage("generate needs --transcript or a `transcript` config key"))?;
            let text = Transcript::load(&path)
                .map_err(|e| CliError::failure("IO_ERROR", e.to_string()))?
                .text;
            let client: Box<dyn GenerationClient> = match (mock, &config.client_endpoint) {
                (Some(dir), _) => Box::new(FixtureGenerationClient::new(dir)),
                (None, Some(endpoint)) => {
                    Box::new(HttpGenerationClient::new(endpoint.clone(), config.client_key.clone()))
                }
                (None, None) => {
                    return Err(CliError::usage(
                        "no generation client: pass --mock <dir> or set TMK_CLIENT_ENDPOINT",
                    ))
                }
            };
            match generate_raw_model(client.as_ref(), &text, config.max_repairs) {
                Ok((model, log)) => {
                    let dir = config.output_dir.join(&model.skill_name);
                    write_bundle_dir(&model, &dir).map_err(|e| CliError::failure("IO_ERROR", e.to_string()))?;
                    emit(
                        out,
                        &json!({"skillName": model.skill_name, "outputDir": dir, "log": log}),
                    )?;
                    Ok(EXIT_OK)
                }
                Err(e @ GenerationError::GenerationFailed { .. }) => {
                    Err(CliError::failure("GENERATION_FAILED", e.to_string()))
                }
                Err(e @ GenerationError::Transport { .. }) => Err(CliError::failure("TRANSPORT_ERROR", e.to_string())),
                Err(e @ GenerationError::Prompt(_)) => Err(CliError::failure("INVALID_INPUT", e.to_string())),
            }
        }
        Command::Judge { dir, transcript, mock } => {
            let model = load(&dir)?;
            let text = match transcript_path(transcript, &config) {
                Some(p) => {
                    Transcript::load(&p)
                        .map_err(|e| CliError::failure("IO_ERROR", e.to_string()))?
                        .text
                }
                None => String::new(),
            };
            let client: Box<dyn JudgeClient> = match (mock, &config.client_endpoint) {
                (true, _) => Box::new(HeuristicJudge),
                (false, Some(endpoint)) => Box::new(HttpJudgeClient::new(endpoint.clone(), config.client_key.clone())),
                (false, None) => {
                    return Err(CliError::usage(
                        "no judge client: pass --mock or set TMK_CLIENT_ENDPOINT",
                    ))
                }
            };
            let scores = judge_model(client.as_ref(), &model, &text)
                .map_err(|e| CliError::failure("JUDGE_ERROR", e.to_string()))?;
            emit(out, &scores)?;
            Ok(EXIT_OK)
        }
        Command::Diff { raw_dir, refined_dir } => {
            let d = diff_models(&load(&raw_dir)?, &load(&refined_dir)?)
                .map_err(|e| CliError::failure("SKILL_MISMATCH", e.to_string()))?;
            emit(out, &d)?;
            Ok(EXIT_OK)
        }
        Command::Report {
            inputs,
            raw_dirs,
            refined_dirs,
            sessions,
        } => {
            let mut merged = ReportInputs::default();
            for path in &inputs {
                let part: ReportInputs = read_json(path)?;
                merged.raw_static.extend(part.raw_static);
                merged.refined_static.extend(part.refined_static);
                merged.similarity.extend(part.similarity);
                merged.judge.extend(part.judge);
                merged.sessions.extend(part.sessions);
            }
            for d in &raw_dirs {
                merged.raw_static.push(analyze_with(&load(d)?, None, &options));
            }
            for d in &refined_dirs {
                merged.refined_static.push(analyze_with(&load(d)?, None, &options));
            }
            for s in &sessions {
                merged.sessions.push(read_json::<RefinementSession>(s)?);
            }
            let report = emit_report(&merged).map_err(|e| CliError::failure("NOTHING_TO_REPORT", e.to_string()))?;
            report
                .write_to(&config.output_dir)
                .map_err(|e| CliError::failure("IO_ERROR", e.to_string()))?;
            if json_mode {
                emit(out, &report)?;
            } else {
                emit_text(out, &report.markdown)?;
            }
            Ok(EXIT_OK)
        }
        Command::Serve {
            port,
            store,
            cors_origin,
        } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::failure("IO_ERROR", e.to_string()))?;
            let config = tmk_service::ServiceConfig {
                store_dir: store,
                cors_origin,
            };
            runtime
                .block_on(tmk_service::serve(port, config))
                .map_err(|e| CliError::failure("SERVE_ERROR", e.to_string()))?;
            Ok(EXIT_OK)
        }
    }
}
