//! `qabd` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 engine or case content, 3 I/O,
//! 4 replay mismatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qabd::casebook::{self, load_case, serialize_case, CasebookError, ObservationDoc};
use qabd::classical::{ClassicalError, ComparisonReport};
use qabd::dynamics::{coherence, traces_to_jsonl, StepTrace};
use qabd::model::{Aggregation, CaseFile, CollapseKind, CollapseOutcome};
use serde_json::{json, Value};

use crate::log::{parse_jsonl, to_jsonl, LogEvent, LogRecord};
use crate::replay::{replay_file, ReplayError};
use crate::session::{default_provider, Session, SessionError};
use crate::store::SessionStore;

pub const ENV_SERVICE_URL: &str = "QABD_SERVICE_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Engine = 2,
    Io = 3,
    Mismatch = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Usage, message)
    }

    fn engine(message: impl std::fmt::Display) -> Self {
        Self::new(ExitCode::Engine, message.to_string())
    }

    fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Self::new(ExitCode::Io, format!("{context}: {e}"))
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Io(e) => Self::io("log", e),
            SessionError::Classical(ClassicalError::NonQualitativeMatrix { .. }) => Self::engine(format!(
                "{e}\ncomparison needs every projection given as a mark in the case file; \
                 this case relies on embedding similarity"
            )),
            other => Self::engine(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qabd", version, about = "Run, compare, replay and serve abductive cases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fold a case and write state, trace, outcome, event log and map.
    Run(RunArgs),
    /// Eliminative baseline next to the amplitude run.
    Compare(CompareArgs),
    /// Recompute a log and check every revision bit for bit.
    Replay(ReplayArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// List bundled fixtures.
    Fixtures,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Bundled fixture id.
    #[arg(long)]
    pub fixture: Option<String>,
    /// Case file path.
    #[arg(long)]
    pub case: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sum,
    Max,
}

#[derive(Debug, Args)]
pub struct Tuning {
    /// Step size.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Coherence needed for a dominant outcome.
    #[arg(long = "theta-collapse")]
    pub theta_collapse: Option<f64>,
    /// Evidence aggregation.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Dot,
    Table,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Output directory for artifacts.
    #[arg(long, default_value = "qabd-out")]
    pub out: PathBuf,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Directory to write `compare.json` into.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// What to print on stdout (json or table).
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Log file (JSON lines).
    pub log: PathBuf,
    /// Where parent logs of forks live; defaults to the log's directory.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub addr: String,
    /// Persist logs here and restore existing ones at startup.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn execute<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitCode::Usage
            } else {
                ExitCode::Success
            };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code as i32;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => ExitCode::Success as i32,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code as i32
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let remote = std::env::var(ENV_SERVICE_URL).ok().filter(|u| !u.trim().is_empty());
    match command {
        Command::Run(args) => cmd_run(&args, remote.as_deref(), out),
        Command::Compare(args) => cmd_compare(&args, remote.as_deref(), out),
        Command::Replay(args) => cmd_replay(&args, out),
        Command::Serve(args) => cmd_serve(&args, out),
        Command::Fixtures => {
            for f in casebook::list_fixtures() {
                writeln!(out, "{:<10}{}", f.id, f.description).map_err(|e| CliError::io("stdout", e))?;
            }
            Ok(())
        }
    }
}

fn load_source(source: &Source, tuning: &Tuning) -> Result<CaseFile, CliError> {
    let mut case = match (&source.fixture, &source.case) {
        (Some(id), None) => {
            casebook::fixture(id)
                .ok_or_else(|| {
                    let known: Vec<&str> = casebook::list_fixtures().iter().map(|f| f.id).collect();
                    CliError::usage(format!("unknown fixture `{id}` (known: {})", known.join(", ")))
                })?
                .case
        }
        (None, Some(path)) => match casebook::load_case_file(path) {
            Ok(c) => c,
            Err(CasebookError::Io(e)) => return Err(CliError::io(path.display(), e)),
            Err(e) => return Err(CliError::engine(format!("{}: {e}", path.display()))),
        },
        _ => return Err(CliError::usage("give exactly one of --fixture or --case")),
    };
    if let Some(eta) = tuning.eta {
        case.config.eta = eta;
    }
    if let Some(t) = tuning.theta_collapse {
        case.config.collapse_threshold = t;
    }
    if let Some(mode) = tuning.mode {
        case.config.aggregation = match mode {
            Mode::Sum => Aggregation::Sum,
            Mode::Max => Aggregation::Max,
        };
    }
    let bad = case.config.violations();
    if !bad.is_empty() {
        let list: Vec<String> = bad.iter().map(ToString::to_string).collect();
        return Err(CliError::usage(list.join("; ")));
    }
    Ok(case)
}

/// Everything `run` writes, independent of where the engine ran.
struct RunArtifacts {
    case: CaseFile,
    records: Vec<LogRecord>,
    traces: Vec<StepTrace>,
    outcome: CollapseOutcome,
    amplitudes: Vec<f64>,
    step: usize,
    map_dot: String,
    map_json: Value,
}

fn run_local(case: &CaseFile) -> Result<RunArtifacts, CliError> {
    let mut empty = case.clone();
    let mut observations = std::mem::take(&mut empty.observations);
    observations.sort_by_key(|o| o.sequence);
    let provider = default_provider(case);
    let mut session = Session::create("run", empty, provider)?;
    for o in &observations {
        session.apply_observation(ObservationDoc::from(o))?;
        if session.outcome().kind != CollapseKind::Deferred {
            break;
        }
    }
    Ok(RunArtifacts {
        case: session.case().clone(),
        records: session.records().to_vec(),
        traces: session.traces().to_vec(),
        outcome: session.outcome().clone(),
        amplitudes: session.state().amplitudes().to_vec(),
        step: session.state().step(),
        map_dot: session.map_dot(),
        map_json: json!(session.map()),
    })
}

fn state_json(a: &RunArtifacts) -> Value {
    let weights: Vec<f64> = a.amplitudes.iter().map(|x| x * x).collect();
    let state = qabd::AbductiveState::new(a.amplitudes.clone(), a.step).expect("engine states are normalized");
    json!({
        "case": a.case.name,
        "hypotheses": a.case.hypothesis_ids(),
        "step": a.step,
        "amplitudes": a.amplitudes,
        "weights": weights,
        "coherence": coherence(&state),
    })
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn write_meta(dir: &Path, command: &str, case: &CaseFile, remote: Option<&str>) -> Result<(), CliError> {
    let generated = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "tool": "qabd",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "case": case.name,
        "generated_unix": generated,
        "service": remote,
    });
    write_file(dir, "run.meta.json", &pretty(&meta))
}

fn outcome_line(o: &CollapseOutcome) -> String {
    format!(
        "{}{} {{{}}} confidence {:.5}",
        o.kind,
        if o.forced { " (forced)" } else { "" },
        o.members.join(", "),
        o.confidence
    )
}

fn cmd_run(args: &RunArgs, remote: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let case = load_source(&args.source, &args.tuning)?;
    let artifacts = match remote {
        Some(url) => remote::run(url, &case)?,
        None => run_local(&case)?,
    };
    let dir = &args.out;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    write_file(dir, "state.json", &pretty(&state_json(&artifacts)))?;
    write_file(dir, "trace.jsonl", &traces_to_jsonl(&artifacts.traces))?;
    write_file(dir, "outcome.json", &pretty(&artifacts.outcome))?;
    write_file(dir, "events.jsonl", &to_jsonl(&artifacts.records))?;
    write_file(dir, "map.dot", &artifacts.map_dot)?;
    write_file(dir, "map.json", &pretty(&artifacts.map_json))?;
    write_meta(dir, "run", &artifacts.case, remote)?;

    let text = match args.format {
        Format::Json => pretty(&artifacts.outcome),
        Format::Dot => artifacts.map_dot.clone(),
        Format::Table => {
            let mut t = format!("case: {}\n", artifacts.case.name);
            for (id, a) in artifacts.case.hypothesis_ids().iter().zip(&artifacts.amplitudes) {
                t.push_str(&format!("{id:<10} {a:>10.5} {:>8.5}\n", a * a));
            }
            t.push_str(&format!(
                "outcome: {} after {} step(s)\nartifacts: {}\n",
                outcome_line(&artifacts.outcome),
                artifacts.step,
                dir.display()
            ));
            t
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e))
}

fn cmd_compare(args: &CompareArgs, remote: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let case = load_source(&args.source, &args.tuning)?;
    let report: ComparisonReport = match remote {
        Some(url) => remote::compare(url, &case)?,
        None => {
            let provider = default_provider(&case);
            qabd::compare(&case, &*provider).map_err(|e| CliError::from(SessionError::Classical(e)))?
        }
    };
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        write_file(dir, "compare.json", &pretty(&report))?;
        write_meta(dir, "compare", &case, remote)?;
    }
    let text = match args.format {
        Format::Json => pretty(&report),
        Format::Table => report.to_table(),
        Format::Dot => return Err(CliError::usage("compare prints json or table")),
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e))
}

fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = args
        .log_dir
        .clone()
        .or_else(|| args.log.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    match replay_file(&args.log, &dir, &default_provider) {
        Ok((session, report)) => {
            let mut line = format!(
                "ok: {} replayed through revision {} ({} records)",
                report.case_id,
                report.final_revision,
                session.records().len()
            );
            if !report.lineage.is_empty() {
                line.push_str(&format!(", lineage {}", report.lineage.join(" <- ")));
            }
            writeln!(out, "{line}").map_err(|e| CliError::io("stdout", e))
        }
        Err(e) => Err(match (&e, e.divergent_revision()) {
            (_, Some(revision)) => {
                CliError::new(ExitCode::Mismatch, format!("first divergent revision {revision}: {e}"))
            }
            (ReplayError::Log(crate::log::LogError::Io(io)), _) => CliError::io(args.log.display(), io),
            (ReplayError::ParentMissing(_), _) => CliError::new(ExitCode::Io, e.to_string()),
            _ => CliError::engine(e),
        }),
    }
}

fn cmd_serve(args: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = match &args.log_dir {
        Some(dir) => SessionStore::open(dir).map_err(|e| CliError::io(dir.display(), e))?,
        None => SessionStore::in_memory(),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("runtime", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .map_err(|e| CliError::io(&args.addr, e))?;
        let addr = listener.local_addr().map_err(|e| CliError::io(&args.addr, e))?;
        let _ = writeln!(out, "listening on http://{addr}");
        let _ = out.flush();
        tokio::select! {
            r = crate::http::serve(listener, Arc::new(store)) => r.map_err(|e| CliError::io("serve", e)),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

/// `run` and `compare` against a running service.
mod remote {
    use super::*;
    use crate::http::ApiErrorBody;

    fn agent() -> ureq::Agent {
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent()
    }

    fn fail(status: u16, body: &str) -> CliError {
        let message = serde_json::from_str::<ApiErrorBody>(body)
            .map(|b| format!("service {status} {}: {}", b.code, b.message))
            .unwrap_or_else(|_| format!("service {status}: {body}"));
        CliError::engine(message)
    }

    fn call(request: Result<ureq::http::Response<ureq::Body>, ureq::Error>, url: &str) -> Result<String, CliError> {
        let mut response = request.map_err(|e| CliError::io(url, e))?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| CliError::io(url, e))?;
        if (200..300).contains(&status) {
            Ok(body)
        } else {
            Err(fail(status, &body))
        }
    }

    fn get(base: &str, path: &str) -> Result<String, CliError> {
        let url = format!("{}{path}", base.trim_end_matches('/'));
        call(agent().get(&url).call(), &url)
    }

    fn post(base: &str, path: &str, body: String) -> Result<String, CliError> {
        let url = format!("{}{path}", base.trim_end_matches('/'));
        call(
            agent().post(&url).header("content-type", "application/json").send(body),
            &url,
        )
    }

    fn decode<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::engine(format!("unexpected service reply: {e}")))
    }

    fn create(base: &str, case: &CaseFile) -> Result<String, CliError> {
        let reply: Value = decode(&post(base, "/cases", serialize_case(case))?)?;
        reply["id"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CliError::engine("service reply lacks an id"))
    }

    pub(super) fn run(base: &str, case: &CaseFile) -> Result<RunArtifacts, CliError> {
        let mut empty = case.clone();
        let mut observations = std::mem::take(&mut empty.observations);
        observations.sort_by_key(|o| o.sequence);
        let id = create(base, &empty)?;
        for o in &observations {
            let body = serde_json::to_string(&ObservationDoc::from(o)).expect("serializable");
            let reply: Value = decode(&post(base, &format!("/cases/{id}/observations"), body)?)?;
            if reply["outcome"]["kind"] != "deferred" {
                break;
            }
        }
        let records = parse_jsonl(&get(base, &format!("/cases/{id}/log"))?).map_err(CliError::engine)?;
        let session_case = load_case(&get(base, &format!("/cases/{id}/case"))?).map_err(CliError::engine)?;
        let view: crate::session::StateView = decode(&get(base, &format!("/cases/{id}/state"))?)?;
        let traces = records
            .iter()
            .filter_map(|r| match &r.event {
                LogEvent::Observation { trace, .. } => Some(trace.clone()),
                _ => None,
            })
            .collect();
        Ok(RunArtifacts {
            case: session_case,
            traces,
            outcome: view.outcome,
            amplitudes: view.amplitudes,
            step: view.step,
            map_dot: get(base, &format!("/cases/{id}/map?format=dot"))?,
            map_json: decode(&get(base, &format!("/cases/{id}/map?format=json"))?)?,
            records,
        })
    }

    pub(super) fn compare(base: &str, case: &CaseFile) -> Result<ComparisonReport, CliError> {
        let id = create(base, case)?;
        decode(&get(base, &format!("/cases/{id}/compare"))?)
    }
}
