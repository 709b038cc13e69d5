//! Headless driver for missions. Every command writes its results to
//! stdout and, on failure, exactly one JSON error line to stderr.
//!
//! Exit codes: 0 success, 1 validation or plan failure, 2 usage or config
//! error, 3 provider or runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use parley_core::dialogue::{Author, Message, Transcript};
use parley_core::envgraph::{parse_environment, render_flowchart, EnvError, RoomGraph, RoomId};
use parley_core::mission::{ProviderSpec, SessionStore};
use parley_core::planex::{latest_plans, validate_plans, PlanSet};
use parley_core::provider::parse_script;
use parley_core::sim::{start_execution, tick, ExecutionConfig, FailureSpec, SimError};
use parley_core::{MissionError, Session, SessionConfig, SessionPhase};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Invalid = 1,
    Usage = 2,
    Runtime = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct Failure {
    pub status: ExitStatus,
    pub code: String,
    pub detail: String,
    pub line: Option<usize>,
}

impl Failure {
    fn new(status: ExitStatus, code: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            detail: detail.into(),
            line: None,
        }
    }

    fn usage(code: &str, detail: impl Into<String>) -> Self {
        Self::new(ExitStatus::Usage, code, detail)
    }

    fn with_line(mut self, line: Option<usize>) -> Self {
        self.line = line;
        self
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.code, "detail": self.detail });
        if let Some(line) = self.line {
            v["line"] = json!(line);
        }
        v
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(name = "parley", version, about = "Run and inspect multi-agent missions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drive a scripted session end to end, printing one JSON event per line.
    Run(RunArgs),
    /// Parse an environment file.
    ValidateEnv { path: PathBuf },
    /// Check a plans document against an environment.
    ValidatePlans(PlanArgs),
    /// Simulate a plans document, printing one execution event per line.
    Simulate(SimulateArgs),
    /// Re-extract the plan set from a stored transcript.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Scripted responses separated by `---` lines; replaces any in the config.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    task: String,
    #[arg(long)]
    auto_approve: bool,
    #[arg(long, default_value_t = 1000)]
    max_steps: u32,
    /// Add a wall-clock `ts_ms` field to every trace record.
    #[arg(long)]
    timestamps: bool,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    plans: PathBuf,
    /// Current room of an agent, as `Agent=Room`. Repeatable.
    #[arg(long = "position", value_name = "AGENT=ROOM")]
    positions: Vec<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    plans: PathBuf,
    /// Block an edge from a tick on, as `RoomA:RoomB:tick`. Repeatable.
    #[arg(long = "block", value_name = "A:B:TICK")]
    blocks: Vec<String>,
    #[arg(long, default_value_t = 1)]
    ticks_per_edge: u32,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    path: PathBuf,
    /// Comma-separated roster for plain message files; defaults to the
    /// agents that speak, in order of first appearance.
    #[arg(long, value_delimiter = ',')]
    roster: Vec<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let detail = e.to_string();
            let detail = detail.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail(err, Failure::usage("usage", detail));
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::ValidateEnv { path } => cmd_validate_env(&path, out),
        Command::ValidatePlans(a) => cmd_validate_plans(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Replay(a) => cmd_replay(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => fail(err, f),
    }
}

fn fail(err: &mut dyn Write, failure: Failure) -> i32 {
    let _ = writeln!(err, "{}", failure.to_json());
    failure.status.code()
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::usage("unreadable_file", format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, value: &impl serde::Serialize) -> CmdResult {
    let line = serde_json::to_string(value).expect("records serialise");
    writeln!(out, "{line}").map_err(|e| Failure::new(ExitStatus::Runtime, "io", e.to_string()))
}

fn env_failure(status: ExitStatus, e: &EnvError) -> Failure {
    let (code, line) = match e {
        EnvError::Syntax { line, .. } => ("env_syntax", Some(*line)),
        EnvError::SelfLoop { line } => ("env_self_loop", Some(*line)),
        EnvError::EmptyEnvironment => ("env_empty", None),
        EnvError::UnknownRoom(_) => ("unknown_room", None),
    };
    Failure::new(status, code, e.to_string()).with_line(line)
}

fn load_env(path: &Path) -> Result<RoomGraph, Failure> {
    parse_environment(&read_file(path)?).map_err(|e| env_failure(ExitStatus::Usage, &e))
}

fn load_plans(path: &Path) -> Result<IndexMap<String, Vec<RoomId>>, Failure> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| Failure::usage("invalid_plans", format!("{}: {e}", path.display())))
}

fn mission_failure(status: ExitStatus, e: &MissionError) -> Failure {
    let line = match e {
        MissionError::Config(c) => c.line(),
        _ => None,
    };
    Failure::new(status, e.code(), e.to_string()).with_line(line)
}

struct Trace<'a> {
    out: &'a mut dyn Write,
    printed: usize,
    timestamps: bool,
}

impl Trace<'_> {
    fn flush(&mut self, session: &Session) -> CmdResult {
        for event in &session.events()[self.printed..] {
            if self.timestamps {
                let mut v = serde_json::to_value(event).expect("event serialises");
                let ms = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_millis() as u64);
                v["ts_ms"] = json!(ms);
                emit(self.out, &v)?;
            } else {
                emit(self.out, event)?;
            }
        }
        self.printed = session.events().len();
        Ok(())
    }
}

fn was_rejected(session: &Session) -> bool {
    session.events().iter().any(|e| {
        matches!(&e.kind, parley_core::SessionEventKind::PlanValidated { report, .. } if !report.ok)
    })
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> CmdResult {
    let mut config: SessionConfig = serde_json::from_str(&read_file(&args.config)?)
        .map_err(|e| Failure::usage("invalid_config", format!("{}: {e}", args.config.display())))?;
    if let Some(script) = &args.script {
        config.provider = ProviderSpec::Scripted {
            responses: parse_script(&read_file(script)?).into_vec(),
        };
    }
    if args.task.trim().is_empty() {
        return Err(Failure::usage("empty_text", "task text is empty"));
    }
    let auto = args.auto_approve || config.auto_approve;
    let mut provider = config.provider.build();
    let mut session = Session::create_with_id(config, "run")
        .map_err(|e| mission_failure(ExitStatus::Usage, &e))?;
    let mut trace = Trace {
        out,
        printed: 0,
        timestamps: args.timestamps,
    };

    let outcome = drive(&mut session, provider.as_mut(), &args.task, auto, args.max_steps);
    trace.flush(&session)?;
    match outcome {
        Ok(()) => Ok(()),
        Err(failure) => {
            let _ = session.abort(&format!("run failed ({})", failure.code));
            trace.flush(&session)?;
            Err(failure)
        }
    }
}

fn drive(
    session: &mut Session,
    provider: &mut dyn parley_core::provider::CompletionProvider,
    task: &str,
    auto: bool,
    max_steps: u32,
) -> CmdResult {
    session
        .submit_task(task)
        .map_err(|e| mission_failure(ExitStatus::Runtime, &e))?;
    for _ in 0..max_steps {
        let result = match session.phase() {
            SessionPhase::Discussion => session.advance_discussion(provider).map(|_| ()),
            SessionPhase::AwaitingApproval if auto => session.approve(),
            SessionPhase::AwaitingApproval | SessionPhase::Completed => return Ok(()),
            SessionPhase::Executing => session.step_execution().map(|_| ()),
            phase => {
                return Err(Failure::new(
                    ExitStatus::Runtime,
                    "wrong_phase",
                    format!("session stopped in phase {phase}"),
                ))
            }
        };
        if let Err(e) = result {
            if was_rejected(session) {
                return Err(plan_rejected(session, &e.to_string()));
            }
            return Err(mission_failure(ExitStatus::Runtime, &e));
        }
    }
    if was_rejected(session) {
        return Err(plan_rejected(session, "step limit reached"));
    }
    Err(Failure::new(
        ExitStatus::Runtime,
        "max_steps_exceeded",
        format!("no outcome after {max_steps} steps"),
    ))
}

fn plan_rejected(session: &Session, cause: &str) -> Failure {
    let critique = session
        .validation()
        .filter(|r| !r.ok)
        .map(|r| r.to_string())
        .unwrap_or_else(|| "a plan was rejected".into());
    Failure::new(
        ExitStatus::Invalid,
        "plan_rejected",
        format!("{critique}\n(run ended: {cause})"),
    )
}

fn cmd_validate_env(path: &Path, out: &mut dyn Write) -> CmdResult {
    let graph = parse_environment(&read_file(path)?).map_err(|e| env_failure(ExitStatus::Invalid, &e))?;
    emit(
        out,
        &json!({
            "rooms": graph.rooms(),
            "edges": graph.edge_count(),
            "flowchart": render_flowchart(&graph),
        }),
    )
}

fn parse_positions(specs: &[String]) -> Result<IndexMap<String, RoomId>, Failure> {
    let mut positions = IndexMap::new();
    for spec in specs {
        let (agent, room) = spec
            .split_once('=')
            .ok_or_else(|| Failure::usage("invalid_position", format!("{spec:?} is not AGENT=ROOM")))?;
        let room = RoomId::new(room.trim())
            .map_err(|e| Failure::usage("invalid_position", format!("{spec:?}: {e}")))?;
        positions.insert(agent.trim().to_string(), room);
    }
    Ok(positions)
}

fn cmd_validate_plans(args: &PlanArgs, out: &mut dyn Write) -> CmdResult {
    let graph = load_env(&args.env)?;
    let plans = PlanSet::new(load_plans(&args.plans)?).resolved(&graph);
    let positions = parse_positions(&args.positions)?;
    let report = validate_plans(plans.iter(), Vec::new(), &graph, &positions);
    emit(out, &report)?;
    if report.ok {
        Ok(())
    } else {
        Err(Failure::new(ExitStatus::Invalid, "plan_invalid", report.to_string()))
    }
}

fn parse_block(spec: &str) -> Result<FailureSpec, Failure> {
    let bad = || Failure::usage("invalid_block", format!("{spec:?} is not ROOM_A:ROOM_B:TICK"));
    let mut parts = spec.split(':');
    let (Some(a), Some(b), Some(t), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    Ok(FailureSpec::BlockEdge {
        a: RoomId::new(a.trim()).map_err(|_| bad())?,
        b: RoomId::new(b.trim()).map_err(|_| bad())?,
        from_tick: t.trim().parse().map_err(|_| bad())?,
    })
}

fn sim_failure(e: SimError) -> Failure {
    let status = match e {
        SimError::InvalidPlanSet(_) => ExitStatus::Invalid,
        SimError::InvalidFailure { .. } | SimError::InvalidConfig => ExitStatus::Usage,
        _ => ExitStatus::Runtime,
    };
    let code = match e {
        SimError::InvalidPlanSet(_) => "plan_invalid",
        SimError::InvalidFailure { .. } => "invalid_block",
        SimError::InvalidConfig => "invalid_config",
        _ => "simulation_error",
    };
    Failure::new(status, code, e.to_string())
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CmdResult {
    let graph = load_env(&args.env)?;
    let plans = PlanSet::new(load_plans(&args.plans)?).resolved(&graph);
    let config = ExecutionConfig {
        ticks_per_edge: args.ticks_per_edge,
        failures: args.blocks.iter().map(|b| parse_block(b)).collect::<Result<_, _>>()?,
    };
    let (mut state, first) = start_execution(&plans, &graph, config).map_err(sim_failure)?;
    let mut blocked = Vec::new();
    let mut record = |events: Vec<_>, out: &mut dyn Write| -> CmdResult {
        for e in events {
            emit(out, &e)?;
            if let parley_core::sim::ExecutionEvent {
                agent: Some(agent),
                kind: parley_core::sim::EventKind::Blocked { from, to },
                tick,
            } = e
            {
                blocked.push(format!("{agent} blocked between {from} and {to} at tick {tick}"));
            }
        }
        Ok(())
    };
    record(first, out)?;
    // other robots keep going until nothing can move
    while state.is_active() {
        let events = tick(&mut state).map_err(sim_failure)?;
        record(events, out)?;
    }
    if blocked.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(ExitStatus::Invalid, "blocked", blocked.join("; ")))
    }
}

fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write) -> CmdResult {
    let text = read_file(&args.path)?;
    let transcript = match SessionStore::decode(&text) {
        Ok(session) => session.transcript().clone(),
        Err(_) => plain_transcript(&text, &args.roster)?,
    };
    let roster = transcript.roster().to_vec();
    let (found, missing) = latest_plans(&transcript, &roster);
    emit(out, &json!({ "plans": PlanSet::new(found), "missing": missing }))?;
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            ExitStatus::Invalid,
            "missing_plan",
            format!("no PLAN line for {}", missing.join(", ")),
        ))
    }
}

fn plain_transcript(text: &str, roster: &[String]) -> Result<Transcript, Failure> {
    let mut messages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: Message = serde_json::from_str(line).map_err(|e| {
            Failure::usage("invalid_transcript", format!("line {}: {e}", i + 1)).with_line(Some(i + 1))
        })?;
        messages.push(m);
    }
    let mut roster: Vec<String> = roster.iter().map(|s| s.trim().to_string()).collect();
    if roster.is_empty() {
        for m in &messages {
            if let Author::Agent(name) = &m.author {
                if !roster.iter().any(|r| r.eq_ignore_ascii_case(name)) {
                    roster.push(name.clone());
                }
            }
        }
    }
    Transcript::from_messages(roster, messages)
        .map_err(|e| Failure::usage("invalid_transcript", e.to_string()))
}
