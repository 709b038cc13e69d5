//! The mission session: a phase state machine that ties personas, the
//! shared transcript, the completion provider, plan extraction and the
//! simulator together.
//!
//! ```text
//! Setup --task--> Discussion --@supervisor / round cap--> AwaitingApproval
//!                     ^                                     |        |
//!                     +---------- feedback / bad plan ------+        | approve
//!                     |                                              v
//!                     +----------- blocked / interrupt ---------- Executing --> Completed
//! ```
//!
//! Any phase except `Aborted` may move to `Aborted`. Every operation checks
//! the phase first and fails with [`MissionError::WrongPhase`] without
//! touching state. Every transcript append and phase change is mirrored by
//! exactly one [`SessionEvent`].

mod config;
mod events;
mod store;

use indexmap::IndexMap;
use thiserror::Error;

pub use config::{ConfigError, ProviderSpec, SessionConfig, DEFAULT_MAX_ROUNDS};
pub use events::{SessionEvent, SessionEventKind, SessionPhase};
pub use store::{SessionStore, StoreError, DATA_DIR_ENV};

use crate::dialogue::{
    detect_supervisor_call, next_speaker, project_view, Author, DialogueError, Message, Transcript,
    TurnPolicy,
};
use crate::envgraph::{parse_environment, RoomGraph, RoomId};
use crate::persona::{
    build_system_message, check_roster, default_debate_guidance, AgentProfile, SystemPrompt,
};
use crate::planex::{latest_plans, validate_plans, PlanSet, ValidationReport};
use crate::provider::{
    system_exceeds_budget, truncate_history, CompletionProvider, ProviderError,
};
use crate::sim::{
    failure_report, positions_sentence, start_execution, tick, ExecutionEvent, ExecutionState,
    SimError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MissionError {
    #[error("{operation} is not allowed in phase {phase}")]
    WrongPhase {
        operation: &'static str,
        phase: SessionPhase,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl MissionError {
    pub fn code(&self) -> &'static str {
        match self {
            MissionError::WrongPhase { .. } => "wrong_phase",
            MissionError::Config(e) => e.code(),
            MissionError::Dialogue(DialogueError::EmptyBody) => "empty_text",
            MissionError::Dialogue(_) => "dialogue_error",
            MissionError::Provider(e) => e.code(),
            MissionError::Sim(_) => "simulation_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    id: String,
    config: SessionConfig,
    config_hash: String,
    phase: SessionPhase,
    graph: RoomGraph,
    prompts: IndexMap<String, SystemPrompt>,
    policy: TurnPolicy,
    transcript: Transcript,
    positions: IndexMap<String, RoomId>,
    plan: Option<PlanSet>,
    validation: Option<ValidationReport>,
    execution: Option<ExecutionState>,
    rounds_used: u32,
    events: Vec<SessionEvent>,
}

pub fn create_session(config: SessionConfig) -> Result<Session, MissionError> {
    Session::create(config)
}

impl Session {
    pub fn create(config: SessionConfig) -> Result<Self, MissionError> {
        Self::create_with_id(config, uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn create_with_id(config: SessionConfig, id: impl Into<String>) -> Result<Self, MissionError> {
        if config.agents.is_empty() {
            return Err(ConfigError::EmptyRoster.into());
        }
        check_roster(&config.agents).map_err(ConfigError::from)?;
        config.params.validate().map_err(ConfigError::Params)?;
        if config.max_rounds == 0 {
            return Err(ConfigError::MaxRounds.into());
        }
        let graph = parse_environment(&config.environment).map_err(ConfigError::from)?;

        // Start rooms are stored in the map's spelling.
        let mut roster: Vec<AgentProfile> = Vec::with_capacity(config.agents.len());
        let mut positions = IndexMap::new();
        for agent in &config.agents {
            let room = graph.resolve(agent.start_room.as_str()).cloned().ok_or_else(|| {
                ConfigError::UnknownStartRoom {
                    agent: agent.name.clone(),
                    room: agent.start_room.clone(),
                }
            })?;
            positions.insert(agent.name.clone(), room.clone());
            roster.push(AgentProfile {
                start_room: room,
                ..agent.clone()
            });
        }
        let names: Vec<String> = roster.iter().map(|a| a.name.clone()).collect();

        let order = match &config.turn_order {
            None => names.clone(),
            Some(order) => {
                let mut resolved = Vec::with_capacity(order.len());
                for name in order {
                    let stored = names
                        .iter()
                        .find(|n| n.eq_ignore_ascii_case(name))
                        .ok_or_else(|| ConfigError::TurnOrder(format!("unknown agent {name}")))?;
                    if resolved.contains(stored) {
                        return Err(ConfigError::TurnOrder(format!("{name} listed twice")).into());
                    }
                    resolved.push(stored.clone());
                }
                if resolved.len() != names.len() {
                    return Err(ConfigError::TurnOrder("some agents are missing".into()).into());
                }
                resolved
            }
        };

        if config.execution.ticks_per_edge == 0 {
            return Err(ConfigError::Execution(SimError::InvalidConfig).into());
        }
        for failure in &config.execution.failures {
            failure.check(&graph).map_err(ConfigError::Execution)?;
        }

        let guidance = config
            .guidance
            .clone()
            .unwrap_or_else(|| default_debate_guidance().to_string());
        let mut prompts = IndexMap::new();
        for agent in &roster {
            let prompt = build_system_message(agent, &roster, &graph, &guidance)
                .map_err(ConfigError::from)?;
            prompts.insert(agent.name.clone(), prompt);
        }

        let mut session = Session {
            id: id.into(),
            config_hash: config.hash(),
            config,
            phase: SessionPhase::Setup,
            graph,
            prompts,
            policy: TurnPolicy::RoundRobin { order },
            transcript: Transcript::new(names),
            positions,
            plan: None,
            validation: None,
            execution: None,
            rounds_used: 0,
            events: Vec::new(),
        };
        session.push_event(SessionEventKind::PhaseChanged {
            from: None,
            to: SessionPhase::Setup,
            reason: "session created".into(),
        });
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn graph(&self) -> &RoomGraph {
        &self.graph
    }

    pub fn roster(&self) -> &[String] {
        self.transcript.roster()
    }

    pub fn prompt(&self, agent: &str) -> Option<&SystemPrompt> {
        self.prompts
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(agent))
            .map(|(_, p)| p)
    }

    pub fn policy(&self) -> &TurnPolicy {
        &self.policy
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn positions(&self) -> &IndexMap<String, RoomId> {
        &self.positions
    }

    pub fn plan(&self) -> Option<&PlanSet> {
        self.plan.as_ref()
    }

    pub fn validation(&self) -> Option<&ValidationReport> {
        self.validation.as_ref()
    }

    pub fn execution(&self) -> Option<&ExecutionState> {
        self.execution.as_ref()
    }

    pub fn rounds_used(&self) -> u32 {
        self.rounds_used
    }

    pub fn auto_approve(&self) -> bool {
        self.config.auto_approve
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Events with `seq` strictly greater than `after` (all events for `None`).
    pub fn events_after(&self, after: Option<u64>) -> &[SessionEvent] {
        let start = after.map_or(0, |s| (s + 1).min(self.events.len() as u64) as usize);
        &self.events[start..]
    }

    fn require(&self, operation: &'static str, allowed: &[SessionPhase]) -> Result<(), MissionError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(MissionError::WrongPhase {
                operation,
                phase: self.phase,
            })
        }
    }

    fn push_event(&mut self, kind: SessionEventKind) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent { seq, kind });
    }

    fn push_message(&mut self, author: Author, body: &str) -> Result<Message, DialogueError> {
        let message = self.transcript.append(author, body)?.clone();
        self.push_event(SessionEventKind::MessageAppended(message.clone()));
        Ok(message)
    }

    fn set_phase(&mut self, to: SessionPhase, reason: impl Into<String>) {
        assert!(
            self.phase.can_transition(to),
            "illegal transition {} -> {}",
            self.phase,
            to
        );
        let from = self.phase;
        self.phase = to;
        if to == SessionPhase::Discussion {
            self.rounds_used = 0;
        }
        if to != SessionPhase::Executing {
            self.execution = None;
        }
        self.push_event(SessionEventKind::PhaseChanged {
            from: Some(from),
            to,
            reason: reason.into(),
        });
    }

    fn sync_positions(&mut self) {
        if let Some(exec) = &self.execution {
            for robot in &exec.robots {
                self.positions.insert(robot.agent.clone(), robot.room.clone());
            }
        }
    }

    /// Supervisor hands the team its task.
    pub fn submit_task(&mut self, text: &str) -> Result<(), MissionError> {
        self.require("submit_task", &[SessionPhase::Setup])?;
        self.push_message(Author::Supervisor, text)?;
        self.set_phase(SessionPhase::Discussion, "supervisor submitted a task");
        Ok(())
    }

    /// Lets the next agent in the rotation speak once.
    pub fn advance_discussion(
        &mut self,
        provider: &mut dyn CompletionProvider,
    ) -> Result<Message, MissionError> {
        self.require("advance_discussion", &[SessionPhase::Discussion])?;
        let speaker = next_speaker(&self.policy, &self.transcript).to_string();
        let prompt = self.prompt(&speaker).expect("prompt for every agent");
        let view = project_view(&self.transcript, &speaker, prompt)?;
        let budget = self.config.params.history_char_budget;
        if system_exceeds_budget(&view, budget) {
            self.push_event(SessionEventKind::Error {
                code: "history_budget_exceeded".into(),
                detail: format!(
                    "system prompt for {speaker} alone exceeds the history budget of {budget} characters"
                ),
            });
        }
        let view = truncate_history(&view, budget);

        let reply = provider
            .complete(&view, &self.config.params)
            .and_then(|reply| {
                if reply.trim().is_empty() {
                    Err(ProviderError::MalformedResponse("empty completion".into()))
                } else {
                    Ok(reply)
                }
            });
        let reply = match reply {
            Ok(reply) => reply,
            Err(err) => {
                self.push_message(
                    Author::System,
                    &format!("The language model failed while {speaker} was speaking: {err}"),
                )?;
                self.push_event(SessionEventKind::Error {
                    code: err.code().into(),
                    detail: err.to_string(),
                });
                return Err(err.into());
            }
        };
        let message = self.push_message(Author::Agent(speaker.clone()), &reply)?;

        if self.policy.is_last(&speaker) {
            self.rounds_used += 1;
        }
        if detect_supervisor_call(&message.body) {
            self.set_phase(
                SessionPhase::AwaitingApproval,
                format!("{speaker} called the supervisor"),
            );
        } else if self.rounds_used >= self.config.max_rounds {
            self.push_message(
                Author::System,
                &format!(
                    "The discussion reached the limit of {} rounds. Handing over to the supervisor.",
                    self.config.max_rounds
                ),
            )?;
            self.set_phase(SessionPhase::AwaitingApproval, "round limit reached");
        }
        Ok(message)
    }

    /// Supervisor advice, requested alterations, or an execution interrupt.
    pub fn supervisor_feedback(&mut self, text: &str) -> Result<(), MissionError> {
        self.require(
            "supervisor_feedback",
            &[
                SessionPhase::Discussion,
                SessionPhase::AwaitingApproval,
                SessionPhase::Executing,
            ],
        )?;
        if text.trim().is_empty() {
            return Err(DialogueError::EmptyBody.into());
        }
        match self.phase {
            SessionPhase::Executing => {
                self.sync_positions();
                let exec = self.execution.as_ref().expect("execution while executing");
                let status = format!(
                    "Execution interrupted by the supervisor at tick {}. Robots have stopped. {}",
                    exec.tick,
                    positions_sentence(exec)
                );
                self.push_message(Author::Executor, &status)?;
                self.push_message(Author::Supervisor, text)?;
                self.set_phase(SessionPhase::Discussion, "supervisor interrupted execution");
            }
            SessionPhase::AwaitingApproval => {
                self.push_message(Author::Supervisor, text)?;
                self.set_phase(SessionPhase::Discussion, "supervisor requested changes");
            }
            _ => {
                self.push_message(Author::Supervisor, text)?;
            }
        }
        Ok(())
    }

    /// Extracts and validates the plans; starts execution when they hold up,
    /// otherwise returns the critique to the agents.
    pub fn approve(&mut self) -> Result<(), MissionError> {
        self.require("approve", &[SessionPhase::AwaitingApproval])?;
        let (found, missing) = latest_plans(&self.transcript, self.transcript.roster());
        let plans = PlanSet::new(found).resolved(&self.graph);
        let report = validate_plans(plans.iter(), missing, &self.graph, &self.positions);
        self.validation = Some(report.clone());
        self.push_event(SessionEventKind::PlanValidated {
            plans: plans.iter().map(|(a, p)| (a.to_string(), p.to_vec())).collect(),
            report: report.clone(),
        });

        if !report.ok {
            self.push_message(Author::Executor, &report.to_string())?;
            self.set_phase(SessionPhase::Discussion, "plan rejected by validation");
            return Ok(());
        }

        let (state, events) = start_execution(&plans, &self.graph, self.config.execution.clone())?;
        self.plan = Some(plans);
        self.execution = Some(state);
        self.set_phase(SessionPhase::Executing, "supervisor approved the plan");
        self.sync_positions();
        for event in events {
            self.push_event(SessionEventKind::ExecutionEvent(event));
        }
        if self.execution.as_ref().is_some_and(|e| e.complete) {
            self.set_phase(SessionPhase::Completed, "all robots finished their plans");
        }
        Ok(())
    }

    /// Runs one simulator tick.
    pub fn step_execution(&mut self) -> Result<Vec<ExecutionEvent>, MissionError> {
        self.require("step_execution", &[SessionPhase::Executing])?;
        let exec = self.execution.as_mut().expect("execution while executing");
        let events = tick(exec)?;
        self.sync_positions();
        for event in &events {
            self.push_event(SessionEventKind::ExecutionEvent(event.clone()));
        }

        let blocked: Vec<&ExecutionEvent> = events.iter().filter(|e| e.is_blocked()).collect();
        if !blocked.is_empty() {
            let exec = self.execution.as_ref().expect("execution while executing");
            let reports = blocked
                .iter()
                .map(|e| failure_report(exec, e))
                .collect::<Result<Vec<_>, _>>()?;
            for report in &reports {
                self.push_message(Author::Executor, report)?;
            }
            let who: Vec<&str> = blocked.iter().filter_map(|e| e.agent.as_deref()).collect();
            self.set_phase(
                SessionPhase::Discussion,
                format!("blocked: {}; replanning", who.join(", ")),
            );
        } else if self.execution.as_ref().is_some_and(|e| e.complete) {
            self.set_phase(SessionPhase::Completed, "all robots finished their plans");
        }
        Ok(events)
    }

    pub fn abort(&mut self, reason: &str) -> Result<(), MissionError> {
        if self.phase == SessionPhase::Aborted {
            return Err(MissionError::WrongPhase {
                operation: "abort",
                phase: self.phase,
            });
        }
        let reason = if reason.trim().is_empty() { "no reason given" } else { reason };
        self.sync_positions();
        self.push_message(Author::System, &format!("Session aborted: {reason}"))?;
        self.set_phase(SessionPhase::Aborted, reason);
        Ok(())
    }
}
