//! Discrete-event fleet simulator.
//!
//! Each robot walks its room path one edge at a time; an edge takes
//! `ticks_per_edge` ticks. A `Depart` is emitted on the tick a traversal
//! begins and an `Arrive` on the tick it ends (the same tick when
//! `ticks_per_edge` is 1). Blocked edges are checked when a robot is about
//! to depart; a blocked robot stops for the rest of the execution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgraph::{validate_path, RoomGraph, RoomId};
use crate::planex::PlanSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("plan set is not executable: {0}")]
    InvalidPlanSet(String),
    #[error("failure spec {a} <-> {b} is not an edge of the map")]
    InvalidFailure { a: RoomId, b: RoomId },
    #[error("ticks_per_edge must be positive")]
    InvalidConfig,
    #[error("execution already complete")]
    AlreadyComplete,
    #[error("no robot can move")]
    Stalled,
    #[error("event is not a failure")]
    NotAFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    Moving,
    Blocked,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotState {
    pub agent: String,
    pub room: RoomId,
    pub remaining: Vec<RoomId>,
    pub status: RobotStatus,
    /// Ticks spent on the current edge; 0 while standing in `room`.
    #[serde(default)]
    pub progress: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureSpec {
    BlockEdge { a: RoomId, b: RoomId, from_tick: u64 },
}

impl FailureSpec {
    fn blocks(&self, from: &RoomId, to: &RoomId, tick: u64) -> bool {
        match self {
            FailureSpec::BlockEdge { a, b, from_tick } => {
                tick >= *from_tick
                    && ((a.matches(from) && b.matches(to)) || (a.matches(to) && b.matches(from)))
            }
        }
    }

    /// Checks that the failure names an existing edge.
    pub fn check(&self, graph: &RoomGraph) -> Result<(), SimError> {
        match self {
            FailureSpec::BlockEdge { a, b, .. } => {
                if graph.are_adjacent(a.as_str(), b.as_str()) {
                    Ok(())
                } else {
                    Err(SimError::InvalidFailure {
                        a: a.clone(),
                        b: b.clone(),
                    })
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionConfig {
    pub ticks_per_edge: u32,
    pub failures: Vec<FailureSpec>,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            ticks_per_edge: 1,
            failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Depart { from: RoomId, to: RoomId },
    Arrive { room: RoomId },
    Blocked { from: RoomId, to: RoomId },
    PlanComplete,
    AllComplete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionEvent {
    pub tick: u64,
    pub agent: Option<String>,
    pub kind: EventKind,
}

impl ExecutionEvent {
    fn robot(tick: u64, agent: &str, kind: EventKind) -> Self {
        Self {
            tick,
            agent: Some(agent.to_string()),
            kind,
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self.kind, EventKind::Blocked { .. })
    }
}

/// Flat JSON form: `{"tick":1,"agent":"Alpha","kind":"depart","rooms":["Kitchen","Hall"]}`.
#[derive(Serialize, Deserialize)]
struct EventRecord {
    tick: u64,
    agent: Option<String>,
    kind: String,
    rooms: Vec<RoomId>,
}

impl Serialize for ExecutionEvent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let (kind, rooms) = match &self.kind {
            EventKind::Depart { from, to } => ("depart", vec![from.clone(), to.clone()]),
            EventKind::Arrive { room } => ("arrive", vec![room.clone()]),
            EventKind::Blocked { from, to } => ("blocked", vec![from.clone(), to.clone()]),
            EventKind::PlanComplete => ("plan_complete", vec![]),
            EventKind::AllComplete => ("all_complete", vec![]),
        };
        EventRecord {
            tick: self.tick,
            agent: self.agent.clone(),
            kind: kind.to_string(),
            rooms,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExecutionEvent {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = EventRecord::deserialize(deserializer)?;
        let mut rooms = r.rooms.into_iter();
        let mut next = || rooms.next().ok_or_else(|| D::Error::custom("missing room"));
        let kind = match r.kind.as_str() {
            "depart" => EventKind::Depart {
                from: next()?,
                to: next()?,
            },
            "arrive" => EventKind::Arrive { room: next()? },
            "blocked" => EventKind::Blocked {
                from: next()?,
                to: next()?,
            },
            "plan_complete" => EventKind::PlanComplete,
            "all_complete" => EventKind::AllComplete,
            other => return Err(D::Error::custom(format!("unknown event kind {other}"))),
        };
        Ok(ExecutionEvent {
            tick: r.tick,
            agent: r.agent,
            kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionState {
    pub tick: u64,
    pub robots: Vec<RobotState>,
    pub config: ExecutionConfig,
    pub complete: bool,
}

impl ExecutionState {
    pub fn robot(&self, agent: &str) -> Option<&RobotState> {
        self.robots.iter().find(|r| r.agent.eq_ignore_ascii_case(agent))
    }

    /// True while at least one robot can still make progress.
    pub fn is_active(&self) -> bool {
        !self.complete && self.robots.iter().any(|r| r.status == RobotStatus::Moving)
    }

    fn all_done(&self) -> bool {
        self.robots.iter().all(|r| r.status == RobotStatus::Done)
    }

    fn blocked(&self, from: &RoomId, to: &RoomId) -> bool {
        self.config
            .failures
            .iter()
            .any(|f| f.blocks(from, to, self.tick))
    }
}

/// Places every robot at the first room of its plan. Returns the state and
/// the tick-0 events (plan completions for single-room plans).
pub fn start_execution(
    plans: &PlanSet,
    graph: &RoomGraph,
    config: ExecutionConfig,
) -> Result<(ExecutionState, Vec<ExecutionEvent>), SimError> {
    if config.ticks_per_edge == 0 {
        return Err(SimError::InvalidConfig);
    }
    if plans.is_empty() {
        return Err(SimError::InvalidPlanSet("no plans".into()));
    }
    for failure in &config.failures {
        failure.check(graph)?;
    }
    let mut robots = Vec::with_capacity(plans.len());
    let mut events = Vec::new();
    for (agent, path) in plans.iter() {
        if let Some(v) = validate_path(graph, path).first() {
            return Err(SimError::InvalidPlanSet(format!("{agent}: {v}")));
        }
        let path: Vec<RoomId> = path
            .iter()
            .map(|r| graph.resolve(r.as_str()).expect("validated").clone())
            .collect();
        let status = if path.len() == 1 {
            events.push(ExecutionEvent::robot(0, agent, EventKind::PlanComplete));
            RobotStatus::Done
        } else {
            RobotStatus::Moving
        };
        robots.push(RobotState {
            agent: agent.to_string(),
            room: path[0].clone(),
            remaining: path[1..].to_vec(),
            status,
            progress: 0,
        });
    }
    let mut state = ExecutionState {
        tick: 0,
        robots,
        config,
        complete: false,
    };
    if state.all_done() {
        state.complete = true;
        events.push(ExecutionEvent {
            tick: 0,
            agent: None,
            kind: EventKind::AllComplete,
        });
    }
    Ok((state, events))
}

/// Advances the simulation by one tick.
pub fn tick(state: &mut ExecutionState) -> Result<Vec<ExecutionEvent>, SimError> {
    if state.complete {
        return Err(SimError::AlreadyComplete);
    }
    if !state.is_active() {
        return Err(SimError::Stalled);
    }
    state.tick += 1;
    let now = state.tick;
    let ticks_per_edge = state.config.ticks_per_edge;
    let mut events = Vec::new();
    for i in 0..state.robots.len() {
        if state.robots[i].status != RobotStatus::Moving {
            continue;
        }
        let from = state.robots[i].room.clone();
        let to = state.robots[i].remaining[0].clone();
        if state.robots[i].progress == 0 {
            if state.blocked(&from, &to) {
                state.robots[i].status = RobotStatus::Blocked;
                events.push(ExecutionEvent::robot(
                    now,
                    &state.robots[i].agent,
                    EventKind::Blocked { from, to },
                ));
                continue;
            }
            events.push(ExecutionEvent::robot(
                now,
                &state.robots[i].agent,
                EventKind::Depart {
                    from,
                    to: to.clone(),
                },
            ));
        }
        let robot = &mut state.robots[i];
        robot.progress += 1;
        if robot.progress == ticks_per_edge {
            robot.progress = 0;
            robot.room = robot.remaining.remove(0);
            events.push(ExecutionEvent::robot(now, &robot.agent, EventKind::Arrive { room: to }));
            if robot.remaining.is_empty() {
                robot.status = RobotStatus::Done;
                events.push(ExecutionEvent::robot(now, &robot.agent, EventKind::PlanComplete));
            }
        }
    }
    if state.all_done() {
        state.complete = true;
        events.push(ExecutionEvent {
            tick: now,
            agent: None,
            kind: EventKind::AllComplete,
        });
    }
    Ok(events)
}

/// Runs until every robot is done or no robot can move, returning all
/// events including the tick-0 ones.
pub fn run_to_end(
    plans: &PlanSet,
    graph: &RoomGraph,
    config: ExecutionConfig,
) -> Result<(ExecutionState, Vec<ExecutionEvent>), SimError> {
    let (mut state, mut events) = start_execution(plans, graph, config)?;
    while state.is_active() {
        events.extend(tick(&mut state)?);
    }
    Ok((state, events))
}

/// Describes a blocked robot and where every robot currently stands.
pub fn failure_report(state: &ExecutionState, event: &ExecutionEvent) -> Result<String, SimError> {
    let EventKind::Blocked { from, to } = &event.kind else {
        return Err(SimError::NotAFailure);
    };
    let agent = event.agent.as_deref().unwrap_or("a robot");
    Ok(format!(
        "Execution stopped at tick {}: {agent} cannot move from {from} to {to} because the connection is blocked. {} Please re-plan from these rooms.",
        event.tick,
        positions_sentence(state)
    ))
}

/// `Current positions: Alpha in Hall, Bravo in Kitchen.`
pub fn positions_sentence(state: &ExecutionState) -> String {
    let list: Vec<String> = state
        .robots
        .iter()
        .map(|r| format!("{} in {}", r.agent, r.room))
        .collect();
    format!("Current positions: {}.", list.join(", "))
}
