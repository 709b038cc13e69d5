use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dialogue::Message;
use crate::envgraph::RoomId;
use crate::planex::ValidationReport;
use crate::sim::ExecutionEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    Setup,
    Discussion,
    AwaitingApproval,
    Executing,
    Completed,
    Aborted,
}

impl SessionPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionPhase::Setup => "setup",
            SessionPhase::Discussion => "discussion",
            SessionPhase::AwaitingApproval => "awaiting_approval",
            SessionPhase::Executing => "executing",
            SessionPhase::Completed => "completed",
            SessionPhase::Aborted => "aborted",
        }
    }

    pub const ALL: [SessionPhase; 6] = [
        SessionPhase::Setup,
        SessionPhase::Discussion,
        SessionPhase::AwaitingApproval,
        SessionPhase::Executing,
        SessionPhase::Completed,
        SessionPhase::Aborted,
    ];

    /// The permitted transition relation.
    pub fn can_transition(self, to: SessionPhase) -> bool {
        use SessionPhase::*;
        matches!(
            (self, to),
            (Setup, Discussion)
                | (Discussion, AwaitingApproval)
                | (AwaitingApproval, Discussion)
                | (AwaitingApproval, Executing)
                | (Executing, Discussion)
                | (Executing, Completed)
        ) || (to == Aborted && self != Aborted)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionPhase::Completed | SessionPhase::Aborted)
    }
}

impl fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One entry of a session's event log. Serialises as
/// `{"seq":N,"type":"...","payload":{...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: SessionEventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum SessionEventKind {
    PhaseChanged {
        from: Option<SessionPhase>,
        to: SessionPhase,
        reason: String,
    },
    MessageAppended(Message),
    PlanValidated {
        plans: IndexMap<String, Vec<RoomId>>,
        report: ValidationReport,
    },
    ExecutionEvent(ExecutionEvent),
    Error {
        code: String,
        detail: String,
    },
}

impl SessionEventKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            SessionEventKind::PhaseChanged { .. } => "phase_changed",
            SessionEventKind::MessageAppended(_) => "message_appended",
            SessionEventKind::PlanValidated { .. } => "plan_validated",
            SessionEventKind::ExecutionEvent(_) => "execution_event",
            SessionEventKind::Error { .. } => "error",
        }
    }
}

impl SessionEvent {
    /// The payload object on its own.
    pub fn payload(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(&self.kind).expect("event serialises");
        value
            .get_mut("payload")
            .map(serde_json::Value::take)
            .unwrap_or(serde_json::Value::Null)
    }
}
