//! JSON-lines session records: one header line, then one line per message,
//! then one line per event-log entry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Session, SessionConfig, SessionEvent, SessionPhase};
use crate::dialogue::{Message, Transcript};
use crate::envgraph::RoomId;
use crate::planex::{PlanSet, ValidationReport};
use crate::sim::ExecutionState;

pub const DATA_DIR_ENV: &str = "PARLEY_DATA_DIR";
const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("corrupt session record: {0}")]
    CorruptRecord(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    id: String,
    config_hash: String,
    roster: Vec<String>,
    environment: String,
    config: SessionConfig,
    phase: SessionPhase,
    positions: IndexMap<String, RoomId>,
    rounds_used: u32,
    plan: Option<PlanSet>,
    validation: Option<ValidationReport>,
    execution: Option<ExecutionState>,
    message_count: usize,
    event_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(Box<Header>),
    Message(Message),
    Event(SessionEvent),
}

/// Directory of `<id>.jsonl` session records.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(DATA_DIR_ENV).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    /// Serialises a session without writing it anywhere.
    pub fn encode(session: &Session) -> String {
        let header = Header {
            version: RECORD_VERSION,
            id: session.id.clone(),
            config_hash: session.config_hash.clone(),
            roster: session.roster().to_vec(),
            environment: session.config.environment.clone(),
            config: session.config.clone(),
            phase: session.phase,
            positions: session.positions.clone(),
            rounds_used: session.rounds_used,
            plan: session.plan.clone(),
            validation: session.validation.clone(),
            execution: session.execution.clone(),
            message_count: session.transcript.len(),
            event_count: session.events.len(),
        };
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("record serialises"));
            out.push('\n');
        };
        push(&Line::Header(Box::new(header)));
        for m in session.transcript.messages() {
            push(&Line::Message(m.clone()));
        }
        for e in &session.events {
            push(&Line::Event(e.clone()));
        }
        out
    }

    pub fn decode(text: &str) -> Result<Session, StoreError> {
        let corrupt = |detail: String| StoreError::CorruptRecord(detail);
        let mut lines = text.lines();
        let header = match lines.next().map(serde_json::from_str::<Line>) {
            Some(Ok(Line::Header(h))) => h,
            Some(Ok(_)) => return Err(corrupt("first line is not a header".into())),
            Some(Err(e)) => return Err(corrupt(format!("header: {e}"))),
            None => return Err(corrupt("empty record".into())),
        };
        if header.version != RECORD_VERSION {
            return Err(corrupt(format!("unsupported version {}", header.version)));
        }
        let mut messages = Vec::with_capacity(header.message_count);
        let mut events = Vec::with_capacity(header.event_count);
        for (i, line) in lines.enumerate() {
            match serde_json::from_str::<Line>(line) {
                Ok(Line::Message(m)) if events.is_empty() => messages.push(m),
                Ok(Line::Event(e)) => events.push(e),
                Ok(_) => return Err(corrupt(format!("line {}: unexpected record", i + 2))),
                Err(e) => return Err(corrupt(format!("line {}: {e}", i + 2))),
            }
        }
        if !text.ends_with('\n') {
            return Err(corrupt("record is truncated".into()));
        }
        if messages.len() != header.message_count || events.len() != header.event_count {
            return Err(corrupt(format!(
                "expected {} messages and {} events, found {} and {}",
                header.message_count,
                header.event_count,
                messages.len(),
                events.len()
            )));
        }
        if events.iter().enumerate().any(|(i, e)| e.seq != i as u64) {
            return Err(corrupt("event sequence is not contiguous".into()));
        }
        if header.config.hash() != header.config_hash {
            return Err(corrupt("config hash mismatch".into()));
        }
        if header.config.environment != header.environment {
            return Err(corrupt("environment does not match config".into()));
        }

        let mut session = Session::create_with_id(header.config, header.id)
            .map_err(|e| corrupt(format!("config no longer valid: {e}")))?;
        if session.roster() != header.roster.as_slice() {
            return Err(corrupt("roster does not match config".into()));
        }
        session.transcript = Transcript::from_messages(header.roster, messages)
            .map_err(|e| corrupt(format!("transcript: {e}")))?;
        session.phase = header.phase;
        session.positions = header.positions;
        session.rounds_used = header.rounds_used;
        session.plan = header.plan;
        session.validation = header.validation;
        session.execution = header.execution;
        session.events = events;
        Ok(session)
    }

    /// Writes the session record atomically (temp file + rename).
    pub fn persist(&self, session: &Session) -> Result<PathBuf, StoreError> {
        let unavailable = |e: std::io::Error| StoreError::StorageUnavailable(e.to_string());
        if !valid_id(session.id()) {
            return Err(StoreError::StorageUnavailable(format!(
                "session id {:?} is not a valid file name",
                session.id()
            )));
        }
        fs::create_dir_all(&self.dir).map_err(unavailable)?;
        let path = self.path_for(session.id());
        let tmp = self.dir.join(format!(".{}.jsonl.tmp", session.id()));
        let mut file = fs::File::create(&tmp).map_err(unavailable)?;
        file.write_all(Self::encode(session).as_bytes())
            .and_then(|_| file.sync_all())
            .map_err(unavailable)?;
        fs::rename(&tmp, &path).map_err(unavailable)?;
        Ok(path)
    }

    pub fn restore(&self, id: &str) -> Result<Session, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        let path = self.path_for(id);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownSession(id.to_string()))
            }
            Err(e) => return Err(StoreError::StorageUnavailable(e.to_string())),
        };
        let session = Self::decode(&text)?;
        if session.id() != id {
            return Err(StoreError::CorruptRecord(format!(
                "record holds session {}",
                session.id()
            )));
        }
        Ok(session)
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::StorageUnavailable(e.to_string())),
        };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name.strip_suffix(".jsonl")?;
                valid_id(id).then(|| id.to_string())
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
