//! Session registry. Each session lives behind its own mutex, so operations
//! on one session are totally ordered while distinct sessions proceed in
//! parallel. New events are broadcast while the lock is held, which lets a
//! stream subscriber take a history snapshot and subscribe atomically.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use parley_core::dialogue::Author;
use parley_core::mission::{ProviderSpec, SessionStore, StoreError};
use parley_core::provider::CompletionProvider;
use parley_core::{MissionError, Session, SessionConfig, SessionEvent, SessionPhase};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

const BROADCAST_CAPACITY: usize = 256;

/// A mission operation as issued through the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    SubmitTask { text: String },
    Feedback { text: String },
    Advance,
    Approve,
    StepExecution,
}

impl Operation {
    pub fn apply(
        &self,
        session: &mut Session,
        provider: &mut dyn CompletionProvider,
    ) -> Result<(), MissionError> {
        match self {
            Operation::SubmitTask { text } => session.submit_task(text),
            Operation::Feedback { text } => session.supervisor_feedback(text),
            Operation::Advance => session.advance_discussion(provider).map(|_| ()),
            Operation::Approve => session.approve(),
            Operation::StepExecution => session.step_execution().map(|_| ()),
        }
    }
}

/// Re-runs an operation log against a fresh session.
pub fn replay(config: SessionConfig, id: &str, ops: &[Operation]) -> Result<Session, MissionError> {
    let mut session = Session::create_with_id(config.clone(), id)?;
    let mut provider = config.provider.build();
    for op in ops {
        // errors were part of the original trajectory too
        let _ = op.apply(&mut session, provider.as_mut());
    }
    Ok(session)
}

pub struct SessionInner {
    pub session: Session,
    provider: Box<dyn CompletionProvider>,
    ops: Vec<Operation>,
}

impl SessionInner {
    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }
}

pub struct SessionSlot {
    inner: Mutex<SessionInner>,
    tx: broadcast::Sender<SessionEvent>,
}

impl SessionSlot {
    fn new(session: Session, provider: Box<dyn CompletionProvider>) -> Self {
        let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
        Self {
            inner: Mutex::new(SessionInner {
                session,
                provider,
                ops: Vec::new(),
            }),
            tx,
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, SessionInner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// History after `after` plus a receiver for everything newer.
    pub fn subscribe(&self, after: Option<u64>) -> (Vec<SessionEvent>, broadcast::Receiver<SessionEvent>) {
        let inner = self.lock();
        (inner.session.events_after(after).to_vec(), self.tx.subscribe())
    }

    pub fn events_after(&self, after: Option<u64>) -> Vec<SessionEvent> {
        self.lock().session.events_after(after).to_vec()
    }
}

/// Exclusive access to one session for a batch of operations. Each `apply`
/// broadcasts and persists the events it appended.
pub struct SessionGuard<'a> {
    slot: &'a SessionSlot,
    inner: MutexGuard<'a, SessionInner>,
    store: Option<&'a SessionStore>,
}

impl SessionGuard<'_> {
    pub fn session(&self) -> &Session {
        &self.inner.session
    }

    pub fn apply(&mut self, op: Operation) -> Result<Vec<SessionEvent>, MissionError> {
        let before = self.inner.session.events().len();
        let inner = &mut *self.inner;
        let result = op.apply(&mut inner.session, inner.provider.as_mut());
        let new: Vec<SessionEvent> = inner.session.events()[before..].to_vec();
        if !new.is_empty() || result.is_ok() {
            inner.ops.push(op);
        }
        for event in &new {
            // no subscribers is fine
            let _ = self.slot.tx.send(event.clone());
        }
        if !new.is_empty() {
            if let Some(store) = self.store {
                if let Err(e) = store.persist(&inner.session) {
                    tracing::error!(error = %e, id = inner.session.id(), "failed to persist session");
                }
            }
        }
        result.map(|_| new)
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    store: Option<SessionStore>,
}

impl AppState {
    pub fn new(store: Option<SessionStore>) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            store,
        }
    }

    pub fn store(&self) -> Option<&SessionStore> {
        self.store.as_ref()
    }

    /// Loads every stored session. Scripted providers skip the responses
    /// already consumed by agent messages in the transcript.
    pub fn load_stored(&self) -> Result<usize, StoreError> {
        let Some(store) = &self.store else {
            return Ok(0);
        };
        let mut loaded = 0;
        for id in store.list()? {
            let session = match store.restore(&id) {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!(%id, error = %e, "skipping stored session");
                    continue;
                }
            };
            let provider = restored_provider(&session);
            self.insert(session, provider);
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn insert(&self, session: Session, provider: Box<dyn CompletionProvider>) -> Arc<SessionSlot> {
        let id = session.id().to_string();
        if let Some(store) = &self.store {
            if let Err(e) = store.persist(&session) {
                tracing::error!(error = %e, %id, "failed to persist session");
            }
        }
        let slot = Arc::new(SessionSlot::new(session, provider));
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, slot.clone());
        slot
    }

    pub fn create(&self, config: SessionConfig) -> Result<Arc<SessionSlot>, MissionError> {
        let provider = config.provider.build();
        let session = Session::create(config)?;
        Ok(self.insert(session, provider))
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
    }

    pub fn guard<'a>(&'a self, slot: &'a SessionSlot) -> SessionGuard<'a> {
        SessionGuard {
            slot,
            inner: slot.lock(),
            store: self.store.as_ref(),
        }
    }
}

fn restored_provider(session: &Session) -> Box<dyn CompletionProvider> {
    match &session.config().provider {
        ProviderSpec::Scripted { responses } => {
            let spoken = session
                .transcript()
                .messages()
                .iter()
                .filter(|m| matches!(m.author, Author::Agent(_)))
                .count();
            ProviderSpec::Scripted {
                responses: responses.iter().skip(spoken).cloned().collect(),
            }
            .build()
        }
        other => other.build(),
    }
}

/// Phases in which `step` can make progress.
pub fn steppable(phase: SessionPhase, auto_approve: bool) -> bool {
    matches!(phase, SessionPhase::Discussion | SessionPhase::Executing)
        || (phase == SessionPhase::AwaitingApproval && auto_approve)
}
