//! Conversational mission planning for a small robot fleet.
//!
//! Language-model agents debate a task in a shared, name-tagged chat under a
//! human supervisor, commit per-robot room routes as `PLAN` lines, and the
//! approved routes are executed on a discrete-event simulator that reports
//! blocked connections back into the conversation for replanning.
//!
//! Modules, bottom-up:
//! - [`envgraph`]: room-graph DSL, rendering and path queries
//! - [`persona`]: per-agent system prompts
//! - [`dialogue`]: transcript, turn order, per-agent projections
//! - [`provider`]: completion backends (scripted and remote)
//! - [`planex`]: PLAN-line extraction and validation
//! - [`sim`]: fleet simulator
//! - [`mission`]: the session state machine and its persistence

pub mod dialogue;
pub mod envgraph;
pub mod mission;
pub mod persona;
pub mod planex;
pub mod provider;
pub mod sim;

pub use mission::{MissionError, Session, SessionConfig, SessionEvent, SessionEventKind, SessionPhase};
