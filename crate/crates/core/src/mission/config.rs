use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::envgraph::{EnvError, RoomId};
use crate::persona::{AgentProfile, PersonaError};
use crate::provider::{
    CompletionParams, CompletionProvider, ProviderScript, RemoteProvider, ScriptedProvider,
    ENDPOINT_ENV, KEY_ENV,
};
use crate::sim::{ExecutionConfig, SimError};

pub const DEFAULT_MAX_ROUNDS: u32 = 12;

/// Which completion backend a session talks to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    Scripted {
        #[serde(default)]
        responses: Vec<String>,
    },
    /// Endpoint falls back to the `PARLEY_PROVIDER_URL` environment
    /// variable; the key is only ever read from `PARLEY_PROVIDER_KEY`.
    Remote {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
    },
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Scripted {
            responses: Vec::new(),
        }
    }
}

impl ProviderSpec {
    pub fn build(&self) -> Box<dyn CompletionProvider> {
        match self {
            ProviderSpec::Scripted { responses } => Box::new(ScriptedProvider::new(
                ProviderScript::new(responses.iter().cloned()),
            )),
            ProviderSpec::Remote { endpoint } => Box::new(RemoteProvider::new(
                endpoint
                    .clone()
                    .or_else(|| std::env::var(ENDPOINT_ENV).ok()),
                std::env::var(KEY_ENV).ok(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub agents: Vec<AgentProfile>,
    /// Environment DSL source.
    pub environment: String,
    #[serde(default)]
    pub provider: ProviderSpec,
    #[serde(default)]
    pub params: CompletionParams,
    /// Speaking order; defaults to the agent declaration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_order: Option<Vec<String>>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    #[serde(default)]
    pub auto_approve: bool,
    #[serde(default)]
    pub execution: ExecutionConfig,
    /// Replaces the default debate guidance in every system prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<String>,
}

fn default_max_rounds() -> u32 {
    DEFAULT_MAX_ROUNDS
}

impl SessionConfig {
    pub fn new(agents: Vec<AgentProfile>, environment: impl Into<String>) -> Self {
        Self {
            agents,
            environment: environment.into(),
            provider: ProviderSpec::default(),
            params: CompletionParams::default(),
            turn_order: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
            auto_approve: false,
            execution: ExecutionConfig::default(),
            guidance: None,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("roster is empty")]
    EmptyRoster,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error("start room {room} of {agent} is not on the map")]
    UnknownStartRoom { agent: String, room: RoomId },
    #[error("turn order must list every agent exactly once: {0}")]
    TurnOrder(String),
    #[error("invalid completion parameters: {0}")]
    Params(String),
    #[error("max_rounds must be positive")]
    MaxRounds,
    #[error("invalid execution config: {0}")]
    Execution(SimError),
}

impl ConfigError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::EmptyRoster => "empty_roster",
            ConfigError::Env(EnvError::Syntax { .. }) => "env_syntax",
            ConfigError::Env(EnvError::SelfLoop { .. }) => "env_self_loop",
            ConfigError::Env(EnvError::EmptyEnvironment) => "env_empty",
            ConfigError::Env(EnvError::UnknownRoom(_)) => "unknown_room",
            ConfigError::Persona(PersonaError::DuplicateName(_)) => "duplicate_agent",
            ConfigError::Persona(_) => "invalid_agent",
            ConfigError::UnknownStartRoom { .. } => "unknown_start_room",
            ConfigError::TurnOrder(_) => "invalid_turn_order",
            ConfigError::Params(_) => "invalid_params",
            ConfigError::MaxRounds => "invalid_max_rounds",
            ConfigError::Execution(_) => "invalid_execution",
        }
    }

    /// Source line for environment errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Env(EnvError::Syntax { line, .. })
            | ConfigError::Env(EnvError::SelfLoop { line }) => Some(*line),
            _ => None,
        }
    }
}
