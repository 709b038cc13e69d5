//! Shared conversation log, turn scheduling and per-agent projections.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgraph::is_token_char;
use crate::persona::{SystemPrompt, SUPERVISOR_MARKER};
use crate::provider::{ProviderMessage, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialogueError {
    #[error("message body is empty")]
    EmptyBody,
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("stored message {0} does not match its normalised form")]
    Inconsistent(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Author {
    Supervisor,
    Agent(String),
    Executor,
    System,
}

impl fmt::Display for Author {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Author::Supervisor => f.write_str("supervisor"),
            Author::Agent(name) => f.write_str(name),
            Author::Executor => f.write_str("executor"),
            Author::System => f.write_str("system"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub author: Author,
    pub body: String,
}

/// Append-only message log. Knows the roster so agent authors can be
/// checked and their name tags normalised to the stored spelling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    roster: Vec<String>,
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new(roster: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            roster: roster.into_iter().map(Into::into).collect(),
            messages: Vec::new(),
        }
    }

    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn roster_name(&self, name: &str) -> Option<&str> {
        self.roster
            .iter()
            .find(|n| n.eq_ignore_ascii_case(name))
            .map(String::as_str)
    }

    /// Appends a message. Agent bodies are normalised to start with
    /// `Name: ` using the roster spelling of the name.
    pub fn append(&mut self, author: Author, body: &str) -> Result<&Message, DialogueError> {
        if body.trim().is_empty() {
            return Err(DialogueError::EmptyBody);
        }
        let (author, body) = match author {
            Author::Agent(name) => {
                let stored = self
                    .roster_name(&name)
                    .ok_or(DialogueError::UnknownAgent(name))?
                    .to_string();
                let body = name_tagged(&stored, body).ok_or(DialogueError::EmptyBody)?;
                (Author::Agent(stored), body)
            }
            other => (other, body.to_string()),
        };
        self.messages.push(Message {
            seq: self.messages.len() as u64,
            author,
            body,
        });
        Ok(self.messages.last().expect("just pushed"))
    }

    /// Rebuilds a transcript from stored messages, checking the invariants.
    pub fn from_messages(
        roster: Vec<String>,
        messages: Vec<Message>,
    ) -> Result<Self, DialogueError> {
        let mut t = Transcript::new(roster);
        for m in messages {
            let appended = t.append(m.author.clone(), &m.body)?;
            if appended.body != m.body || appended.seq != m.seq {
                return Err(DialogueError::Inconsistent(m.seq));
            }
        }
        Ok(t)
    }
}

/// Returns `Name: rest` where `rest` is the body with any existing
/// (case-insensitive) name tag removed, or `None` if nothing remains.
fn name_tagged(name: &str, body: &str) -> Option<String> {
    let trimmed = body.trim_start();
    let rest = trimmed
        .get(..name.len())
        .filter(|prefix| prefix.eq_ignore_ascii_case(name))
        .and_then(|_| trimmed[name.len()..].trim_start().strip_prefix(':'))
        .map(str::trim_start)
        .unwrap_or(trimmed);
    if rest.trim().is_empty() {
        None
    } else {
        Some(format!("{name}: {rest}"))
    }
}

pub fn append_message<'t>(
    transcript: &'t mut Transcript,
    author: Author,
    body: &str,
) -> Result<&'t Message, DialogueError> {
    transcript.append(author, body)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnPolicy {
    RoundRobin { order: Vec<String> },
}

impl TurnPolicy {
    pub fn order(&self) -> &[String] {
        match self {
            TurnPolicy::RoundRobin { order } => order,
        }
    }

    /// True if `name` closes a full rotation.
    pub fn is_last(&self, name: &str) -> bool {
        self.order()
            .last()
            .is_some_and(|last| last.eq_ignore_ascii_case(name))
    }
}

/// The agent after the most recent agent speaker; non-agent messages do not
/// advance the rotation.
pub fn next_speaker<'p>(policy: &'p TurnPolicy, transcript: &Transcript) -> &'p str {
    let order = policy.order();
    let last_agent = transcript.messages().iter().rev().find_map(|m| match &m.author {
        Author::Agent(name) => Some(name),
        _ => None,
    });
    let next = last_agent
        .and_then(|name| order.iter().position(|n| n.eq_ignore_ascii_case(name)))
        .map(|i| (i + 1) % order.len())
        .unwrap_or(0);
    &order[next]
}

/// The conversation as seen by one agent: its own messages are the
/// assistant's, everything else arrives as user input with name tags intact.
pub fn project_view(
    transcript: &Transcript,
    agent: &str,
    prompt: &SystemPrompt,
) -> Result<Vec<ProviderMessage>, DialogueError> {
    let agent = transcript
        .roster_name(agent)
        .ok_or_else(|| DialogueError::UnknownAgent(agent.to_string()))?;
    let mut view = Vec::with_capacity(transcript.len() + 1);
    view.push(ProviderMessage::new(Role::System, prompt.text()));
    for m in transcript.messages() {
        let role = match &m.author {
            Author::Agent(name) if name == agent => Role::Assistant,
            _ => Role::User,
        };
        view.push(ProviderMessage::new(role, &m.body));
    }
    Ok(view)
}

/// True if the body contains `@supervisor` as a standalone token.
pub fn detect_supervisor_call(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    let marker = SUPERVISOR_MARKER;
    let mut from = 0;
    while let Some(pos) = lower[from..].find(marker) {
        let start = from + pos;
        let end = start + marker.len();
        let before_ok = lower[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_token_char(c));
        let after_ok = lower[end..].chars().next().is_none_or(|c| !is_token_char(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + 1;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster() -> Transcript {
        Transcript::new(["Alpha", "Bravo"])
    }

    fn policy() -> TurnPolicy {
        TurnPolicy::RoundRobin {
            order: vec!["Alpha".into(), "Bravo".into()],
        }
    }

    #[test]
    fn append_keeps_existing_tag() {
        let mut t = roster();
        let m = t
            .append(Author::Agent("Alpha".into()), "Alpha: I will take the Hall")
            .unwrap();
        assert_eq!(m.seq, 0);
        assert_eq!(m.body, "Alpha: I will take the Hall");
    }

    #[test]
    fn append_repairs_missing_or_miscased_tag() {
        let mut t = roster();
        let m = t.append(Author::Agent("Alpha".into()), "I will take the Hall").unwrap();
        assert_eq!(m.body, "Alpha: I will take the Hall");
        let m = t.append(Author::Agent("bravo".into()), "BRAVO:ok").unwrap();
        assert_eq!(m.body, "Bravo: ok");
        assert_eq!(m.author, Author::Agent("Bravo".into()));
        let m = t.append(Author::Agent("Alpha".into()), "Alphabet soup").unwrap();
        assert_eq!(m.body, "Alpha: Alphabet soup");
        assert_eq!(t.messages().iter().map(|m| m.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn append_non_agent_untouched() {
        let mut t = roster();
        let m = t.append(Author::Supervisor, "clean the kitchen").unwrap();
        assert_eq!(m.body, "clean the kitchen");
    }

    #[test]
    fn append_errors() {
        let mut t = roster();
        assert_eq!(t.append(Author::Supervisor, "  \n"), Err(DialogueError::EmptyBody));
        assert_eq!(
            t.append(Author::Agent("Alpha".into()), "Alpha:   "),
            Err(DialogueError::EmptyBody)
        );
        assert_eq!(
            t.append(Author::Agent("Zulu".into()), "hi"),
            Err(DialogueError::UnknownAgent("Zulu".into()))
        );
        assert!(t.is_empty());
    }

    #[test]
    fn rotation() {
        let mut t = roster();
        assert_eq!(next_speaker(&policy(), &t), "Alpha");
        t.append(Author::Agent("Alpha".into()), "x").unwrap();
        assert_eq!(next_speaker(&policy(), &t), "Bravo");
        t.append(Author::Supervisor, "hold on").unwrap();
        assert_eq!(next_speaker(&policy(), &t), "Bravo");
        t.append(Author::Agent("Bravo".into()), "y").unwrap();
        assert_eq!(next_speaker(&policy(), &t), "Alpha");
    }

    #[test]
    fn projection_roles() {
        let prompt_t = roster();
        let prompt = {
            use crate::envgraph::{parse_environment, RoomId};
            use crate::persona::{build_system_message, AgentProfile};
            let g = parse_environment("A <-> B").unwrap();
            let b = AgentProfile::new("Bravo", "x", RoomId::new("A").unwrap());
            build_system_message(&b, std::slice::from_ref(&b), &g, "rules").unwrap()
        };
        let view = project_view(&prompt_t, "Bravo", &prompt).unwrap();
        assert_eq!(view.len(), 1);
        assert_eq!(view[0].role, Role::System);

        let mut t = roster();
        t.append(Author::Agent("Alpha".into()), "a").unwrap();
        t.append(Author::Agent("Bravo".into()), "b").unwrap();
        t.append(Author::Supervisor, "s").unwrap();
        let roles: Vec<_> = project_view(&t, "Bravo", &prompt)
            .unwrap()
            .iter()
            .map(|m| m.role)
            .collect();
        assert_eq!(roles, vec![Role::System, Role::User, Role::Assistant, Role::User]);
        let alpha_view = project_view(&t, "Alpha", &prompt).unwrap();
        assert_eq!(alpha_view[1].role, Role::Assistant);
        assert_eq!(alpha_view[1].content, "Alpha: a");
        assert_eq!(
            project_view(&t, "Zulu", &prompt),
            Err(DialogueError::UnknownAgent("Zulu".into()))
        );
    }

    #[test]
    fn supervisor_call_detection() {
        assert!(detect_supervisor_call("Alpha: plans final. @supervisor"));
        assert!(!detect_supervisor_call("Alpha: email supervisor@site.com"));
        assert!(detect_supervisor_call("Alpha: @SUPERVISOR please review"));
        assert!(!detect_supervisor_call("Alpha: @supervisors"));
        assert!(!detect_supervisor_call("Alpha: x@supervisor"));
        assert!(detect_supervisor_call("(@supervisor)"));
        assert!(detect_supervisor_call("@Supervisor"));
        assert!(!detect_supervisor_call("no marker"));
    }

    #[test]
    fn rebuild_from_messages() {
        let mut t = roster();
        t.append(Author::Supervisor, "task").unwrap();
        t.append(Author::Agent("Alpha".into()), "ok").unwrap();
        let rebuilt =
            Transcript::from_messages(t.roster().to_vec(), t.messages().to_vec()).unwrap();
        assert_eq!(rebuilt, t);
    }
}
