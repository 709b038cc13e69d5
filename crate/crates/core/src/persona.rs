//! Agent identity prompts.
//!
//! Every agent's system message is assembled from four labelled sections in
//! a fixed order: identity, team roster, map and debate rules. Only the
//! identity section differs between agents of the same session.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgraph::{is_token, render_flowchart, RoomGraph, RoomId};

pub const IDENTITY_HEADER: &str = "=== IDENTITY ===";
pub const TEAM_HEADER: &str = "=== TEAM ===";
pub const MAP_HEADER: &str = "=== MAP ===";
pub const RULES_HEADER: &str = "=== RULES ===";

/// Literal marker an agent writes to hand the conversation to the supervisor.
pub const SUPERVISOR_MARKER: &str = "@supervisor";

const DEFAULT_GUIDANCE: &str = "\
You are one of several robots planning a mission together in a shared chat. \
A human supervisor sets the task and has the final say.
- Start every message with your own name followed by a colon, for example `Alpha: ...`.
- Keep messages short: a few sentences at most.
- Negotiate with the other agents and decide who does what. Do not simply agree to be polite: \
if a plan is wrong, inefficient or impossible on the map, point out mistakes and propose a fix.
- You can only move between rooms that are directly connected on the map, one hop at a time, \
starting from the room you are currently in.
- When the team has agreed, state each agent's final route on its own line in the form \
`PLAN <agent>: <room> -> <room> -> ...`, starting with that agent's current room. \
An agent that should stay where it is writes a single room, e.g. `PLAN Bravo: Hall`.
- End your final message with @supervisor so the supervisor can review the plans. \
Also write @supervisor if you need help or information you cannot work out yourselves.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PersonaError {
    #[error("agent {0} is not part of the roster")]
    ProfileNotInRoster(String),
    #[error("invalid agent name {0:?}")]
    InvalidName(String),
    #[error("duplicate agent name {0}")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: String,
    pub description: String,
    pub start_room: RoomId,
}

impl AgentProfile {
    pub fn new(name: impl Into<String>, description: impl Into<String>, start_room: RoomId) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            start_room,
        }
    }
}

/// Checks roster-level invariants: valid name tokens, case-insensitively unique.
pub fn check_roster(roster: &[AgentProfile]) -> Result<(), PersonaError> {
    let mut seen = std::collections::HashSet::new();
    for agent in roster {
        if !is_token(&agent.name) {
            return Err(PersonaError::InvalidName(agent.name.clone()));
        }
        if !seen.insert(agent.name.to_ascii_lowercase()) {
            return Err(PersonaError::DuplicateName(agent.name.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemPrompt {
    text: String,
}

impl SystemPrompt {
    pub fn text(&self) -> &str {
        &self.text
    }

    /// Returns the body of a labelled section, without its header line.
    pub fn section(&self, header: &str) -> Option<&str> {
        let start = self.text.find(header)? + header.len();
        let rest = self.text[start..].strip_prefix('\n').unwrap_or(&self.text[start..]);
        let end = [IDENTITY_HEADER, TEAM_HEADER, MAP_HEADER, RULES_HEADER]
            .iter()
            .filter_map(|h| rest.find(h))
            .min()
            .unwrap_or(rest.len());
        Some(rest[..end].trim_end_matches('\n'))
    }
}

pub fn default_debate_guidance() -> &'static str {
    DEFAULT_GUIDANCE
}

pub fn build_system_message(
    profile: &AgentProfile,
    roster: &[AgentProfile],
    graph: &RoomGraph,
    guidance: &str,
) -> Result<SystemPrompt, PersonaError> {
    if !roster.iter().any(|a| a.name.eq_ignore_ascii_case(&profile.name)) {
        return Err(PersonaError::ProfileNotInRoster(profile.name.clone()));
    }

    let mut text = String::new();
    text.push_str(IDENTITY_HEADER);
    text.push('\n');
    text.push_str(&format!("You are {}. {}\n", profile.name, profile.description.trim()));
    text.push_str(&format!("You are currently in {}.\n", profile.start_room));

    text.push_str(TEAM_HEADER);
    text.push('\n');
    for agent in roster {
        text.push_str(&format!(
            "- {} (starts in {}): {}\n",
            agent.name,
            agent.start_room,
            agent.description.trim()
        ));
    }

    text.push_str(MAP_HEADER);
    text.push('\n');
    text.push_str("Each line `A <-> B` means a robot can move directly between A and B.\n");
    text.push_str(&render_flowchart(graph));
    text.push('\n');

    text.push_str(RULES_HEADER);
    text.push('\n');
    text.push_str(guidance);
    Ok(SystemPrompt { text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::parse_environment;

    fn profile(name: &str, desc: &str, room: &str) -> AgentProfile {
        AgentProfile::new(name, desc, RoomId::new(room).unwrap())
    }

    #[test]
    fn guidance_contents() {
        let g = default_debate_guidance();
        assert!(g.contains("point out mistakes"));
        assert!(g.contains("PLAN"));
        assert!(g.contains(SUPERVISOR_MARKER));
        assert!(g.contains("Start every message with your own name followed by a colon"));
        assert_eq!(g, default_debate_guidance());
    }

    #[test]
    fn single_agent_prompt() {
        let graph = parse_environment("A <-> B").unwrap();
        let alpha = profile("Alpha", "A small cleaning robot with a bin.", "A");
        let p = build_system_message(&alpha, std::slice::from_ref(&alpha), &graph, default_debate_guidance())
            .unwrap();
        assert!(p.text().contains("Alpha"));
        assert!(p.text().contains("A small cleaning robot with a bin."));
        assert!(p.text().lines().any(|l| l == "A <-> B"));
    }

    #[test]
    fn roster_is_visible_and_sections_ordered() {
        let graph = parse_environment("A <-> B").unwrap();
        let alpha = profile("Alpha", "Fast scout.", "A");
        let bravo = profile("Bravo", "Carries heavy bins.", "B");
        let roster = [alpha.clone(), bravo.clone()];
        let p = build_system_message(&alpha, &roster, &graph, default_debate_guidance()).unwrap();
        assert!(p.text().contains("Bravo"));
        assert!(p.text().contains("Carries heavy bins."));
        let pos: Vec<_> = [IDENTITY_HEADER, TEAM_HEADER, MAP_HEADER, RULES_HEADER]
            .iter()
            .map(|h| p.text().find(h).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));

        let q = build_system_message(&bravo, &roster, &graph, default_debate_guidance()).unwrap();
        for header in [TEAM_HEADER, MAP_HEADER, RULES_HEADER] {
            assert_eq!(p.section(header), q.section(header));
        }
        assert_ne!(p.section(IDENTITY_HEADER), q.section(IDENTITY_HEADER));
    }

    #[test]
    fn custom_guidance_replaces_default() {
        let graph = parse_environment("A <-> B").unwrap();
        let alpha = profile("Alpha", "x", "A");
        let p = build_system_message(&alpha, std::slice::from_ref(&alpha), &graph, "G-XYZ").unwrap();
        assert!(p.text().contains("G-XYZ"));
        assert!(!p.text().contains(default_debate_guidance()));
        assert_eq!(p.section(RULES_HEADER), Some("G-XYZ"));
    }

    #[test]
    fn profile_must_be_in_roster() {
        let graph = parse_environment("A <-> B").unwrap();
        let alpha = profile("Alpha", "x", "A");
        let bravo = profile("Bravo", "y", "B");
        assert_eq!(
            build_system_message(&bravo, &[alpha], &graph, "g"),
            Err(PersonaError::ProfileNotInRoster("Bravo".into()))
        );
    }

    #[test]
    fn roster_checks() {
        let a = profile("Alpha", "x", "A");
        assert!(check_roster(&[a.clone(), profile("Bravo", "y", "A")]).is_ok());
        assert_eq!(
            check_roster(&[a.clone(), profile("ALPHA", "y", "A")]),
            Err(PersonaError::DuplicateName("ALPHA".into()))
        );
        assert_eq!(
            check_roster(&[profile("R2 D2", "y", "A")]),
            Err(PersonaError::InvalidName("R2 D2".into()))
        );
    }
}
