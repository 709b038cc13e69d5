//! Plan extraction from conversation text.
//!
//! Agents commit routes with lines of the form
//! `PLAN <agent>: <room> -> <room> -> ...`. The keyword is case-insensitive
//! and may appear anywhere in a line; text after the route (such as a
//! supervisor call) is ignored. The most recent PLAN for an agent wins.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Transcript;
use crate::envgraph::{is_token, validate_path, PathViolation, RoomGraph, RoomId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no PLAN line for {}", .0.join(", "))]
    MissingPlan(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanBlock {
    pub agent: String,
    pub path: Vec<RoomId>,
}

/// A PLAN-like line that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IgnoredLine {
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanScan {
    pub blocks: Vec<PlanBlock>,
    pub ignored: Vec<IgnoredLine>,
}

fn plan_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\bPLAN\s+([a-z][a-z0-9_-]*)\s*:\s*([a-z][a-z0-9_-]*(?:\s*->\s*[a-z][a-z0-9_-]*)*)",
        )
        .expect("plan regex")
    })
}

fn keyword_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bPLAN\b").expect("keyword regex"))
}

fn parse_match(agent: &str, route: &str, tail: &str) -> Option<PlanBlock> {
    if !is_token(agent) || tail.trim_start().starts_with("->") {
        return None;
    }
    let path = route
        .split("->")
        .map(|r| RoomId::new(r.trim()).ok())
        .collect::<Option<Vec<_>>>()?;
    Some(PlanBlock {
        agent: agent.to_string(),
        path,
    })
}

/// Scans text for PLAN lines, also reporting malformed ones.
pub fn scan_plan_lines(body: &str) -> PlanScan {
    let mut scan = PlanScan::default();
    for (i, raw) in body.lines().enumerate() {
        // `-` is a token character, so split arrows off first: `A->B`.
        let line = raw.replace("->", " -> ");
        let line = line.as_str();
        let mut parsed_at = Vec::new();
        for caps in plan_regex().captures_iter(line) {
            let whole = caps.get(0).expect("match");
            let tail = &line[whole.end()..];
            if let Some(block) = parse_match(&caps[1], &caps[2], tail) {
                parsed_at.push(whole.start());
                scan.blocks.push(block);
            }
        }
        if keyword_regex()
            .find_iter(line)
            .any(|m| !parsed_at.contains(&m.start()))
        {
            scan.ignored.push(IgnoredLine {
                line: i + 1,
                text: raw.to_string(),
            });
        }
    }
    scan
}

pub fn extract_plan_blocks(body: &str) -> Vec<PlanBlock> {
    let scan = scan_plan_lines(body);
    for ignored in &scan.ignored {
        tracing::debug!(line = ignored.line, text = %ignored.text, "ignored malformed PLAN line");
    }
    scan.blocks
}

/// Per-agent room paths, in roster order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlanSet {
    plans: IndexMap<String, Vec<RoomId>>,
}

impl PlanSet {
    pub fn new(plans: IndexMap<String, Vec<RoomId>>) -> Self {
        Self { plans }
    }

    pub fn get(&self, agent: &str) -> Option<&[RoomId]> {
        self.plans
            .iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(agent))
            .map(|(_, path)| path.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RoomId])> + '_ {
        self.plans.iter().map(|(n, p)| (n.as_str(), p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    /// Rewrites room names to the graph's stored spelling where they resolve.
    pub fn resolved(&self, graph: &RoomGraph) -> PlanSet {
        let plans = self
            .plans
            .iter()
            .map(|(agent, path)| {
                let path = path
                    .iter()
                    .map(|r| graph.resolve(r.as_str()).cloned().unwrap_or_else(|| r.clone()))
                    .collect();
                (agent.clone(), path)
            })
            .collect();
        PlanSet { plans }
    }
}

/// Latest PLAN per roster agent (keyed by roster spelling), plus the agents
/// that have none.
pub fn latest_plans(
    transcript: &Transcript,
    roster: &[String],
) -> (IndexMap<String, Vec<RoomId>>, Vec<String>) {
    let mut latest: HashMap<String, Vec<RoomId>> = HashMap::new();
    for message in transcript.messages().iter().rev() {
        // later blocks in the same message are more recent
        for block in extract_plan_blocks(&message.body).into_iter().rev() {
            latest.entry(block.agent.to_ascii_lowercase()).or_insert(block.path);
        }
        if roster.iter().all(|n| latest.contains_key(&n.to_ascii_lowercase())) {
            break;
        }
    }
    let mut found = IndexMap::new();
    let mut missing = Vec::new();
    for name in roster {
        match latest.remove(&name.to_ascii_lowercase()) {
            Some(path) => {
                found.insert(name.clone(), path);
            }
            None => missing.push(name.clone()),
        }
    }
    (found, missing)
}

pub fn extract_plan_set(transcript: &Transcript, roster: &[String]) -> Result<PlanSet, PlanError> {
    let (plans, missing) = latest_plans(transcript, roster);
    if missing.is_empty() {
        Ok(PlanSet { plans })
    } else {
        Err(PlanError::MissingPlan(missing))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartMismatch {
    pub expected: RoomId,
    pub found: RoomId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentReport {
    pub violations: Vec<PathViolation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_mismatch: Option<StartMismatch>,
}

impl AgentReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.start_mismatch.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub per_agent: IndexMap<String, AgentReport>,
    pub missing_agents: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("All plans are valid.");
        }
        writeln!(f, "Plan rejected. Please fix the following and restate every PLAN line:")?;
        let mut lines = Vec::new();
        for name in &self.missing_agents {
            lines.push(format!("- {name}: no PLAN line found"));
        }
        for (name, report) in &self.per_agent {
            if let Some(m) = &report.start_mismatch {
                lines.push(format!(
                    "- {name}: plan starts at {} but {name} is in {}",
                    m.found, m.expected
                ));
            }
            for v in &report.violations {
                lines.push(format!("- {name}: {v}"));
            }
        }
        f.write_str(&lines.join("\n"))
    }
}

/// Validates a (possibly partial) map of plans; `missing` lists agents with
/// no plan at all.
pub fn validate_plans<'a>(
    plans: impl IntoIterator<Item = (&'a str, &'a [RoomId])>,
    missing: Vec<String>,
    graph: &RoomGraph,
    positions: &IndexMap<String, RoomId>,
) -> ValidationReport {
    let mut per_agent = IndexMap::new();
    for (agent, path) in plans {
        let violations = validate_path(graph, path);
        let position = positions
            .iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(agent))
            .map(|(_, room)| room);
        let start_mismatch = match (position, path.first()) {
            (Some(expected), Some(found)) if !expected.matches(found) => Some(StartMismatch {
                expected: expected.clone(),
                found: found.clone(),
            }),
            _ => None,
        };
        per_agent.insert(
            agent.to_string(),
            AgentReport {
                violations,
                start_mismatch,
            },
        );
    }
    let ok = missing.is_empty() && per_agent.values().all(AgentReport::is_clean);
    ValidationReport {
        ok,
        per_agent,
        missing_agents: missing,
    }
}

/// Checks every plan against the graph and each agent's current room.
/// `positions` is expected to cover every plan agent; agents without a
/// position are only checked against the graph.
pub fn validate_plan_set(
    plans: &PlanSet,
    graph: &RoomGraph,
    positions: &IndexMap<String, RoomId>,
) -> ValidationReport {
    validate_plans(plans.iter(), Vec::new(), graph, positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::Author;
    use crate::envgraph::parse_environment;

    fn rooms(names: &[&str]) -> Vec<RoomId> {
        names.iter().map(|s| RoomId::new(*s).unwrap()).collect()
    }

    fn block(agent: &str, path: &[&str]) -> PlanBlock {
        PlanBlock {
            agent: agent.into(),
            path: rooms(path),
        }
    }

    #[test]
    fn extracts_inline_plan() {
        assert_eq!(
            extract_plan_blocks("Alpha: done. PLAN Alpha: Kitchen -> Hall"),
            vec![block("Alpha", &["Kitchen", "Hall"])]
        );
        assert!(extract_plan_blocks("no plans here").is_empty());
        assert_eq!(
            extract_plan_blocks("PLAN Bravo: Office"),
            vec![block("Bravo", &["Office"])]
        );
    }

    #[test]
    fn whitespace_case_and_trailing_text() {
        assert_eq!(
            extract_plan_blocks("   plan   alpha :kitchen->HALL   @supervisor  "),
            vec![block("alpha", &["kitchen", "HALL"])]
        );
        assert_eq!(
            extract_plan_blocks("Bravo: agreed.\nPLAN Bravo: Hall -> Kitchen.\nPLAN Alpha: Kitchen"),
            vec![block("Bravo", &["Hall", "Kitchen"]), block("Alpha", &["Kitchen"])]
        );
    }

    #[test]
    fn malformed_lines_are_diagnosed() {
        let scan = scan_plan_lines("PLAN Alpha: Kitchen -> \nPLAN: nothing\nour plan is fine");
        assert!(scan.blocks.is_empty());
        assert_eq!(
            scan.ignored.iter().map(|l| l.line).collect::<Vec<_>>(),
            vec![1, 2]
        );
        let scan = scan_plan_lines("PLAN Alpha: Kitchen -> 2ndFloor");
        assert!(scan.blocks.is_empty());
        assert_eq!(scan.ignored.len(), 1);
    }

    fn transcript(msgs: &[(Author, &str)]) -> Transcript {
        let mut t = Transcript::new(["Alpha", "Bravo"]);
        for (a, b) in msgs {
            t.append(a.clone(), b).unwrap();
        }
        t
    }

    fn names() -> Vec<String> {
        vec!["Alpha".into(), "Bravo".into()]
    }

    #[test]
    fn recency_wins() {
        let t = transcript(&[
            (Author::Agent("Alpha".into()), "PLAN Alpha: Kitchen -> Hall"),
            (Author::Agent("Bravo".into()), "PLAN Bravo: Hall"),
            (Author::Agent("Alpha".into()), "correction. PLAN alpha: Kitchen"),
        ]);
        let plans = extract_plan_set(&t, &names()).unwrap();
        assert_eq!(plans.get("Alpha"), Some(rooms(&["Kitchen"]).as_slice()));
        assert_eq!(plans.get("Bravo"), Some(rooms(&["Hall"]).as_slice()));
        assert_eq!(plans.iter().map(|(n, _)| n).collect::<Vec<_>>(), vec!["Alpha", "Bravo"]);
    }

    #[test]
    fn supervisor_may_dictate_plans() {
        let t = transcript(&[
            (Author::Agent("Alpha".into()), "PLAN Alpha: Kitchen -> Hall\nPLAN Bravo: Hall"),
            (Author::Supervisor, "Use PLAN Bravo: Hall -> Kitchen instead"),
        ]);
        let plans = extract_plan_set(&t, &names()).unwrap();
        assert_eq!(plans.get("Bravo"), Some(rooms(&["Hall", "Kitchen"]).as_slice()));
    }

    #[test]
    fn missing_plan() {
        let t = transcript(&[(Author::Agent("Alpha".into()), "PLAN Alpha: Kitchen")]);
        assert_eq!(
            extract_plan_set(&t, &names()),
            Err(PlanError::MissingPlan(vec!["Bravo".into()]))
        );
    }

    fn chain() -> RoomGraph {
        parse_environment("Kitchen <-> Hall\nHall <-> Office").unwrap()
    }

    fn positions(entries: &[(&str, &str)]) -> IndexMap<String, RoomId> {
        entries
            .iter()
            .map(|(a, r)| (a.to_string(), RoomId::new(*r).unwrap()))
            .collect()
    }

    #[test]
    fn validation_examples() {
        let g = chain();
        let plans = PlanSet::new([("Alpha".to_string(), rooms(&["Kitchen", "Hall"]))].into());
        let report = validate_plan_set(&plans, &g, &positions(&[("Alpha", "Kitchen")]));
        assert!(report.ok);

        let plans = PlanSet::new([("Alpha".to_string(), rooms(&["Hall", "Office"]))].into());
        let report = validate_plan_set(&plans, &g, &positions(&[("Alpha", "Kitchen")]));
        assert!(!report.ok);
        assert_eq!(
            report.per_agent["Alpha"].start_mismatch,
            Some(StartMismatch {
                expected: RoomId::new("Kitchen").unwrap(),
                found: RoomId::new("Hall").unwrap()
            })
        );
        assert!(report.per_agent["Alpha"].violations.is_empty());
        let text = report.to_string();
        assert!(text.contains("plan starts at Hall but Alpha is in Kitchen"));
    }

    #[test]
    fn critique_lists_every_problem() {
        let g = chain();
        let report = validate_plans(
            [("Alpha", rooms(&["Kitchen", "Office"]).as_slice())],
            vec!["Bravo".into()],
            &g,
            &positions(&[("Alpha", "Kitchen"), ("Bravo", "Hall")]),
        );
        assert!(!report.ok);
        let text = report.to_string();
        assert!(text.contains("Bravo: no PLAN line found"));
        assert!(text.contains("Kitchen -> Office is not a direct connection"));
    }

    #[test]
    fn resolution_uses_stored_case() {
        let g = chain();
        let plans = PlanSet::new([("Alpha".to_string(), rooms(&["kitchen", "HALL", "Garage"]))].into());
        assert_eq!(
            plans.resolved(&g).get("Alpha"),
            Some(rooms(&["Kitchen", "Hall", "Garage"]).as_slice())
        );
    }
}
