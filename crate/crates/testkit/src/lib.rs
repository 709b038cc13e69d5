//! Random inputs and brute-force oracles shared by the property tests and
//! the acceptance suite. Oracles deliberately avoid the library's own
//! lookup structures: adjacency is a linear scan of the edge list, paths
//! come from exhaustive enumeration, and plan recency comes from the blocks
//! the generator itself planted.

use std::collections::HashMap;

use indexmap::IndexMap;
use parley_core::dialogue::{Author, Transcript};
use parley_core::envgraph::{PathViolation, RoomGraph, RoomId};
use parley_core::provider::{ProviderMessage, Role};
use rand::seq::SliceRandom;
use rand::Rng;

pub const ROOM_POOL: [&str; 12] = [
    "Kitchen", "Hall", "Office", "Lab", "Garage", "Attic", "Porch", "Den", "Study", "Pantry",
    "Cellar", "Lobby",
];
pub const AGENT_POOL: [&str; 4] = ["Alpha", "Bravo", "Charlie", "Delta"];
const WORDS: [&str; 16] = [
    "the", "cups", "go", "first", "then", "wait", "door", "tray", "we", "should", "carry",
    "agree", "no", "route", "faster", "ok",
];

pub fn room(name: &str) -> RoomId {
    RoomId::new(name).expect("pool names are tokens")
}

/// Flips the case of random ASCII letters.
pub fn case_variant(rng: &mut impl Rng, s: &str) -> String {
    s.chars()
        .map(|c| {
            if rng.gen_bool(0.3) {
                if c.is_ascii_uppercase() {
                    c.to_ascii_lowercase()
                } else {
                    c.to_ascii_uppercase()
                }
            } else {
                c
            }
        })
        .collect()
}

/// A graph of 1..=`max_rooms` rooms with random density, room declarations
/// interleaved with edges so that room order is not simply edge order.
pub fn graph(rng: &mut impl Rng, max_rooms: usize) -> RoomGraph {
    let n = rng.gen_range(1..=max_rooms.min(ROOM_POOL.len()));
    let mut names: Vec<&str> = ROOM_POOL.to_vec();
    names.shuffle(rng);
    names.truncate(n);
    let density: f64 = rng.gen_range(0.0..0.8);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                if rng.gen_bool(0.5) {
                    pairs.push((i, j));
                } else {
                    pairs.push((j, i));
                }
            }
        }
    }
    pairs.shuffle(rng);
    let mut b = RoomGraph::builder();
    let mut pending: Vec<usize> = (0..n).collect();
    pending.shuffle(rng);
    for (a, c) in pairs {
        while rng.gen_bool(0.3) {
            if let Some(r) = pending.pop() {
                b.room(room(names[r]));
            }
        }
        b.edge(room(names[a]), room(names[c]));
    }
    for r in pending {
        b.room(room(names[r]));
    }
    b.build().expect("non-empty")
}

/// A connected graph: a random spanning tree plus extra edges.
pub fn connected_graph(rng: &mut impl Rng, max_rooms: usize) -> RoomGraph {
    let n = rng.gen_range(1..=max_rooms.min(ROOM_POOL.len()));
    let mut names: Vec<&str> = ROOM_POOL.to_vec();
    names.shuffle(rng);
    names.truncate(n);
    let mut b = RoomGraph::builder();
    b.room(room(names[0]));
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        b.edge(room(names[parent]), room(names[i]));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if x != y {
            b.edge(room(names[x]), room(names[y]));
        }
    }
    b.build().expect("non-empty")
}

/// Either a walk along edges or an arbitrary room sequence, possibly naming
/// rooms that are not on the map; names are randomly re-cased.
pub fn path(rng: &mut impl Rng, g: &RoomGraph, max_len: usize) -> Vec<RoomId> {
    let len = rng.gen_range(0..=max_len);
    let rooms = g.rooms();
    let mut out: Vec<RoomId> = Vec::with_capacity(len);
    let walk = rng.gen_bool(0.5);
    for _ in 0..len {
        let next = match out.last() {
            Some(prev) if walk => {
                let adj = oracle::neighbours(g, prev.as_str());
                adj.choose(rng).map(|r| r.to_string())
            }
            _ => None,
        };
        let name = next.unwrap_or_else(|| {
            if rng.gen_bool(0.1) {
                ["Void", "Nowhere"].choose(rng).unwrap().to_string()
            } else {
                rooms.choose(rng).unwrap().to_string()
            }
        });
        out.push(room(&case_variant(rng, &name)));
    }
    out
}

/// A walk of up to `max_hops` hops starting at `start`.
pub fn walk(rng: &mut impl Rng, g: &RoomGraph, start: &RoomId, max_hops: usize) -> Vec<RoomId> {
    let mut out = vec![start.clone()];
    for _ in 0..rng.gen_range(0..=max_hops) {
        let adj = oracle::neighbours(g, out.last().unwrap().as_str());
        match adj.choose(rng) {
            Some(next) => out.push(next.clone()),
            None => break,
        }
    }
    out
}

pub fn roster(rng: &mut impl Rng, max_agents: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max_agents.min(AGENT_POOL.len()));
    AGENT_POOL[..n].iter().map(|s| s.to_string()).collect()
}

pub fn author(rng: &mut impl Rng, roster: &[String]) -> Author {
    match rng.gen_range(0..10) {
        0 => Author::Supervisor,
        1 => Author::Executor,
        2 => Author::System,
        _ => Author::Agent(roster.choose(rng).unwrap().clone()),
    }
}

pub fn chatter(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..8);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A random transcript of plain chatter.
pub fn transcript(rng: &mut impl Rng, roster: &[String], max_messages: usize) -> Transcript {
    let mut t = Transcript::new(roster.to_vec());
    for _ in 0..rng.gen_range(0..=max_messages) {
        let a = author(rng, roster);
        let body = if rng.gen_bool(0.1) {
            format!("  {}\n\n{}  ", chatter(rng), chatter(rng))
        } else {
            chatter(rng)
        };
        t.append(a, &body).expect("non-empty body");
    }
    t
}

/// A PLAN line the generator knows how to read back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedPlan {
    pub seq: u64,
    /// Order within the message.
    pub order: usize,
    pub agent: String,
    pub path: Vec<RoomId>,
}

fn plan_text(rng: &mut impl Rng, agent: &str, path: &[RoomId]) -> String {
    let keyword = *["PLAN", "plan", "Plan"].choose(rng).unwrap();
    let arrow = *["->", " -> ", "  ->  ", " ->"].choose(rng).unwrap();
    let route = path.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(arrow);
    let colon = *[":", " : ", ": "].choose(rng).unwrap();
    let prefix = if rng.gen_bool(0.3) { "final: " } else { "" };
    let suffix = if rng.gen_bool(0.3) { " @supervisor" } else { "" };
    format!("{prefix}{keyword} {agent}{colon}{route}{suffix}")
}

fn malformed_plan(rng: &mut impl Rng, agent: &str) -> String {
    match rng.gen_range(0..3) {
        0 => format!("PLAN {agent} Kitchen -> Hall"),
        1 => format!("PLAN {agent}: Kitchen ->"),
        _ => "PLAN: Kitchen -> Hall".to_string(),
    }
}

/// A transcript whose messages carry PLAN lines (some for agents outside
/// the roster, some malformed), together with every well-formed block
/// that was planted.
pub fn plan_transcript(
    rng: &mut impl Rng,
    roster: &[String],
    max_messages: usize,
) -> (Transcript, Vec<PlantedPlan>) {
    let mut t = Transcript::new(roster.to_vec());
    let mut planted = Vec::new();
    for _ in 0..rng.gen_range(0..=max_messages) {
        let a = author(rng, roster);
        let seq = t.len() as u64;
        let mut lines = vec![chatter(rng)];
        let mut order = 0;
        for _ in 0..rng.gen_range(0..3) {
            let agent = if rng.gen_bool(0.1) {
                "Echo".to_string()
            } else {
                let name = roster.choose(rng).unwrap().clone();
                case_variant(rng, &name)
            };
            if rng.gen_bool(0.15) {
                lines.push(malformed_plan(rng, &agent));
                continue;
            }
            let len = rng.gen_range(1..=4);
            let path: Vec<RoomId> = (0..len)
                .map(|_| {
                    let name = *ROOM_POOL.choose(rng).unwrap();
                    room(&case_variant(rng, name))
                })
                .collect();
            lines.push(plan_text(rng, &agent, &path));
            planted.push(PlantedPlan {
                seq,
                order,
                agent,
                path,
            });
            order += 1;
            if rng.gen_bool(0.3) {
                lines.push(chatter(rng));
            }
        }
        t.append(a, &lines.join("\n")).expect("non-empty body");
    }
    (t, planted)
}

/// A set of walks, one per agent, each starting at the agent's position.
pub fn plan_set(
    rng: &mut impl Rng,
    g: &RoomGraph,
    agents: usize,
    max_hops: usize,
) -> (IndexMap<String, Vec<RoomId>>, IndexMap<String, RoomId>) {
    let mut plans = IndexMap::new();
    let mut positions = IndexMap::new();
    for name in AGENT_POOL.iter().take(agents) {
        let start = g.rooms().choose(rng).unwrap().clone();
        plans.insert(name.to_string(), walk(rng, g, &start, max_hops));
        positions.insert(name.to_string(), start);
    }
    (plans, positions)
}

pub mod oracle {
    use super::*;

    pub fn same(a: &str, b: &str) -> bool {
        a.eq_ignore_ascii_case(b)
    }

    pub fn known(g: &RoomGraph, name: &str) -> bool {
        g.rooms().iter().any(|r| same(r.as_str(), name))
    }

    pub fn stored<'g>(g: &'g RoomGraph, name: &str) -> Option<&'g RoomId> {
        g.rooms().iter().find(|r| same(r.as_str(), name))
    }

    /// Direct edge lookup over the raw edge list.
    pub fn adjacent(g: &RoomGraph, a: &str, b: &str) -> bool {
        g.edges()
            .any(|(x, y)| (same(x.as_str(), a) && same(y.as_str(), b)) || (same(x.as_str(), b) && same(y.as_str(), a)))
    }

    pub fn neighbours(g: &RoomGraph, name: &str) -> Vec<RoomId> {
        g.edges()
            .filter_map(|(x, y)| {
                if same(x.as_str(), name) {
                    Some(y.clone())
                } else if same(y.as_str(), name) {
                    Some(x.clone())
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn path_violations(g: &RoomGraph, path: &[RoomId]) -> Vec<PathViolation> {
        if path.is_empty() {
            return vec![PathViolation::EmptyPath];
        }
        let mut out = Vec::new();
        for (i, r) in path.iter().enumerate() {
            if !known(g, r.as_str()) {
                out.push(PathViolation::UnknownRoom {
                    room: r.to_string(),
                    index: i,
                });
            } else if i > 0 && known(g, path[i - 1].as_str()) && !adjacent(g, path[i - 1].as_str(), r.as_str()) {
                out.push(PathViolation::NonAdjacent {
                    from: path[i - 1].to_string(),
                    to: r.to_string(),
                    index: i,
                });
            }
        }
        out
    }

    /// Every simple path from `from` to `to`, by exhaustive depth-first
    /// enumeration.
    pub fn simple_paths(g: &RoomGraph, from: &str, to: &str) -> Vec<Vec<String>> {
        fn go(g: &RoomGraph, at: String, to: &str, stack: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
            stack.push(at.clone());
            if same(&at, to) {
                out.push(stack.clone());
            } else {
                for n in neighbours(g, &at) {
                    if !stack.iter().any(|s| same(s, n.as_str())) {
                        go(g, n.to_string(), to, stack, out);
                    }
                }
            }
            stack.pop();
        }
        let mut out = Vec::new();
        if let (Some(a), Some(_)) = (stored(g, from), stored(g, to)) {
            go(g, a.to_string(), to, &mut Vec::new(), &mut out);
        }
        out
    }

    /// Hop distance from every room to `to`, by repeated relaxation over
    /// the edge list. Indexed like `g.rooms()`.
    pub fn hop_distances(g: &RoomGraph, to: &str) -> Vec<Option<usize>> {
        let rooms = g.rooms();
        let index = |name: &str| rooms.iter().position(|r| same(r.as_str(), name)).unwrap();
        let mut dist: Vec<Option<usize>> = rooms.iter().map(|r| same(r.as_str(), to).then_some(0)).collect();
        let edges: Vec<(usize, usize)> = g.edges().map(|(a, b)| (index(a.as_str()), index(b.as_str()))).collect();
        for _ in 0..rooms.len() {
            for &(a, b) in &edges {
                for (x, y) in [(a, b), (b, a)] {
                    if let Some(d) = dist[y] {
                        if dist[x].is_none_or(|cur| d + 1 < cur) {
                            dist[x] = Some(d + 1);
                        }
                    }
                }
            }
        }
        dist
    }

    /// Every minimum-hop path from `from` to `to`, sorted by the
    /// case-insensitive room names along the way.
    pub fn shortest_paths(g: &RoomGraph, from: &str, to: &str) -> Vec<Vec<String>> {
        let rooms = g.rooms();
        let dist = hop_distances(g, to);
        let d = |name: &str| dist[rooms.iter().position(|r| same(r.as_str(), name)).unwrap()];
        fn go(
            g: &RoomGraph,
            d: &dyn Fn(&str) -> Option<usize>,
            stack: &mut Vec<String>,
            out: &mut Vec<Vec<String>>,
        ) {
            let at = stack.last().unwrap().clone();
            let left = d(&at).unwrap();
            if left == 0 {
                out.push(stack.clone());
                return;
            }
            for n in neighbours(g, &at) {
                if d(n.as_str()) == Some(left - 1) {
                    stack.push(n.to_string());
                    go(g, d, stack, out);
                    stack.pop();
                }
            }
        }
        let mut out = Vec::new();
        if let (Some(a), Some(_)) = (stored(g, from), stored(g, to)) {
            if d(a.as_str()).is_some() {
                go(g, &d, &mut vec![a.to_string()], &mut out);
            }
        }
        out.sort_by_key(|p| p.iter().map(|r| r.to_ascii_lowercase()).collect::<Vec<_>>());
        out
    }

    /// Latest planted block per roster agent: sort by (agent, seq, order)
    /// and keep the last of each group.
    pub fn latest_plans(roster: &[String], planted: &[PlantedPlan]) -> IndexMap<String, Vec<RoomId>> {
        let mut sorted: Vec<&PlantedPlan> = planted.iter().collect();
        sorted.sort_by(|a, b| {
            (a.agent.to_ascii_lowercase(), a.seq, a.order).cmp(&(b.agent.to_ascii_lowercase(), b.seq, b.order))
        });
        let mut last: HashMap<String, &PlantedPlan> = HashMap::new();
        for p in sorted {
            last.insert(p.agent.to_ascii_lowercase(), p);
        }
        roster
            .iter()
            .filter_map(|name| {
                last.get(&name.to_ascii_lowercase())
                    .map(|p| (name.clone(), p.path.clone()))
            })
            .collect()
    }

    /// Violations of the projection rules for one agent's view.
    pub fn projection_violations(t: &Transcript, agent: &str, view: &[ProviderMessage]) -> Vec<String> {
        let mut bad = Vec::new();
        if view.len() != t.len() + 1 {
            bad.push(format!("length {} for {} messages", view.len(), t.len()));
            return bad;
        }
        if view[0].role != Role::System {
            bad.push("first element is not the system prompt".into());
        }
        for (i, (m, v)) in t.messages().iter().zip(&view[1..]).enumerate() {
            let own = matches!(&m.author, Author::Agent(name) if same(name, agent));
            let want = if own { Role::Assistant } else { Role::User };
            if v.role != want {
                bad.push(format!("message {i}: role {:?}, expected {want:?}", v.role));
            }
            if v.content != m.body {
                bad.push(format!("message {i}: body differs"));
            }
        }
        bad
    }

    /// Plan validity by direct checks: every plan non-empty, every room on
    /// the map, consecutive rooms joined by an edge, and each plan starting
    /// at its agent's position.
    pub fn plans_ok(
        g: &RoomGraph,
        plans: &IndexMap<String, Vec<RoomId>>,
        positions: &IndexMap<String, RoomId>,
    ) -> bool {
        plans.iter().all(|(agent, path)| {
            !path.is_empty()
                && path.iter().all(|r| known(g, r.as_str()))
                && path.windows(2).all(|w| adjacent(g, w[0].as_str(), w[1].as_str()))
                && positions
                    .iter()
                    .find(|(a, _)| same(a, agent))
                    .is_none_or(|(_, p)| same(p.as_str(), path[0].as_str()))
        })
    }
}

/// Random operation sequences against a mission session.
pub mod ops {
    use parley_core::persona::AgentProfile;
    use parley_core::provider::ScriptedProvider;
    use parley_core::sim::FailureSpec;
    use parley_core::{MissionError, Session, SessionConfig, SessionEventKind, SessionPhase};
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::{chatter, room, AGENT_POOL};

    pub const ENV: &str = "Kitchen <-> Hall\nHall <-> Office\nOffice <-> Lab\nLab <-> Kitchen";
    const ROOMS: [&str; 4] = ["Kitchen", "Hall", "Office", "Lab"];

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Op {
        Task,
        Feedback,
        Advance,
        Approve,
        Step,
        Abort,
    }

    pub const ALL: [Op; 6] = [Op::Task, Op::Feedback, Op::Advance, Op::Approve, Op::Step, Op::Abort];

    /// Phases in which each operation is permitted.
    pub fn allowed(op: Op, phase: SessionPhase) -> bool {
        use SessionPhase::*;
        match op {
            Op::Task => phase == Setup,
            Op::Feedback => matches!(phase, Discussion | AwaitingApproval | Executing),
            Op::Advance => phase == Discussion,
            Op::Approve => phase == AwaitingApproval,
            Op::Step => phase == Executing,
            Op::Abort => phase != Aborted,
        }
    }

    /// Legal phase moves, written out independently of the library's table.
    pub fn legal(from: SessionPhase, to: SessionPhase) -> bool {
        use SessionPhase::*;
        matches!(
            (from, to),
            (Setup, Discussion)
                | (Discussion, AwaitingApproval)
                | (AwaitingApproval, Discussion)
                | (AwaitingApproval, Executing)
                | (Executing, Discussion)
                | (Executing, Completed)
        ) || (to == Aborted && from != Aborted)
    }

    /// An agent reply with random PLAN lines and an occasional supervisor call.
    pub fn reply(rng: &mut impl Rng, names: &[&str]) -> String {
        let mut body = chatter(rng);
        for name in names {
            if rng.gen_bool(0.4) {
                let len = rng.gen_range(1..4);
                let path: Vec<&str> = (0..len).map(|_| *ROOMS.choose(rng).unwrap()).collect();
                body.push_str(&format!("\nPLAN {name}: {}", path.join(" -> ")));
            }
        }
        if rng.gen_bool(0.3) {
            body.push_str(" @supervisor");
        }
        body
    }

    /// A session on a four-room ring with one to three agents, sometimes a
    /// blocked edge, and a provider holding up to 30 random replies.
    pub fn session(rng: &mut impl Rng) -> (Session, ScriptedProvider) {
        let n = rng.gen_range(1..=3);
        let names = &AGENT_POOL[..n];
        let agents = names
            .iter()
            .map(|name| AgentProfile::new(*name, "a robot", room(ROOMS.choose(rng).unwrap())))
            .collect();
        let mut config = SessionConfig::new(agents, ENV);
        config.max_rounds = rng.gen_range(1..5);
        if rng.gen_bool(0.5) {
            config.execution.failures.push(FailureSpec::BlockEdge {
                a: room("Hall"),
                b: room("Office"),
                from_tick: rng.gen_range(0..4),
            });
        }
        let responses: Vec<String> = (0..rng.gen_range(0..30)).map(|_| reply(rng, names)).collect();
        (
            Session::create_with_id(config, "ops").expect("ring config is valid"),
            ScriptedProvider::from_responses(responses),
        )
    }

    pub fn apply(op: Op, s: &mut Session, p: &mut ScriptedProvider) -> Result<(), MissionError> {
        match op {
            Op::Task => s.submit_task("move the cups"),
            Op::Feedback => s.supervisor_feedback("try again"),
            Op::Advance => s.advance_discussion(p).map(|_| ()),
            Op::Approve => s.approve(),
            Op::Step => s.step_execution().map(|_| ()),
            Op::Abort => s.abort("stop"),
        }
    }

    /// Mostly the operation that moves the mission forward, so later phases
    /// are reached; otherwise any operation, with abort kept rare.
    pub fn pick(rng: &mut impl Rng, phase: SessionPhase) -> Op {
        if rng.gen_bool(0.6) {
            match phase {
                SessionPhase::Setup => return Op::Task,
                SessionPhase::Discussion => return Op::Advance,
                SessionPhase::AwaitingApproval => return Op::Approve,
                SessionPhase::Executing => return Op::Step,
                _ => {}
            }
        }
        if rng.gen_bool(0.02) {
            Op::Abort
        } else {
            *ALL[..5].choose(rng).unwrap()
        }
    }

    /// Runs up to `max_ops` random operations and reports the first
    /// violation: an illegal call that was not refused with `WrongPhase`,
    /// a refused call that changed the session, a legal call refused, an
    /// illegal phase change, or a gap in event numbering. Returns the phases
    /// visited on success.
    pub fn check_sequence(rng: &mut impl Rng, max_ops: usize) -> Result<Vec<SessionPhase>, String> {
        let (mut s, mut p) = session(rng);
        let mut visited = vec![s.phase()];
        for i in 0..rng.gen_range(1..=max_ops) {
            let op = pick(rng, s.phase());
            let before = s.clone();
            let result = apply(op, &mut s, &mut p);
            let wrong_phase = matches!(result, Err(MissionError::WrongPhase { .. }));
            if !allowed(op, before.phase()) {
                if !wrong_phase {
                    return Err(format!("op {i}: {op:?} in {:?} gave {result:?}", before.phase()));
                }
                if s != before {
                    return Err(format!("op {i}: refused {op:?} changed the session"));
                }
                continue;
            }
            if wrong_phase {
                return Err(format!("op {i}: {op:?} refused in {:?}", before.phase()));
            }
            for e in &s.events()[before.events().len()..] {
                if let SessionEventKind::PhaseChanged { from: Some(from), to, .. } = &e.kind {
                    if !legal(*from, *to) {
                        return Err(format!("op {i}: {op:?} moved {from:?} -> {to:?}"));
                    }
                    visited.push(*to);
                }
            }
            if s.events().iter().enumerate().any(|(k, e)| e.seq != k as u64) {
                return Err(format!("op {i}: event numbering has a gap"));
            }
        }
        Ok(visited)
    }
}
