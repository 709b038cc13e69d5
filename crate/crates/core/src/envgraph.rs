//! Room-connectivity model: the flowchart the agents plan over and the
//! simulated robots traverse.
//!
//! The text form is a small line-oriented DSL:
//!
//! ```text
//! # comment
//! Kitchen <-> Hall
//! Hall <-> Office
//! room Storage
//! ```
//!
//! Edges are undirected. Room names compare case-insensitively but keep the
//! case they were first written with.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum length of a room or agent name token.
pub const MAX_TOKEN_LEN: usize = 64;

/// Returns true if `s` is a valid name token: a letter followed by letters,
/// digits, underscores or hyphens, at most [`MAX_TOKEN_LEN`] characters.
pub fn is_token(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    s.len() <= MAX_TOKEN_LEN && chars.all(is_token_char)
}

/// Characters allowed after the first character of a token.
pub fn is_token_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid name token {0:?}")]
pub struct InvalidToken(pub String);

/// A room name as written in the environment or in a plan.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoomId(String);

impl RoomId {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidToken> {
        let value = value.into();
        if is_token(&value) {
            Ok(Self(value))
        } else {
            Err(InvalidToken(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Case-folded key used for all room matching.
    pub fn key(&self) -> String {
        self.0.to_ascii_lowercase()
    }

    pub fn matches(&self, other: &RoomId) -> bool {
        self.0.eq_ignore_ascii_case(&other.0)
    }
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for RoomId {
    type Err = InvalidToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoomId::new(s)
    }
}

impl Serialize for RoomId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for RoomId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        RoomId::new(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("line {line}: room cannot connect to itself")]
    SelfLoop { line: usize },
    #[error("environment declares no rooms")]
    EmptyEnvironment,
    #[error("unknown room {0}")]
    UnknownRoom(String),
}

/// One problem found in a room path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathViolation {
    UnknownRoom { room: String, index: usize },
    /// `index` is the position of `to` in the path.
    NonAdjacent { from: String, to: String, index: usize },
    EmptyPath,
}

impl fmt::Display for PathViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathViolation::UnknownRoom { room, index } => {
                write!(f, "unknown room {room} at position {index}")
            }
            PathViolation::NonAdjacent { from, to, index } => {
                write!(f, "{from} -> {to} is not a direct connection (hop {index})")
            }
            PathViolation::EmptyPath => f.write_str("path is empty"),
        }
    }
}

/// Immutable room graph. Rooms and edges iterate in insertion order.
#[derive(Debug, Clone)]
pub struct RoomGraph {
    rooms: Vec<RoomId>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    edge_set: HashSet<(usize, usize)>,
    /// Neighbour lists sorted by case-folded name.
    neighbours: Vec<Vec<usize>>,
}

impl PartialEq for RoomGraph {
    fn eq(&self, other: &Self) -> bool {
        self.rooms == other.rooms && self.edges == other.edges
    }
}

impl Eq for RoomGraph {}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Incremental constructor used by the parser and by tests.
#[derive(Debug, Default, Clone)]
pub struct RoomGraphBuilder {
    rooms: Vec<RoomId>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    edge_set: HashSet<(usize, usize)>,
}

impl RoomGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a room; re-declaring (in any case) is a no-op.
    pub fn room(&mut self, room: RoomId) -> usize {
        let key = room.key();
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.rooms.push(room);
        self.index.insert(key, self.rooms.len() - 1);
        self.rooms.len() - 1
    }

    /// Adds an undirected edge. Returns false if it already existed.
    /// Panics on a self-loop; callers check first.
    pub fn edge(&mut self, a: RoomId, b: RoomId) -> bool {
        let ia = self.room(a);
        let ib = self.room(b);
        assert_ne!(ia, ib, "self-loop");
        if self.edge_set.insert(ordered(ia, ib)) {
            self.edges.push((ia, ib));
            true
        } else {
            false
        }
    }

    pub fn build(self) -> Result<RoomGraph, EnvError> {
        if self.rooms.is_empty() {
            return Err(EnvError::EmptyEnvironment);
        }
        let mut neighbours = vec![Vec::new(); self.rooms.len()];
        for &(a, b) in &self.edges {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        for list in &mut neighbours {
            list.sort_by_key(|&i| self.rooms[i].key());
        }
        Ok(RoomGraph {
            rooms: self.rooms,
            index: self.index,
            edges: self.edges,
            edge_set: self.edge_set,
            neighbours,
        })
    }
}

impl RoomGraph {
    pub fn builder() -> RoomGraphBuilder {
        RoomGraphBuilder::new()
    }

    pub fn rooms(&self) -> &[RoomId] {
        &self.rooms
    }

    /// Edges as room pairs, in declaration order and orientation.
    pub fn edges(&self) -> impl Iterator<Item = (&RoomId, &RoomId)> + '_ {
        self.edges
            .iter()
            .map(move |&(a, b)| (&self.rooms[a], &self.rooms[b]))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(&name.to_ascii_lowercase()).copied()
    }

    /// Resolves a name (any case) to the stored room.
    pub fn resolve(&self, name: &str) -> Option<&RoomId> {
        self.lookup(name).map(|i| &self.rooms[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    pub fn are_adjacent(&self, a: &str, b: &str) -> bool {
        match (self.lookup(a), self.lookup(b)) {
            (Some(a), Some(b)) => self.edge_set.contains(&ordered(a, b)),
            _ => false,
        }
    }

    /// Neighbours of a room, sorted case-insensitively.
    pub fn neighbours(&self, name: &str) -> Vec<&RoomId> {
        self.lookup(name)
            .map(|i| self.neighbours[i].iter().map(|&j| &self.rooms[j]).collect())
            .unwrap_or_default()
    }
}

/// Parses the environment DSL.
pub fn parse_environment(text: &str) -> Result<RoomGraph, EnvError> {
    let mut builder = RoomGraphBuilder::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let token = |s: &str| {
            RoomId::new(s.trim()).map_err(|e| EnvError::Syntax {
                line: line_no,
                detail: format!("invalid room name {:?}", e.0),
            })
        };
        if let Some((left, right)) = line.split_once("<->") {
            let a = token(left)?;
            let b = token(right)?;
            if a.matches(&b) {
                return Err(EnvError::SelfLoop { line: line_no });
            }
            builder.edge(a, b);
        } else if let Some(rest) = line.strip_prefix("room") {
            if !rest.starts_with(char::is_whitespace) {
                return Err(EnvError::Syntax {
                    line: line_no,
                    detail: format!("expected `A <-> B` or `room A`, found {line:?}"),
                });
            }
            builder.room(token(rest)?);
        } else {
            return Err(EnvError::Syntax {
                line: line_no,
                detail: format!("expected `A <-> B` or `room A`, found {line:?}"),
            });
        }
    }
    builder.build()
}

/// Renders a graph back into the DSL.
///
/// Edge lines come in edge order. `room` lines are emitted for isolated
/// rooms, and for any room whose position in the room order would not
/// otherwise be reproduced by re-parsing, so the output always parses back
/// to an equal graph.
pub fn render_flowchart(graph: &RoomGraph) -> String {
    let n = graph.rooms.len();
    let mut lines = Vec::with_capacity(graph.edges.len() + n);
    let mut seen = vec![false; n];
    // every room before `next` has been mentioned
    let mut next = 0;
    let mut declare_before = |k: usize, lines: &mut Vec<String>, seen: &mut Vec<bool>| {
        while next < k {
            if !seen[next] {
                lines.push(format!("room {}", graph.rooms[next]));
                seen[next] = true;
            }
            next += 1;
        }
    };

    for &(a, b) in &graph.edges {
        if !seen[a] {
            declare_before(a, &mut lines, &mut seen);
        }
        if !seen[b] {
            // a new `b` lands right after `a`, so nothing else may sit between them
            let gap = (0..b).any(|i| i != a && !seen[i]);
            if gap {
                if !seen[a] {
                    declare_before(a + 1, &mut lines, &mut seen);
                }
                declare_before(b, &mut lines, &mut seen);
            }
        }
        seen[a] = true;
        seen[b] = true;
        lines.push(format!("{} <-> {}", graph.rooms[a], graph.rooms[b]));
    }
    declare_before(n, &mut lines, &mut seen);
    lines.join("\n")
}

/// Checks a room path against the graph. An empty result means the path is
/// non-empty, every room exists, and every consecutive pair is connected.
/// Adjacency is only checked for pairs where both rooms exist.
pub fn validate_path(graph: &RoomGraph, path: &[RoomId]) -> Vec<PathViolation> {
    if path.is_empty() {
        return vec![PathViolation::EmptyPath];
    }
    let mut violations = Vec::new();
    for (i, room) in path.iter().enumerate() {
        let known = graph.contains(room.as_str());
        if !known {
            violations.push(PathViolation::UnknownRoom {
                room: room.to_string(),
                index: i,
            });
        }
        if i > 0 {
            let prev = &path[i - 1];
            if known
                && graph.contains(prev.as_str())
                && !graph.are_adjacent(prev.as_str(), room.as_str())
            {
                violations.push(PathViolation::NonAdjacent {
                    from: prev.to_string(),
                    to: room.to_string(),
                    index: i,
                });
            }
        }
    }
    violations
}

/// Minimum-hop path between two rooms (both endpoints included), using the
/// stored room names. Breadth-first search expands neighbours in
/// case-insensitive lexicographic order, so ties resolve deterministically.
pub fn shortest_path(
    graph: &RoomGraph,
    from: &RoomId,
    to: &RoomId,
) -> Result<Option<Vec<RoomId>>, EnvError> {
    let start = graph
        .lookup(from.as_str())
        .ok_or_else(|| EnvError::UnknownRoom(from.to_string()))?;
    let goal = graph
        .lookup(to.as_str())
        .ok_or_else(|| EnvError::UnknownRoom(to.to_string()))?;

    let mut parent: Vec<Option<usize>> = vec![None; graph.rooms.len()];
    let mut visited = vec![false; graph.rooms.len()];
    let mut queue = VecDeque::from([start]);
    visited[start] = true;
    while let Some(current) = queue.pop_front() {
        if current == goal {
            let mut path = vec![graph.rooms[goal].clone()];
            let mut at = goal;
            while let Some(p) = parent[at] {
                path.push(graph.rooms[p].clone());
                at = p;
            }
            path.reverse();
            return Ok(Some(path));
        }
        for &n in &graph.neighbours[current] {
            if !visited[n] {
                visited[n] = true;
                parent[n] = Some(current);
                queue.push_back(n);
            }
        }
    }
    Ok(None)
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    rooms: Vec<RoomId>,
    edges: Vec<(RoomId, RoomId)>,
}

impl Serialize for RoomGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphRecord {
            rooms: self.rooms.clone(),
            edges: self.edges().map(|(a, b)| (a.clone(), b.clone())).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RoomGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let record = GraphRecord::deserialize(deserializer)?;
        let mut builder = RoomGraphBuilder::new();
        for room in record.rooms {
            builder.room(room);
        }
        let known = builder.rooms.len();
        for (a, b) in record.edges {
            if a.matches(&b) {
                return Err(D::Error::custom(format!("self-loop on {a}")));
            }
            builder.edge(a, b);
        }
        if builder.rooms.len() != known {
            return Err(D::Error::custom("edge references an undeclared room"));
        }
        builder.build().map_err(D::Error::custom)
    }
}
