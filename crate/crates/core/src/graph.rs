//! The agent network: an undirected, connected, unweighted graph.
//!
//! The root of every workflow run is the agent with the highest closeness
//! centrality, `(N - 1) / sum of hop distances to every other agent`.
//! Scores are kept as exact rationals so that comparisons never depend on
//! floating-point rounding.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    #[serde(default)]
    pub role: String,
    /// Prompt-profile label. Only used to tag backend requests.
    #[serde(default)]
    pub profile: String,
}

/// Serialized form of a topology: `{"agents": [{id, role}], "edges": [[i, j], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyDocument {
    pub agents: Vec<AgentSpec>,
    pub edges: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    Empty,
    /// Agent ids must be exactly `0..N`.
    IdGap {
        expected: u32,
        found: u32,
    },
    SelfLoop(AgentId),
    DuplicateEdge(AgentId, AgentId),
    EdgeOutOfRange(AgentId, AgentId),
    Disconnected {
        unreachable: Vec<AgentId>,
    },
    UnknownAgent(AgentId),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::Empty => f.write_str("topology has no agents"),
            GraphError::IdGap { expected, found } => {
                write!(
                    f,
                    "agent ids must be 0..N: expected {expected}, found {found}"
                )
            }
            GraphError::SelfLoop(a) => write!(f, "self-loop on agent {a}"),
            GraphError::DuplicateEdge(a, b) => write!(f, "duplicate edge ({a}, {b})"),
            GraphError::EdgeOutOfRange(a, b) => {
                write!(f, "edge ({a}, {b}) references an unknown agent")
            }
            GraphError::Disconnected { unreachable } => {
                write!(f, "graph is disconnected; unreachable agents:")?;
                for a in unreachable {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            GraphError::UnknownAgent(a) => write!(f, "unknown agent {a}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GraphError {}

/// A validated agent graph. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    agents: Vec<AgentSpec>,
    /// Sorted ascending per agent.
    adjacency: Vec<Vec<AgentId>>,
    edge_count: usize,
}

const DEFAULT_ROLES: [&str; 4] = ["coordinator", "solver", "critic", "integrator"];

impl Topology {
    /// Builds and validates a topology. Agents may be listed in any order but
    /// their ids must cover `0..N` exactly.
    pub fn new(
        mut agents: Vec<AgentSpec>,
        edges: &[(AgentId, AgentId)],
    ) -> Result<Self, GraphError> {
        if agents.is_empty() {
            return Err(GraphError::Empty);
        }
        agents.sort_by_key(|a| a.id);
        for (i, a) in agents.iter().enumerate() {
            if a.id.0 != i as u32 {
                return Err(GraphError::IdGap {
                    expected: i as u32,
                    found: a.id.0,
                });
            }
        }
        let n = agents.len();
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a.index() >= n || b.index() >= n {
                return Err(GraphError::EdgeOutOfRange(a, b));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            adjacency[a.index()].push(b);
            adjacency[b.index()].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let topology = Topology {
            agents,
            adjacency,
            edge_count: seen.len(),
        };
        let dist = topology.hop_distances(AgentId(0));
        let unreachable: Vec<AgentId> = dist
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_none())
            .map(|(i, _)| AgentId(i as u32))
            .collect();
        if !unreachable.is_empty() {
            return Err(GraphError::Disconnected { unreachable });
        }
        Ok(topology)
    }

    pub fn from_document(doc: &TopologyDocument) -> Result<Self, GraphError> {
        let edges: Vec<(AgentId, AgentId)> = doc
            .edges
            .iter()
            .map(|[a, b]| (AgentId(*a), AgentId(*b)))
            .collect();
        Topology::new(doc.agents.clone(), &edges)
    }

    pub fn to_document(&self) -> TopologyDocument {
        let mut edges = Vec::with_capacity(self.edge_count);
        for (i, list) in self.adjacency.iter().enumerate() {
            for b in list.iter().filter(|b| b.index() > i) {
                edges.push([i as u32, b.0]);
            }
        }
        TopologyDocument {
            agents: self.agents.clone(),
            edges,
        }
    }

    /// Complete graph on `n` agents.
    pub fn complete(n: u32) -> Result<Self, GraphError> {
        let agents = (0..n)
            .map(|i| AgentSpec {
                id: AgentId(i),
                role: DEFAULT_ROLES
                    .get(i as usize)
                    .map(|r| r.to_string())
                    .unwrap_or_else(|| alloc::format!("agent{i}")),
                profile: String::from("default"),
            })
            .collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push((AgentId(a), AgentId(b)));
            }
        }
        Topology::new(agents, &edges)
    }

    /// The default four-agent network (complete graph K4).
    pub fn default_four() -> Self {
        Topology::complete(4).expect("K4 is a valid topology")
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn contains(&self, agent: AgentId) -> bool {
        agent.index() < self.agents.len()
    }

    pub fn agent(&self, agent: AgentId) -> Result<&AgentSpec, GraphError> {
        self.agents
            .get(agent.index())
            .ok_or(GraphError::UnknownAgent(agent))
    }

    /// Agents sharing an edge with `agent`, ascending.
    pub fn neighbors(&self, agent: AgentId) -> Result<&[AgentId], GraphError> {
        self.adjacency
            .get(agent.index())
            .map(Vec::as_slice)
            .ok_or(GraphError::UnknownAgent(agent))
    }

    /// Unweighted hop distances from `source`; `None` for unreachable agents.
    pub fn hop_distances(&self, source: AgentId) -> Vec<Option<u64>> {
        let mut dist = vec![None; self.agents.len()];
        let mut queue = VecDeque::new();
        dist[source.index()] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].unwrap_or(0);
            for &v in &self.adjacency[u.index()] {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn closeness_centrality(&self) -> CentralityTable {
        let n = self.agents.len() as u64;
        let entries = (0..self.agents.len())
            .map(|i| {
                let sum = self
                    .hop_distances(AgentId(i as u32))
                    .into_iter()
                    .map(|d| d.unwrap_or(0))
                    .sum();
                Closeness {
                    reach: n - 1,
                    distance_sum: sum,
                }
            })
            .collect();
        CentralityTable { entries }
    }

    /// The agent with maximal closeness; ties go to the smallest id.
    pub fn select_root(&self) -> AgentId {
        self.closeness_centrality().argmax()
    }
}

impl Default for Topology {
    fn default() -> Self {
        Topology::default_four()
    }
}

/// Exact closeness score `reach / distance_sum`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Closeness {
    pub reach: u64,
    pub distance_sum: u64,
}

impl Closeness {
    pub fn value(self) -> f64 {
        if self.distance_sum == 0 {
            0.0
        } else {
            self.reach as f64 / self.distance_sum as f64
        }
    }

    /// Compares the rationals by cross-multiplication. A zero denominator
    /// (single-agent graph) counts as score zero.
    pub fn cmp_exact(&self, other: &Closeness) -> Ordering {
        match (self.distance_sum, other.distance_sum) {
            (0, 0) => Ordering::Equal,
            (0, _) => 0.cmp(&other.reach),
            (_, 0) => self.reach.cmp(&0),
            (a, b) => (self.reach as u128 * b as u128).cmp(&(other.reach as u128 * a as u128)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentralityTable {
    entries: Vec<Closeness>,
}

impl CentralityTable {
    pub fn get(&self, agent: AgentId) -> Option<Closeness> {
        self.entries.get(agent.index()).copied()
    }

    pub fn score(&self, agent: AgentId) -> Option<f64> {
        self.get(agent).map(Closeness::value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, Closeness)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, c)| (AgentId(i as u32), *c))
    }

    pub fn argmax(&self) -> AgentId {
        let mut best = 0usize;
        for (i, c) in self.entries.iter().enumerate().skip(1) {
            if c.cmp_exact(&self.entries[best]) == Ordering::Greater {
                best = i;
            }
        }
        AgentId(best as u32)
    }
}
