//! Per-agent experience pools and reward-weighted retrieval.
//!
//! Every recorded decision step becomes an `(state, action, reward)` entry in
//! the pool of the agent that executed it. Retrieval ranks entries by
//!
//! ```text
//! score = alpha * sim + (1 - alpha) * r
//! ```
//!
//! where `sim` is the cosine similarity between the query state and the
//! stored state, clamped to `[0, 1]`, and `r` is the stored reward. The
//! ablation modes replace `sim` with `1 - sim` and/or `r` with `1 - r`.
//! Ties are broken by higher reward, then by insertion order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, norm, EmbeddingBackend, EmbeddingError};
use crate::graph::AgentId;
use crate::reward::RewardReport;
use crate::step::DecisionStepType;
use crate::workflow::Trace;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceEntry {
    pub agent: AgentId,
    pub step_type: DecisionStepType,
    pub state: String,
    pub action: String,
    pub reward: f64,
    pub embedding: Vec<f64>,
    pub task_id: String,
    pub step_index: u64,
}

/// Which side of reward and similarity the score favours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    HighRewardHighSim,
    HighRewardLowSim,
    LowRewardHighSim,
    LowRewardLowSim,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::HighRewardHighSim,
        Ablation::HighRewardLowSim,
        Ablation::LowRewardHighSim,
        Ablation::LowRewardLowSim,
    ];

    pub fn high_reward(self) -> bool {
        matches!(
            self,
            Ablation::HighRewardHighSim | Ablation::HighRewardLowSim
        )
    }

    pub fn high_similarity(self) -> bool {
        matches!(
            self,
            Ablation::HighRewardHighSim | Ablation::LowRewardHighSim
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::HighRewardHighSim => "high_reward_high_sim",
            Ablation::HighRewardLowSim => "high_reward_low_sim",
            Ablation::LowRewardHighSim => "low_reward_high_sim",
            Ablation::LowRewardLowSim => "low_reward_low_sim",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub alpha: f64,
    pub top_k: usize,
    pub ablation: Ablation,
    pub filter_by_step_type: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            alpha: DEFAULT_ALPHA,
            top_k: 1,
            ablation: Ablation::HighRewardHighSim,
            filter_by_step_type: true,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), StoreError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(StoreError::InvalidAlpha(self.alpha));
        }
        if self.top_k == 0 {
            return Err(StoreError::InvalidTopK);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoreError {
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    ProviderMismatch {
        expected: String,
        found: String,
    },
    DuplicateEntry {
        agent: AgentId,
        task_id: String,
        step_index: u64,
    },
    InvalidReward(f64),
    NotUnitNorm(f64),
    /// The reward report does not cover this trace step.
    MissingReward(u64),
    InvalidAlpha(f64),
    InvalidTopK,
    Embedding(EmbeddingError),
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::DimensionMismatch { expected, found } => {
                write!(
                    f,
                    "embedding dimension {found} does not match store dimension {expected}"
                )
            }
            StoreError::ProviderMismatch { expected, found } => {
                write!(
                    f,
                    "embedding provider {found:?} does not match store provider {expected:?}"
                )
            }
            StoreError::DuplicateEntry {
                agent,
                task_id,
                step_index,
            } => write!(
                f,
                "agent {agent} already holds an entry for task {task_id:?} step {step_index}"
            ),
            StoreError::InvalidReward(r) => write!(f, "reward {r} outside [0, 1]"),
            StoreError::NotUnitNorm(n) => write!(f, "embedding norm {n} is not 1"),
            StoreError::MissingReward(i) => write!(f, "no reward for step {i}"),
            StoreError::InvalidAlpha(a) => write!(f, "alpha {a} outside [0, 1]"),
            StoreError::InvalidTopK => f.write_str("top_k must be positive"),
            StoreError::Embedding(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for StoreError {}

impl From<EmbeddingError> for StoreError {
    fn from(e: EmbeddingError) -> Self {
        StoreError::Embedding(e)
    }
}

/// The union of all agents' pools. Embeddings are stored with their
/// entries and never recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceStore {
    dimension: usize,
    provider_tag: String,
    alpha_default: f64,
    pools: BTreeMap<AgentId, Vec<ExperienceEntry>>,
    keys: BTreeSet<(AgentId, String, u64)>,
}

impl ExperienceStore {
    pub fn new(dimension: usize, provider_tag: impl Into<String>) -> Self {
        ExperienceStore {
            dimension,
            provider_tag: provider_tag.into(),
            alpha_default: DEFAULT_ALPHA,
            pools: BTreeMap::new(),
            keys: BTreeSet::new(),
        }
    }

    pub fn for_embedder(embedder: &dyn EmbeddingBackend) -> Self {
        ExperienceStore::new(embedder.dimension(), embedder.provider_tag())
    }

    pub fn with_alpha_default(mut self, alpha: f64) -> Self {
        self.alpha_default = alpha;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn alpha_default(&self) -> f64 {
        self.alpha_default
    }

    pub fn pool(&self, agent: AgentId) -> &[ExperienceEntry] {
        self.pools.get(&agent).map_or(&[], Vec::as_slice)
    }

    pub fn pools(&self) -> impl Iterator<Item = (AgentId, &[ExperienceEntry])> {
        self.pools.iter().map(|(a, p)| (*a, p.as_slice()))
    }

    /// All entries, agent by agent, in insertion order within each pool.
    pub fn entries(&self) -> impl Iterator<Item = &ExperienceEntry> {
        self.pools.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.pools.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, agent: AgentId, task_id: &str, step_index: u64) -> bool {
        self.keys
            .contains(&(agent, String::from(task_id), step_index))
    }

    /// Distinct task ids, sorted.
    pub fn task_ids(&self) -> BTreeSet<&str> {
        self.entries().map(|e| e.task_id.as_str()).collect()
    }

    fn check(&self, entry: &ExperienceEntry) -> Result<(), StoreError> {
        if !(0.0..=1.0).contains(&entry.reward) {
            return Err(StoreError::InvalidReward(entry.reward));
        }
        if entry.embedding.len() != self.dimension {
            return Err(StoreError::DimensionMismatch {
                expected: self.dimension,
                found: entry.embedding.len(),
            });
        }
        let n = norm(&entry.embedding);
        if !((1.0 - NORM_TOLERANCE)..=(1.0 + NORM_TOLERANCE)).contains(&n) {
            return Err(StoreError::NotUnitNorm(n));
        }
        if self.contains(entry.agent, &entry.task_id, entry.step_index) {
            return Err(StoreError::DuplicateEntry {
                agent: entry.agent,
                task_id: entry.task_id.clone(),
                step_index: entry.step_index,
            });
        }
        Ok(())
    }

    pub fn insert(&mut self, entry: ExperienceEntry) -> Result<(), StoreError> {
        self.check(&entry)?;
        self.keys
            .insert((entry.agent, entry.task_id.clone(), entry.step_index));
        self.pools.entry(entry.agent).or_default().push(entry);
        Ok(())
    }

    /// Appends one entry per trace step to the executing agent's pool.
    /// Nothing is inserted unless every step can be.
    pub fn update_pool(
        &mut self,
        trace: &Trace,
        rewards: &RewardReport,
        embedder: &dyn EmbeddingBackend,
    ) -> Result<usize, StoreError> {
        if embedder.provider_tag() != self.provider_tag {
            return Err(StoreError::ProviderMismatch {
                expected: self.provider_tag.clone(),
                found: String::from(embedder.provider_tag()),
            });
        }
        let mut staged = Vec::with_capacity(trace.steps.len());
        for step in &trace.steps {
            if self.contains(step.agent, &trace.task_id, step.step_index) {
                return Err(StoreError::DuplicateEntry {
                    agent: step.agent,
                    task_id: trace.task_id.clone(),
                    step_index: step.step_index,
                });
            }
            let reward = rewards
                .reward(step.step_index)
                .ok_or(StoreError::MissingReward(step.step_index))?;
            let entry = ExperienceEntry {
                agent: step.agent,
                step_type: step.step_type,
                state: step.state.clone(),
                action: step.action.clone(),
                reward,
                embedding: embedder.embed(&step.state)?,
                task_id: trace.task_id.clone(),
                step_index: step.step_index,
            };
            self.check(&entry)?;
            staged.push(entry);
        }
        let added = staged.len();
        for entry in staged {
            self.insert(entry)?;
        }
        Ok(added)
    }

    fn embed_query(
        &self,
        embedder: &dyn EmbeddingBackend,
        text: &str,
    ) -> Result<Vec<f64>, StoreError> {
        let q = embedder.embed(text)?;
        if q.len() != self.dimension {
            return Err(StoreError::DimensionMismatch {
                expected: self.dimension,
                found: q.len(),
            });
        }
        Ok(q)
    }

    /// Step-wise retrieval: embeds `state` and ranks the agent's pool.
    pub fn retrieve_step(
        &self,
        agent: AgentId,
        step_type: DecisionStepType,
        state: &str,
        config: &RetrievalConfig,
        embedder: &dyn EmbeddingBackend,
    ) -> Result<Vec<&ExperienceEntry>, StoreError> {
        if self.pool(agent).is_empty() {
            return Ok(Vec::new());
        }
        let query = self.embed_query(embedder, state)?;
        self.rank_step(agent, step_type, &query, config)
    }

    /// Step-wise ranking against a precomputed query embedding.
    pub fn rank_step(
        &self,
        agent: AgentId,
        step_type: DecisionStepType,
        query: &[f64],
        config: &RetrievalConfig,
    ) -> Result<Vec<&ExperienceEntry>, StoreError> {
        config.validate()?;
        let candidates = self
            .pool(agent)
            .iter()
            .filter(|e| !config.filter_by_step_type || e.step_type == step_type);
        top_k(candidates, query, config)
    }

    /// Task-wise retrieval: picks one stored trace and returns its entries
    /// grouped by step type.
    ///
    /// Candidates are the task ids in `root`'s pool. A candidate's state is
    /// its earliest root entry (the root task description) and its reward is
    /// the latest root entry (the step that produced the outcome).
    pub fn retrieve_trace(
        &self,
        root: AgentId,
        task_description: &str,
        config: &RetrievalConfig,
        embedder: &dyn EmbeddingBackend,
    ) -> Result<TraceExemplar, StoreError> {
        let candidates = self.trace_candidates(root);
        if candidates.is_empty() {
            return Ok(TraceExemplar::default());
        }
        let query = self.embed_query(embedder, task_description)?;
        let winner = self.rank_traces(&candidates, &query, config)?;
        Ok(winner.map_or_else(TraceExemplar::default, |task_id| self.exemplar_for(task_id)))
    }

    /// `(task_id, root task entry, outcome entry)` per stored trace, in
    /// order of first appearance in the root pool.
    pub fn trace_candidates(&self, root: AgentId) -> Vec<TraceCandidate<'_>> {
        let mut order: Vec<&str> = Vec::new();
        let mut bounds: BTreeMap<&str, (&ExperienceEntry, &ExperienceEntry)> = BTreeMap::new();
        for e in self.pool(root) {
            match bounds.get_mut(e.task_id.as_str()) {
                None => {
                    order.push(&e.task_id);
                    bounds.insert(&e.task_id, (e, e));
                }
                Some((first, last)) => {
                    if e.step_index < first.step_index {
                        *first = e;
                    }
                    if e.step_index > last.step_index {
                        *last = e;
                    }
                }
            }
        }
        order
            .into_iter()
            .map(|id| {
                let (task, outcome) = bounds[id];
                TraceCandidate {
                    task_id: id,
                    task,
                    outcome,
                }
            })
            .collect()
    }

    pub fn rank_traces<'s>(
        &self,
        candidates: &[TraceCandidate<'s>],
        query: &[f64],
        config: &RetrievalConfig,
    ) -> Result<Option<&'s str>, StoreError> {
        config.validate()?;
        let mut best: Option<(f64, f64, &str)> = None;
        for c in candidates {
            let score = score_parts(
                similarity(query, &c.task.embedding)?,
                c.outcome.reward,
                config,
            );
            let reward = c.outcome.reward;
            let better = match best {
                None => true,
                Some((s, r, _)) => rank_cmp(score, reward, s, r) == Ordering::Less,
            };
            if better {
                best = Some((score, reward, c.task_id));
            }
        }
        Ok(best.map(|(_, _, id)| id))
    }

    pub fn exemplar_for(&self, task_id: &str) -> TraceExemplar {
        let mut by_step: BTreeMap<DecisionStepType, Vec<ExperienceEntry>> = BTreeMap::new();
        for e in self.entries().filter(|e| e.task_id == task_id) {
            by_step.entry(e.step_type).or_default().push(e.clone());
        }
        for list in by_step.values_mut() {
            list.sort_by_key(|e| e.step_index);
        }
        TraceExemplar {
            task_id: Some(String::from(task_id)),
            by_step,
            cursor: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceCandidate<'a> {
    pub task_id: &'a str,
    pub task: &'a ExperienceEntry,
    pub outcome: &'a ExperienceEntry,
}

/// Entries of one historical trace, consumed in step order during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceExemplar {
    pub task_id: Option<String>,
    pub by_step: BTreeMap<DecisionStepType, Vec<ExperienceEntry>>,
    cursor: BTreeMap<DecisionStepType, usize>,
}

impl TraceExemplar {
    pub fn is_empty(&self) -> bool {
        self.by_step.values().all(Vec::is_empty)
    }

    /// The unused entry of this step type with the lowest step index.
    pub fn next_for(&mut self, step: DecisionStepType) -> Option<&ExperienceEntry> {
        let list = self.by_step.get(&step)?;
        let at = self.cursor.entry(step).or_insert(0);
        let e = list.get(*at)?;
        *at += 1;
        Some(e)
    }
}

fn similarity(query: &[f64], embedding: &[f64]) -> Result<f64, StoreError> {
    if query.len() != embedding.len() {
        return Err(StoreError::DimensionMismatch {
            expected: embedding.len(),
            found: query.len(),
        });
    }
    Ok(cosine(query, embedding).clamp(0.0, 1.0))
}

fn score_parts(sim: f64, reward: f64, config: &RetrievalConfig) -> f64 {
    let sim = if config.ablation.high_similarity() {
        sim
    } else {
        1.0 - sim
    };
    let r = if config.ablation.high_reward() {
        reward
    } else {
        1.0 - reward
    };
    config.alpha * sim + (1.0 - config.alpha) * r
}

/// Reward-weighted retrieval score of one entry against a query embedding.
pub fn retrieval_score(
    entry: &ExperienceEntry,
    query: &[f64],
    config: &RetrievalConfig,
) -> Result<f64, StoreError> {
    Ok(score_parts(
        similarity(query, &entry.embedding)?,
        entry.reward,
        config,
    ))
}

/// `Less` means `(a_score, a_reward)` ranks ahead.
fn rank_cmp(a_score: f64, a_reward: f64, b_score: f64, b_reward: f64) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then_with(|| b_reward.total_cmp(&a_reward))
}

fn top_k<'a>(
    candidates: impl Iterator<Item = &'a ExperienceEntry>,
    query: &[f64],
    config: &RetrievalConfig,
) -> Result<Vec<&'a ExperienceEntry>, StoreError> {
    // (score, reward, insertion position, entry), kept sorted best-first
    let mut best: Vec<(f64, f64, usize, &ExperienceEntry)> = Vec::with_capacity(config.top_k + 1);
    for (pos, e) in candidates.enumerate() {
        let score = retrieval_score(e, query, config)?;
        let key = (score, e.reward, pos, e);
        let at = best.partition_point(|b| {
            rank_cmp(b.0, b.1, key.0, key.1).then(b.2.cmp(&key.2)) == Ordering::Less
        });
        if at < config.top_k {
            best.insert(at, key);
            best.truncate(config.top_k);
        }
    }
    Ok(best.into_iter().map(|b| b.3).collect())
}
