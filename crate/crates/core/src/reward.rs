//! Step-level rewards for a completed trace.
//!
//! | step              | reward                                                    |
//! |-------------------|-----------------------------------------------------------|
//! | solve             | quality of the solution that step produced                |
//! | aggregate         | quality of the aggregated solution                        |
//! | decompose         | mean final quality of the node's subtasks                 |
//! | solvability judge | final quality when solved alone, else the decompose value |
//! | critique          | `(delta + 1) / 2`, delta = quality after - before refine  |
//!
//! A critique that accepted the solution has delta 0 and stores 0.5.
//! Root-node solutions are scored with the gold-reference scorer, all other
//! nodes with the subtask scorer.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::scorer::{QualityScore, QualityScorer, ScoreError};
use crate::step::DecisionStepType;
use crate::workflow::{TaskNode, Trace};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardReport {
    pub run_id: String,
    pub task_id: String,
    /// Stored reward per step index, all in `[0, 1]`.
    pub rewards: BTreeMap<u64, f64>,
    /// Signed quality change per critique step, before normalization.
    pub critique_deltas: BTreeMap<u64, f64>,
}

impl RewardReport {
    pub fn reward(&self, step_index: u64) -> Option<f64> {
        self.rewards.get(&step_index).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardError {
    MissingReference,
    IncompleteTrace(String),
    Scorer(ScoreError),
}

impl fmt::Display for RewardError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardError::MissingReference => f.write_str("no quality reference available"),
            RewardError::IncompleteTrace(m) => write!(f, "incomplete trace: {m}"),
            RewardError::Scorer(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for RewardError {}

impl From<ScoreError> for RewardError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::MissingReference => RewardError::MissingReference,
            other => RewardError::Scorer(other),
        }
    }
}

/// Scorers for the two kinds of nodes in a task tree.
#[derive(Clone, Copy)]
pub struct TraceScorer<'a> {
    /// Holds the gold reference of the root task.
    pub root: &'a dyn QualityScorer,
    /// Judges subtasks, which have no gold reference.
    pub subtasks: Option<&'a dyn QualityScorer>,
}

impl<'a> TraceScorer<'a> {
    pub fn new(root: &'a dyn QualityScorer, subtasks: Option<&'a dyn QualityScorer>) -> Self {
        TraceScorer { root, subtasks }
    }

    fn for_node(&self, node: &TaskNode) -> Result<&'a dyn QualityScorer, RewardError> {
        if node.depth == 0 {
            Ok(self.root)
        } else {
            self.subtasks.ok_or(RewardError::MissingReference)
        }
    }
}

/// Quality of a subtask's final solution.
pub fn subtask_quality(
    subtask: &TaskNode,
    scorer: &dyn QualityScorer,
) -> Result<QualityScore, RewardError> {
    let solution = subtask.solution.as_deref().ok_or_else(|| {
        RewardError::IncompleteTrace(alloc::format!("node {} has no solution", subtask.node_id))
    })?;
    Ok(scorer.score(&subtask.description, solution)?)
}

struct Quality<'a, 't> {
    scorer: TraceScorer<'a>,
    cache: BTreeMap<(&'t str, usize), f64>,
}

impl<'t> Quality<'_, 't> {
    fn attempt(&mut self, node: &'t TaskNode, k: usize) -> Result<f64, RewardError> {
        if let Some(v) = self.cache.get(&(node.node_id.as_str(), k)) {
            return Ok(*v);
        }
        let solution = node.attempts.get(k).ok_or_else(|| {
            RewardError::IncompleteTrace(alloc::format!("node {} has no attempt {k}", node.node_id))
        })?;
        let v = self
            .scorer
            .for_node(node)?
            .score(&node.description, solution)?
            .value();
        self.cache.insert((node.node_id.as_str(), k), v);
        Ok(v)
    }

    fn last(&mut self, node: &'t TaskNode) -> Result<f64, RewardError> {
        match node.attempts.len() {
            0 => Err(RewardError::IncompleteTrace(alloc::format!(
                "node {} has no solution",
                node.node_id
            ))),
            n => self.attempt(node, n - 1),
        }
    }

    fn children_mean(&mut self, node: &'t TaskNode) -> Result<f64, RewardError> {
        let mut sum = 0.0;
        for c in &node.children {
            sum += self.last(c)?;
        }
        Ok(sum / node.children.len() as f64)
    }
}

/// Assigns a reward to every step of `trace`.
pub fn score_trace(trace: &Trace, scorer: TraceScorer<'_>) -> Result<RewardReport, RewardError> {
    let mut q = Quality {
        scorer,
        cache: BTreeMap::new(),
    };
    let mut report = RewardReport {
        run_id: trace.run_id.clone(),
        task_id: trace.task_id.clone(),
        ..RewardReport::default()
    };
    for step in &trace.steps {
        let node = trace.root_task.find(&step.node_id).ok_or_else(|| {
            RewardError::IncompleteTrace(alloc::format!(
                "step {} references unknown node {}",
                step.step_index,
                step.node_id
            ))
        })?;
        let round = step.round as usize;
        let reward = match step.step_type {
            DecisionStepType::Solve => q.attempt(node, round)?,
            DecisionStepType::Aggregate => {
                if !node.is_decomposed() {
                    return Err(RewardError::IncompleteTrace(alloc::format!(
                        "aggregate on undecomposed node {}",
                        node.node_id
                    )));
                }
                q.attempt(node, 0)?
            }
            DecisionStepType::Decompose => {
                if !node.is_decomposed() {
                    return Err(RewardError::IncompleteTrace(alloc::format!(
                        "decompose without subtasks at {}",
                        node.node_id
                    )));
                }
                q.children_mean(node)?
            }
            DecisionStepType::SolvabilityJudge => {
                if node.is_decomposed() {
                    q.children_mean(node)?
                } else {
                    q.last(node)?
                }
            }
            DecisionStepType::Critique => {
                let delta = if node.attempts.len() > round + 1 {
                    q.attempt(node, round + 1)? - q.attempt(node, round)?
                } else {
                    0.0
                };
                report.critique_deltas.insert(step.step_index, delta);
                (delta + 1.0) / 2.0
            }
        };
        report
            .rewards
            .insert(step.step_index, reward.clamp(0.0, 1.0));
    }
    Ok(report)
}
