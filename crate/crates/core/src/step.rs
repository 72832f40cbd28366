use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// The five recordable agent actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionStepType {
    SolvabilityJudge,
    Decompose,
    Solve,
    Critique,
    Aggregate,
}

impl DecisionStepType {
    pub const ALL: [DecisionStepType; 5] = [
        DecisionStepType::SolvabilityJudge,
        DecisionStepType::Decompose,
        DecisionStepType::Solve,
        DecisionStepType::Critique,
        DecisionStepType::Aggregate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionStepType::SolvabilityJudge => "solvability_judge",
            DecisionStepType::Decompose => "decompose",
            DecisionStepType::Solve => "solve",
            DecisionStepType::Critique => "critique",
            DecisionStepType::Aggregate => "aggregate",
        }
    }
}

impl fmt::Display for DecisionStepType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecisionStepType {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DecisionStepType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or(UnknownVariant)
    }
}

/// How a run consults stored experience.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalStrategy {
    /// No experience consulted.
    #[default]
    None,
    /// One historical trace chosen up front and replayed step by step.
    TaskWise,
    /// An independent retrieval at every decision step.
    StepWise,
}

impl RetrievalStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalStrategy::None => "oexp",
            RetrievalStrategy::TaskWise => "task",
            RetrievalStrategy::StepWise => "step",
        }
    }
}

impl fmt::Display for RetrievalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrievalStrategy {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oexp" | "none" => Ok(RetrievalStrategy::None),
            "task" | "task_wise" => Ok(RetrievalStrategy::TaskWise),
            "step" | "step_wise" => Ok(RetrievalStrategy::StepWise),
            _ => Err(UnknownVariant),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownVariant;

impl fmt::Display for UnknownVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown variant")
    }
}
