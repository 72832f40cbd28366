//! Core engine for experiential multi-agent learning.
//!
//! Agents sit on an undirected graph. A task enters at the most central agent
//! and is recursively judged, decomposed, solved, critiqued and aggregated
//! along graph edges. Every decision step is recorded in a [`Trace`], scored
//! by the reward rules in [`reward`], and stored in per-agent experience
//! pools ([`experience`]) that later runs query with a reward-weighted
//! similarity score.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, HTTP providers
//! and the command line live in the companion `mael` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod backend;
pub mod embed;
pub mod experience;
pub mod graph;
pub mod metrics;
pub mod prompt;
pub mod reward;
pub mod scorer;
pub mod step;
pub mod workflow;

pub use backend::{
    BackendError, CompletionRequest, CompletionResponse, FuzzBackend, ModelBackend, ScriptRule,
    ScriptedBackend, TokenUsage,
};
pub use embed::{cosine, EmbeddingBackend, EmbeddingError, HashedEmbedder};
pub use experience::{
    retrieval_score, Ablation, ExperienceEntry, ExperienceStore, RetrievalConfig, StoreError,
    TraceExemplar,
};
pub use graph::{AgentId, AgentSpec, CentralityTable, GraphError, Topology};
pub use metrics::{ExperimentReport, RunMetrics};
pub use prompt::{Decision, ParseError, PromptTemplates, Verdict};
pub use reward::{score_trace, RewardError, RewardReport, TraceScorer};
pub use scorer::{QualityScore, QualityScorer};
pub use step::{DecisionStepType, RetrievalStrategy};
pub use workflow::{
    run_workflow, Experience, StepRecord, TaskNode, Trace, Workflow, WorkflowConfig, WorkflowError,
};
