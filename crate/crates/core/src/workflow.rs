//! Recursive divide-and-conquer execution over the agent graph.
//!
//! Starting at the most central agent, each task node goes through:
//!
//! 1. a solvability judgement (skipped and forced to "yes" at the depth cap),
//! 2. either a solve, or a decomposition whose subtasks are dealt
//!    round-robin to the agent's neighbours and solved recursively,
//! 3. for decomposed nodes, critique rounds in which the assigner reviews
//!    every pending sub-solution and sends inadequate ones back with the
//!    critique, until all are adequate or the round cap is hit,
//! 4. an aggregation of the sub-solutions into the node's solution.
//!
//! Every model call that produced a decision is recorded as a [`StepRecord`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CompletionRequest, ModelBackend, TokenUsage};
use crate::embed::EmbeddingBackend;
use crate::experience::{
    ExperienceEntry, ExperienceStore, RetrievalConfig, StoreError, TraceExemplar,
};
use crate::graph::{AgentId, GraphError, Topology};
use crate::prompt::{
    format_reminder, parse_structured, Decision, ParseError, PromptTemplates, Verdict,
};
use crate::step::{DecisionStepType, RetrievalStrategy};

pub const ROOT_NODE: &str = "root";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowConfig {
    pub max_refinement_rounds: u32,
    pub max_decomposition_layer: u32,
    pub retrieval_strategy: RetrievalStrategy,
    pub temperature: f64,
    /// Fan-out cap per decomposition. `None` means `max(neighbours, 2)`.
    pub max_subtasks: Option<u32>,
    pub max_tokens: u32,
    /// Hard cap on prompt + completion tokens for one run.
    pub token_budget: Option<u64>,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig::simple()
    }
}

impl WorkflowConfig {
    /// Caps for short-answer datasets: 2 refinement rounds, 1 decomposition layer.
    pub fn simple() -> Self {
        WorkflowConfig {
            max_refinement_rounds: 2,
            max_decomposition_layer: 1,
            retrieval_strategy: RetrievalStrategy::None,
            temperature: crate::backend::DEFAULT_TEMPERATURE,
            max_subtasks: None,
            max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
            token_budget: None,
        }
    }

    /// Caps for long-form and project-level datasets: 3 rounds, 2 layers.
    pub fn complex() -> Self {
        WorkflowConfig {
            max_refinement_rounds: 3,
            max_decomposition_layer: 2,
            ..WorkflowConfig::simple()
        }
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.max_refinement_rounds == 0 {
            return Err(WorkflowError::InvalidConfig(
                "max_refinement_rounds must be positive",
            ));
        }
        if self.max_decomposition_layer == 0 {
            return Err(WorkflowError::InvalidConfig(
                "max_decomposition_layer must be positive",
            ));
        }
        if self.max_subtasks == Some(0) {
            return Err(WorkflowError::InvalidConfig(
                "max_subtasks must be positive",
            ));
        }
        if !(self.temperature >= 0.0) {
            return Err(WorkflowError::InvalidConfig(
                "temperature must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskNode {
    /// Path id: `root`, `root.0`, `root.0.1`, ...
    pub node_id: String,
    pub description: String,
    pub depth: u32,
    pub assigner: Option<AgentId>,
    pub solver: AgentId,
    pub children: Vec<TaskNode>,
    pub solution: Option<String>,
    pub refinement_round: u32,
    /// Every solution this node produced, oldest first. Entry 0 is the
    /// initial solve or aggregate; entry `k` is the re-solve after critique
    /// round `k - 1`.
    pub attempts: Vec<String>,
}

impl TaskNode {
    pub fn is_decomposed(&self) -> bool {
        !self.children.is_empty()
    }

    pub fn find(&self, node_id: &str) -> Option<&TaskNode> {
        if self.node_id == node_id {
            return Some(self);
        }
        if !node_id.starts_with(self.node_id.as_str()) {
            return None;
        }
        self.children.iter().find_map(|c| c.find(node_id))
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&TaskNode> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn max_depth(&self) -> u32 {
        self.walk().iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

/// Origin of an exemplar injected into a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarRef {
    pub agent: AgentId,
    pub task_id: String,
    pub step_index: u64,
}

impl From<&ExperienceEntry> for ExemplarRef {
    fn from(e: &ExperienceEntry) -> Self {
        ExemplarRef {
            agent: e.agent,
            task_id: e.task_id.clone(),
            step_index: e.step_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u64,
    pub agent: AgentId,
    pub step_type: DecisionStepType,
    /// Task node the step acts on. For critiques this is the reviewed subtask.
    pub node_id: String,
    /// Attempt index for solves, round index for critiques, 0 otherwise.
    pub round: u32,
    pub state: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<ExemplarRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub run_id: String,
    /// Dataset id of the task; keys the experience entries derived from this run.
    pub task_id: String,
    pub strategy: RetrievalStrategy,
    /// Winning historical trace for task-wise runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_task: Option<String>,
    pub root_task: TaskNode,
    pub steps: Vec<StepRecord>,
    pub outcome: String,
    pub token_usage: TokenUsage,
}

impl Trace {
    pub fn count(&self, step_type: DecisionStepType) -> usize {
        self.steps
            .iter()
            .filter(|s| s.step_type == step_type)
            .count()
    }

    pub fn exemplar_count(&self) -> usize {
        self.steps.iter().map(|s| s.exemplars.len()).sum()
    }

    /// Checks the structural invariants every completed run must satisfy.
    pub fn validate(
        &self,
        topology: &Topology,
        config: &WorkflowConfig,
    ) -> Result<(), WorkflowError> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.step_index != i as u64 {
                return Err(WorkflowError::Defect("step indices are not 0..len"));
            }
            if !topology.contains(s.agent) {
                return Err(WorkflowError::Graph(GraphError::UnknownAgent(s.agent)));
            }
        }
        for node in self.root_task.walk() {
            if node.depth > config.max_decomposition_layer {
                return Err(WorkflowError::DepthViolation {
                    node: node.node_id.clone(),
                    depth: node.depth,
                });
            }
            let critiques = self
                .steps
                .iter()
                .filter(|s| s.step_type == DecisionStepType::Critique && s.node_id == node.node_id)
                .count() as u32;
            if node.refinement_round > config.max_refinement_rounds
                || critiques > config.max_refinement_rounds
            {
                return Err(WorkflowError::RoundViolation {
                    node: node.node_id.clone(),
                    rounds: critiques.max(node.refinement_round),
                });
            }
        }
        match self.steps.last() {
            Some(last)
                if last.node_id == ROOT_NODE
                    && matches!(
                        last.step_type,
                        DecisionStepType::Solve | DecisionStepType::Aggregate
                    ) => {}
            _ => {
                return Err(WorkflowError::Defect(
                    "trace does not end with the root outcome",
                ))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkflowError {
    Backend(BackendError),
    /// Reply still unparseable after one re-prompt.
    MalformedResponse {
        agent: AgentId,
        error: ParseError,
        raw: String,
    },
    DepthViolation {
        node: String,
        depth: u32,
    },
    RoundViolation {
        node: String,
        rounds: u32,
    },
    Defect(&'static str),
    MissingPool,
    InvalidConfig(&'static str),
    Graph(GraphError),
    Store(StoreError),
}

impl fmt::Display for WorkflowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkflowError::Backend(e) => write!(f, "{e}"),
            WorkflowError::MalformedResponse { agent, error, .. } => {
                write!(f, "agent {agent}: {error} (after re-prompt)")
            }
            WorkflowError::DepthViolation { node, depth } => {
                write!(
                    f,
                    "internal defect: node {node} at depth {depth} exceeds the layer cap"
                )
            }
            WorkflowError::RoundViolation { node, rounds } => {
                write!(
                    f,
                    "internal defect: node {node} refined {rounds} times, above the round cap"
                )
            }
            WorkflowError::Defect(m) => write!(f, "internal defect: {m}"),
            WorkflowError::MissingPool => {
                f.write_str("retrieval strategy requires an experience store")
            }
            WorkflowError::InvalidConfig(m) => write!(f, "invalid workflow config: {m}"),
            WorkflowError::Graph(e) => write!(f, "{e}"),
            WorkflowError::Store(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for WorkflowError {}

impl From<BackendError> for WorkflowError {
    fn from(e: BackendError) -> Self {
        WorkflowError::Backend(e)
    }
}

impl From<GraphError> for WorkflowError {
    fn from(e: GraphError) -> Self {
        WorkflowError::Graph(e)
    }
}

impl From<StoreError> for WorkflowError {
    fn from(e: StoreError) -> Self {
        WorkflowError::Store(e)
    }
}

/// Experience available to a run.
#[derive(Clone, Copy)]
pub struct Experience<'a> {
    pub store: &'a ExperienceStore,
    pub embedder: &'a dyn EmbeddingBackend,
    pub retrieval: &'a RetrievalConfig,
}

pub fn critique_state(task: &str, solution: &str) -> String {
    format!("Task: {task}\nProposed solution: {solution}")
}

pub fn refine_state(task: &str, solution: &str, critique: &str) -> String {
    format!("Task: {task}\nPrevious solution: {solution}\nCritique: {critique}")
}

pub fn aggregate_state(task: &str, children: &[TaskNode]) -> String {
    let mut s = format!("Task: {task}\nSub-solutions:");
    for (i, c) in children.iter().enumerate() {
        let sol = c.solution.as_deref().unwrap_or("");
        s.push_str(&format!("\n[{}] {}\n{}", i + 1, c.description, sol));
    }
    s
}

/// Configured workflow run. `run_workflow` covers the common case.
pub struct Workflow<'a, B: ?Sized> {
    topology: &'a Topology,
    config: &'a WorkflowConfig,
    backend: &'a B,
    templates: Option<&'a PromptTemplates>,
    experience: Option<Experience<'a>>,
}

impl<'a, B: ModelBackend + ?Sized> Workflow<'a, B> {
    pub fn new(topology: &'a Topology, config: &'a WorkflowConfig, backend: &'a B) -> Self {
        Workflow {
            topology,
            config,
            backend,
            templates: None,
            experience: None,
        }
    }

    pub fn templates(mut self, templates: &'a PromptTemplates) -> Self {
        self.templates = Some(templates);
        self
    }

    pub fn experience(mut self, experience: Option<Experience<'a>>) -> Self {
        self.experience = experience;
        self
    }

    pub fn run(&self, run_id: &str, task_id: &str, task: &str) -> Result<Trace, WorkflowError> {
        self.config.validate()?;
        let default_templates;
        let templates = match self.templates {
            Some(t) => t,
            None => {
                default_templates = PromptTemplates::default();
                &default_templates
            }
        };
        let root = self.topology.select_root();
        let guidance = match self.config.retrieval_strategy {
            RetrievalStrategy::None => Guidance::None,
            RetrievalStrategy::StepWise => {
                let exp = self.experience.ok_or(WorkflowError::MissingPool)?;
                exp.retrieval.validate()?;
                Guidance::StepWise(exp)
            }
            RetrievalStrategy::TaskWise => {
                let exp = self.experience.ok_or(WorkflowError::MissingPool)?;
                Guidance::TaskWise(exp.store.retrieve_trace(
                    root,
                    task,
                    exp.retrieval,
                    exp.embedder,
                )?)
            }
        };
        let exemplar_task = match &guidance {
            Guidance::TaskWise(ex) => ex.task_id.clone(),
            _ => None,
        };
        let mut run = Run {
            topology: self.topology,
            config: self.config,
            backend: self.backend,
            templates,
            guidance,
            steps: Vec::new(),
            usage: TokenUsage::default(),
        };
        let mut root_node =
            run.solve_node(root, None, 0, String::from(ROOT_NODE), String::from(task))?;
        root_node.solution = root_node.attempts.last().cloned();
        let outcome = root_node
            .solution
            .clone()
            .ok_or(WorkflowError::Defect("root produced no solution"))?;
        let trace = Trace {
            run_id: String::from(run_id),
            task_id: String::from(task_id),
            strategy: self.config.retrieval_strategy,
            exemplar_task,
            root_task: root_node,
            steps: run.steps,
            outcome,
            token_usage: run.usage,
        };
        trace.validate(self.topology, self.config)?;
        Ok(trace)
    }
}

/// Runs one task with the built-in prompt templates.
pub fn run_workflow<B: ModelBackend + ?Sized>(
    task_id: &str,
    task: &str,
    topology: &Topology,
    config: &WorkflowConfig,
    backend: &B,
    experience: Option<Experience<'_>>,
) -> Result<Trace, WorkflowError> {
    Workflow::new(topology, config, backend)
        .experience(experience)
        .run(task_id, task_id, task)
}

enum Guidance<'a> {
    None,
    StepWise(Experience<'a>),
    TaskWise(TraceExemplar),
}

struct Run<'a, B: ?Sized> {
    topology: &'a Topology,
    config: &'a WorkflowConfig,
    backend: &'a B,
    templates: &'a PromptTemplates,
    guidance: Guidance<'a>,
    steps: Vec<StepRecord>,
    usage: TokenUsage,
}

impl<B: ModelBackend + ?Sized> Run<'_, B> {
    fn call(
        &mut self,
        agent: AgentId,
        step: DecisionStepType,
        prompt: String,
    ) -> Result<String, WorkflowError> {
        let request = CompletionRequest {
            prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            step: Some(step),
            agent: Some(agent),
            profile: self.topology.agent(agent)?.profile.clone(),
        };
        let response = self.backend.complete(&request)?;
        self.usage += &response;
        if let Some(cap) = self.config.token_budget {
            if self.usage.total() > cap {
                return Err(BackendError::BudgetExceeded {
                    used: self.usage.total(),
                    cap,
                }
                .into());
            }
        }
        Ok(response.text)
    }

    /// One decision step: retrieve, prompt, parse (with one re-prompt), record.
    fn ask(
        &mut self,
        agent: AgentId,
        step: DecisionStepType,
        node_id: &str,
        round: u32,
        state: String,
    ) -> Result<Decision, WorkflowError> {
        let exemplars: Vec<ExperienceEntry> = match &mut self.guidance {
            Guidance::None => Vec::new(),
            Guidance::StepWise(exp) => exp
                .store
                .retrieve_step(agent, step, &state, exp.retrieval, exp.embedder)?
                .into_iter()
                .cloned()
                .collect(),
            Guidance::TaskWise(ex) => ex.next_for(step).cloned().into_iter().collect(),
        };
        let refs: Vec<&ExperienceEntry> = exemplars.iter().collect();
        let prompt = self.templates.render(step, &state, &refs);
        let mut raw = self.call(agent, step, prompt.clone())?;
        let decision = match parse_structured(step, &raw) {
            Ok(d) => d,
            Err(_) => {
                let retry = format!("{prompt}\n\n{}", format_reminder(step));
                raw = self.call(agent, step, retry)?;
                parse_structured(step, &raw).map_err(|error| WorkflowError::MalformedResponse {
                    agent,
                    error,
                    raw: raw.clone(),
                })?
            }
        };
        self.steps.push(StepRecord {
            step_index: self.steps.len() as u64,
            agent,
            step_type: step,
            node_id: String::from(node_id),
            round,
            state,
            action: raw,
            exemplars: exemplars.iter().map(ExemplarRef::from).collect(),
        });
        Ok(decision)
    }

    fn solution(decision: Decision) -> Result<String, WorkflowError> {
        match decision {
            Decision::Solution(s) => Ok(s),
            _ => Err(WorkflowError::Defect("expected a solution decision")),
        }
    }

    fn solve_node(
        &mut self,
        agent: AgentId,
        assigner: Option<AgentId>,
        depth: u32,
        node_id: String,
        description: String,
    ) -> Result<TaskNode, WorkflowError> {
        if depth > self.config.max_decomposition_layer {
            return Err(WorkflowError::DepthViolation {
                node: node_id,
                depth,
            });
        }
        let neighbors: Vec<AgentId> = self.topology.neighbors(agent)?.to_vec();
        let mut node = TaskNode {
            node_id,
            description,
            depth,
            assigner,
            solver: agent,
            children: Vec::new(),
            solution: None,
            refinement_round: 0,
            attempts: Vec::new(),
        };

        let may_decompose = depth < self.config.max_decomposition_layer && !neighbors.is_empty();
        let solo = if may_decompose {
            match self.ask(
                agent,
                DecisionStepType::SolvabilityJudge,
                &node.node_id,
                0,
                node.description.clone(),
            )? {
                Decision::Solvable(yes) => yes,
                _ => return Err(WorkflowError::Defect("expected a solvability decision")),
            }
        } else {
            true
        };

        if solo {
            let d = self.ask(
                agent,
                DecisionStepType::Solve,
                &node.node_id,
                0,
                node.description.clone(),
            )?;
            node.attempts.push(Self::solution(d)?);
            node.solution = node.attempts.last().cloned();
            return Ok(node);
        }

        let subtasks = match self.ask(
            agent,
            DecisionStepType::Decompose,
            &node.node_id,
            0,
            node.description.clone(),
        )? {
            Decision::Subtasks(s) => s,
            _ => return Err(WorkflowError::Defect("expected a subtask list")),
        };
        let cap = self
            .config
            .max_subtasks
            .map_or_else(|| neighbors.len().max(2), |m| m as usize);
        for (i, sub) in subtasks.into_iter().take(cap).enumerate() {
            let worker = neighbors[i % neighbors.len()];
            let child_id = format!("{}.{}", node.node_id, i);
            let child = self.solve_node(worker, Some(agent), depth + 1, child_id, sub)?;
            node.children.push(child);
        }

        let mut pending: Vec<usize> = (0..node.children.len()).collect();
        for round in 0..self.config.max_refinement_rounds {
            if pending.is_empty() {
                break;
            }
            let mut still = Vec::new();
            for i in pending {
                let child = &node.children[i];
                let current = child.attempts.last().cloned().unwrap_or_default();
                let state = critique_state(&child.description, &current);
                let child_id = child.node_id.clone();
                let verdict =
                    match self.ask(agent, DecisionStepType::Critique, &child_id, round, state)? {
                        Decision::Verdict(v) => v,
                        _ => return Err(WorkflowError::Defect("expected a verdict")),
                    };
                if let Verdict::Inadequate(critique) = verdict {
                    let child = &node.children[i];
                    let (solver, state) = (
                        child.solver,
                        refine_state(&child.description, &current, &critique),
                    );
                    let d =
                        self.ask(solver, DecisionStepType::Solve, &child_id, round + 1, state)?;
                    let child = &mut node.children[i];
                    child.attempts.push(Self::solution(d)?);
                    child.solution = child.attempts.last().cloned();
                    child.refinement_round = round + 1;
                    still.push(i);
                }
            }
            pending = still;
        }

        let state = aggregate_state(&node.description, &node.children);
        let d = self.ask(agent, DecisionStepType::Aggregate, &node.node_id, 0, state)?;
        node.attempts.push(Self::solution(d)?);
        node.solution = node.attempts.last().cloned();
        Ok(node)
    }
}
