//! Application configuration (JSON) and the runtime objects built from it.

use std::fs;
use std::path::{Path, PathBuf};

use mael_core::scorer::{
    ConceptCoverage, ExactMatch, LlmJudge, MultipleChoice, ScoreError, ScriptedScorer,
};
use mael_core::{
    BackendError, CompletionRequest, CompletionResponse, EmbeddingBackend, EmbeddingError,
    FuzzBackend, HashedEmbedder, ModelBackend, QualityScore, QualityScorer, RetrievalConfig,
    ScriptedBackend, WorkflowConfig,
};
use serde::{Deserialize, Serialize};

use crate::dataset::TaskRecord;
use crate::openai::{OpenAiClient, OpenAiSettings};

/// Cap preset for a dataset family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 2 refinement rounds, 1 decomposition layer.
    #[default]
    Simple,
    /// 3 refinement rounds, 2 decomposition layers.
    Complex,
}

/// Workflow values that override the profile preset when present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowOverrides {
    pub max_refinement_rounds: Option<u32>,
    pub max_decomposition_layer: Option<u32>,
    pub max_subtasks: Option<u32>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub token_budget: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Ordered response rules read from a JSON file.
    Scripted { script: PathBuf },
    /// Hash-driven well-formed replies; the run seed selects the stream.
    Fuzz,
    #[serde(rename = "openai")]
    OpenAi(OpenAiSettings),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::OpenAi(OpenAiSettings::default())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderConfig {
    #[default]
    Hashed,
    /// Embeddings endpoint of the `openai` backend.
    #[serde(rename = "openai")]
    OpenAi,
}

/// How the final solution of a root task is scored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RootScorerConfig {
    /// Concept coverage when the record lists concepts, exact match when it
    /// has a gold answer, the model judge otherwise.
    #[default]
    Auto,
    ExactMatch,
    MultipleChoice,
    ConceptCoverage,
    LlmJudge,
    Scripted(ScriptedScorer),
}

/// How subtask solutions, which have no gold answer, are scored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubtaskScorerConfig {
    #[default]
    LlmJudge,
    Scripted(ScriptedScorer),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub root: RootScorerConfig,
    pub subtasks: SubtaskScorerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub pool: PathBuf,
    pub runs: PathBuf,
    pub templates: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            pool: PathBuf::from("mael-pool.jsonl"),
            runs: PathBuf::from("runs"),
            templates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Topology JSON. The four-agent complete graph when unset.
    pub topology: Option<PathBuf>,
    pub profile: Profile,
    pub workflow: WorkflowOverrides,
    pub retrieval: RetrievalConfig,
    pub scorer: ScorerConfig,
    pub backend: BackendConfig,
    pub embedder: EmbedderConfig,
    pub paths: PathsConfig,
    pub seed: u64,
    /// At most this many training tasks are ingested by `train`.
    pub train_tasks: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            topology: None,
            profile: Profile::Simple,
            workflow: WorkflowOverrides::default(),
            retrieval: RetrievalConfig::default(),
            scorer: ScorerConfig::default(),
            backend: BackendConfig::default(),
            embedder: EmbedderConfig::Hashed,
            paths: PathsConfig::default(),
            seed: 0,
            train_tasks: 30,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl AppConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: AppConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(t) = cfg.topology.as_mut() {
            rebase(base, t);
        }
        if let Some(t) = cfg.paths.templates.as_mut() {
            rebase(base, t);
        }
        rebase(base, &mut cfg.paths.pool);
        rebase(base, &mut cfg.paths.runs);
        if let BackendConfig::Scripted { script } = &mut cfg.backend {
            rebase(base, script);
        }
        Ok(cfg)
    }

    pub fn workflow_config(&self) -> WorkflowConfig {
        let mut w = match self.profile {
            Profile::Simple => WorkflowConfig::simple(),
            Profile::Complex => WorkflowConfig::complex(),
        };
        let o = &self.workflow;
        if let Some(v) = o.max_refinement_rounds {
            w.max_refinement_rounds = v;
        }
        if let Some(v) = o.max_decomposition_layer {
            w.max_decomposition_layer = v;
        }
        if let Some(v) = o.temperature {
            w.temperature = v;
        }
        if let Some(v) = o.max_tokens {
            w.max_tokens = v;
        }
        w.max_subtasks = o.max_subtasks.or(w.max_subtasks);
        w.token_budget = o.token_budget.or(w.token_budget);
        w
    }
}

/// The chat backend selected by configuration.
#[derive(Debug, Clone)]
pub enum Backend {
    Scripted(ScriptedBackend),
    Fuzz(FuzzBackend),
    OpenAi(OpenAiClient),
}

impl ModelBackend for Backend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        match self {
            Backend::Scripted(b) => b.complete(request),
            Backend::Fuzz(b) => b.complete(request),
            Backend::OpenAi(b) => b.complete(request),
        }
    }
}

impl Backend {
    pub fn from_config(cfg: &BackendConfig, seed: u64) -> Result<Self, ConfigError> {
        match cfg {
            BackendConfig::Scripted { script } => {
                let text = fs::read_to_string(script).map_err(|source| ConfigError::Io {
                    path: script.clone(),
                    source,
                })?;
                let backend: ScriptedBackend =
                    serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                        path: script.clone(),
                        reason: e.to_string(),
                    })?;
                if backend.rules.is_empty() && backend.fallback.is_none() {
                    return Err(ConfigError::Invalid(format!(
                        "{}: script has no rules and no fallback",
                        script.display()
                    )));
                }
                Ok(Backend::Scripted(backend))
            }
            BackendConfig::Fuzz => Ok(Backend::Fuzz(FuzzBackend { seed })),
            BackendConfig::OpenAi(settings) => {
                let mut settings = settings.clone();
                settings.apply_env(|k| std::env::var(k).ok());
                OpenAiClient::new(settings)
                    .map(Backend::OpenAi)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Backend::OpenAi(_))
    }
}

#[derive(Debug, Clone)]
pub enum Embedder {
    Hashed(HashedEmbedder),
    OpenAi(OpenAiClient),
}

impl EmbeddingBackend for Embedder {
    fn provider_tag(&self) -> &str {
        match self {
            Embedder::Hashed(e) => e.provider_tag(),
            Embedder::OpenAi(e) => e.provider_tag(),
        }
    }

    fn dimension(&self) -> usize {
        match self {
            Embedder::Hashed(e) => e.dimension(),
            Embedder::OpenAi(e) => e.dimension(),
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        match self {
            Embedder::Hashed(e) => e.embed(text),
            Embedder::OpenAi(e) => e.embed(text),
        }
    }
}

impl Embedder {
    pub fn from_config(cfg: EmbedderConfig, backend: &Backend) -> Result<Self, ConfigError> {
        match (cfg, backend) {
            (EmbedderConfig::Hashed, _) => Ok(Embedder::Hashed(HashedEmbedder)),
            (EmbedderConfig::OpenAi, Backend::OpenAi(client)) => {
                Ok(Embedder::OpenAi(client.clone()))
            }
            (EmbedderConfig::OpenAi, _) => Err(ConfigError::Invalid(
                "the openai embedder needs the openai backend".into(),
            )),
        }
    }
}

/// Root-task scorer for one dataset record.
pub enum RootScorer<'a> {
    Exact(ExactMatch),
    Choice(MultipleChoice),
    Coverage(ConceptCoverage),
    Judge(LlmJudge<&'a Backend>),
    Scripted(&'a ScriptedScorer),
}

impl QualityScorer for RootScorer<'_> {
    fn score(&self, task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        match self {
            RootScorer::Exact(s) => s.score(task, solution),
            RootScorer::Choice(s) => s.score(task, solution),
            RootScorer::Coverage(s) => s.score(task, solution),
            RootScorer::Judge(s) => s.score(task, solution),
            RootScorer::Scripted(s) => s.score(task, solution),
        }
    }
}

pub fn root_scorer<'a>(
    cfg: &'a RootScorerConfig,
    record: &TaskRecord,
    backend: &'a Backend,
) -> RootScorer<'a> {
    let exact = || {
        RootScorer::Exact(ExactMatch {
            gold: record.gold.clone(),
        })
    };
    let coverage = || {
        RootScorer::Coverage(ConceptCoverage {
            concepts: record.concepts.clone(),
        })
    };
    match cfg {
        RootScorerConfig::Auto if !record.concepts.is_empty() => coverage(),
        RootScorerConfig::Auto if record.gold.is_some() => exact(),
        RootScorerConfig::Auto | RootScorerConfig::LlmJudge => {
            RootScorer::Judge(LlmJudge::new(backend))
        }
        RootScorerConfig::ExactMatch => exact(),
        RootScorerConfig::MultipleChoice => RootScorer::Choice(MultipleChoice {
            gold: record.gold.clone(),
        }),
        RootScorerConfig::ConceptCoverage => coverage(),
        RootScorerConfig::Scripted(s) => RootScorer::Scripted(s),
    }
}

pub enum SubtaskScorer<'a> {
    Judge(LlmJudge<&'a Backend>),
    Scripted(&'a ScriptedScorer),
}

impl QualityScorer for SubtaskScorer<'_> {
    fn score(&self, task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        match self {
            SubtaskScorer::Judge(s) => s.score(task, solution),
            SubtaskScorer::Scripted(s) => s.score(task, solution),
        }
    }
}

pub fn subtask_scorer<'a>(cfg: &'a SubtaskScorerConfig, backend: &'a Backend) -> SubtaskScorer<'a> {
    match cfg {
        SubtaskScorerConfig::LlmJudge => SubtaskScorer::Judge(LlmJudge::new(backend)),
        SubtaskScorerConfig::Scripted(s) => SubtaskScorer::Scripted(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_simple_profile() {
        let cfg = AppConfig::default();
        let w = cfg.workflow_config();
        assert_eq!((w.max_refinement_rounds, w.max_decomposition_layer), (2, 1));
        assert_eq!(w.temperature, 0.2);
        assert_eq!(cfg.retrieval.alpha, 0.5);
        assert_eq!(cfg.train_tasks, 30);
    }

    #[test]
    fn complex_profile_with_override() {
        let cfg: AppConfig =
            serde_json::from_str(r#"{"profile":"complex","workflow":{"max_refinement_rounds":5}}"#)
                .unwrap();
        let w = cfg.workflow_config();
        assert_eq!((w.max_refinement_rounds, w.max_decomposition_layer), (5, 2));
    }

    #[test]
    fn backend_variants_parse() {
        let cfg: AppConfig =
            serde_json::from_str(r#"{"backend":{"kind":"scripted","script":"s.json"}}"#).unwrap();
        assert_eq!(
            cfg.backend,
            BackendConfig::Scripted {
                script: "s.json".into()
            }
        );
        let cfg: AppConfig = serde_json::from_str(
            r#"{"backend":{"kind":"openai","model":"m","base_url":"http://x"}}"#,
        )
        .unwrap();
        let BackendConfig::OpenAi(s) = cfg.backend else {
            panic!("expected openai")
        };
        assert_eq!(s.model.as_deref(), Some("m"));
        assert_eq!(s.max_attempts, 3);
    }

    #[test]
    fn auto_scorer_picks_by_record() {
        let backend = Backend::Fuzz(FuzzBackend { seed: 0 });
        let rec = |gold: Option<&str>, concepts: &[&str]| TaskRecord {
            id: "a".into(),
            task: "t".into(),
            gold: gold.map(String::from),
            concepts: concepts.iter().map(|s| s.to_string()).collect(),
            split: crate::dataset::Split::Test,
        };
        let auto = RootScorerConfig::Auto;
        assert!(matches!(
            root_scorer(&auto, &rec(Some("4"), &[]), &backend),
            RootScorer::Exact(_)
        ));
        assert!(matches!(
            root_scorer(&auto, &rec(None, &["dog"]), &backend),
            RootScorer::Coverage(_)
        ));
        assert!(matches!(
            root_scorer(&auto, &rec(None, &[]), &backend),
            RootScorer::Judge(_)
        ));
    }
}
