use std::path::PathBuf;

use mael_core::scorer::ScoreError;
use mael_core::{EmbeddingError, RewardError, StoreError, WorkflowError};

use crate::artifacts::ArtifactError;
use crate::config::ConfigError;
use crate::dataset::DatasetError;
use crate::pool::PersistError;

pub const EXIT_USER: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("pool file {} not found; run `mael train` first or use --strategy oexp", .0.display())]
    MissingPool(PathBuf),
    #[error("task {task_id:?} is already in the pool; pass --resume to skip trained tasks or --force to rebuild the pool")]
    AlreadyTrained { task_id: String },
    #[error("scaling needs {required} training tasks but the dataset has {available}")]
    InsufficientTrainingData { required: usize, available: usize },
    #[error("pool was built with embedder {found:?} but {expected:?} is configured")]
    EmbedderMismatch { expected: String, found: String },
    #[error("no tasks in the {0} split")]
    EmptySplit(&'static str),
    #[error("task {task_id}: {source}")]
    Workflow {
        task_id: String,
        source: WorkflowError,
    },
    #[error("task {task_id}: reward assignment failed: {source}")]
    Reward {
        task_id: String,
        source: RewardError,
    },
    #[error("task {task_id}: scoring failed: {source}")]
    Score { task_id: String, source: ScoreError },
    #[error("task {task_id}: {source}")]
    Store { task_id: String, source: StoreError },
}

fn store_is_backend(e: &StoreError) -> bool {
    matches!(e, StoreError::Embedding(EmbeddingError::Provider(_)))
}

impl AppError {
    /// 3 when the model or embedding provider failed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        let backend = match self {
            AppError::Workflow { source, .. } => match source {
                WorkflowError::Backend(_) | WorkflowError::MalformedResponse { .. } => true,
                WorkflowError::Store(e) => store_is_backend(e),
                _ => false,
            },
            AppError::Reward { source, .. } => {
                matches!(source, RewardError::Scorer(ScoreError::Backend(_)))
            }
            AppError::Score { source, .. } => matches!(source, ScoreError::Backend(_)),
            AppError::Store { source, .. } => store_is_backend(source),
            _ => false,
        };
        if backend {
            EXIT_BACKEND
        } else {
            EXIT_USER
        }
    }
}
