//! JSONL task datasets: `{id, task, gold?, concepts?, split}` per line.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub concepts: Vec<String>,
    pub split: Split,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: duplicate task id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<TaskRecord>, DatasetError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TaskRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if record.task.trim().is_empty() {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "empty task text".into(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                line: i + 1,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<TaskRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text, path)
}

pub fn split(records: &[TaskRecord], which: Split) -> Vec<&TaskRecord> {
    records.iter().filter(|r| r.split == which).collect()
}
