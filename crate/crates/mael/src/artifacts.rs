//! Topology files, prompt-template directories and per-run trace files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mael_core::graph::TopologyDocument;
use mael_core::{DecisionStepType, PromptTemplates, RewardReport, Topology, Trace};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, reason: impl ToString) -> ArtifactError {
    ArtifactError::Invalid {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// `{"agents": [{"id": 0, "role": "..."}], "edges": [[0, 1], ...]}`
pub fn load_topology(path: &Path) -> Result<Topology, ArtifactError> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    let doc: TopologyDocument = serde_json::from_str(&text).map_err(|e| invalid(path, e))?;
    Topology::from_document(&doc).map_err(|e| invalid(path, e))
}

/// Reads `<step>.txt` overrides (e.g. `solve.txt`) from `dir`. Missing files
/// keep the built-in template.
pub fn load_templates(dir: &Path) -> Result<PromptTemplates, ArtifactError> {
    if !dir.is_dir() {
        return Err(invalid(dir, "template directory not found"));
    }
    let mut templates = PromptTemplates::default();
    for step in DecisionStepType::ALL {
        let path = dir.join(format!("{}.txt", step.as_str()));
        match fs::read_to_string(&path) {
            Ok(text) => templates.set(step, text).map_err(|e| invalid(&path, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_at(&path)(e)),
        }
    }
    Ok(templates)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ArtifactError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| invalid(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_at(path))
}

pub fn trace_path(runs: &Path, run_id: &str) -> PathBuf {
    runs.join(format!("{run_id}.json"))
}

/// Writes `runs/<run_id>.json` and, when given, `runs/<run_id>.rewards.json`.
pub fn write_trace(
    runs: &Path,
    trace: &Trace,
    rewards: Option<&RewardReport>,
) -> Result<(), ArtifactError> {
    write_json(&trace_path(runs, &trace.run_id), trace)?;
    if let Some(r) = rewards {
        write_json(&runs.join(format!("{}.rewards.json", trace.run_id)), r)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo.json");
        fs::write(
            &path,
            r#"{"agents":[{"id":0,"role":"a"},{"id":1},{"id":2}],"edges":[[0,1],[1,2]]}"#,
        )
        .unwrap();
        let topo = load_topology(&path).unwrap();
        assert_eq!(topo.len(), 3);
        assert_eq!(topo.select_root(), mael_core::AgentId(1));
    }

    #[test]
    fn disconnected_topology_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo.json");
        fs::write(
            &path,
            r#"{"agents":[{"id":0},{"id":1},{"id":2}],"edges":[[0,1]]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_topology(&path),
            Err(ArtifactError::Invalid { .. })
        ));
    }

    #[test]
    fn template_overrides_and_placeholder_check() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("solve.txt"), "Answer briefly.\n{input}").unwrap();
        let t = load_templates(dir.path()).unwrap();
        assert_eq!(t.get(DecisionStepType::Solve), "Answer briefly.\n{input}");
        assert_eq!(
            t.get(DecisionStepType::Critique),
            PromptTemplates::default().get(DecisionStepType::Critique)
        );
        fs::write(dir.path().join("critique.txt"), "no placeholder").unwrap();
        assert!(load_templates(dir.path()).is_err());
    }
}
