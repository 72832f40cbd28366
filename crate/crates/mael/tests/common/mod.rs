#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write(&self, rel: &str, content: &str) -> PathBuf {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(&p, content).unwrap();
        p
    }

    pub fn write_json(&self, rel: &str, value: &Value) -> PathBuf {
        self.write(rel, &serde_json::to_string_pretty(value).unwrap())
    }

    /// Writes `script.json` and a `config.json` pointing at it.
    pub fn scripted(&self, script: &Value, extra: Value) -> PathBuf {
        self.write_json("script.json", script);
        let mut config = json!({
            "backend": {"kind": "scripted", "script": "script.json"},
            "paths": {"pool": "pool.jsonl", "runs": "runs"},
        });
        if let (Some(base), Some(more)) = (config.as_object_mut(), extra.as_object()) {
            for (k, v) in more {
                base.insert(k.clone(), v.clone());
            }
        }
        self.write_json("config.json", &config)
    }

    pub fn mael(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mael"))
            .current_dir(self.dir.path())
            .env_remove("RUST_LOG")
            .args(["--config", "config.json"])
            .args(args)
            .output()
            .unwrap()
    }

    pub fn mael_ok(&self, args: &[&str]) -> Output {
        let out = self.mael(args);
        assert!(
            out.status.success(),
            "mael {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    pub fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }

    pub fn read_json(&self, rel: &str) -> Value {
        serde_json::from_str(&self.read(rel)).unwrap()
    }
}

pub fn record(id: &str, task: &str, gold: &str, split: &str) -> Value {
    json!({"id": id, "task": task, "gold": gold, "split": split})
}

pub fn jsonl(records: &[Value]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

/// Judge says yes, solve answers `answer`.
pub fn two_step_script(answer: &str) -> Value {
    json!({
        "rules": [
            {"step": "solvability_judge", "response": "DECISION: yes"},
            {"step": "solve", "response": format!("SOLUTION: {answer}")},
        ]
    })
}

/// Root tasks containing "big" are split in two; the first draft of each
/// part is critiqued once; subtasks are rated by the model judge.
pub fn decomposing_script() -> Value {
    json!({
        "rules": [
            {"profile": "quality_judge", "contains": "draft", "response": "RATING: 0.4"},
            {"profile": "quality_judge", "response": "RATING: 0.9"},
            {"step": "solvability_judge", "contains": "big", "response": "DECISION: no"},
            {"step": "solvability_judge", "response": "DECISION: yes"},
            {"step": "decompose", "response": "1. part A\n2. part B"},
            {"step": "critique", "contains": "Proposed solution: draft", "response": "VERDICT: inadequate\nCRITIQUE: be precise"},
            {"step": "critique", "response": "VERDICT: adequate"},
            {"step": "solve", "contains": "Critique: be precise", "response": "SOLUTION: precise"},
            {"step": "solve", "contains": "part", "response": "SOLUTION: draft"},
            {"step": "solve", "response": "SOLUTION: 42"},
            {"step": "aggregate", "response": "SOLUTION: 42"},
        ]
    })
}

pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(files_under(&p));
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}
