mod common;

use std::cell::RefCell;

use common::*;
use mael::pool::{load_store, save_store};
use mael_core::{
    BackendError, CompletionRequest, CompletionResponse, DecisionStepType, Experience,
    ExperienceStore, HashedEmbedder, ModelBackend, RetrievalConfig, RetrievalStrategy,
    ScriptedBackend, Topology, Workflow, WorkflowConfig,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn two_task_workspace() -> Workspace {
    let ws = Workspace::new();
    ws.scripted(&two_step_script("4"), json!({}));
    ws.write(
        "data.jsonl",
        &jsonl(&[
            record("a", "add two and two", "4", "train"),
            record("b", "add one and three", "4", "train"),
            record("c", "add three and one", "4", "test"),
        ]),
    );
    ws
}

fn sha(ws: &Workspace, rel: &str) -> Vec<u8> {
    Sha256::digest(std::fs::read(ws.path(rel)).unwrap()).to_vec()
}

#[test]
fn train_two_tasks_adds_four_entries() {
    let ws = two_task_workspace();
    let out = ws.mael_ok(&["train", "data.jsonl", "--json"]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["tasks_trained"], 2);
    assert_eq!(summary["entries_added"], 4);
    assert_eq!(ws.read("pool.jsonl").lines().count(), 5);
    let trace = ws.read_json("runs/train-a.json");
    assert_eq!(trace["steps"].as_array().unwrap().len(), 2);
    let rewards = ws.read_json("runs/train-a.rewards.json");
    assert_eq!(rewards["rewards"]["1"], 1.0);
}

#[test]
fn retraining_needs_resume_or_force() {
    let ws = two_task_workspace();
    ws.mael_ok(&["train", "data.jsonl"]);
    let before = sha(&ws, "pool.jsonl");

    let out = ws.mael(&["train", "data.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));
    assert_eq!(sha(&ws, "pool.jsonl"), before);

    let out = ws.mael_ok(&["train", "data.jsonl", "--resume", "--json"]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        (
            summary["tasks_skipped"].as_u64(),
            summary["pool_entries"].as_u64()
        ),
        (Some(2), Some(4))
    );

    ws.mael_ok(&["train", "data.jsonl", "--force"]);
    assert_eq!(sha(&ws, "pool.jsonl"), before);
}

#[test]
fn zero_training_tasks_leaves_pool_alone() {
    let ws = Workspace::new();
    ws.scripted(&two_step_script("4"), json!({}));
    ws.write("data.jsonl", &jsonl(&[record("c", "t", "4", "test")]));
    let out = ws.mael_ok(&["train", "data.jsonl"]);
    assert!(stderr(&out).contains("no training tasks"));
    assert!(!ws.path("pool.jsonl").exists());
}

#[test]
fn training_resumes_to_the_same_pool() {
    let records: Vec<Value> = (0..6)
        .map(|i| {
            record(
                &format!("t{i}"),
                &format!("big job number {i}"),
                "42",
                "train",
            )
        })
        .collect();
    let full = Workspace::new();
    full.scripted(&decomposing_script(), json!({}));
    full.write("data.jsonl", &jsonl(&records));
    full.mael_ok(&["train", "data.jsonl", "--sequential"]);

    let interrupted = Workspace::new();
    interrupted.scripted(&decomposing_script(), json!({}));
    interrupted.write("first.jsonl", &jsonl(&records[..3]));
    interrupted.write("data.jsonl", &jsonl(&records));
    interrupted.mael_ok(&["train", "first.jsonl", "--sequential"]);
    interrupted.mael_ok(&["train", "data.jsonl", "--resume", "--sequential"]);
    assert_eq!(full.read("pool.jsonl"), interrupted.read("pool.jsonl"));
}

#[test]
fn infer_without_experience_reports_every_task() {
    let ws = Workspace::new();
    ws.scripted(&two_step_script("4"), json!({}));
    ws.write(
        "data.jsonl",
        &jsonl(&[
            record("x", "one", "4", "test"),
            record("y", "two", "5", "test"),
            record("z", "three", "4", "test"),
        ]),
    );
    ws.mael_ok(&[
        "infer",
        "data.jsonl",
        "--strategy",
        "oexp",
        "--report",
        "report.json",
    ]);
    let report = ws.read_json("report.json");
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["exemplars_used"] == 0));
    assert!((report["mean_quality"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(ws.path("runs/oexp-y.json").exists());
}

#[test]
fn retrieval_without_pool_is_user_error() {
    let ws = two_task_workspace();
    for strategy in ["step", "task"] {
        let out = ws.mael(&["infer", "data.jsonl", "--strategy", strategy]);
        assert_eq!(out.status.code(), Some(2));
        assert!(stderr(&out).contains("not found"));
    }
}

#[test]
fn inference_never_touches_the_pool() {
    let ws = two_task_workspace();
    ws.mael_ok(&["train", "data.jsonl"]);
    let before = sha(&ws, "pool.jsonl");
    for strategy in ["oexp", "task", "step"] {
        ws.mael_ok(&["infer", "data.jsonl", "--strategy", strategy]);
        assert_eq!(sha(&ws, "pool.jsonl"), before, "{strategy}");
    }
    ws.mael_ok(&["eval", "data.jsonl"]);
    ws.mael_ok(&["ablation", "data.jsonl"]);
    assert_eq!(sha(&ws, "pool.jsonl"), before);
}

#[test]
fn task_wise_with_empty_pool_falls_back() {
    let ws = two_task_workspace();
    save_store(
        &ExperienceStore::for_embedder(&HashedEmbedder),
        &ws.path("pool.jsonl"),
    )
    .unwrap();
    ws.mael_ok(&[
        "infer",
        "data.jsonl",
        "--strategy",
        "task",
        "--report",
        "r.json",
    ]);
    let report = ws.read_json("r.json");
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
    assert!(report["notes"][0].as_str().unwrap().contains("empty"));
}

/// Keeps every prompt sent to the wrapped backend.
struct Recording {
    inner: ScriptedBackend,
    prompts: RefCell<Vec<(Option<DecisionStepType>, String)>>,
}

impl ModelBackend for Recording {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.prompts
            .borrow_mut()
            .push((request.step, request.prompt.clone()));
        self.inner.complete(request)
    }
}

#[test]
fn step_wise_solve_prompts_carry_an_example() {
    let ws = Workspace::new();
    ws.scripted(&decomposing_script(), json!({}));
    ws.write(
        "data.jsonl",
        &jsonl(&[
            record("a", "big task one", "42", "train"),
            record("b", "small task", "42", "train"),
        ]),
    );
    ws.mael_ok(&["train", "data.jsonl"]);
    let store = load_store(&ws.path("pool.jsonl")).unwrap();
    assert!(!store.is_empty());
    let backend = Recording {
        inner: serde_json::from_value(decomposing_script()).unwrap(),
        prompts: RefCell::new(Vec::new()),
    };
    let config = WorkflowConfig {
        retrieval_strategy: RetrievalStrategy::StepWise,
        ..WorkflowConfig::simple()
    };
    let topology = Topology::default();
    let retrieval = RetrievalConfig::default();
    let trace = Workflow::new(&topology, &config, &backend)
        .experience(Some(Experience {
            store: &store,
            embedder: &HashedEmbedder,
            retrieval: &retrieval,
        }))
        .run("probe", "probe", "another big task")
        .unwrap();
    let prompts = backend.prompts.borrow();
    let solves: Vec<_> = prompts
        .iter()
        .filter(|p| p.0 == Some(DecisionStepType::Solve))
        .collect();
    assert!(!solves.is_empty());
    // every solver agent in the probe run holds solve entries from training
    for (_, prompt) in &solves {
        assert!(prompt.contains("### Example"), "{prompt}");
    }
    assert!(trace.exemplar_count() > 0);
}

#[test]
fn scaling_structure_and_insufficient_data() {
    let ws = two_task_workspace();
    let out = ws.mael_ok(&["scaling", "data.jsonl", "--sizes", "0,2", "--json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let snaps = report["snapshots"].as_array().unwrap();
    assert_eq!(snaps.len(), 2);
    assert_eq!(
        (
            snaps[0]["pool_tasks"].as_u64(),
            snaps[0]["entries"].as_u64()
        ),
        (Some(0), Some(0))
    );
    assert_eq!(
        (
            snaps[1]["pool_tasks"].as_u64(),
            snaps[1]["entries"].as_u64()
        ),
        (Some(2), Some(4))
    );
    assert!(ws.path("runs/scaling/pool-2.jsonl").exists());

    let out = ws.mael(&["scaling", "data.jsonl", "--sizes", "40"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("needs 40 training tasks"));
}

fn cell<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["cells"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["ablation"] == name)
        .unwrap()
}

fn row_outcomes(cell: &Value) -> Vec<(Value, Value, Value)> {
    cell["report"]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["quality"].clone(),
                r["completion_tokens"].clone(),
                r["prompt_tokens"].clone(),
            )
        })
        .collect()
}

#[test]
fn ablation_table_has_four_cells() {
    let ws = Workspace::new();
    ws.scripted(&decomposing_script(), json!({}));
    let mut records: Vec<Value> = (0..4)
        .map(|i| record(&format!("t{i}"), &format!("big task {i}"), "42", "train"))
        .collect();
    records.push(record("q", "big question", "42", "test"));
    records.push(record("r", "small question", "42", "test"));
    ws.write("data.jsonl", &jsonl(&records));
    ws.mael_ok(&["train", "data.jsonl"]);
    let out = ws.mael_ok(&["ablation", "data.jsonl", "--json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    for name in [
        "high_reward_high_sim",
        "high_reward_low_sim",
        "low_reward_high_sim",
        "low_reward_low_sim",
    ] {
        assert_eq!(
            cell(&report, name)["report"]["rows"]
                .as_array()
                .unwrap()
                .len(),
            2
        );
    }
    let table = String::from_utf8(ws.mael_ok(&["ablation", "data.jsonl"]).stdout).unwrap();
    assert!(table.contains("high reward") && table.contains("low sim"));

    // with all weight on similarity, the reward side of the table collapses
    let out = ws.mael_ok(&["ablation", "data.jsonl", "--alpha", "1.0", "--json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        row_outcomes(cell(&report, "high_reward_high_sim")),
        row_outcomes(cell(&report, "low_reward_high_sim"))
    );
    assert_eq!(
        row_outcomes(cell(&report, "high_reward_low_sim")),
        row_outcomes(cell(&report, "low_reward_low_sim"))
    );
}

#[test]
fn eval_normalizes_to_the_experience_free_run() {
    let ws = two_task_workspace();
    ws.mael_ok(&["train", "data.jsonl"]);
    let out = ws.mael_ok(&["eval", "data.jsonl", "--json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let variants = report["variants"].as_array().unwrap();
    let names: Vec<_> = variants
        .iter()
        .map(|v| v["fingerprint"]["strategy"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["none", "task_wise", "step_wise"]);
    assert_eq!(variants[0]["relative_to_baseline"]["quality"], 1.0);
}

#[test]
fn pool_inspect_summarizes() {
    let ws = two_task_workspace();
    ws.mael_ok(&["train", "data.jsonl"]);
    let out = ws.mael_ok(&["pool", "inspect", "pool.jsonl"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pool: 4 entries from 2 tasks"), "{text}");
    assert!(text.contains("solvability_judge"));
    let out = ws.mael_ok(&["pool", "inspect", "--json"]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["reward_histogram"][9], 4);
}

#[test]
fn backend_failure_exits_three() {
    let ws = Workspace::new();
    ws.scripted(
        &json!({"rules": [{"step": "solvability_judge", "response": "DECISION: yes"}]}),
        json!({}),
    );
    ws.write("data.jsonl", &jsonl(&[record("a", "t", "4", "test")]));
    let out = ws.mael(&["infer", "data.jsonl", "--strategy", "oexp"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn bad_inputs_exit_two() {
    let ws = two_task_workspace();
    ws.write(
        "dup.jsonl",
        &jsonl(&[
            record("a", "t", "4", "train"),
            record("a", "u", "4", "test"),
        ]),
    );
    assert_eq!(ws.mael(&["train", "dup.jsonl"]).status.code(), Some(2));
    assert_eq!(ws.mael(&["train", "missing.jsonl"]).status.code(), Some(2));
    assert_eq!(
        ws.mael(&["infer", "data.jsonl", "--strategy", "bogus"])
            .status
            .code(),
        Some(2)
    );
    ws.write("topo.json", r#"{"agents":[{"id":0},{"id":1}],"edges":[]}"#);
    assert_eq!(
        ws.mael(&[
            "infer",
            "data.jsonl",
            "--strategy",
            "oexp",
            "--topology",
            "topo.json"
        ])
        .status
        .code(),
        Some(2)
    );
    ws.write("pool.jsonl", "{\"schema_version\":7}\n");
    let out = ws.mael(&["pool", "inspect", "pool.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}
