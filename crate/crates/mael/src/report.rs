//! Pool summaries and plain-text tables for reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use mael_core::{ExperienceStore, ExperimentReport};
use serde::{Deserialize, Serialize};

use crate::harness::{AblationReport, ScalingReport, TrainSummary};

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub provider_tag: String,
    pub embedding_dim: usize,
    pub entries: usize,
    pub tasks: usize,
    pub per_agent: BTreeMap<u32, usize>,
    pub step_types: BTreeMap<String, usize>,
    /// Counts of rewards in `[i/10, (i+1)/10)`; the last bin includes 1.0.
    pub reward_histogram: [usize; HISTOGRAM_BINS],
}

pub fn summarize_pool(store: &ExperienceStore) -> PoolSummary {
    let mut per_agent = BTreeMap::new();
    let mut step_types = BTreeMap::new();
    let mut reward_histogram = [0; HISTOGRAM_BINS];
    for (agent, pool) in store.pools() {
        per_agent.insert(agent.0, pool.len());
    }
    for e in store.entries() {
        *step_types
            .entry(e.step_type.as_str().to_string())
            .or_insert(0) += 1;
        let bin = ((e.reward * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        reward_histogram[bin] += 1;
    }
    PoolSummary {
        provider_tag: store.provider_tag().to_string(),
        embedding_dim: store.dimension(),
        entries: store.len(),
        tasks: store.task_ids().len(),
        per_agent,
        step_types,
        reward_histogram,
    }
}

pub fn render_pool(s: &PoolSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "pool: {} entries from {} tasks ({}, {} dims)",
        s.entries, s.tasks, s.provider_tag, s.embedding_dim
    );
    let _ = writeln!(out, "\nagent  entries");
    for (agent, n) in &s.per_agent {
        let _ = writeln!(out, "{agent:>5}  {n:>7}");
    }
    let _ = writeln!(out, "\nstep type          entries");
    for (step, n) in &s.step_types {
        let _ = writeln!(out, "{step:<17}  {n:>7}");
    }
    let _ = writeln!(out, "\nreward      entries");
    let peak = s.reward_histogram.iter().copied().max().unwrap_or(0).max(1);
    for (i, n) in s.reward_histogram.iter().enumerate() {
        let lo = i as f64 / HISTOGRAM_BINS as f64;
        let hi = (i + 1) as f64 / HISTOGRAM_BINS as f64;
        let close = if i + 1 == HISTOGRAM_BINS { ']' } else { ')' };
        let bar = "#".repeat(n * 30 / peak);
        let _ = writeln!(out, "[{lo:.1}, {hi:.1}{close} {n:>7} {bar}");
    }
    out
}

pub fn render_train(s: &TrainSummary) -> String {
    format!(
        "trained {} tasks ({} skipped), added {} entries, pool holds {}\n",
        s.tasks_trained, s.tasks_skipped, s.entries_added, s.pool_entries
    )
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

pub fn render_experiment(r: &ExperimentReport) -> String {
    let mut out = String::new();
    let fp = &r.fingerprint;
    let _ = writeln!(
        out,
        "strategy {}  alpha {}  ablation {}  pool {} tasks  caps ({}, {})  [{}]",
        fp.strategy.as_str(),
        fp.alpha,
        fp.ablation.as_str(),
        fp.pool_tasks,
        fp.max_refinement_rounds,
        fp.max_decomposition_layer,
        fp.digest
    );
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>8} {:>10} {:>6} {:>9}",
        "task", "quality", "prompt", "completion", "rounds", "exemplars"
    );
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{:<20} {:>8.3} {:>8} {:>10} {:>6} {:>9}",
            row.task_id,
            row.quality,
            row.prompt_tokens,
            row.completion_tokens,
            row.convergence_rounds,
            row.exemplars_used
        );
    }
    let _ = writeln!(
        out,
        "{:<20} {:>8.3} {:>8.1} {:>10.1} {:>6.2}",
        "mean",
        r.mean_quality,
        r.mean_prompt_tokens,
        r.mean_completion_tokens,
        r.mean_convergence_rounds
    );
    for note in &r.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}

pub fn render_comparison(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>8} {:>12} {:>10} {:>12} {:>10}",
        "strategy", "quality", "completion", "rounds", "completion/0", "rounds/0"
    );
    for r in reports {
        let ratios = r.relative_to_baseline.as_ref();
        let _ = writeln!(
            out,
            "{:<8} {:>8.3} {:>12.1} {:>10.2} {:>12} {:>10}",
            r.fingerprint.strategy.as_str(),
            r.mean_quality,
            r.mean_completion_tokens,
            r.mean_convergence_rounds,
            fmt_ratio(ratios.and_then(|x| x.completion_tokens)),
            fmt_ratio(ratios.and_then(|x| x.convergence_rounds)),
        );
    }
    out
}

pub fn render_scaling(r: &ScalingReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "strategy {}", r.strategy.as_str());
    let _ = writeln!(
        out,
        "{:>10} {:>8} {:>8} {:>12}",
        "pool tasks", "entries", "quality", "completion"
    );
    for s in &r.snapshots {
        let _ = writeln!(
            out,
            "{:>10} {:>8} {:>8.3} {:>12.1}",
            s.pool_tasks, s.entries, s.report.mean_quality, s.report.mean_completion_tokens
        );
    }
    out
}

pub fn render_ablation(r: &AblationReport) -> String {
    let mut out = String::new();
    let q = |high_reward: bool, high_sim: bool| {
        r.cells
            .iter()
            .find(|c| c.high_reward == high_reward && c.high_similarity == high_sim)
            .map_or_else(
                || "-".to_string(),
                |c| format!("{:.3}", c.report.mean_quality),
            )
    };
    let _ = writeln!(out, "strategy {}  alpha {}", r.strategy.as_str(), r.alpha);
    let _ = writeln!(out, "{:<12} {:>10} {:>10}", "", "high sim", "low sim");
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>10}",
        "high reward",
        q(true, true),
        q(true, false)
    );
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>10}",
        "low reward",
        q(false, true),
        q(false, false)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mael_core::{AgentId, DecisionStepType, EmbeddingBackend, ExperienceEntry, HashedEmbedder};

    #[test]
    fn histogram_and_breakdown() {
        let mut store = ExperienceStore::for_embedder(&HashedEmbedder);
        for (i, (agent, reward)) in [(0, 0.0), (0, 0.55), (2, 1.0), (2, 0.99)]
            .into_iter()
            .enumerate()
        {
            store
                .insert(ExperienceEntry {
                    agent: AgentId(agent),
                    step_type: if i % 2 == 0 {
                        DecisionStepType::Solve
                    } else {
                        DecisionStepType::Critique
                    },
                    state: "s".into(),
                    action: "a".into(),
                    reward,
                    embedding: HashedEmbedder.embed("s").unwrap(),
                    task_id: format!("t{}", i / 2),
                    step_index: i as u64,
                })
                .unwrap();
        }
        let s = summarize_pool(&store);
        assert_eq!(s.per_agent, BTreeMap::from([(0, 2), (2, 2)]));
        assert_eq!(s.step_types["solve"], 2);
        assert_eq!(s.reward_histogram, [1, 0, 0, 0, 0, 1, 0, 0, 0, 2]);
        assert_eq!(s.tasks, 2);
        assert!(render_pool(&s).contains("[0.9, 1.0]       2"));
    }
}
