//! Per-run metrics and experiment-level aggregation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::embed::fnv1a64;
use crate::experience::Ablation;
use crate::scorer::{QualityScorer, ScoreError};
use crate::step::{DecisionStepType, RetrievalStrategy};
use crate::workflow::Trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub task_id: String,
    pub quality: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Critique steps issued in the run.
    pub convergence_rounds: u64,
    pub exemplars_used: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

pub fn convergence_rounds(trace: &Trace) -> u64 {
    trace.count(DecisionStepType::Critique) as u64
}

pub fn evaluate_run(trace: &Trace, scorer: &dyn QualityScorer) -> Result<RunMetrics, ScoreError> {
    let quality = scorer.score(&trace.root_task.description, &trace.outcome)?;
    Ok(RunMetrics {
        run_id: trace.run_id.clone(),
        task_id: trace.task_id.clone(),
        quality: quality.value(),
        prompt_tokens: trace.token_usage.prompt_tokens,
        completion_tokens: trace.token_usage.completion_tokens,
        convergence_rounds: convergence_rounds(trace),
        exemplars_used: trace.exemplar_count() as u64,
        wall_time_ms: None,
    })
}

/// The configuration knobs that distinguish one experiment from another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub strategy: RetrievalStrategy,
    pub alpha: f64,
    pub ablation: Ablation,
    /// Training tasks ingested into the pool.
    pub pool_tasks: usize,
    pub max_refinement_rounds: u32,
    pub max_decomposition_layer: u32,
    pub digest: String,
}

impl ConfigFingerprint {
    pub fn new(
        strategy: RetrievalStrategy,
        alpha: f64,
        ablation: Ablation,
        pool_tasks: usize,
        max_refinement_rounds: u32,
        max_decomposition_layer: u32,
    ) -> Self {
        let canonical = format!(
            "strategy={};alpha={:016x};ablation={};pool={};rounds={};layers={}",
            strategy.as_str(),
            alpha.to_bits(),
            ablation.as_str(),
            pool_tasks,
            max_refinement_rounds,
            max_decomposition_layer
        );
        ConfigFingerprint {
            strategy,
            alpha,
            ablation,
            pool_tasks,
            max_refinement_rounds,
            max_decomposition_layer,
            digest: format!("{:016x}", fnv1a64(canonical.as_bytes())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub fingerprint: ConfigFingerprint,
    pub rows: Vec<RunMetrics>,
    pub mean_quality: f64,
    pub mean_prompt_tokens: f64,
    pub mean_completion_tokens: f64,
    pub mean_convergence_rounds: f64,
    pub total_prompt_tokens: u64,
    pub total_completion_tokens: u64,
    pub total_convergence_rounds: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_to_baseline: Option<BaselineRatios>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Variant value divided by the experience-free baseline value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRatios {
    pub quality: Option<f64>,
    pub completion_tokens: Option<f64>,
    pub prompt_tokens: Option<f64>,
    pub convergence_rounds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptyReport;

impl fmt::Display for EmptyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("cannot aggregate an empty report")
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EmptyReport {}

/// Mean of `values`, summed in sorted order so the result does not depend
/// on row order.
pub fn order_free_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn ratio(variant: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| variant / baseline)
}

pub fn aggregate(
    rows: Vec<RunMetrics>,
    fingerprint: ConfigFingerprint,
) -> Result<ExperimentReport, EmptyReport> {
    if rows.is_empty() {
        return Err(EmptyReport);
    }
    let n = rows.len() as f64;
    let total_prompt_tokens: u64 = rows.iter().map(|r| r.prompt_tokens).sum();
    let total_completion_tokens: u64 = rows.iter().map(|r| r.completion_tokens).sum();
    let total_convergence_rounds: u64 = rows.iter().map(|r| r.convergence_rounds).sum();
    Ok(ExperimentReport {
        fingerprint,
        mean_quality: order_free_mean(rows.iter().map(|r| r.quality)),
        mean_prompt_tokens: total_prompt_tokens as f64 / n,
        mean_completion_tokens: total_completion_tokens as f64 / n,
        mean_convergence_rounds: total_convergence_rounds as f64 / n,
        total_prompt_tokens,
        total_completion_tokens,
        total_convergence_rounds,
        rows,
        relative_to_baseline: None,
        notes: Vec::new(),
    })
}

impl ExperimentReport {
    pub fn ratios_to(&self, baseline: &ExperimentReport) -> BaselineRatios {
        BaselineRatios {
            quality: ratio(self.mean_quality, baseline.mean_quality),
            completion_tokens: ratio(self.mean_completion_tokens, baseline.mean_completion_tokens),
            prompt_tokens: ratio(self.mean_prompt_tokens, baseline.mean_prompt_tokens),
            convergence_rounds: ratio(
                self.mean_convergence_rounds,
                baseline.mean_convergence_rounds,
            ),
        }
    }

    pub fn normalize_to(&mut self, baseline: &ExperimentReport) {
        self.relative_to_baseline = Some(self.ratios_to(baseline));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn row(q: f64, completion: u64, rounds: u64) -> RunMetrics {
        RunMetrics {
            run_id: String::from("r"),
            task_id: String::from("t"),
            quality: q,
            prompt_tokens: 10,
            completion_tokens: completion,
            convergence_rounds: rounds,
            exemplars_used: 0,
            wall_time_ms: None,
        }
    }

    fn fp() -> ConfigFingerprint {
        ConfigFingerprint::new(RetrievalStrategy::None, 0.5, Ablation::default(), 0, 2, 1)
    }

    #[test]
    fn mean_quality() {
        let r = aggregate(vec![row(1.0, 5, 0), row(0.0, 5, 0)], fp()).unwrap();
        assert_eq!(r.mean_quality, 0.5);
    }

    #[test]
    fn single_row_identity() {
        let r = aggregate(vec![row(0.25, 7, 3)], fp()).unwrap();
        assert_eq!(r.mean_quality, 0.25);
        assert_eq!(r.mean_completion_tokens, 7.0);
        assert_eq!(r.mean_convergence_rounds, 3.0);
    }

    #[test]
    fn baseline_normalization() {
        let base = aggregate(vec![row(1.0, 200, 4)], fp()).unwrap();
        let variant = aggregate(vec![row(1.0, 100, 1)], fp()).unwrap();
        let ratios = variant.ratios_to(&base);
        assert_eq!(ratios.completion_tokens, Some(0.5));
        assert_eq!(ratios.convergence_rounds, Some(0.25));
        let zero = aggregate(vec![row(0.0, 0, 0)], fp()).unwrap();
        assert_eq!(variant.ratios_to(&zero).quality, None);
    }

    #[test]
    fn empty_rows_rejected() {
        assert_eq!(aggregate(Vec::new(), fp()), Err(EmptyReport));
    }
}
