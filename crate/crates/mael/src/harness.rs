//! Training, inference and the experiment harnesses over dataset records.

use std::time::Instant;

use log::{info, warn};
use mael_core::metrics::{aggregate, evaluate_run, ConfigFingerprint};
use mael_core::{
    score_trace, Ablation, EmbeddingBackend, Experience, ExperienceStore, ExperimentReport,
    PromptTemplates, RetrievalConfig, RetrievalStrategy, RewardReport, RunMetrics, StoreError,
    Topology, Trace, TraceScorer, Workflow, WorkflowConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{root_scorer, subtask_scorer, Backend, Embedder, ScorerConfig};
use crate::dataset::TaskRecord;
use crate::error::AppError;

pub struct Harness {
    pub topology: Topology,
    pub workflow: WorkflowConfig,
    pub retrieval: RetrievalConfig,
    pub templates: PromptTemplates,
    pub backend: Backend,
    pub embedder: Embedder,
    pub scorer: ScorerConfig,
    /// Run tasks one at a time and leave wall-clock times out of reports.
    pub sequential: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Retrieval used by the training runs themselves. `None` keeps them
    /// experience-free.
    pub strategy: RetrievalStrategy,
    /// Skip tasks already present in the pool instead of failing.
    pub resume: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub tasks_trained: usize,
    pub tasks_skipped: usize,
    pub entries_added: usize,
    pub pool_entries: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub runs: Vec<RunOutput>,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSnapshot {
    pub pool_tasks: usize,
    pub entries: usize,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub strategy: RetrievalStrategy,
    pub snapshots: Vec<ScalingSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub ablation: Ablation,
    pub high_reward: bool,
    pub high_similarity: bool,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub strategy: RetrievalStrategy,
    pub alpha: f64,
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, ablation: Ablation) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.ablation == ablation)
    }
}

fn ablation_label(a: Ablation) -> &'static str {
    match a {
        Ablation::HighRewardHighSim => "hh",
        Ablation::HighRewardLowSim => "hl",
        Ablation::LowRewardHighSim => "lh",
        Ablation::LowRewardLowSim => "ll",
    }
}

impl Harness {
    pub fn new_store(&self) -> ExperienceStore {
        ExperienceStore::for_embedder(&self.embedder).with_alpha_default(self.retrieval.alpha)
    }

    pub fn check_store(&self, store: &ExperienceStore) -> Result<(), AppError> {
        if store.provider_tag() != self.embedder.provider_tag()
            || store.dimension() != self.embedder.dimension()
        {
            return Err(AppError::EmbedderMismatch {
                expected: format!(
                    "{} ({} dims)",
                    self.embedder.provider_tag(),
                    self.embedder.dimension()
                ),
                found: format!("{} ({} dims)", store.provider_tag(), store.dimension()),
            });
        }
        Ok(())
    }

    pub fn run_task(
        &self,
        record: &TaskRecord,
        run_id: &str,
        strategy: RetrievalStrategy,
        store: Option<&ExperienceStore>,
        retrieval: &RetrievalConfig,
    ) -> Result<Trace, AppError> {
        let config = WorkflowConfig {
            retrieval_strategy: strategy,
            ..self.workflow.clone()
        };
        let experience = store.map(|store| Experience {
            store,
            embedder: &self.embedder,
            retrieval,
        });
        Workflow::new(&self.topology, &config, &self.backend)
            .templates(&self.templates)
            .experience(experience)
            .run(run_id, &record.id, &record.task)
            .map_err(|source| AppError::Workflow {
                task_id: record.id.clone(),
                source,
            })
    }

    pub fn assign_rewards(
        &self,
        trace: &Trace,
        record: &TaskRecord,
    ) -> Result<RewardReport, AppError> {
        let root = root_scorer(&self.scorer.root, record, &self.backend);
        let subtasks = subtask_scorer(&self.scorer.subtasks, &self.backend);
        score_trace(trace, TraceScorer::new(&root, Some(&subtasks))).map_err(|source| {
            AppError::Reward {
                task_id: record.id.clone(),
                source,
            }
        })
    }

    /// Forward pass, reward assignment and pool update per record, in order.
    /// `after_task` runs once the pool holds the task, e.g. to persist it.
    pub fn train(
        &self,
        store: &mut ExperienceStore,
        records: &[&TaskRecord],
        opts: &TrainOptions,
        mut after_task: impl FnMut(&ExperienceStore, &Trace, &RewardReport) -> Result<(), AppError>,
    ) -> Result<TrainSummary, AppError> {
        let mut summary = TrainSummary::default();
        for record in records {
            if store.task_ids().contains(record.id.as_str()) {
                if opts.resume {
                    summary.tasks_skipped += 1;
                    continue;
                }
                return Err(AppError::AlreadyTrained {
                    task_id: record.id.clone(),
                });
            }
            let view = (opts.strategy != RetrievalStrategy::None).then_some(&*store);
            let trace = self.run_task(
                record,
                &format!("train-{}", record.id),
                opts.strategy,
                view,
                &self.retrieval,
            )?;
            let rewards = self.assign_rewards(&trace, record)?;
            let added = store
                .update_pool(&trace, &rewards, &self.embedder)
                .map_err(|source| match source {
                    StoreError::DuplicateEntry { task_id, .. } => {
                        AppError::AlreadyTrained { task_id }
                    }
                    source => AppError::Store {
                        task_id: record.id.clone(),
                        source,
                    },
                })?;
            info!(
                "trained {}: {} steps, pool now {}",
                record.id,
                added,
                store.len()
            );
            summary.tasks_trained += 1;
            summary.entries_added += added;
            after_task(store, &trace, &rewards)?;
        }
        summary.pool_entries = store.len();
        Ok(summary)
    }

    /// Runs every record against a frozen pool and aggregates the metrics.
    pub fn infer(
        &self,
        records: &[&TaskRecord],
        strategy: RetrievalStrategy,
        store: Option<&ExperienceStore>,
        retrieval: &RetrievalConfig,
        phase: &str,
    ) -> Result<Inference, AppError> {
        if records.is_empty() {
            return Err(AppError::EmptySplit("test"));
        }
        let run_one = |record: &&TaskRecord| -> Result<RunOutput, AppError> {
            let start = Instant::now();
            let trace = self.run_task(
                record,
                &format!("{phase}-{}", record.id),
                strategy,
                store,
                retrieval,
            )?;
            let scorer = root_scorer(&self.scorer.root, record, &self.backend);
            let mut metrics = evaluate_run(&trace, &scorer).map_err(|source| AppError::Score {
                task_id: record.id.clone(),
                source,
            })?;
            if !self.sequential {
                metrics.wall_time_ms = Some(start.elapsed().as_millis() as u64);
            }
            Ok(RunOutput { trace, metrics })
        };
        let runs: Vec<RunOutput> = if self.sequential {
            records.iter().map(run_one).collect::<Result<_, _>>()?
        } else {
            records.par_iter().map(run_one).collect::<Result<_, _>>()?
        };
        let pool_tasks = match strategy {
            RetrievalStrategy::None => 0,
            _ => store.map_or(0, |s| s.task_ids().len()),
        };
        let fingerprint = ConfigFingerprint::new(
            strategy,
            retrieval.alpha,
            retrieval.ablation,
            pool_tasks,
            self.workflow.max_refinement_rounds,
            self.workflow.max_decomposition_layer,
        );
        let rows = runs.iter().map(|r| r.metrics.clone()).collect();
        let mut report = aggregate(rows, fingerprint).map_err(|_| AppError::EmptySplit("test"))?;
        if strategy != RetrievalStrategy::None && store.map_or(true, ExperienceStore::is_empty) {
            warn!(
                "experience pool is empty; {} runs proceed without exemplars",
                strategy.as_str()
            );
            report
                .notes
                .push("experience pool is empty; runs proceeded without exemplars".into());
        } else if strategy == RetrievalStrategy::TaskWise {
            let fallback = runs
                .iter()
                .filter(|r| r.trace.exemplar_task.is_none())
                .count();
            if fallback > 0 {
                report.notes.push(format!(
                    "{fallback} runs found no exemplar trace and ran without one"
                ));
            }
        }
        Ok(Inference { runs, report })
    }

    /// The three retrieval strategies on the same records, normalized to the
    /// experience-free run.
    pub fn compare(
        &self,
        records: &[&TaskRecord],
        store: &ExperienceStore,
    ) -> Result<Vec<Inference>, AppError> {
        let mut variants = Vec::new();
        for strategy in [
            RetrievalStrategy::None,
            RetrievalStrategy::TaskWise,
            RetrievalStrategy::StepWise,
        ] {
            let phase = format!("eval-{}", strategy.as_str());
            variants.push(self.infer(records, strategy, Some(store), &self.retrieval, &phase)?);
        }
        let baseline = variants[0].report.clone();
        for v in &mut variants {
            v.report.normalize_to(&baseline);
        }
        Ok(variants)
    }

    /// Trains one pool incrementally and evaluates `test` at each pool size.
    pub fn scaling(
        &self,
        train: &[&TaskRecord],
        test: &[&TaskRecord],
        sizes: &[usize],
        strategy: RetrievalStrategy,
        mut after_task: impl FnMut(&ExperienceStore, &Trace, &RewardReport) -> Result<(), AppError>,
        mut at_snapshot: impl FnMut(usize, &ExperienceStore, &Inference) -> Result<(), AppError>,
    ) -> Result<ScalingReport, AppError> {
        let mut sizes = sizes.to_vec();
        sizes.sort_unstable();
        sizes.dedup();
        let required = sizes.last().copied().unwrap_or(0);
        if train.len() < required {
            return Err(AppError::InsufficientTrainingData {
                required,
                available: train.len(),
            });
        }
        let mut store = self.new_store();
        let mut trained = 0;
        let mut snapshots = Vec::with_capacity(sizes.len());
        for size in sizes {
            self.train(
                &mut store,
                &train[trained..size],
                &TrainOptions::default(),
                &mut after_task,
            )?;
            trained = size;
            let phase = format!("scaling-{size}-{}", strategy.as_str());
            let inference = self.infer(test, strategy, Some(&store), &self.retrieval, &phase)?;
            at_snapshot(size, &store, &inference)?;
            snapshots.push(ScalingSnapshot {
                pool_tasks: size,
                entries: store.len(),
                report: inference.report,
            });
        }
        Ok(ScalingReport {
            strategy,
            snapshots,
        })
    }

    /// Inference under the four reward/similarity scoring modes.
    pub fn ablation(
        &self,
        records: &[&TaskRecord],
        store: &ExperienceStore,
        strategy: RetrievalStrategy,
    ) -> Result<(AblationReport, Vec<Inference>), AppError> {
        let mut cells = Vec::new();
        let mut inferences = Vec::new();
        for ablation in Ablation::ALL {
            let retrieval = RetrievalConfig {
                ablation,
                ..self.retrieval.clone()
            };
            let phase = format!(
                "ablation-{}-{}",
                ablation_label(ablation),
                strategy.as_str()
            );
            let inference = self.infer(records, strategy, Some(store), &retrieval, &phase)?;
            cells.push(AblationCell {
                ablation,
                high_reward: ablation.high_reward(),
                high_similarity: ablation.high_similarity(),
                report: inference.report.clone(),
            });
            inferences.push(inference);
        }
        let report = AblationReport {
            strategy,
            alpha: self.retrieval.alpha,
            cells,
        };
        Ok((report, inferences))
    }
}
