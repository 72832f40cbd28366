use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use mael_core::{ExperienceStore, RetrievalStrategy, Topology};
use serde::Serialize;

use crate::artifacts::{load_templates, load_topology, write_json, write_trace};
use crate::config::{AppConfig, Backend, ConfigError, Embedder};
use crate::dataset::{load_dataset, split, Split};
use crate::error::AppError;
use crate::harness::{Harness, Inference, TrainOptions};
use crate::pool::{load_store, save_store};
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "mael",
    version,
    about = "Experiential learning for graph-structured LLM agent teams"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Topology JSON; overrides the config.
    #[arg(long, global = true)]
    pub topology: Option<PathBuf>,
    /// Similarity weight in the retrieval score.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Critique rounds per subtask.
    #[arg(long, global = true)]
    pub max_rounds: Option<u32>,
    /// Decomposition depth cap.
    #[arg(long, global = true)]
    pub max_layers: Option<u32>,
    /// Run tasks one at a time and omit wall-clock times, so reports are
    /// byte-identical across invocations.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Seed for the fuzz backend.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Print the JSON report to stdout instead of the table.
    #[arg(long, global = true)]
    pub json: bool,
    /// Pool file; overrides the config.
    #[arg(long, global = true)]
    pub pool: Option<PathBuf>,
    /// Directory for trace files; overrides the config.
    #[arg(long, global = true)]
    pub runs: Option<PathBuf>,
    /// Directory of `<step>.txt` prompt templates; overrides the config.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Oexp,
    Task,
    Step,
}

impl From<StrategyArg> for RetrievalStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Oexp => RetrievalStrategy::None,
            StrategyArg::Task => RetrievalStrategy::TaskWise,
            StrategyArg::Step => RetrievalStrategy::StepWise,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the experience pool from the training split.
    Train {
        dataset: PathBuf,
        /// Discard the existing pool and train from scratch.
        #[arg(long, conflicts_with = "resume")]
        force: bool,
        /// Skip tasks already in the pool.
        #[arg(long)]
        resume: bool,
        /// Let training runs consult the growing pool.
        #[arg(long, value_enum, default_value = "oexp")]
        retrieval: StrategyArg,
    },
    /// Run the test split under one retrieval strategy.
    Infer {
        dataset: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
    },
    /// Compare all three strategies on the test split.
    Eval { dataset: PathBuf },
    /// Pool maintenance.
    Pool {
        #[command(subcommand)]
        command: PoolCommand,
    },
    /// Quality as a function of pool size.
    Scaling {
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30")]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value = "step")]
        strategy: StrategyArg,
    },
    /// The 2x2 reward/similarity scoring ablation.
    Ablation {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "step")]
        strategy: StrategyArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum PoolCommand {
    /// Per-agent counts, step-type breakdown and reward histogram.
    Inspect { path: Option<PathBuf> },
}

pub struct Context {
    pub config: AppConfig,
    pub harness: Harness,
}

fn invalid(msg: impl Into<String>) -> AppError {
    AppError::Config(ConfigError::Invalid(msg.into()))
}

pub fn build_context(global: &GlobalArgs) -> Result<Context, AppError> {
    let mut cfg = match &global.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(t) = &global.topology {
        cfg.topology = Some(t.clone());
    }
    if let Some(a) = global.alpha {
        cfg.retrieval.alpha = a;
    }
    if let Some(v) = global.max_rounds {
        cfg.workflow.max_refinement_rounds = Some(v);
    }
    if let Some(v) = global.max_layers {
        cfg.workflow.max_decomposition_layer = Some(v);
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(p) = &global.pool {
        cfg.paths.pool = p.clone();
    }
    if let Some(p) = &global.runs {
        cfg.paths.runs = p.clone();
    }
    if let Some(p) = &global.templates {
        cfg.paths.templates = Some(p.clone());
    }
    let workflow = cfg.workflow_config();
    workflow.validate().map_err(|e| invalid(e.to_string()))?;
    cfg.retrieval
        .validate()
        .map_err(|e| invalid(e.to_string()))?;
    let topology = match &cfg.topology {
        Some(p) => load_topology(p)?,
        None => Topology::default(),
    };
    let templates = match &cfg.paths.templates {
        Some(dir) => load_templates(dir)?,
        None => Default::default(),
    };
    let backend = Backend::from_config(&cfg.backend, cfg.seed)?;
    let embedder = Embedder::from_config(cfg.embedder, &backend)?;
    let harness = Harness {
        topology,
        workflow,
        retrieval: cfg.retrieval.clone(),
        templates,
        backend,
        embedder,
        scorer: cfg.scorer.clone(),
        sequential: global.sequential,
    };
    Ok(Context {
        config: cfg,
        harness,
    })
}

fn emit(global: &GlobalArgs, value: &impl Serialize, table: String) -> Result<(), AppError> {
    if let Some(path) = &global.report {
        write_json(path, value)?;
    }
    if global.json {
        let text = serde_json::to_string_pretty(value).map_err(|e| invalid(e.to_string()))?;
        println!("{text}");
    } else {
        print!("{table}");
    }
    Ok(())
}

fn load_pool_for(ctx: &Context, path: &Path) -> Result<ExperienceStore, AppError> {
    if !path.exists() {
        return Err(AppError::MissingPool(path.to_path_buf()));
    }
    let store = load_store(path)?;
    ctx.harness.check_store(&store)?;
    Ok(store)
}

fn write_runs(runs: &Path, inferences: &[&Inference]) -> Result<(), AppError> {
    for inf in inferences {
        for run in &inf.runs {
            write_trace(runs, &run.trace, None)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Comparison<'a> {
    variants: Vec<&'a mael_core::ExperimentReport>,
}

pub fn run(cli: &Cli) -> Result<(), AppError> {
    let global = &cli.global;
    if let Command::Pool {
        command: PoolCommand::Inspect { path },
    } = &cli.command
    {
        // inspection needs no backend, so skip building one
        let pool = match (path, &global.pool, &global.config) {
            (Some(p), _, _) | (None, Some(p), _) => p.clone(),
            (None, None, Some(c)) => AppConfig::load(c)?.paths.pool,
            (None, None, None) => AppConfig::default().paths.pool,
        };
        if !pool.exists() {
            return Err(AppError::MissingPool(pool));
        }
        let summary = report::summarize_pool(&load_store(&pool)?);
        return emit(global, &summary, report::render_pool(&summary));
    }

    let ctx = build_context(global)?;
    let h = &ctx.harness;
    let paths = &ctx.config.paths;
    match &cli.command {
        Command::Train {
            dataset,
            force,
            resume,
            retrieval,
        } => {
            let records = load_dataset(dataset)?;
            let train: Vec<_> = split(&records, Split::Train)
                .into_iter()
                .take(ctx.config.train_tasks)
                .collect();
            if train.is_empty() {
                warn!(
                    "no training tasks in {}; pool left unchanged",
                    dataset.display()
                );
            }
            let mut store = if *force || !paths.pool.exists() {
                h.new_store()
            } else {
                load_pool_for(&ctx, &paths.pool)?
            };
            let opts = TrainOptions {
                strategy: (*retrieval).into(),
                resume: *resume,
            };
            let summary = h.train(&mut store, &train, &opts, |store, trace, rewards| {
                save_store(store, &paths.pool)?;
                write_trace(&paths.runs, trace, Some(rewards))?;
                Ok(())
            })?;
            emit(global, &summary, report::render_train(&summary))
        }
        Command::Infer { dataset, strategy } => {
            let records = load_dataset(dataset)?;
            let test = split(&records, Split::Test);
            let strategy = RetrievalStrategy::from(*strategy);
            let store = match strategy {
                RetrievalStrategy::None => None,
                _ => Some(load_pool_for(&ctx, &paths.pool)?),
            };
            let inf = h.infer(
                &test,
                strategy,
                store.as_ref(),
                &h.retrieval,
                strategy.as_str(),
            )?;
            write_runs(&paths.runs, &[&inf])?;
            emit(global, &inf.report, report::render_experiment(&inf.report))
        }
        Command::Eval { dataset } => {
            let records = load_dataset(dataset)?;
            let test = split(&records, Split::Test);
            let store = load_pool_for(&ctx, &paths.pool)?;
            let variants = h.compare(&test, &store)?;
            write_runs(&paths.runs, &variants.iter().collect::<Vec<_>>())?;
            let reports: Vec<_> = variants.iter().map(|v| v.report.clone()).collect();
            let comparison = Comparison {
                variants: reports.iter().collect(),
            };
            emit(global, &comparison, report::render_comparison(&reports))
        }
        Command::Scaling {
            dataset,
            sizes,
            strategy,
        } => {
            let records = load_dataset(dataset)?;
            let train = split(&records, Split::Train);
            let test = split(&records, Split::Test);
            let out = paths.runs.join("scaling");
            let report = h.scaling(
                &train,
                &test,
                sizes,
                (*strategy).into(),
                |_, trace, rewards| Ok(write_trace(&out, trace, Some(rewards))?),
                |size, store, inf| {
                    save_store(store, &out.join(format!("pool-{size}.jsonl")))?;
                    write_runs(&out, &[inf])
                },
            )?;
            emit(global, &report, report::render_scaling(&report))
        }
        Command::Ablation { dataset, strategy } => {
            let records = load_dataset(dataset)?;
            let test = split(&records, Split::Test);
            let store = load_pool_for(&ctx, &paths.pool)?;
            let (report, inferences) = h.ablation(&test, &store, (*strategy).into())?;
            write_runs(&paths.runs, &inferences.iter().collect::<Vec<_>>())?;
            emit(global, &report, report::render_ablation(&report))
        }
        Command::Pool { .. } => unreachable!("handled above"),
    }
}
