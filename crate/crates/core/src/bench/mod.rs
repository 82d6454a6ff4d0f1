//! Benchmark harness: synthetic graphs and workloads, a recorded run of every
//! question, and a deterministic replay on a simulated server.

pub mod adversarial;
pub mod cost;
pub mod replay;
pub mod report;
pub mod synth;
pub mod workload;

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Chunking, Templates};
use crate::embed::{IndexConfig, VectorIndex};
use crate::graph::PropertyGraph;
use crate::kvcache::{EvictionPolicy, DEFAULT_BLOCK_SIZE};
use crate::llm::{Provider, RuleProvider};
use crate::orchestrator::{
    answer_many, Mode, Orchestrator, OrchestratorConfig, SessionOutcome, DEFAULT_MAX_STEPS, DEFAULT_REPAIR_BUDGET,
};
use crate::pipeline::{TimingMode, TimingModel};
use crate::retriever::{GraphApi, Retriever, RetrieverConfig, DEFAULT_CACHE_CAPACITY};

use replay::{replay_sessions, session_ops, Capacity, ReplayConfig, ReplayResult};
use report::{BenchReport, ReportMeta};
use workload::Workload;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid bench config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub mode: Mode,
    pub policy: EvictionPolicy,
    pub chunking: Chunking,
    pub pipeline: bool,
    pub concurrency: usize,
    pub capacity: Capacity,
    pub block_size: usize,
    pub timing: TimingModel<f64>,
    /// Share of earliest completions left out of the throughput.
    pub warmup: f64,
    /// Whether the baseline arm may reuse cached prefixes.
    pub baseline_prefix_cache: bool,
    /// `0` disables the retrieval cache.
    pub retrieval_cache: usize,
    pub max_steps: usize,
    pub repair_budget: usize,
    pub index: IndexConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            mode: Mode::Glm,
            policy: EvictionPolicy::Priority,
            chunking: Chunking::Vertex,
            pipeline: true,
            concurrency: 8,
            capacity: Capacity::FractionOfPeak(0.25),
            block_size: DEFAULT_BLOCK_SIZE,
            timing: TimingModel::simulated(20.0),
            warmup: 0.05,
            baseline_prefix_cache: false,
            retrieval_cache: DEFAULT_CACHE_CAPACITY,
            max_steps: DEFAULT_MAX_STEPS,
            repair_budget: DEFAULT_REPAIR_BUDGET,
            index: IndexConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.concurrency == 0 {
            return bad("concurrency must be positive");
        }
        if self.block_size == 0 {
            return bad("block size must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return bad("warmup must lie in [0, 1)");
        }
        if self.timing.mode != TimingMode::Simulated {
            return bad("bench runs need simulated timing");
        }
        match self.capacity {
            Capacity::Blocks(0) => bad("capacity must be positive"),
            Capacity::FractionOfPeak(f) if !(f > 0.0 && f <= 1.0) => bad("capacity fraction must lie in (0, 1]"),
            _ => Ok(()),
        }
    }

    fn replay_config(&self) -> ReplayConfig {
        ReplayConfig {
            workers: self.concurrency,
            block_size: self.block_size,
            capacity: self.capacity,
            policy: self.policy,
            pipeline: self.pipeline,
            prefix_cache: self.mode == Mode::Glm || self.baseline_prefix_cache,
            retrieval_cache: self.retrieval_cache,
            timing: self.timing,
        }
    }

    fn orchestrator_config(&self) -> OrchestratorConfig {
        OrchestratorConfig {
            max_steps: self.max_steps,
            repair_budget: self.repair_budget,
            pipeline: self.pipeline,
            timing: self.timing,
            ..OrchestratorConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: BenchReport,
    pub outcomes: Vec<SessionOutcome>,
    pub replay: ReplayResult,
}

/// Graph API used by bench runs; `fact` chunking withholds `NodeInfo`.
pub fn bench_retriever(graph: Arc<PropertyGraph>, cfg: &BenchConfig) -> Arc<Retriever> {
    let index = Arc::new(VectorIndex::build(&graph, &cfg.index));
    Arc::new(Retriever::new(
        graph,
        index,
        RetrieverConfig {
            cache_capacity: cfg.retrieval_cache,
            node_info: cfg.chunking == Chunking::Vertex,
            ..RetrieverConfig::default()
        },
    ))
}

/// Runs with the rule provider over the builtin templates.
pub fn run_bench(workload: &Workload, graph: Arc<PropertyGraph>, cfg: &BenchConfig) -> Result<BenchRun, ConfigError> {
    let templates = Arc::new(Templates::builtin(cfg.chunking));
    let provider = Arc::new(RuleProvider::new(templates.clone()));
    let api = bench_retriever(graph, cfg);
    run_bench_with(workload, templates, provider, api, cfg)
}

pub fn run_bench_with(
    workload: &Workload,
    templates: Arc<Templates>,
    provider: Arc<dyn Provider>,
    api: Arc<dyn GraphApi>,
    cfg: &BenchConfig,
) -> Result<BenchRun, ConfigError> {
    cfg.validate()?;
    if templates.chunking != cfg.chunking {
        return Err(ConfigError::Invalid(format!(
            "templates are for {} chunking, config asks for {}",
            templates.chunking, cfg.chunking
        )));
    }
    let orch = Orchestrator::new(templates, provider, api, cfg.orchestrator_config());
    let questions: Vec<(String, String)> =
        workload.questions.iter().map(|q| (q.id.clone(), q.text.clone())).collect();
    let outcomes = answer_many(&orch, cfg.mode, &questions, cfg.concurrency);
    let sessions: Vec<_> = outcomes.iter().map(|o| (o.id.clone(), session_ops(o))).collect();
    let replay = replay_sessions(&sessions, &cfg.replay_config());
    let meta = ReportMeta {
        mode: cfg.mode,
        policy: cfg.policy,
        chunking: cfg.chunking,
        pipeline: cfg.pipeline,
        concurrency: cfg.concurrency,
        warmup: cfg.warmup,
    };
    let report = BenchReport::build(workload, &outcomes, &replay, &meta);
    Ok(BenchRun {
        report,
        outcomes,
        replay,
    })
}

impl BenchRun {
    /// Writes `metrics.csv`, `metrics.json` and `sessions.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), report::to_csv(std::slice::from_ref(&self.report)))?;
        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&self.report)? + "\n")?;
        let mut lines = String::new();
        for o in &self.outcomes {
            lines.push_str(&serde_json::to_string(o)?);
            lines.push('\n');
        }
        fs::write(dir.join("sessions.jsonl"), lines)
    }
}
