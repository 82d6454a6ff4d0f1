use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use glm_core::agents::{Chunking, Templates};
use glm_core::bench::adversarial::{adversarial_trace, compare_policies, AdversarialConfig};
use glm_core::bench::cost::{cost_model, CostModelInput};
use glm_core::bench::replay::Capacity;
use glm_core::bench::report::{report_diff, BenchReport};
use glm_core::bench::synth::{generate_graph, SynthConfig};
use glm_core::bench::workload::{generate_workload, Workload};
use glm_core::bench::{bench_retriever, run_bench_with, BenchConfig};
use glm_core::config::GlmConfig;
use glm_core::embed::VectorIndex;
use glm_core::graph::PropertyGraph;
use glm_core::kvcache::{replay, CacheState, EvictionPolicy, TraceEvent};
use glm_core::llm::{Provider, RemoteProvider, RuleProvider, ScriptedProvider};
use glm_core::orchestrator::{Mode, Orchestrator};
use glm_core::retriever::Retriever;
use glm_core::snippet::{execute, parse, ExecOptions};

#[derive(Parser)]
#[command(name = "glm", version, about = "Multi-agent graph question answering and its serving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question over a graph.
    Run(RunArgs),
    /// Run a workload and write metrics.csv, metrics.json and sessions.jsonl.
    Bench(BenchArgs),
    /// Question workloads.
    #[command(subcommand)]
    Workload(WorkloadCmd),
    /// Synthetic graphs.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// KV-cache traces and policy comparison.
    #[command(subcommand)]
    Cache(CacheCmd),
    /// Action-agent snippets.
    #[command(subcommand)]
    Snippet(SnippetCmd),
    /// Evaluate the closed-form token cost model.
    Cost(CostArgs),
    /// Bench report tools.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Glm,
    Graphcot,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Glm => Mode::Glm,
            ModeArg::Graphcot => Mode::Graphcot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Priority,
    Lru,
}

impl From<PolicyArg> for EvictionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Priority => EvictionPolicy::Priority,
            PolicyArg::Lru => EvictionPolicy::Lru,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ChunkingArg {
    Vertex,
    Fact,
}

impl From<ChunkingArg> for Chunking {
    fn from(c: ChunkingArg) -> Self {
        match c {
            ChunkingArg::Vertex => Chunking::Vertex,
            ChunkingArg::Fact => Chunking::Fact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    /// Deterministic rule-based replies.
    Rule,
    /// Recorded replies from `--script`.
    Script,
    /// HTTP endpoint from the `[llm]` config section.
    Remote,
}

#[derive(Args)]
struct ProviderOpts {
    #[arg(long, value_enum, default_value = "rule")]
    provider: ProviderArg,
    /// JSONL reply script for `--provider script`.
    #[arg(long)]
    script: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, value_enum, default_value = "glm")]
    mode: ModeArg,
    #[command(flatten)]
    provider: ProviderOpts,
    /// Print the full session trace as JSON.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    chunking: Option<ChunkingArg>,
    #[arg(long, value_enum)]
    pipeline: Option<Switch>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Cache capacity as a share of the unbounded peak.
    #[arg(long, conflicts_with = "capacity_blocks")]
    capacity_fraction: Option<f64>,
    #[arg(long)]
    capacity_blocks: Option<usize>,
    /// Let the baseline arm reuse cached prefixes.
    #[arg(long)]
    baseline_prefix_cache: bool,
    #[command(flatten)]
    provider: ProviderOpts,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum WorkloadCmd {
    /// Generate a seeded question workload with expected answers.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        ratio: f64,
        /// Graph to draw questions from; a synthetic graph of `--nodes` when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Generate a seeded synthetic catalogue graph.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CacheCmd {
    /// Replay a JSONL cache trace and print cache metrics.
    Sim {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "priority")]
        policy: PolicyArg,
        #[arg(long, default_value_t = 16)]
        block_size: usize,
        #[arg(long, conflicts_with = "fraction")]
        capacity: Option<usize>,
        /// Capacity as a share of the trace's unbounded peak.
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Write the seeded adversarial trace and compare both policies on it.
    Adversarial {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SnippetCmd {
    /// Execute a snippet file against a graph.
    Run {
        file: PathBuf,
        #[arg(long)]
        graph: PathBuf,
    },
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    k1: usize,
    #[arg(long)]
    k2: usize,
    #[arg(long)]
    tg: f64,
    #[arg(long, default_value_t = 120.0)]
    tc: f64,
    /// Defaults to 40% of `--tg`.
    #[arg(long)]
    ta: Option<f64>,
    /// Defaults to 60% of `--tg`.
    #[arg(long)]
    tt: Option<f64>,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Compare two metrics.json reports over the same workload.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: DiffFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DiffFormat {
    Markdown,
    Csv,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn provider(opts: &ProviderOpts, cfg: &GlmConfig, templates: &Arc<Templates>) -> Result<Arc<dyn Provider>> {
    Ok(match opts.provider {
        ProviderArg::Rule => Arc::new(RuleProvider::new(templates.clone())),
        ProviderArg::Script => {
            let Some(path) = &opts.script else { bail!("--provider script needs --script") };
            Arc::new(ScriptedProvider::from_jsonl(&read(path)?)?)
        }
        ProviderArg::Remote => Arc::new(RemoteProvider::new(cfg.remote()?)),
    })
}

fn run(args: RunArgs, cfg: &GlmConfig) -> Result<()> {
    let graph = Arc::new(PropertyGraph::load(&args.graph)?);
    let templates = Arc::new(cfg.load_templates()?);
    let index = Arc::new(VectorIndex::build(&graph, &cfg.index()));
    let api = Arc::new(Retriever::new(graph, index, cfg.retriever()));
    let orch = Orchestrator::new(
        templates.clone(),
        provider(&args.provider, cfg, &templates)?,
        api,
        cfg.orchestrator(),
    );
    let out = orch.answer_with(args.mode.into(), "cli", &args.question);
    if args.trace {
        println!("{}", serde_json::to_string_pretty(&out)?);
    }
    match &out.answer {
        Ok(a) => println!("{a}"),
        Err(e) => bail!("question failed: {e:?}"),
    }
    Ok(())
}

fn bench(args: BenchArgs, cfg: &GlmConfig) -> Result<()> {
    let workload = Workload::from_jsonl(&read(&args.workload)?)?;
    let graph = Arc::new(PropertyGraph::load(&args.graph)?);
    let mut bc: BenchConfig = cfg.bench();
    if let Some(m) = args.mode {
        bc.mode = m.into();
    }
    if let Some(p) = args.policy {
        bc.policy = p.into();
    }
    if let Some(c) = args.chunking {
        bc.chunking = c.into();
    }
    if let Some(p) = args.pipeline {
        bc.pipeline = matches!(p, Switch::On);
    }
    if let Some(c) = args.concurrency {
        bc.concurrency = c;
    }
    if let Some(f) = args.capacity_fraction {
        bc.capacity = Capacity::FractionOfPeak(f);
    }
    if let Some(n) = args.capacity_blocks {
        bc.capacity = Capacity::Blocks(n);
    }
    bc.baseline_prefix_cache |= args.baseline_prefix_cache;
    let templates = Arc::new(match &cfg.templates.dir {
        Some(dir) => Templates::from_dir(dir, bc.chunking)?,
        None => Templates::builtin(bc.chunking),
    });
    let provider = provider(&args.provider, cfg, &templates)?;
    let api = bench_retriever(graph, &bc);
    let run = run_bench_with(&workload, templates, provider, api, &bc)?;
    run.write(&args.out)?;
    let r = &run.report;
    println!(
        "{} questions, {} answered, {} correct; {} tokens; throughput {:.6}; hit rate {:.3}; wrote {}",
        r.questions,
        r.answered,
        r.correct,
        r.total_tokens,
        r.throughput,
        r.cache_hit_rate,
        args.out.display()
    );
    Ok(())
}

fn cache(cmd: CacheCmd) -> Result<()> {
    match cmd {
        CacheCmd::Sim {
            trace,
            policy,
            block_size,
            capacity,
            fraction,
        } => {
            let events = trace_events(&read(&trace)?)?;
            let capacity = match (capacity, fraction) {
                (Some(n), _) => n,
                (None, Some(f)) => {
                    let peak = replay(&events, CacheState::unbounded(block_size))?.peak_resident();
                    ((peak as f64 * f).ceil() as usize).max(1)
                }
                (None, None) => usize::MAX,
            };
            let state = replay(&events, CacheState::new(capacity, block_size, policy.into()))?;
            println!("{}", serde_json::to_string_pretty(&state.metrics())?);
        }
        CacheCmd::Adversarial { seed, fraction, out } => {
            let cfg = AdversarialConfig {
                seed,
                ..AdversarialConfig::default()
            };
            let events = adversarial_trace(&cfg);
            if let Some(p) = &out {
                let mut text = String::new();
                for e in &events {
                    text.push_str(&serde_json::to_string(e)?);
                    text.push('\n');
                }
                emit(Some(p), &text)?;
            }
            let cmp = compare_policies(&events, cfg.block_size, fraction)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
        }
    }
    Ok(())
}

fn trace_events(text: &str) -> Result<Vec<TraceEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("trace line {}", i + 1)))
        .collect()
}

fn main() -> Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    let cfg = GlmConfig::from_env()?;
    match cli.command {
        Command::Run(args) => run(args, &cfg),
        Command::Bench(args) => bench(args, &cfg),
        Command::Workload(WorkloadCmd::Gen {
            seed,
            n,
            ratio,
            graph,
            nodes,
            out,
        }) => {
            let g = match graph {
                Some(p) => PropertyGraph::load(p)?,
                None => generate_graph(&SynthConfig::with_nodes(seed, nodes))?,
            };
            emit(out.as_deref(), &generate_workload(seed, n, ratio, &g)?.to_jsonl())
        }
        Command::Graph(GraphCmd::Gen { seed, nodes, out }) => {
            emit(out.as_deref(), &generate_graph(&SynthConfig::with_nodes(seed, nodes))?.to_jsonl())
        }
        Command::Cache(cmd) => cache(cmd),
        Command::Snippet(SnippetCmd::Run { file, graph }) => {
            let program = parse(&read(&file)?)?;
            let graph = Arc::new(PropertyGraph::load(&graph)?);
            let index = Arc::new(VectorIndex::build(&graph, &cfg.index()));
            let api = Retriever::new(graph, index, cfg.retriever());
            let result = execute(&program, &api, ExecOptions::default());
            print!("{}", result.stdout);
            match result.error {
                Some(e) => bail!("{e}"),
                None => Ok(()),
            }
        }
        Command::Cost(a) => {
            let input = CostModelInput {
                k1: a.k1,
                k2: a.k2,
                t_g: a.tg,
                t_c: a.tc,
                t_a: a.ta.unwrap_or(0.4 * a.tg),
                t_t: a.tt.unwrap_or(0.6 * a.tg),
            };
            input.validate()?;
            println!("{}", serde_json::to_string_pretty(&cost_model(&input))?);
            Ok(())
        }
        Command::Report(ReportCmd::Diff { a, b, format }) => {
            let a: BenchReport = serde_json::from_str(&read(&a)?)?;
            let b: BenchReport = serde_json::from_str(&read(&b)?)?;
            let d = report_diff(&a, &b)?;
            print!(
                "{}",
                match format {
                    DiffFormat::Markdown => d.to_markdown(),
                    DiffFormat::Csv => d.to_csv(),
                }
            );
            Ok(())
        }
    }
}
