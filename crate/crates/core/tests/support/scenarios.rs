//! End-to-end scenarios shared by the integration tests and the acceptance
//! report: scripted cost identity, the overlap law on real action calls,
//! fault injection and chunking ablation.
#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use glm_core::agents::{AgentKind, Chunking, Templates};
use glm_core::bench::cost::{cost_model, CostModelInput};
use glm_core::bench::synth::{generate_graph, SynthConfig};
use glm_core::bench::workload::{generate_workload, normalize_answer, Workload};
use glm_core::bench::{run_bench, BenchConfig};
use glm_core::embed::{IndexConfig, VectorIndex};
use glm_core::graph::PropertyGraph;
use glm_core::kvcache::count_tokens;
use glm_core::llm::{
    CompletionRequest, CompletionResult, FaultyProvider, Provider, ProviderError, RuleProvider, ScriptEntry,
    ScriptedProvider,
};
use glm_core::orchestrator::{answer_many, Actor, Mode, Orchestrator, OrchestratorConfig, Outcome, SessionOutcome};
use glm_core::pipeline::{run_action, RetrievalLatency, TimingMode, TimingModel};
use glm_core::retriever::{Retriever, RetrieverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TINY: &str = include_str!("../../../../fixtures/tiny.jsonl");

pub fn tiny_retriever(node_info: bool, cache_capacity: usize) -> Arc<Retriever> {
    let g = Arc::new(PropertyGraph::from_jsonl(TINY).unwrap());
    let idx = Arc::new(VectorIndex::build(&g, &IndexConfig::default()));
    Arc::new(Retriever::new(
        g,
        idx,
        RetrieverConfig {
            node_info,
            cache_capacity,
            ..RetrieverConfig::default()
        },
    ))
}

// ---------------------------------------------------------------- cost

/// Templates short enough for a 120-token classification budget.
pub fn short_templates() -> Templates {
    Templates::from_texts(
        Chunking::Vertex,
        "Reply yes or no.\n{{question}}",
        "Notes:\n{{notebook}}\n{{question}}",
        "Write a snippet.\n{{request}}",
        "Answer with graph calls.\n{{question}}\n{{history}}",
    )
    .expect("short templates parse")
}

fn budgeted(session: &str, agent: AgentKind, step: usize, text: &str, budget: usize) -> ScriptEntry {
    ScriptEntry {
        session: session.into(),
        agent,
        step,
        text: text.into(),
        budget: Some(budget),
    }
}

#[derive(Debug)]
pub struct CostCheck {
    pub label: &'static str,
    pub measured: usize,
    pub predicted: i64,
    pub rounds: usize,
    pub answer_ok: bool,
}

impl CostCheck {
    pub fn exact(&self) -> bool {
        self.answer_ok && self.measured as i64 == self.predicted
    }
}

/// Scripts `k1` baseline steps, a deterministic GLM question and `k2` GLM
/// reasoning rounds with fixed per-call token totals, then compares the
/// measured trajectory tokens with the closed form.
pub fn cost_identity(input: &CostModelInput<i64>) -> Vec<CostCheck> {
    let c = |v: i64| v as usize;
    let mut script = Vec::new();
    for i in 0..input.k1 {
        script.push(budgeted("b", AgentKind::BaselineThought, i, "Thought: look at alpha widget", c(input.t_g)));
        let act = if i + 1 == input.k1 {
            "Action: Finish[alpha widget]"
        } else {
            "Action: RetrieveNode[alpha widget]"
        };
        script.push(budgeted("b", AgentKind::BaselineAction, i, act, c(input.t_g)));
    }
    script.push(budgeted("d", AgentKind::Classification, 0, "yes", c(input.t_c)));
    script.push(budgeted(
        "d",
        AgentKind::Action,
        0,
        "```\nprint(NodeFeature([RetrieveNode(\"alpha widget\")], \"price\"))\n```",
        c(input.t_a),
    ));
    script.push(budgeted("g", AgentKind::Classification, 0, "no", c(input.t_c)));
    for i in 0..input.k2 {
        script.push(budgeted("g", AgentKind::Reasoning, i, "Missing: the also_viewed neighbours", c(input.t_t)));
        script.push(budgeted(
            "g",
            AgentKind::Action,
            i,
            "```\nprint(NeighbourCheck(\"n1\", \"also_viewed\"))\n```",
            c(input.t_a),
        ));
    }
    script.push(budgeted("g", AgentKind::Reasoning, input.k2, "Finish: gamma widget", c(input.t_t)));

    let orch = Orchestrator::new(
        Arc::new(short_templates()),
        Arc::new(ScriptedProvider::new(script)),
        tiny_retriever(true, 0),
        OrchestratorConfig {
            max_steps: input.k1.max(input.k2 + 1),
            ..OrchestratorConfig::default()
        },
    );
    let out = cost_model(input);
    let base = orch.run_baseline_graphcot("b", "Which item is alpha widget?");
    let det = orch.answer("d", "What is the price of alpha widget?");
    let nondet = orch.answer("g", "Recommend the next item based on user history: alpha widget, beta widget");
    let row = |label, o: &SessionOutcome, predicted, answer: &str| CostCheck {
        label,
        measured: o.trace.tokens(),
        predicted,
        rounds: o.rounds,
        answer_ok: o.answer.as_deref() == Ok(answer) && o.tokens == o.trace.tokens(),
    };
    vec![
        row("baseline", &base, out.baseline_tokens, "alpha widget"),
        row("glm deterministic", &det, out.glm_det_tokens, "[10]"),
        row("glm non-deterministic", &nondet, out.glm_nondet_tokens, "gamma widget"),
    ]
}

// ---------------------------------------------------------------- overlap law

#[derive(Debug)]
pub struct LawCase {
    pub computed: usize,
    pub c_prefill: u64,
    pub c_decode: u64,
    pub retrieval: u64,
    pub before: usize,
    pub after: usize,
}

/// Runs one scripted action reply with and without overlap and returns the
/// two traces plus the decode split predicted from the reply text.
pub fn law_case(rng: &mut ChaCha8Rng) -> LawCase {
    LawCase {
        computed: rng.gen_range(0..400),
        c_prefill: rng.gen_range(0..5),
        c_decode: rng.gen_range(1..8),
        retrieval: rng.gen_range(0..300),
        before: rng.gen_range(0..6),
        after: rng.gen_range(0..12),
    }
}

fn law_reply(case: &LawCase) -> (String, usize) {
    let mut text = String::from("Here is the snippet.\n```\n");
    for i in 0..case.before {
        text.push_str(&format!("x{i} = {i}\n"));
    }
    text.push_str("node = RetrieveNode(\"alpha widget\")\n");
    // Tokens decoded up to and including the retrieval line.
    let d1 = count_tokens(&text);
    for i in 0..case.after {
        text.push_str(&format!("print(NodeFeature([node], \"price\"), {i})\n"));
    }
    text.push_str("```\n");
    (text, d1)
}

/// Checks `serial - pipelined == min(R, D2)` and every component against the
/// token counts of the reply; returns the pipelined and serial totals.
pub fn check_law(case: &LawCase) -> Result<(u64, u64), String> {
    let (reply, d1_tokens) = law_reply(case);
    let total_tokens = count_tokens(&reply);
    let provider = ScriptedProvider::new([ScriptEntry {
        session: "s".into(),
        agent: AgentKind::Action,
        step: 0,
        text: reply,
        budget: None,
    }]);
    let tm = TimingModel::<u64> {
        mode: TimingMode::Simulated,
        retrieval_latency: RetrievalLatency::Fixed(case.retrieval),
        c_prefill: case.c_prefill,
        c_decode: case.c_decode,
    };
    let api = tiny_retriever(true, 0);
    let req = CompletionRequest {
        prompt: "Write a snippet.",
        agent: AgentKind::Action,
        session: "s",
        step: 0,
    };
    let run = |overlap| run_action(&provider, api.as_ref(), &req, case.computed, &tm, overlap).map_err(|e| e.to_string());
    let piped = run(true)?;
    let serial = run(false)?;
    let (p, d1) = (case.c_prefill * case.computed as u64, case.c_decode * d1_tokens as u64);
    let d2 = case.c_decode * (total_tokens - d1_tokens) as u64;
    let r = case.retrieval;
    for t in [&piped.trace, &serial.trace] {
        if (t.p, t.d1, t.r, t.d2) != (p, d1, r, d2) {
            return Err(format!("{case:?}: components {:?} expected {:?}", (t.p, t.d1, t.r, t.d2), (p, d1, r, d2)));
        }
    }
    if serial.trace.total - piped.trace.total != r.min(d2) {
        return Err(format!("{case:?}: serial {} pipelined {}", serial.trace.total, piped.trace.total));
    }
    if piped.snippet != serial.snippet || piped.snippet.is_err() {
        return Err(format!("{case:?}: snippets differ: {:?} vs {:?}", piped.snippet, serial.snippet));
    }
    Ok((piped.trace.total, serial.trace.total))
}

pub fn overlap_law(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        check_law(&law_case(&mut rng))?;
    }
    Ok(cases)
}

// ---------------------------------------------------------------- faults

/// Returns a failing snippet once for each chosen action call.
pub struct BreakOnce {
    inner: Arc<dyn Provider>,
    targets: Mutex<HashSet<(String, usize)>>,
}

impl BreakOnce {
    pub fn new(inner: Arc<dyn Provider>, targets: impl IntoIterator<Item = (String, usize)>) -> Self {
        BreakOnce {
            inner,
            targets: Mutex::new(targets.into_iter().collect()),
        }
    }
}

impl Provider for BreakOnce {
    fn complete(
        &self,
        req: &CompletionRequest<'_>,
        sink: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, ProviderError> {
        let hit = req.agent == AgentKind::Action
            && self.targets.lock().unwrap().remove(&(req.session.to_string(), req.step));
        if !hit {
            return self.inner.complete(req, sink);
        }
        let scripted = ScriptedProvider::new([ScriptEntry {
            session: req.session.into(),
            agent: req.agent,
            step: req.step,
            text: "```\nprint(1 / 0)\n```".into(),
            budget: None,
        }]);
        scripted.complete(req, sink)
    }
}

#[derive(Debug, Default)]
pub struct FaultReport {
    pub sessions: usize,
    pub same_answers: usize,
    pub timeouts: usize,
    pub repairs: usize,
    /// Resumed calls and how many of them reused cached tokens.
    pub resumed: usize,
    pub resumed_cached: usize,
    pub min_resumed_cached: usize,
}

impl FaultReport {
    pub fn passed(&self) -> bool {
        self.sessions > 0
            && self.same_answers == self.sessions
            && self.timeouts == self.sessions
            && self.repairs == self.sessions
            && self.resumed == self.sessions
            && self.resumed_cached == self.resumed
    }
}

fn rule_orchestrator(g: &Arc<PropertyGraph>, provider: Arc<dyn Provider>, templates: Arc<Templates>) -> Orchestrator {
    let idx = Arc::new(VectorIndex::build(g, &IndexConfig::default()));
    let api = Arc::new(Retriever::new(g.clone(), idx, RetrieverConfig::default()));
    Orchestrator::new(templates, provider, api, OrchestratorConfig::default())
}

/// Every session gets one provider timeout and one failing snippet that the
/// action agent then repairs. Answers must match the clean run and the
/// retried call must start from cached blocks.
pub fn fault_equivalence(graph: &Arc<PropertyGraph>, workload: &Workload) -> FaultReport {
    let templates = Arc::new(Templates::builtin(Chunking::Vertex));
    let rule: Arc<dyn Provider> = Arc::new(RuleProvider::new(templates.clone()));
    let questions: Vec<(String, String)> = workload.questions.iter().map(|q| (q.id.clone(), q.text.clone())).collect();
    let clean = answer_many(&rule_orchestrator(graph, rule.clone(), templates.clone()), Mode::Glm, &questions, 4);

    let mut faulty = FaultyProvider::new(Arc::new(BreakOnce::new(
        rule,
        questions.iter().map(|(id, _)| (id.clone(), 0)),
    )));
    for (id, _) in &questions {
        faulty = faulty.inject_timeout(id, AgentKind::Action, 0, 1);
    }
    let broken = answer_many(&rule_orchestrator(graph, Arc::new(faulty), templates), Mode::Glm, &questions, 4);

    let mut rep = FaultReport {
        min_resumed_cached: usize::MAX,
        ..FaultReport::default()
    };
    for (a, b) in clean.iter().zip(&broken) {
        rep.sessions += 1;
        rep.same_answers += usize::from(a.answer == b.answer && a.answer.is_ok());
        let recs = &b.trace.records;
        rep.timeouts += usize::from(recs.iter().filter(|r| r.outcome == Outcome::Timeout).count() == 1);
        rep.repairs += usize::from(
            recs.iter().any(|r| r.actor == Actor::Retriever && matches!(r.outcome, Outcome::Failed(_)))
                && recs.iter().filter(|r| r.actor == Actor::Action && r.outcome == Outcome::Ok).count() >= 2,
        );
        if let Some(i) = recs.iter().position(|r| r.outcome == Outcome::Timeout) {
            if let Some(next) = recs[i + 1..].iter().find(|r| r.actor == recs[i].actor) {
                rep.resumed += 1;
                rep.resumed_cached += usize::from(next.cached_tokens > 0);
                rep.min_resumed_cached = rep.min_resumed_cached.min(next.cached_tokens);
            }
        }
    }
    rep
}

// ---------------------------------------------------------------- chunking

#[derive(Debug, Default)]
pub struct ChunkingReport {
    pub compared: usize,
    pub fewer: usize,
    pub vertex_correct: usize,
    pub fact_correct: usize,
    /// First few questions where vertex chunking did not win.
    pub counterexamples: Vec<(String, usize, usize, usize)>,
}

/// Rounds per question under both chunking modes for every question that
/// needs two to four facts.
pub fn chunking_ablation(graph: &Arc<PropertyGraph>, workload: &Workload) -> ChunkingReport {
    let run = |chunking| {
        let cfg = BenchConfig {
            chunking,
            ..BenchConfig::default()
        };
        run_bench(workload, graph.clone(), &cfg).expect("valid bench config")
    };
    let vertex = run(Chunking::Vertex);
    let fact = run(Chunking::Fact);
    let mut rep = ChunkingReport::default();
    for ((q, v), f) in workload.questions.iter().zip(&vertex.outcomes).zip(&fact.outcomes) {
        if !(2..=4).contains(&q.required_facts) {
            continue;
        }
        rep.compared += 1;
        let expect = q.expected_answer.as_deref().map(normalize_answer);
        rep.vertex_correct += usize::from(v.answer.as_deref().ok().map(normalize_answer) == expect);
        rep.fact_correct += usize::from(f.answer.as_deref().ok().map(normalize_answer) == expect);
        if v.rounds < f.rounds {
            rep.fewer += 1;
        } else if rep.counterexamples.len() < 5 {
            rep.counterexamples.push((q.id.clone(), q.required_facts, v.rounds, f.rounds));
        }
    }
    rep
}

pub fn synthetic(seed: u64, nodes: usize, questions: usize, ratio: f64) -> (Arc<PropertyGraph>, Workload) {
    let g = Arc::new(generate_graph(&SynthConfig::with_nodes(seed, nodes)).expect("synthetic graph"));
    let w = generate_workload(seed, questions, ratio, &g).expect("synthetic workload");
    (g, w)
}
