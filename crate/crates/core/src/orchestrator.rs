//! Session control loop for the three-agent workflow, with snippet repair,
//! timeout recovery, cache tier lifecycle and the single-agent baseline.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    parse_baseline_action, parse_classification, parse_reasoning, parse_thought, AgentError, AgentKind,
    AgentOutput, BaselineAction, Notebook, Prompt, QuestionKind, Templates,
};
use crate::facts::{degree_line, feature_line, id_line, neighbours_line};
use crate::graph::{AttrValue, NodeId};
use crate::hash::fnv64;
use crate::kvcache::{CacheState, PrefillReport, Tier, TokenSeq, DEFAULT_BLOCK_SIZE};
use crate::llm::{CompletionRequest, CompletionResult, Provider, ProviderError};
use crate::pipeline::{run_action, ActionFailure, EarlyRetrieval, PipelineTrace, TimingMode, TimingModel};
use crate::retriever::{GraphApi, RetrievalError, Retrieved, VertexChunk};
use crate::snippet::{self, ExecErrorKind, ExecOptions};

pub const DEFAULT_MAX_STEPS: usize = 10;
pub const DEFAULT_REPAIR_BUDGET: usize = 2;
pub const DEFAULT_TIMEOUT_RETRIES: usize = 1;

/// Terminal failure of a session.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum ErrorKind {
    #[error("unexpected agent output: {0}")]
    UnexpectedAgentOutput(String),
    #[error("retrieval process error: {0}")]
    RetrievalProcessError(String),
    #[error("code execution error: {0}")]
    CodeExecutionError(String),
    #[error("step limit exceeded")]
    StepLimitExceeded,
    #[error("provider timed out")]
    ProviderTimeout,
}

impl ErrorKind {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorKind::UnexpectedAgentOutput(_) => "unexpected_agent_output",
            ErrorKind::RetrievalProcessError(_) => "retrieval_process_error",
            ErrorKind::CodeExecutionError(_) => "code_execution_error",
            ErrorKind::StepLimitExceeded => "step_limit_exceeded",
            ErrorKind::ProviderTimeout => "provider_timeout",
        }
    }

    pub const NAMES: [&'static str; 5] = [
        "unexpected_agent_output",
        "retrieval_process_error",
        "code_execution_error",
        "step_limit_exceeded",
        "provider_timeout",
    ];
}

impl From<AgentError> for ErrorKind {
    fn from(e: AgentError) -> Self {
        ErrorKind::UnexpectedAgentOutput(e.to_string())
    }
}

impl From<RetrievalError> for ErrorKind {
    fn from(e: RetrievalError) -> Self {
        ErrorKind::RetrievalProcessError(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestratorError {
    #[error("session {0} has failed and cannot be resumed")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Glm,
    Graphcot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Classification,
    Reasoning,
    Action,
    BaselineThought,
    BaselineAction,
    Retriever,
}

impl From<AgentKind> for Actor {
    fn from(k: AgentKind) -> Self {
        match k {
            AgentKind::Classification => Actor::Classification,
            AgentKind::Reasoning => Actor::Reasoning,
            AgentKind::Action => Actor::Action,
            AgentKind::BaselineThought => Actor::BaselineThought,
            AgentKind::BaselineAction => Actor::BaselineAction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum Outcome {
    Ok,
    Timeout,
    Failed(String),
}

/// One index lookup made while executing a snippet or a baseline action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lookup {
    pub query: String,
    pub cache_hit: bool,
}

/// One step of a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub seq: usize,
    /// Session clock when the step started.
    pub at: f64,
    pub actor: Actor,
    /// Invocation index of this agent within the session.
    pub step: usize,
    pub prompt_hash: u64,
    pub tokens_in: usize,
    pub tokens_out: usize,
    pub cached_tokens: usize,
    pub computed_tokens: usize,
    pub latency: f64,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineTrace<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early: Option<EarlyRetrieval>,
    /// Output tokens decoded before the early retrieval was launched.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d1_tokens: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lookups: Vec<Lookup>,
    /// Prompt as sent, kept in memory for cache replay.
    #[serde(skip)]
    pub prompt: Option<Arc<Prompt>>,
}

/// The recorded trajectory of one session.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SessionTrace {
    pub session: String,
    pub records: Vec<TraceRecord>,
}

impl SessionTrace {
    /// Total tokens over every completed provider call.
    pub fn tokens(&self) -> usize {
        self.records.iter().map(|r| r.tokens_in + r.tokens_out).sum()
    }

    /// End-to-end latency; every step lies on the critical path.
    pub fn latency(&self) -> f64 {
        self.records.iter().map(|r| r.latency).sum()
    }

    pub fn tokens_of(&self, actor: Actor) -> usize {
        self.records
            .iter()
            .filter(|r| r.actor == actor)
            .map(|r| r.tokens_in + r.tokens_out)
            .sum()
    }

    /// Completed calls of `actor`.
    pub fn calls(&self, actor: Actor) -> usize {
        self.records
            .iter()
            .filter(|r| r.actor == actor && r.outcome != Outcome::Timeout)
            .count()
    }

    /// Reasoning rounds: reasoning calls, or thought calls for the baseline.
    pub fn rounds(&self) -> usize {
        self.calls(Actor::Reasoning) + self.calls(Actor::BaselineThought)
    }

    fn push(&mut self, mut r: TraceRecord) {
        r.seq = self.records.len();
        r.at = self.latency();
        self.records.push(r);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Classifying,
    DirectAction,
    Reasoning,
    Acting,
    Executing,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub question: String,
    pub state: SessionState,
    pub notebook: Notebook,
    /// Reasoning rounds started so far.
    pub step_count: usize,
    pub max_steps: usize,
    pub trace: SessionTrace,
    pub answer: Option<String>,
    pub error: Option<ErrorKind>,
    /// Set while the session waits to be resumed after a timeout.
    pub interrupted: bool,
    timeouts: usize,
    request: Option<String>,
    direct: bool,
    snippet: Option<String>,
    repair: Option<(String, String)>,
    repairs_used: usize,
    agent_steps: [usize; 5],
}

impl Session {
    pub fn new(id: impl Into<String>, question: impl Into<String>, max_steps: usize) -> Self {
        let id = id.into();
        Session {
            trace: SessionTrace {
                session: id.clone(),
                records: Vec::new(),
            },
            id,
            question: question.into(),
            state: SessionState::Classifying,
            notebook: Notebook::new(),
            step_count: 0,
            max_steps,
            answer: None,
            error: None,
            interrupted: false,
            timeouts: 0,
            request: None,
            direct: false,
            snippet: None,
            repair: None,
            repairs_used: 0,
            agent_steps: [0; 5],
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, SessionState::Done | SessionState::Failed)
    }

    pub fn result(&self) -> Result<String, ErrorKind> {
        match (&self.answer, &self.error) {
            (Some(a), _) => Ok(a.clone()),
            (None, Some(e)) => Err(e.clone()),
            (None, None) => Err(ErrorKind::ProviderTimeout),
        }
    }

    fn agent_step(&self, k: AgentKind) -> usize {
        self.agent_steps[agent_slot(k)]
    }
}

fn agent_slot(k: AgentKind) -> usize {
    AgentKind::ALL.iter().position(|a| *a == k).expect("listed agent")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    pub max_steps: usize,
    pub repair_budget: usize,
    /// Retries after a provider timeout before the session fails.
    pub timeout_retries: usize,
    /// Resume interrupted sessions inside `answer`.
    pub auto_resume: bool,
    pub pipeline: bool,
    pub timing: TimingModel<f64>,
    pub step_budget: usize,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            max_steps: DEFAULT_MAX_STEPS,
            repair_budget: DEFAULT_REPAIR_BUDGET,
            timeout_retries: DEFAULT_TIMEOUT_RETRIES,
            auto_resume: true,
            pipeline: true,
            timing: TimingModel::simulated(20.0),
            step_budget: snippet::DEFAULT_STEP_BUDGET,
        }
    }
}

/// Result of one question.
#[derive(Debug, Clone, Serialize)]
pub struct SessionOutcome {
    pub id: String,
    pub question: String,
    pub mode: Mode,
    pub answer: Result<String, ErrorKind>,
    pub rounds: usize,
    pub tokens: usize,
    pub latency: f64,
    pub trace: SessionTrace,
}

/// Graph API wrapper that records every node lookup.
struct Recording<'a> {
    inner: &'a dyn GraphApi,
    lookups: Mutex<Vec<Lookup>>,
}

impl<'a> Recording<'a> {
    fn new(inner: &'a dyn GraphApi) -> Self {
        Recording {
            inner,
            lookups: Mutex::new(Vec::new()),
        }
    }

    fn into_lookups(self) -> Vec<Lookup> {
        self.lookups.into_inner().expect("lookup log poisoned")
    }
}

impl GraphApi for Recording<'_> {
    fn retrieve_node(&self, text: &str) -> Result<Retrieved, RetrievalError> {
        let r = self.inner.retrieve_node(text)?;
        self.lookups.lock().expect("lookup log poisoned").push(Lookup {
            query: text.to_string(),
            cache_hit: r.cache_hit,
        });
        Ok(r)
    }
    fn node_info(&self, id: &str) -> Result<VertexChunk, RetrievalError> {
        self.inner.node_info(id)
    }
    fn node_feature(&self, ids: &[NodeId], name: &str) -> Result<Vec<Option<AttrValue>>, RetrievalError> {
        self.inner.node_feature(ids, name)
    }
    fn node_degree(&self, id: &str, edge_type: &str) -> Result<usize, RetrievalError> {
        self.inner.node_degree(id, edge_type)
    }
    fn neighbour_check(&self, id: &str, edge_type: &str) -> Result<Vec<NodeId>, RetrievalError> {
        self.inner.neighbour_check(id, edge_type)
    }
    fn cached_node(&self, text: &str) -> Option<NodeId> {
        self.inner.cached_node(text)
    }
}

/// Outcome of one step of the state machine.
enum Step {
    Continue,
    Interrupted,
}

/// Shared engine: templates, provider, graph and the KV cache.
pub struct Orchestrator {
    templates: Arc<Templates>,
    provider: Arc<dyn Provider>,
    api: Arc<dyn GraphApi>,
    cache: Arc<Mutex<CacheState>>,
    config: OrchestratorConfig,
}

impl Orchestrator {
    pub fn new(
        templates: Arc<Templates>,
        provider: Arc<dyn Provider>,
        api: Arc<dyn GraphApi>,
        config: OrchestratorConfig,
    ) -> Self {
        Orchestrator {
            templates,
            provider,
            api,
            cache: Arc::new(Mutex::new(CacheState::unbounded(DEFAULT_BLOCK_SIZE))),
            config,
        }
    }

    pub fn with_cache(mut self, cache: CacheState) -> Self {
        self.cache = Arc::new(Mutex::new(cache));
        self
    }

    pub fn cache(&self) -> &Arc<Mutex<CacheState>> {
        &self.cache
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn templates(&self) -> &Arc<Templates> {
        &self.templates
    }

    pub fn session(&self, id: &str, question: &str) -> Session {
        Session::new(id, question, self.config.max_steps)
    }

    /// Answers `question` with the multi-agent workflow, resuming after
    /// timeouts when `auto_resume` is set.
    pub fn answer(&self, id: &str, question: &str) -> SessionOutcome {
        let mut s = self.session(id, question);
        self.run(&mut s);
        while s.interrupted && self.config.auto_resume {
            self.run(&mut s);
        }
        outcome(&s, Mode::Glm)
    }

    pub fn answer_with(&self, mode: Mode, id: &str, question: &str) -> SessionOutcome {
        match mode {
            Mode::Glm => self.answer(id, question),
            Mode::Graphcot => self.run_baseline_graphcot(id, question),
        }
    }

    /// Continues an interrupted session from its last successful step.
    pub fn resume(&self, s: &mut Session) -> Result<(), OrchestratorError> {
        match s.state {
            SessionState::Done => Ok(()),
            SessionState::Failed => Err(OrchestratorError::InvalidState(s.id.clone())),
            _ => {
                self.run(s);
                Ok(())
            }
        }
    }

    /// Advances `s` until it finishes, fails or is interrupted.
    pub fn run(&self, s: &mut Session) {
        s.interrupted = false;
        if s.question.trim().is_empty() {
            self.fail(s, ErrorKind::from(AgentError::EmptyQuestion));
            return;
        }
        while !s.is_terminal() {
            if let Step::Interrupted = self.step(s) {
                s.timeouts += 1;
                if s.timeouts > self.config.timeout_retries {
                    self.fail(s, ErrorKind::ProviderTimeout);
                } else {
                    log::warn!("session {}: provider timed out in {:?}, resumable", s.id, s.state);
                    s.interrupted = true;
                }
                return;
            }
        }
    }

    fn step(&self, s: &mut Session) -> Step {
        match s.state {
            SessionState::Classifying => {
                let prompt = match self.templates.render_classification(&s.question) {
                    Ok(p) => p,
                    Err(e) => return self.fail_step(s, e.into()),
                };
                let Some(c) = self.call(s, AgentKind::Classification, prompt) else {
                    return Step::Interrupted;
                };
                match parse_classification(&c.text) {
                    Ok(QuestionKind::Deterministic) => {
                        s.direct = true;
                        s.request = Some(s.question.clone());
                        s.state = SessionState::DirectAction;
                    }
                    Ok(QuestionKind::NonDeterministic) => s.state = SessionState::Reasoning,
                    Err(e) => return self.fail_step(s, e.into()),
                }
            }
            SessionState::Reasoning => {
                if s.step_count >= s.max_steps {
                    return self.fail_step(s, ErrorKind::StepLimitExceeded);
                }
                let prompt = self.templates.render_reasoning(&s.notebook, &s.question);
                let Some(c) = self.call(s, AgentKind::Reasoning, prompt) else {
                    return Step::Interrupted;
                };
                s.step_count += 1;
                match parse_reasoning(&c.text) {
                    Ok(AgentOutput::Finish(a)) => self.finish(s, a),
                    Ok(AgentOutput::MissingInfo(m)) => {
                        s.request = Some(m);
                        s.repairs_used = 0;
                        s.state = SessionState::Acting;
                    }
                    Ok(_) => return self.fail_step(s, ErrorKind::UnexpectedAgentOutput(c.text)),
                    Err(e) => return self.fail_step(s, e.into()),
                }
            }
            SessionState::DirectAction | SessionState::Acting => {
                let request = s.request.clone().expect("acting without a request");
                let repair = s.repair.as_ref().map(|(a, b)| (a.as_str(), b.as_str()));
                let prompt = self.templates.render_action(&request, repair);
                let Some(outcome) = self.call_action(s, prompt) else {
                    return Step::Interrupted;
                };
                match outcome {
                    Ok(code) => {
                        s.snippet = Some(code);
                        s.state = SessionState::Executing;
                    }
                    Err(ActionFailure::NoSnippet(e)) => return self.fail_step(s, e.into()),
                    Err(ActionFailure::Retrieval(e)) => return self.fail_step(s, e.into()),
                }
            }
            SessionState::Executing => self.execute(s),
            SessionState::Done | SessionState::Failed => {}
        }
        Step::Continue
    }

    fn execute(&self, s: &mut Session) {
        let code = s.snippet.take().expect("executing without a snippet");
        let rec = Recording::new(self.api.as_ref());
        let start = Instant::now();
        let failure = match snippet::parse(&code) {
            Err(e) => Some((ExecErrorKind::CodeExecution, e.to_string())),
            Ok(program) => {
                let r = snippet::execute(
                    &program,
                    &rec,
                    ExecOptions {
                        step_budget: self.config.step_budget,
                    },
                );
                match r.error {
                    Some(e) => Some((e.kind, e.to_string())),
                    None => {
                        s.trace.push(self.retriever_record(rec, start, Outcome::Ok));
                        s.repair = None;
                        let request = s.request.take().unwrap_or_default();
                        if s.direct {
                            self.finish(s, r.stdout.trim().to_string());
                        } else {
                            s.notebook.append(request, &r.stdout);
                            s.state = SessionState::Reasoning;
                        }
                        return;
                    }
                }
            }
        };
        let (kind, message) = failure.expect("failure set");
        s.trace.push(self.retriever_record(rec, start, Outcome::Failed(message.clone())));
        match kind {
            ExecErrorKind::RetrievalProcess => self.fail(s, ErrorKind::RetrievalProcessError(message)),
            ExecErrorKind::CodeExecution | ExecErrorKind::StepBudgetExceeded => {
                if s.repairs_used < self.config.repair_budget {
                    log::debug!("session {}: snippet failed, asking for a repair: {message}", s.id);
                    s.repairs_used += 1;
                    s.repair = Some((code, message));
                    s.state = if s.direct {
                        SessionState::DirectAction
                    } else {
                        SessionState::Acting
                    };
                } else {
                    self.fail(s, ErrorKind::CodeExecutionError(message));
                }
            }
        }
    }

    fn retriever_record(&self, rec: Recording<'_>, start: Instant, outcome: Outcome) -> TraceRecord {
        let lookups = rec.into_lookups();
        let latency = match self.config.timing.mode {
            TimingMode::Simulated => lookups
                .iter()
                .filter(|l| !l.cache_hit)
                .map(|l| self.config.timing.retrieval_latency.sample(&l.query))
                .sum(),
            TimingMode::WallClock => start.elapsed().as_micros() as f64,
        };
        TraceRecord {
            latency,
            lookups,
            outcome,
            ..blank(Actor::Retriever, 0)
        }
    }

    fn finish(&self, s: &mut Session, answer: String) {
        s.answer = Some(answer);
        s.state = SessionState::Done;
        self.retire(s);
    }

    fn fail(&self, s: &mut Session, e: ErrorKind) {
        log::info!("session {} failed: {e}", s.id);
        s.error = Some(e);
        s.state = SessionState::Failed;
        self.retire(s);
    }

    fn fail_step(&self, s: &mut Session, e: ErrorKind) -> Step {
        self.fail(s, e);
        Step::Continue
    }

    /// Finished sessions no longer need their notebook blocks protected.
    fn retire(&self, s: &Session) {
        self.cache.lock().expect("kv cache poisoned").set_tier(&s.id, Tier::II, Tier::III);
    }

    fn prefill(&self, s: &Session, prompt: &Prompt) -> PrefillReport {
        let tokens = TokenSeq::tokenize(&prompt.text);
        let mut cache = self.cache.lock().expect("kv cache poisoned");
        cache.prefill(&tokens, &prompt.tiers, Some(&s.id)).unwrap_or(PrefillReport {
            cached_tokens: 0,
            computed_tokens: tokens.len(),
            tail_tokens: tokens.len() % cache.block_size(),
            evicted: Vec::new(),
        })
    }

    fn record(&self, s: &Session, agent: AgentKind, prompt: &Prompt, pre: &PrefillReport) -> TraceRecord {
        TraceRecord {
            prompt_hash: fnv64(prompt.text.as_bytes()),
            cached_tokens: pre.cached_tokens,
            computed_tokens: pre.computed_tokens,
            prompt: Some(Arc::new(prompt.clone())),
            ..blank(agent.into(), s.agent_step(agent))
        }
    }

    /// One plain agent call. `None` means the provider timed out.
    fn call(&self, s: &mut Session, agent: AgentKind, prompt: Prompt) -> Option<CompletionResult> {
        let pre = self.prefill(s, &prompt);
        let mut rec = self.record(s, agent, &prompt, &pre);
        let tm = &self.config.timing;
        let start = Instant::now();
        let req = CompletionRequest {
            prompt: &prompt.text,
            agent,
            session: &s.id,
            step: s.agent_step(agent),
        };
        let result = self.provider.complete(&req, &mut |_| {});
        let p = tm.prefill_cost(pre.computed_tokens);
        match result {
            Ok(c) => {
                rec.tokens_in = c.tokens_in;
                rec.tokens_out = c.tokens_out;
                rec.latency = match tm.mode {
                    TimingMode::Simulated => p + tm.decode_cost(c.tokens_out),
                    TimingMode::WallClock => start.elapsed().as_micros() as f64,
                };
                s.trace.push(rec);
                s.agent_steps[agent_slot(agent)] += 1;
                Some(c)
            }
            Err(e) => {
                self.push_failed_call(s, rec, p, e);
                None
            }
        }
    }

    fn push_failed_call(&self, s: &mut Session, mut rec: TraceRecord, p: f64, e: ProviderError) {
        rec.latency = p;
        rec.outcome = match e {
            ProviderError::Timeout => Outcome::Timeout,
            ProviderError::Protocol(m) => Outcome::Failed(m),
        };
        s.trace.push(rec);
    }

    fn call_action(&self, s: &mut Session, prompt: Prompt) -> Option<Result<String, ActionFailure>> {
        let agent = AgentKind::Action;
        let pre = self.prefill(s, &prompt);
        let mut rec = self.record(s, agent, &prompt, &pre);
        let req = CompletionRequest {
            prompt: &prompt.text,
            agent,
            session: &s.id,
            step: s.agent_step(agent),
        };
        let tm = &self.config.timing;
        match run_action(
            self.provider.as_ref(),
            self.api.as_ref(),
            &req,
            pre.computed_tokens,
            tm,
            self.config.pipeline,
        ) {
            Ok(out) => {
                rec.tokens_in = out.completion.tokens_in;
                rec.tokens_out = out.completion.tokens_out;
                rec.latency = out.trace.total;
                rec.pipeline = Some(out.trace);
                rec.d1_tokens = Some(out.d1_tokens);
                rec.early = out.early;
                s.trace.push(rec);
                s.agent_steps[agent_slot(agent)] += 1;
                Some(out.snippet)
            }
            Err(e) => {
                self.push_failed_call(s, rec, tm.prefill_cost(pre.computed_tokens), e);
                None
            }
        }
    }

    /// Single-agent loop: a thought call and an action call per round, both
    /// over the full history, one graph function per action.
    pub fn run_baseline_graphcot(&self, id: &str, question: &str) -> SessionOutcome {
        let mut s = self.session(id, question);
        let result = self.baseline_loop(&mut s);
        match result {
            Ok(a) => self.finish(&mut s, a),
            Err(e) => self.fail(&mut s, e),
        }
        outcome(&s, Mode::Graphcot)
    }

    fn baseline_call(&self, s: &mut Session, agent: AgentKind, history: &str) -> Result<CompletionResult, ErrorKind> {
        loop {
            let prompt = self.templates.render_graphcot(&s.question, history);
            if let Some(c) = self.call(s, agent, prompt) {
                return Ok(c);
            }
            s.timeouts += 1;
            if s.timeouts > self.config.timeout_retries {
                return Err(ErrorKind::ProviderTimeout);
            }
        }
    }

    fn baseline_loop(&self, s: &mut Session) -> Result<String, ErrorKind> {
        if s.question.trim().is_empty() {
            return Err(AgentError::EmptyQuestion.into());
        }
        let mut history = String::new();
        loop {
            if s.step_count >= s.max_steps {
                return Err(ErrorKind::StepLimitExceeded);
            }
            s.state = SessionState::Reasoning;
            let thought = self.baseline_call(s, AgentKind::BaselineThought, &history)?;
            s.step_count += 1;
            history.push('\n');
            history.push_str(&parse_thought(&thought.text)?);
            s.state = SessionState::Acting;
            let action = self.baseline_call(s, AgentKind::BaselineAction, &history)?;
            let action = parse_baseline_action(&action.text)?;
            history.push('\n');
            history.push_str(&action.to_string());
            let BaselineAction::Call { function, args } = action else {
                let BaselineAction::Finish(a) = action else { unreachable!() };
                return Ok(a);
            };
            s.state = SessionState::Executing;
            let rec = Recording::new(self.api.as_ref());
            let start = Instant::now();
            let obs = baseline_observation(&rec, &function, &args);
            let outcome = match &obs {
                Ok(_) => Outcome::Ok,
                Err(e) => Outcome::Failed(e.to_string()),
            };
            s.trace.push(self.retriever_record(rec, start, outcome));
            history.push_str("\nObservation: ");
            history.push_str(&obs?);
        }
    }
}

fn blank(actor: Actor, step: usize) -> TraceRecord {
    TraceRecord {
        seq: 0,
        at: 0.0,
        actor,
        step,
        prompt_hash: 0,
        tokens_in: 0,
        tokens_out: 0,
        cached_tokens: 0,
        computed_tokens: 0,
        latency: 0.0,
        outcome: Outcome::Ok,
        pipeline: None,
        early: None,
        d1_tokens: None,
        lookups: Vec::new(),
        prompt: None,
    }
}

fn baseline_observation(api: &dyn GraphApi, function: &str, args: &[String]) -> Result<String, ErrorKind> {
    let bad = || ErrorKind::UnexpectedAgentOutput(format!("{function}[{}]", args.join(", ")));
    match (function, args) {
        ("RetrieveNode", [text]) => Ok(id_line(text, &api.retrieve_node(text)?.id)),
        ("NodeFeature", [id, attr]) => Ok(feature_line(id, attr, &api.node_feature(&[id.clone()], attr)?)),
        ("NeighbourCheck", [id, edge]) => Ok(neighbours_line(id, edge, &api.neighbour_check(id, edge)?)),
        ("NodeDegree", [id, edge]) => Ok(degree_line(id, edge, api.node_degree(id, edge)?)),
        _ => Err(bad()),
    }
}

fn outcome(s: &Session, mode: Mode) -> SessionOutcome {
    SessionOutcome {
        id: s.id.clone(),
        question: s.question.clone(),
        mode,
        answer: s.result(),
        rounds: s.trace.rounds(),
        tokens: s.trace.tokens(),
        latency: s.trace.latency(),
        trace: s.trace.clone(),
    }
}

/// Runs every `(id, question)` with up to `sessions` concurrent sessions.
/// Results come back in input order.
pub fn answer_many(
    orch: &Orchestrator,
    mode: Mode,
    questions: &[(String, String)],
    sessions: usize,
) -> Vec<SessionOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<SessionOutcome>>> = questions.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|sc| {
        for _ in 0..sessions.max(1).min(questions.len().max(1)) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((id, q)) = questions.get(i) else { break };
                let out = orch.answer_with(mode, id, q);
                *slots[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every question ran"))
        .collect()
}
