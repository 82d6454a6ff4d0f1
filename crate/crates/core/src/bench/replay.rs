//! Discrete-event replay of recorded sessions on a simulated server.
//!
//! Sessions are dealt to `workers` slots in workload order. Every step is
//! applied to the shared KV cache and retrieval cache in global time order
//! (ties by worker index), so a replay is a pure function of its inputs.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::Prompt;
use crate::kvcache::{CacheError, CacheState, EvictionPolicy, Tier, TokenSeq};
use crate::orchestrator::{Actor, SessionOutcome};
use crate::pipeline::{PipelineTrace, TimingModel};
use crate::retriever::RetrievalCache;

/// One replayable step of a session.
#[derive(Debug, Clone)]
pub enum Op {
    Call {
        prompt: Arc<Prompt>,
        tokens: usize,
        tokens_out: usize,
        /// Early retrieval query and the output tokens decoded before it.
        early: Option<(Option<String>, usize)>,
    },
    Lookups(Vec<String>),
}

/// Extracts the replayable steps of a recorded session.
pub fn session_ops(outcome: &SessionOutcome) -> Vec<Op> {
    let mut ops = Vec::new();
    for r in &outcome.trace.records {
        match (r.actor, &r.prompt) {
            (Actor::Retriever, _) => {
                if !r.lookups.is_empty() {
                    ops.push(Op::Lookups(r.lookups.iter().map(|l| l.query.clone()).collect()));
                }
            }
            (actor, Some(prompt)) => ops.push(Op::Call {
                tokens: TokenSeq::tokenize(&prompt.text).len(),
                prompt: prompt.clone(),
                tokens_out: r.tokens_out,
                early: (actor == Actor::Action)
                    .then(|| (r.early.as_ref().map(|e| e.query.clone()), r.d1_tokens.unwrap_or(r.tokens_out))),
            }),
            (_, None) => {}
        }
    }
    ops
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Unbounded,
    Blocks(usize),
    /// Share of the peak resident set of an unbounded replay.
    FractionOfPeak(f64),
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub workers: usize,
    pub block_size: usize,
    pub capacity: Capacity,
    pub policy: EvictionPolicy,
    pub pipeline: bool,
    /// When false every prompt is computed in full and the cache is untouched.
    pub prefix_cache: bool,
    pub retrieval_cache: usize,
    pub timing: TimingModel<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayResult {
    pub capacity_blocks: Option<usize>,
    /// Per session, in workload order.
    pub latency: Vec<f64>,
    pub completion: Vec<f64>,
    pub makespan: f64,
    pub block_hits: u64,
    pub block_misses: u64,
    pub cached_tokens: u64,
    pub computed_tokens: u64,
    pub evictions_by_tier: BTreeMap<String, u64>,
    pub peak_resident: usize,
    pub retrieval_hits: u64,
    pub retrieval_misses: u64,
    pub action_traces: Vec<PipelineTrace<f64>>,
}

impl ReplayResult {
    pub fn hit_rate(&self) -> f64 {
        let total = self.block_hits + self.block_misses;
        if total == 0 {
            0.0
        } else {
            self.block_hits as f64 / total as f64
        }
    }

    /// Mean action-call latency with and without overlap, over the same steps.
    pub fn action_latency(&self) -> (f64, f64) {
        if self.action_traces.is_empty() {
            return (0.0, 0.0);
        }
        let n = self.action_traces.len() as f64;
        let piped: f64 = self.action_traces.iter().map(|t| t.p + t.d1 + t.r.max(t.d2)).sum();
        let serial: f64 = self.action_traces.iter().map(|t| t.p + t.d1 + t.r + t.d2).sum();
        (piped / n, serial / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Sim<'a> {
    cfg: &'a ReplayConfig,
    cache: CacheState,
    retrieval: Option<RetrievalCache>,
    exhausted_blocks: u64,
    cached_tokens: u64,
    computed_tokens: u64,
    retrieval_hits: u64,
    retrieval_misses: u64,
    action_traces: Vec<PipelineTrace<f64>>,
}

impl Sim<'_> {
    fn lookup(&mut self, query: &str) -> f64 {
        if let Some(cache) = &mut self.retrieval {
            if cache.get(query).is_some() {
                self.retrieval_hits += 1;
                return 0.0;
            }
            cache.insert(query, String::new());
        }
        self.retrieval_misses += 1;
        self.cfg.timing.retrieval_latency.sample(query)
    }

    fn prefill(&mut self, prompt: &Prompt, tokens: usize, session: &str) -> usize {
        if !self.cfg.prefix_cache {
            return tokens;
        }
        let seq = TokenSeq::tokenize(&prompt.text);
        match self.cache.prefill(&seq, &prompt.tiers, Some(session)) {
            Ok(r) => {
                self.cached_tokens += r.cached_tokens as u64;
                r.computed_tokens
            }
            Err(CacheError::CacheExhausted { .. }) => {
                self.exhausted_blocks += (tokens / self.cache.block_size()) as u64;
                tokens
            }
            Err(e) => panic!("recorded prompt has an invalid tier map: {e}"),
        }
    }

    fn run(&mut self, op: &Op, session: &str) -> f64 {
        let tm = &self.cfg.timing;
        match op {
            Op::Lookups(queries) => queries.iter().map(|q| self.lookup(q)).sum(),
            Op::Call {
                prompt,
                tokens,
                tokens_out,
                early,
            } => {
                let computed = self.prefill(prompt, *tokens, session);
                self.computed_tokens += computed as u64;
                let p = tm.prefill_cost(computed);
                match early {
                    None => p + tm.decode_cost(*tokens_out),
                    Some((query, d1)) => {
                        let r = query.as_deref().map_or(0.0, |q| self.lookup(q));
                        let d1 = (*d1).min(*tokens_out);
                        let trace = PipelineTrace::new(
                            self.cfg.pipeline,
                            p,
                            tm.decode_cost(d1),
                            r,
                            tm.decode_cost(tokens_out - d1),
                        );
                        self.action_traces.push(trace);
                        trace.total
                    }
                }
            }
        }
    }
}

/// Replays `sessions` (ids and steps) under `cfg`.
pub fn replay_sessions(sessions: &[(String, Vec<Op>)], cfg: &ReplayConfig) -> ReplayResult {
    let capacity_blocks = match cfg.capacity {
        Capacity::Unbounded => None,
        Capacity::Blocks(n) => Some(n),
        Capacity::FractionOfPeak(f) => {
            let unbounded = ReplayConfig {
                capacity: Capacity::Unbounded,
                ..cfg.clone()
            };
            let peak = replay_sessions(sessions, &unbounded).peak_resident;
            Some(((peak as f64 * f).ceil() as usize).max(1))
        }
    };
    let cache = match capacity_blocks {
        None => CacheState::unbounded(cfg.block_size),
        Some(n) => CacheState::new(n, cfg.block_size, cfg.policy),
    };
    let mut sim = Sim {
        cfg,
        cache,
        retrieval: (cfg.retrieval_cache > 0).then(|| RetrievalCache::new(cfg.retrieval_cache)),
        exhausted_blocks: 0,
        cached_tokens: 0,
        computed_tokens: 0,
        retrieval_hits: 0,
        retrieval_misses: 0,
        action_traces: Vec::new(),
    };

    let n = sessions.len();
    let mut latency = vec![0.0; n];
    let mut completion = vec![0.0; n];
    let mut next_session = 0;
    // Per worker: (session, next op, start time).
    let workers = cfg.workers.max(1);
    let mut current: Vec<Option<(usize, usize, f64)>> = vec![None; workers];
    let mut heap: BinaryHeap<Reverse<(Time, usize)>> = (0..workers).map(|w| Reverse((Time(0.0), w))).collect();

    while let Some(Reverse((Time(t), w))) = heap.pop() {
        loop {
            if current[w].is_none() {
                if next_session == n {
                    break;
                }
                current[w] = Some((next_session, 0, t));
                next_session += 1;
            }
            let (s, i, start) = current[w].expect("slot filled above");
            let (id, ops) = &sessions[s];
            if i == ops.len() {
                latency[s] = t - start;
                completion[s] = t;
                sim.cache.set_tier(id, Tier::II, Tier::III);
                current[w] = None;
                continue;
            }
            let d = sim.run(&ops[i], id);
            current[w] = Some((s, i + 1, start));
            heap.push(Reverse((Time(t + d), w)));
            break;
        }
    }

    let metrics = sim.cache.metrics();
    let mut evictions_by_tier = BTreeMap::new();
    for (k, v) in metrics.evictions_by_tier {
        evictions_by_tier.insert(k, v);
    }
    ReplayResult {
        capacity_blocks,
        makespan: completion.iter().copied().fold(0.0, f64::max),
        latency,
        completion,
        block_hits: metrics.hits,
        block_misses: metrics.misses + sim.exhausted_blocks,
        cached_tokens: sim.cached_tokens,
        computed_tokens: sim.computed_tokens,
        evictions_by_tier,
        peak_resident: sim.cache.peak_resident(),
        retrieval_hits: sim.retrieval_hits,
        retrieval_misses: sim.retrieval_misses,
        action_traces: sim.action_traces,
    }
}

/// Questions per time unit over completions after the warm-up share.
pub fn throughput(completion: &[f64], warmup: f64) -> f64 {
    let mut t: Vec<f64> = completion.to_vec();
    t.sort_by(f64::total_cmp);
    let n = t.len();
    if n == 0 {
        return 0.0;
    }
    let skip = ((n as f64) * warmup).ceil() as usize;
    if skip == 0 || skip >= n || t[n - 1] <= t[skip - 1] {
        return if t[n - 1] > 0.0 { n as f64 / t[n - 1] } else { 0.0 };
    }
    (n - skip) as f64 / (t[n - 1] - t[skip - 1])
}
