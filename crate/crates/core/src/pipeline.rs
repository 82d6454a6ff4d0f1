//! Action-agent execution with retrieval overlapped against decoding.
//!
//! The reply is streamed line by line. The first line inside the code fence
//! that calls `RetrieveNode` with a literal argument starts the retrieval on
//! a separate thread while decoding continues; the resolved id then replaces
//! the call in the snippet.

use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{parse_action, AgentError};
use crate::graph::NodeId;
use crate::hash::Fnv64;
use crate::kvcache::count_tokens;
use crate::llm::{CompletionRequest, CompletionResult, Provider, ProviderError};
use crate::num::Quantity;
use crate::retriever::{GraphApi, RetrievalError, Retrieved};
use crate::snippet::{detect_retrieve_call, substitute_retrieve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    #[default]
    Simulated,
    WallClock,
}

/// Latency charged for one index search on a cache miss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalLatency<T> {
    Fixed(T),
    /// Uniform in `[lo, hi]`, drawn from a hash of the seed and query so
    /// the draw does not depend on call order.
    Uniform { lo: T, hi: T, seed: u64 },
}

impl<T: Quantity> RetrievalLatency<T> {
    pub fn sample(&self, query: &str) -> T {
        match *self {
            RetrievalLatency::Fixed(v) => v,
            RetrievalLatency::Uniform { lo, hi, seed } => {
                let mut h = Fnv64::default();
                h.write_u64(seed).write(query.as_bytes());
                let u = (h.finish() >> 11) as f64 / (1u64 << 53) as f64;
                let lo_f = lo.to_f64().expect("latency is finite");
                let hi_f = hi.to_f64().expect("latency is finite");
                T::from_f64(lo_f + u * (hi_f - lo_f)).expect("latency in range")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingModel<T> {
    pub mode: TimingMode,
    pub retrieval_latency: RetrievalLatency<T>,
    pub c_prefill: T,
    pub c_decode: T,
}

impl<T: Quantity> TimingModel<T> {
    pub fn simulated(retrieval: T) -> Self {
        TimingModel {
            mode: TimingMode::Simulated,
            retrieval_latency: RetrievalLatency::Fixed(retrieval),
            c_prefill: T::one(),
            c_decode: T::from_count(4),
        }
    }

    pub fn prefill_cost(&self, computed_tokens: usize) -> T {
        self.c_prefill * T::from_count(computed_tokens)
    }

    pub fn decode_cost(&self, tokens: usize) -> T {
        self.c_decode * T::from_count(tokens)
    }
}

/// Latency breakdown of one action call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineTrace<T> {
    pub p: T,
    pub d1: T,
    pub r: T,
    pub d2: T,
    pub overlapped: bool,
    pub total: T,
}

impl<T: Quantity> PipelineTrace<T> {
    pub fn pipelined(p: T, d1: T, r: T, d2: T) -> Self {
        PipelineTrace {
            p,
            d1,
            r,
            d2,
            overlapped: true,
            total: p + d1 + r.max_of(d2),
        }
    }

    pub fn serial(p: T, d1: T, r: T, d2: T) -> Self {
        PipelineTrace {
            p,
            d1,
            r,
            d2,
            overlapped: false,
            total: p + d1 + r + d2,
        }
    }

    pub fn new(overlap: bool, p: T, d1: T, r: T, d2: T) -> Self {
        if overlap {
            Self::pipelined(p, d1, r, d2)
        } else {
            Self::serial(p, d1, r, d2)
        }
    }
}

/// The retrieval started from the decoded stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EarlyRetrieval {
    pub query: String,
    pub result: Result<NodeId, String>,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionFailure {
    NoSnippet(AgentError),
    Retrieval(RetrievalError),
}

#[derive(Debug, Clone)]
pub struct ActionOutcome<T> {
    pub completion: CompletionResult,
    /// Snippet with the early retrieval substituted.
    pub snippet: Result<String, ActionFailure>,
    pub early: Option<EarlyRetrieval>,
    /// Output tokens up to and including the line with the early call.
    pub d1_tokens: usize,
    pub trace: PipelineTrace<T>,
}

/// Finds the early retrieval line in a reply: the first line inside the
/// first code fence with a literal `RetrieveNode` call.
fn scan_lines(text: &str) -> Option<(String, usize)> {
    let mut in_fence = false;
    let mut consumed = String::new();
    for line in text.split_inclusive('\n') {
        consumed.push_str(line);
        if line.trim_start().starts_with("```") {
            if in_fence {
                return None;
            }
            in_fence = true;
            continue;
        }
        // Only complete lines are inspected while streaming.
        if in_fence && line.ends_with('\n') {
            if let Some(hit) = detect_retrieve_call(line) {
                return Some((hit.query, count_tokens(&consumed)));
            }
        }
    }
    None
}

fn finish<T: Quantity>(
    completion: CompletionResult,
    early: Option<(String, Option<Result<Retrieved, RetrievalError>>, usize)>,
    timing: (T, T, T, T),
    overlap: bool,
) -> ActionOutcome<T> {
    let (p, d1, r, d2) = timing;
    let mut early_out = None;
    let mut d1_tokens = completion.tokens_out;
    let snippet = match parse_action(&completion.text) {
        Err(e) => Err(ActionFailure::NoSnippet(e)),
        Ok(code) => match &early {
            None => Ok(code),
            Some((query, result, d1t)) => {
                d1_tokens = *d1t;
                let result = result.clone().expect("retrieval joined");
                early_out = Some(EarlyRetrieval {
                    query: query.clone(),
                    result: result.as_ref().map(|r| r.id.clone()).map_err(ToString::to_string),
                    cache_hit: result.as_ref().is_ok_and(|r| r.cache_hit),
                });
                match result {
                    Ok(hit) => Ok(substitute_retrieve(&code, query, &hit.id)),
                    Err(e) => Err(ActionFailure::Retrieval(e)),
                }
            }
        },
    };
    ActionOutcome {
        completion,
        snippet,
        early: early_out,
        d1_tokens,
        trace: PipelineTrace::new(overlap, p, d1, r, d2),
    }
}

/// Runs one action call. `computed_tokens` is the prefill work left after
/// prefix reuse. With `overlap` false the retrieval starts after decoding.
pub fn run_action<T: Quantity>(
    provider: &dyn Provider,
    api: &dyn GraphApi,
    req: &CompletionRequest<'_>,
    computed_tokens: usize,
    tm: &TimingModel<T>,
    overlap: bool,
) -> Result<ActionOutcome<T>, ProviderError> {
    let start = Instant::now();
    let mut retrieval_wall_us = 0u64;
    let mut detect_wall_us = 0u64;

    let (completion, early) = thread::scope(|s| {
        let mut streamed = String::new();
        let mut detected: Option<(String, usize)> = None;
        let mut handle: Option<thread::ScopedJoinHandle<'_, (Result<Retrieved, RetrievalError>, u64)>> = None;
        let mut cached: Option<NodeId> = None;

        let mut sink = |piece: &str| {
            streamed.push_str(piece);
            if !overlap || detected.is_some() {
                return;
            }
            if let Some((query, d1t)) = scan_lines(&streamed) {
                detect_wall_us = start.elapsed().as_micros() as u64;
                match api.cached_node(&query) {
                    Some(id) => cached = Some(id),
                    None => {
                        let q = query.clone();
                        handle = Some(s.spawn(move || {
                            let t0 = Instant::now();
                            let r = api.retrieve_node(&q);
                            (r, t0.elapsed().as_micros() as u64)
                        }));
                    }
                }
                detected = Some((query, d1t));
            }
        };
        let result = provider.complete(req, &mut sink);
        // Always join so a failed decode never leaves the search running.
        let joined = handle.map(|h| h.join().expect("retrieval thread panicked"));
        let completion = result?;

        let early = if overlap {
            detected.map(|(query, d1t)| {
                let r = match (cached, joined) {
                    (Some(id), _) => Ok(Retrieved { id, cache_hit: true }),
                    (None, Some((r, us))) => {
                        retrieval_wall_us = us;
                        r
                    }
                    (None, None) => unreachable!("a detected miss always spawns a search"),
                };
                (query, Some(r), d1t)
            })
        } else {
            scan_lines(&completion.text).map(|(query, d1t)| {
                let t0 = Instant::now();
                let r = api.retrieve_node(&query);
                retrieval_wall_us = t0.elapsed().as_micros() as u64;
                (query, Some(r), d1t)
            })
        };
        Ok::<_, ProviderError>((completion, early))
    })?;

    let d1_tokens = early.as_ref().map_or(completion.tokens_out, |e| e.2);
    let hit = early
        .as_ref()
        .is_some_and(|(_, r, _)| matches!(r, Some(Ok(Retrieved { cache_hit: true, .. }))));
    let timing = match tm.mode {
        TimingMode::Simulated => {
            let r = match &early {
                Some((q, _, _)) if !hit => tm.retrieval_latency.sample(q),
                _ => T::zero(),
            };
            (
                tm.prefill_cost(computed_tokens),
                tm.decode_cost(d1_tokens),
                r,
                tm.decode_cost(completion.tokens_out - d1_tokens),
            )
        }
        TimingMode::WallClock => {
            let decode_us = completion.increments.last().map_or(0, |i| i.elapsed_us);
            let d1_us = if early.is_some() { detect_wall_us.min(decode_us) } else { decode_us };
            let to_t = |us: u64| T::from_u64(us).expect("microseconds fit");
            (T::zero(), to_t(d1_us), to_t(retrieval_wall_us), to_t(decode_us - d1_us))
        }
    };
    Ok(finish(completion, early, timing, overlap))
}
