//! Aggregated bench metrics, their CSV/JSON forms and report comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::replay::{throughput, ReplayResult};
use super::workload::{normalize_answer, Workload};
use crate::agents::Chunking;
use crate::kvcache::EvictionPolicy;
use crate::orchestrator::{Actor, ErrorKind, Mode, SessionOutcome};

pub const CSV_SCHEMA: &str = "schema=1";

const ACTORS: [(Actor, &str); 5] = [
    (Actor::Classification, "classification"),
    (Actor::Reasoning, "reasoning"),
    (Actor::Action, "action"),
    (Actor::BaselineThought, "baseline_thought"),
    (Actor::BaselineAction, "baseline_action"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub policy: EvictionPolicy,
    pub chunking: Chunking,
    pub pipeline: bool,
    pub concurrency: usize,
    pub workload_ids: Vec<String>,
    pub questions: usize,
    pub answered: usize,
    pub correct: usize,
    pub mean_rounds: f64,
    pub mean_latency: f64,
    pub p50_latency: f64,
    pub p90_latency: f64,
    pub p99_latency: f64,
    pub makespan: f64,
    pub throughput: f64,
    pub total_tokens: usize,
    pub tokens_by_agent: BTreeMap<String, usize>,
    pub token_share: BTreeMap<String, f64>,
    /// `0` when the cache is unbounded.
    pub cache_capacity_blocks: usize,
    pub cache_hit_rate: f64,
    pub cached_tokens: u64,
    pub computed_tokens: u64,
    pub evictions_by_tier: BTreeMap<String, u64>,
    pub retrieval_hit_rate: f64,
    pub action_latency_pipelined: f64,
    pub action_latency_serial: f64,
    pub errors: BTreeMap<String, usize>,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub struct ReportMeta {
    pub mode: Mode,
    pub policy: EvictionPolicy,
    pub chunking: Chunking,
    pub pipeline: bool,
    pub concurrency: usize,
    pub warmup: f64,
}

impl BenchReport {
    pub fn build(workload: &Workload, outcomes: &[SessionOutcome], replay: &ReplayResult, meta: &ReportMeta) -> Self {
        let n = outcomes.len();
        let mut errors: BTreeMap<String, usize> = ErrorKind::NAMES.iter().map(|k| (k.to_string(), 0)).collect();
        let mut correct = 0;
        for (o, q) in outcomes.iter().zip(&workload.questions) {
            match &o.answer {
                Ok(a) => {
                    if q.expected_answer.as_deref().map(normalize_answer) == Some(normalize_answer(a)) {
                        correct += 1;
                    }
                }
                Err(e) => *errors.entry(e.name().to_string()).or_default() += 1,
            }
        }
        let total_tokens: usize = outcomes.iter().map(|o| o.trace.tokens()).sum();
        let mut tokens_by_agent = BTreeMap::new();
        for (actor, name) in ACTORS {
            tokens_by_agent.insert(name.to_string(), outcomes.iter().map(|o| o.trace.tokens_of(actor)).sum());
        }
        let token_share = tokens_by_agent
            .iter()
            .map(|(k, v)| (k.clone(), if total_tokens == 0 { 0.0 } else { *v as f64 / total_tokens as f64 }))
            .collect();
        let mut lat = replay.latency.clone();
        lat.sort_by(f64::total_cmp);
        let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        let lookups = replay.retrieval_hits + replay.retrieval_misses;
        let (piped, serial) = replay.action_latency();
        BenchReport {
            mode: meta.mode,
            policy: meta.policy,
            chunking: meta.chunking,
            pipeline: meta.pipeline,
            concurrency: meta.concurrency,
            workload_ids: workload.ids(),
            questions: n,
            answered: outcomes.iter().filter(|o| o.answer.is_ok()).count(),
            correct,
            mean_rounds: mean(&outcomes.iter().map(|o| o.rounds as f64).collect::<Vec<_>>()),
            mean_latency: mean(&lat),
            p50_latency: percentile(&lat, 50.0),
            p90_latency: percentile(&lat, 90.0),
            p99_latency: percentile(&lat, 99.0),
            makespan: replay.makespan,
            throughput: throughput(&replay.completion, meta.warmup),
            total_tokens,
            tokens_by_agent,
            token_share,
            cache_capacity_blocks: replay.capacity_blocks.unwrap_or(0),
            cache_hit_rate: replay.hit_rate(),
            cached_tokens: replay.cached_tokens,
            computed_tokens: replay.computed_tokens,
            evictions_by_tier: replay.evictions_by_tier.clone(),
            retrieval_hit_rate: if lookups == 0 {
                0.0
            } else {
                replay.retrieval_hits as f64 / lookups as f64
            },
            action_latency_pipelined: piped,
            action_latency_serial: serial,
            errors,
        }
    }

    /// Numeric metrics in their frozen column order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut m: Vec<(String, f64)> = vec![
            ("questions".into(), self.questions as f64),
            ("answered".into(), self.answered as f64),
            ("correct".into(), self.correct as f64),
            ("mean_rounds".into(), self.mean_rounds),
            ("mean_latency".into(), self.mean_latency),
            ("p50_latency".into(), self.p50_latency),
            ("p90_latency".into(), self.p90_latency),
            ("p99_latency".into(), self.p99_latency),
            ("makespan".into(), self.makespan),
            ("throughput".into(), self.throughput),
            ("total_tokens".into(), self.total_tokens as f64),
            ("cache_capacity_blocks".into(), self.cache_capacity_blocks as f64),
            ("cache_hit_rate".into(), self.cache_hit_rate),
            ("cached_tokens".into(), self.cached_tokens as f64),
            ("computed_tokens".into(), self.computed_tokens as f64),
            ("retrieval_hit_rate".into(), self.retrieval_hit_rate),
            ("action_latency_pipelined".into(), self.action_latency_pipelined),
            ("action_latency_serial".into(), self.action_latency_serial),
        ];
        for (_, name) in ACTORS {
            m.push((format!("tokens_{name}"), self.tokens_by_agent.get(name).copied().unwrap_or(0) as f64));
        }
        for tier in ["I", "II", "III", "IV"] {
            m.push((
                format!("evictions_{tier}"),
                self.evictions_by_tier.get(tier).copied().unwrap_or(0) as f64,
            ));
        }
        for kind in ErrorKind::NAMES {
            m.push((format!("errors_{kind}"), self.errors.get(kind).copied().unwrap_or(0) as f64));
        }
        m
    }

    fn labels(&self) -> [(&'static str, String); 5] {
        let json = |v: &dyn erased::Ser| v.to_label();
        [
            ("mode", json(&self.mode)),
            ("policy", json(&self.policy)),
            ("chunking", json(&self.chunking)),
            ("pipeline", if self.pipeline { "on" } else { "off" }.to_string()),
            ("concurrency", self.concurrency.to_string()),
        ]
    }
}

mod erased {
    use serde::Serialize;

    pub trait Ser {
        fn to_label(&self) -> String;
    }

    impl<T: Serialize> Ser for T {
        fn to_label(&self) -> String {
            match serde_json::to_value(self).expect("labels serialize") {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            }
        }
    }
}

/// CSV with a version row, a header row and one row per report.
pub fn to_csv(reports: &[BenchReport]) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record([CSV_SCHEMA]).expect("in-memory write");
    if let Some(first) = reports.first() {
        let header: Vec<String> = first
            .labels()
            .iter()
            .map(|(k, _)| k.to_string())
            .chain(first.metrics().into_iter().map(|(k, _)| k))
            .collect();
        w.write_record(&header).expect("in-memory write");
    }
    for r in reports {
        let row: Vec<String> = r
            .labels()
            .into_iter()
            .map(|(_, v)| v)
            .chain(r.metrics().into_iter().map(|(_, v)| v.to_string()))
            .collect();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("reports cover different workloads")]
    WorkloadMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `delta / a`, or `0` when both are zero.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDiff {
    pub rows: Vec<DiffRow>,
    /// Throughput of `b` over throughput of `a`.
    pub throughput_ratio: f64,
}

pub fn report_diff(a: &BenchReport, b: &BenchReport) -> Result<ReportDiff, DiffError> {
    if a.workload_ids != b.workload_ids {
        return Err(DiffError::WorkloadMismatch);
    }
    let rows = a
        .metrics()
        .into_iter()
        .zip(b.metrics())
        .map(|((metric, x), (_, y))| {
            let delta = y - x;
            let relative = if delta == 0.0 {
                0.0
            } else if x == 0.0 {
                f64::INFINITY.copysign(delta)
            } else {
                delta / x
            };
            DiffRow {
                metric,
                a: x,
                b: y,
                delta,
                relative,
            }
        })
        .collect();
    let throughput_ratio = if a.throughput == 0.0 {
        0.0
    } else {
        b.throughput / a.throughput
    };
    Ok(ReportDiff { rows, throughput_ratio })
}

impl ReportDiff {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| metric | a | b | delta | relative |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {:.4} |\n",
                r.metric, r.a, r.b, r.delta, r.relative
            ));
        }
        s.push_str(&format!("| throughput_ratio | | | | {:.4} |\n", self.throughput_ratio));
        s
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "a", "b", "delta", "relative"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.metric.clone(),
                r.a.to_string(),
                r.b.to_string(),
                r.delta.to_string(),
                r.relative.to_string(),
            ])
            .expect("in-memory write");
        }
        w.write_record(["throughput_ratio", "", "", "", &self.throughput_ratio.to_string()])
            .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}
