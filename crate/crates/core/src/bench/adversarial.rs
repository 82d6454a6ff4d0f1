//! Seeded cache traces that separate tier-aware eviction from plain LRU.
//!
//! One wave of sessions shares a few long tier-I prefixes and grows a tier-II
//! notebook by one block per round. Between rounds a burst of one-off tier-IV
//! prompts larger than the cache flushes an LRU queue, while the priority
//! policy sheds only the tier-IV blocks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kvcache::{replay, CacheError, CacheState, EvictionPolicy, Tier, TraceEvent, TraceEventKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarialConfig {
    pub seed: u64,
    pub block_size: usize,
    pub templates: usize,
    pub prefix_blocks: usize,
    pub sessions: usize,
    pub rounds: usize,
    /// One-off blocks between consecutive rounds.
    pub flood_blocks: usize,
    /// Blocks per flood request.
    pub flood_request_blocks: usize,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            seed: 7,
            block_size: 16,
            templates: 4,
            prefix_blocks: 8,
            sessions: 32,
            rounds: 3,
            flood_blocks: 200,
            flood_request_blocks: 8,
        }
    }
}

struct Words(ChaCha8Rng);

impl Words {
    fn text(&mut self, tokens: usize) -> String {
        (0..tokens)
            .map(|_| format!("w{:016x}", self.0.gen::<u64>()))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn adversarial_trace(cfg: &AdversarialConfig) -> Vec<TraceEvent> {
    let b = cfg.block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut words = Words(ChaCha8Rng::seed_from_u64(rng.gen()));
    let prefixes: Vec<String> = (0..cfg.templates.max(1))
        .map(|_| words.text(cfg.prefix_blocks * b))
        .collect();
    let mut notebooks: Vec<Vec<String>> = vec![Vec::new(); cfg.sessions];
    let mut order: Vec<usize> = (0..cfg.sessions).collect();
    let mut events = Vec::new();

    for round in 0..cfg.rounds {
        if round > 0 {
            let mut left = cfg.flood_blocks;
            while left > 0 {
                let n = left.min(cfg.flood_request_blocks.max(1));
                left -= n;
                events.push(TraceEvent {
                    session: None,
                    kind: TraceEventKind::Prefill {
                        segments: vec![(words.text(n * b), Tier::IV)],
                    },
                });
            }
        }
        order.shuffle(&mut rng);
        for &s in &order {
            notebooks[s].push(words.text(b));
            let mut segments = vec![(prefixes[s % prefixes.len()].clone(), Tier::I)];
            segments.push((notebooks[s].join(" "), Tier::II));
            segments.push((words.text(b), Tier::IV));
            events.push(TraceEvent {
                session: Some(format!("s{s}")),
                kind: TraceEventKind::Prefill { segments },
            });
        }
    }
    for s in 0..cfg.sessions {
        events.push(TraceEvent {
            session: Some(format!("s{s}")),
            kind: TraceEventKind::SetTier {
                from: Tier::II,
                to: Tier::III,
            },
        });
    }
    events
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparison {
    pub peak_blocks: usize,
    pub capacity_blocks: usize,
    pub priority_hit_rate: f64,
    pub lru_hit_rate: f64,
}

impl PolicyComparison {
    /// Priority minus LRU, in percentage points.
    pub fn gap_points(&self) -> f64 {
        (self.priority_hit_rate - self.lru_hit_rate) * 100.0
    }
}

/// Replays `events` under both policies at `fraction` of the unbounded peak.
pub fn compare_policies(
    events: &[TraceEvent],
    block_size: usize,
    fraction: f64,
) -> Result<PolicyComparison, CacheError> {
    let peak = replay(events, CacheState::unbounded(block_size))?.peak_resident();
    let capacity = ((peak as f64 * fraction).ceil() as usize).max(1);
    let run = |policy| replay(events, CacheState::new(capacity, block_size, policy)).map(|s| s.hit_rate());
    Ok(PolicyComparison {
        peak_blocks: peak,
        capacity_blocks: capacity,
        priority_hit_rate: run(EvictionPolicy::Priority)?,
        lru_hit_rate: run(EvictionPolicy::Lru)?,
    })
}
