//! Block-level prefix cache simulator.
//!
//! Prompts are split into whitespace tokens and grouped into fixed-size
//! blocks whose ids chain the parent id, so equal prefixes map to equal
//! block chains. Only cost is modelled; no attention state is stored.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Fnv64;

pub const DEFAULT_BLOCK_SIZE: usize = 16;

/// Whitespace-delimited token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn tokenize(text: &str) -> Self {
        TokenSeq {
            tokens: text.split_whitespace().map(str::to_string).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn detokenize(&self) -> String {
        self.tokens.join(" ")
    }
}

impl From<Vec<String>> for TokenSeq {
    fn from(tokens: Vec<String>) -> Self {
        TokenSeq { tokens }
    }
}

pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq::tokenize(text)
}

/// Token count under the shared tokenizer, without allocating.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Eviction class. `I` is never evicted under the priority policy; `IV` goes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    I,
    II,
    III,
    IV,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::I, Tier::II, Tier::III, Tier::IV];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The less protected of two tiers.
    pub fn weaker(self, other: Tier) -> Tier {
        self.max(other)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::I => "I",
            Tier::II => "II",
            Tier::III => "III",
            Tier::IV => "IV",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("cache exhausted: need {needed} evictable blocks, {available} available")]
    CacheExhausted { needed: usize, available: usize },
    #[error("tier map does not cover the prompt: {0}")]
    BadTierMap(String),
}

/// Tier assignment for each token of a prompt, as disjoint ordered ranges.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TierMap {
    ranges: Vec<(Range<usize>, Tier)>,
}

impl TierMap {
    pub fn uniform(len: usize, tier: Tier) -> Self {
        let mut m = TierMap::default();
        m.push(len, tier);
        m
    }

    /// Builds a map from consecutive segment lengths.
    pub fn from_lengths(segments: &[(usize, Tier)]) -> Self {
        let mut m = TierMap::default();
        for &(len, tier) in segments {
            m.push(len, tier);
        }
        m
    }

    fn push(&mut self, len: usize, tier: Tier) {
        if len == 0 {
            return;
        }
        let start = self.len();
        match self.ranges.last_mut() {
            Some((r, t)) if *t == tier => r.end += len,
            _ => self.ranges.push((start..start + len, tier)),
        }
    }

    /// Concatenates text segments and assigns each token the tier of the
    /// segment holding its first character.
    pub fn for_segments(segments: &[(&str, Tier)]) -> (String, TierMap) {
        let mut text = String::new();
        let mut bounds = Vec::with_capacity(segments.len());
        for (s, tier) in segments {
            text.push_str(s);
            bounds.push((text.len(), *tier));
        }
        let mut map = TierMap::default();
        let mut seg = 0;
        let mut in_token = false;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                in_token = false;
                continue;
            }
            if !in_token {
                while bounds[seg].0 <= i {
                    seg += 1;
                }
                map.push(1, bounds[seg].1);
                in_token = true;
            }
        }
        (text, map)
    }

    pub fn len(&self) -> usize {
        self.ranges.last().map_or(0, |(r, _)| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ranges(&self) -> &[(Range<usize>, Tier)] {
        &self.ranges
    }

    /// Least protected tier among tokens in `span`.
    pub fn weakest_in(&self, span: Range<usize>) -> Option<Tier> {
        self.ranges
            .iter()
            .filter(|(r, _)| r.start < span.end && span.start < r.end)
            .map(|(_, t)| *t)
            .max()
    }

    pub fn tier_at(&self, i: usize) -> Option<Tier> {
        self.weakest_in(i..i + 1)
    }

    fn validate(&self, len: usize) -> Result<(), CacheError> {
        let mut expect = 0;
        for (r, _) in &self.ranges {
            if r.start != expect || r.end <= r.start {
                return Err(CacheError::BadTierMap(format!("gap or overlap at token {expect}")));
            }
            expect = r.end;
        }
        if expect != len {
            return Err(CacheError::BadTierMap(format!("covers {expect} of {len} tokens")));
        }
        Ok(())
    }
}

pub type BlockId = u64;

pub fn block_id(parent: Option<BlockId>, tokens: &[String]) -> BlockId {
    let mut h = Fnv64::default();
    match parent {
        Some(p) => {
            h.write(&[1]);
            h.write_u64(p);
        }
        None => {
            h.write(&[0]);
        }
    }
    for t in tokens {
        h.write(t.as_bytes());
        h.write(&[0xff]);
    }
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheBlock {
    pub id: BlockId,
    pub parent: Option<BlockId>,
    pub tokens: Vec<String>,
    pub tier: Tier,
    pub session: Option<String>,
    pub last_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvictionPolicy {
    #[default]
    Priority,
    /// Single tier-blind queue; tier I blocks are evictable too.
    Lru,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrefillReport {
    pub cached_tokens: usize,
    /// Tokens that had to be processed, including the uncached partial tail.
    pub computed_tokens: usize,
    pub tail_tokens: usize,
    pub evicted: Vec<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheMetrics {
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    pub evictions_by_tier: HashMap<String, u64>,
    pub resident_blocks: usize,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    block_size: usize,
    capacity: usize,
    policy: EvictionPolicy,
    resident: HashMap<BlockId, CacheBlock>,
    // (rank, last_used, id); absent for blocks the policy never evicts.
    queue: BTreeSet<(u8, u64, BlockId)>,
    clock: u64,
    hits: u64,
    misses: u64,
    evictions: [u64; 4],
    peak_resident: usize,
}

impl CacheState {
    pub fn new(capacity_blocks: usize, block_size: usize, policy: EvictionPolicy) -> Self {
        assert!(block_size > 0, "block size must be positive");
        CacheState {
            block_size,
            capacity: capacity_blocks,
            policy,
            resident: HashMap::new(),
            queue: BTreeSet::new(),
            clock: 0,
            hits: 0,
            misses: 0,
            evictions: [0; 4],
            peak_resident: 0,
        }
    }

    pub fn unbounded(block_size: usize) -> Self {
        CacheState::new(usize::MAX, block_size, EvictionPolicy::Priority)
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> EvictionPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn peak_resident(&self) -> usize {
        self.peak_resident
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn get(&self, id: BlockId) -> Option<&CacheBlock> {
        self.resident.get(&id)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &CacheBlock> {
        self.resident.values()
    }

    fn rank(&self, tier: Tier) -> Option<u8> {
        match self.policy {
            EvictionPolicy::Lru => Some(0),
            EvictionPolicy::Priority => match tier {
                Tier::I => None,
                Tier::II => Some(2),
                Tier::III => Some(1),
                Tier::IV => Some(0),
            },
        }
    }

    fn unqueue(&mut self, b: &CacheBlock) {
        if let Some(r) = self.rank(b.tier) {
            self.queue.remove(&(r, b.last_used, b.id));
        }
    }

    fn enqueue(&mut self, b: &CacheBlock) {
        if let Some(r) = self.rank(b.tier) {
            self.queue.insert((r, b.last_used, b.id));
        }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Adds a block directly, evicting if full. Its `last_used` is kept as
    /// given and the logical clock advances past it.
    pub fn insert_block(&mut self, block: CacheBlock) -> Result<Vec<BlockId>, CacheError> {
        let mut evicted = Vec::new();
        if let Some(old) = self.resident.remove(&block.id) {
            self.unqueue(&old);
        } else if self.resident.len() >= self.capacity {
            evicted = self.evict(self.resident.len() + 1 - self.capacity)?;
        }
        self.clock = self.clock.max(block.last_used);
        self.enqueue(&block);
        self.resident.insert(block.id, block);
        self.peak_resident = self.peak_resident.max(self.resident.len());
        Ok(evicted)
    }

    /// Removes `n` blocks: lowest tier first, least recently used within a
    /// tier. Nothing is removed when fewer than `n` blocks are evictable.
    pub fn evict(&mut self, n: usize) -> Result<Vec<BlockId>, CacheError> {
        self.evict_except(n, &BTreeSet::new())
    }

    fn evict_except(&mut self, n: usize, pinned: &BTreeSet<BlockId>) -> Result<Vec<BlockId>, CacheError> {
        let victims: Vec<(u8, u64, BlockId)> = self
            .queue
            .iter()
            .filter(|(_, _, id)| !pinned.contains(id))
            .take(n)
            .copied()
            .collect();
        if victims.len() < n {
            return Err(CacheError::CacheExhausted {
                needed: n,
                available: victims.len(),
            });
        }
        let mut out = Vec::with_capacity(n);
        for key in victims {
            self.queue.remove(&key);
            let b = self.resident.remove(&key.2).expect("queued block is resident");
            self.evictions[b.tier.index()] += 1;
            out.push(b.id);
        }
        Ok(out)
    }

    /// Looks up the prompt's block chain, computes and caches missing full
    /// blocks, and refreshes every block it touches.
    pub fn prefill(
        &mut self,
        prompt: &TokenSeq,
        tiers: &TierMap,
        session: Option<&str>,
    ) -> Result<PrefillReport, CacheError> {
        tiers.validate(prompt.len())?;
        let b = self.block_size;
        let full = prompt.len() / b;
        let tail = prompt.len() % b;

        let mut chain = Vec::with_capacity(full);
        let mut parent = None;
        for i in 0..full {
            let toks = &prompt.tokens()[i * b..(i + 1) * b];
            let id = block_id(parent, toks);
            chain.push((id, parent));
            parent = Some(id);
        }
        let cached_blocks = chain
            .iter()
            .take_while(|(id, _)| self.resident.contains_key(id))
            .count();

        let in_chain: BTreeSet<BlockId> = chain.iter().map(|(id, _)| *id).collect();
        let fresh = in_chain.iter().filter(|id| !self.resident.contains_key(id)).count();
        let needed = (self.resident.len() + fresh).saturating_sub(self.capacity);
        if needed > 0 {
            let available = self
                .queue
                .iter()
                .filter(|(_, _, id)| !in_chain.contains(id))
                .take(needed)
                .count();
            if available < needed {
                return Err(CacheError::CacheExhausted { needed, available });
            }
        }

        let mut pinned = BTreeSet::new();
        let mut evicted = Vec::new();
        for (i, &(id, parent)) in chain.iter().enumerate() {
            let tier = tiers.weakest_in(i * b..(i + 1) * b).expect("validated map");
            let now = self.tick();
            if let Some(mut blk) = self.resident.remove(&id) {
                self.unqueue(&blk);
                blk.last_used = now;
                if tier < blk.tier || (tier == blk.tier && tier == Tier::II) {
                    blk.tier = tier;
                    blk.session = session.map(str::to_string);
                }
                self.enqueue(&blk);
                self.resident.insert(id, blk);
            } else {
                if self.resident.len() >= self.capacity {
                    let need = self.resident.len() + 1 - self.capacity;
                    evicted.extend(self.evict_except(need, &pinned)?);
                }
                let blk = CacheBlock {
                    id,
                    parent,
                    tokens: prompt.tokens()[i * b..(i + 1) * b].to_vec(),
                    tier,
                    session: session.map(str::to_string),
                    last_used: now,
                };
                self.enqueue(&blk);
                self.resident.insert(id, blk);
                self.peak_resident = self.peak_resident.max(self.resident.len());
            }
            pinned.insert(id);
        }
        self.hits += cached_blocks as u64;
        self.misses += (full - cached_blocks) as u64;
        Ok(PrefillReport {
            cached_tokens: cached_blocks * b,
            computed_tokens: (full - cached_blocks) * b + tail,
            tail_tokens: tail,
            evicted,
        })
    }

    /// Retags every resident block of `session` at `from` to `to`.
    pub fn set_tier(&mut self, session: &str, from: Tier, to: Tier) -> usize {
        let ids: Vec<BlockId> = self
            .resident
            .values()
            .filter(|b| b.tier == from && b.session.as_deref() == Some(session))
            .map(|b| b.id)
            .collect();
        for id in &ids {
            let mut blk = self.resident.remove(id).expect("collected from resident");
            self.unqueue(&blk);
            blk.tier = to;
            self.enqueue(&blk);
            self.resident.insert(*id, blk);
        }
        ids.len()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }

    pub fn evictions(&self, tier: Tier) -> u64 {
        self.evictions[tier.index()]
    }

    pub fn metrics(&self) -> CacheMetrics {
        CacheMetrics {
            hits: self.hits,
            misses: self.misses,
            hit_rate: self.hit_rate(),
            evictions_by_tier: Tier::ALL
                .iter()
                .map(|t| (t.to_string(), self.evictions[t.index()]))
                .collect(),
            resident_blocks: self.resident.len(),
        }
    }

    /// Drops all blocks and counters.
    pub fn reset(&mut self) {
        *self = CacheState::new(self.capacity, self.block_size, self.policy);
    }
}

/// One prefill request in a cache trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    #[serde(default)]
    pub session: Option<String>,
    #[serde(flatten)]
    pub kind: TraceEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TraceEventKind {
    /// Prompt given as segments, each with its tier.
    Prefill { segments: Vec<(String, Tier)> },
    SetTier { from: Tier, to: Tier },
}

/// Replays a trace and returns the final state.
pub fn replay(events: &[TraceEvent], mut state: CacheState) -> Result<CacheState, CacheError> {
    for e in events {
        match &e.kind {
            TraceEventKind::Prefill { segments } => {
                let segs: Vec<(&str, Tier)> = segments.iter().map(|(s, t)| (s.as_str(), *t)).collect();
                let (text, map) = TierMap::for_segments(&segs);
                state.prefill(&tokenize(&text), &map, e.session.as_deref())?;
            }
            TraceEventKind::SetTier { from, to } => {
                if let Some(s) = &e.session {
                    state.set_tier(s, *from, *to);
                }
            }
        }
    }
    Ok(state)
}
