//! Brute-force models of the block cache: a longest-common-prefix law for
//! reuse and a sorted-list model of eviction order.
#![allow(dead_code)]

use glm_core::kvcache::{CacheBlock, CacheError, CacheState, EvictionPolicy, Tier, TierMap, TokenSeq};
use proptest::prelude::*;

// ---------------------------------------------------------------- reuse

#[derive(Debug, Clone)]
pub struct ReuseCase {
    pub block_size: usize,
    /// Each prompt with the tier of every run of tokens.
    pub prompts: Vec<(Vec<String>, Vec<(usize, Tier)>)>,
}

fn tier() -> impl Strategy<Value = Tier> {
    prop::sample::select(Tier::ALL.to_vec())
}

fn prompt(stem: Vec<String>) -> impl Strategy<Value = (Vec<String>, Vec<(usize, Tier)>)> {
    let keep = 0..=stem.len();
    (keep, prop::collection::vec("[a-d]", 0..40), prop::collection::vec((1usize..12, tier()), 1..5)).prop_map(
        move |(keep, tail, runs)| {
            let mut toks: Vec<String> = stem[..keep].to_vec();
            toks.extend(tail);
            let mut left = toks.len();
            let mut segs = Vec::new();
            for (len, t) in runs {
                let n = len.min(left);
                segs.push((n, t));
                left -= n;
            }
            if let Some(last) = segs.last_mut() {
                last.0 += left;
            }
            (toks, segs)
        },
    )
}

/// Prompts that branch from a common stem at random points, over a small
/// alphabet so that accidental longer matches also occur.
pub fn reuse_case() -> impl Strategy<Value = ReuseCase> {
    (1usize..=8, prop::collection::vec("[a-d]", 0..80))
        .prop_flat_map(|(b, stem)| (Just(b), prop::collection::vec(prompt(stem), 1..6)))
        .prop_map(|(block_size, prompts)| ReuseCase { block_size, prompts })
}

fn lcp(a: &[String], b: &[String]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// In an unbounded cache each prefill reuses exactly the block-aligned part of
/// its longest common prefix with any earlier prompt, and an immediate repeat
/// reuses every full block.
pub fn check_reuse(case: &ReuseCase) -> Result<(), String> {
    let b = case.block_size;
    let mut state = CacheState::unbounded(b);
    let mut seen: Vec<&[String]> = Vec::new();
    for (toks, segs) in &case.prompts {
        let seq = TokenSeq::from(toks.clone());
        let map = TierMap::from_lengths(segs);
        let best = seen.iter().map(|p| lcp(p, toks) / b * b).max().unwrap_or(0);
        let r = state.prefill(&seq, &map, Some("s")).map_err(|e| e.to_string())?;
        let len = toks.len();
        if r.cached_tokens != best {
            return Err(format!("cached {} expected {best} for {toks:?}", r.cached_tokens));
        }
        if r.cached_tokens + r.computed_tokens != len || r.tail_tokens != len % b {
            return Err(format!("token accounting broken: {r:?} for length {len}"));
        }
        let again = state.prefill(&seq, &map, Some("s")).map_err(|e| e.to_string())?;
        if again.cached_tokens != len / b * b || again.computed_tokens != len % b {
            return Err(format!("repeat of length {len} gave {again:?}"));
        }
        seen.push(toks);
    }
    Ok(())
}

// ---------------------------------------------------------------- eviction

/// Position in the eviction queue; `None` means never evicted.
fn rank(policy: EvictionPolicy, tier: Tier) -> Option<u8> {
    match (policy, tier) {
        (EvictionPolicy::Lru, _) => Some(0),
        (EvictionPolicy::Priority, Tier::I) => None,
        (EvictionPolicy::Priority, Tier::II) => Some(2),
        (EvictionPolicy::Priority, Tier::III) => Some(1),
        (EvictionPolicy::Priority, Tier::IV) => Some(0),
    }
}

fn permutations(n: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur: Vec<u64> = (1..=n as u64).collect();
    heap(n, &mut cur, &mut out);
    out
}

fn heap(k: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if k <= 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..k - 1 {
        heap(k - 1, cur, out);
        if k % 2 == 0 {
            cur.swap(i, k - 1);
        } else {
            cur.swap(0, k - 1);
        }
    }
    heap(k - 1, cur, out);
}

fn block(id: u64, tier: Tier, last_used: u64) -> CacheBlock {
    CacheBlock {
        id,
        parent: None,
        tokens: Vec::new(),
        tier,
        session: None,
        last_used,
    }
}

fn build(policy: EvictionPolicy, capacity: usize, tiers: &[Tier], times: &[u64]) -> CacheState {
    let mut s = CacheState::new(capacity, 1, policy);
    for (i, (&t, &u)) in tiers.iter().zip(times).enumerate() {
        // Ids run against time so the tie-break on id cannot mask the order.
        s.insert_block(block(100 - i as u64, t, u)).expect("room for every block");
    }
    s
}

fn ids(state: &CacheState) -> Vec<u64> {
    let mut v: Vec<u64> = state.blocks().map(|b| b.id).collect();
    v.sort_unstable();
    v
}

#[derive(Debug, Default)]
pub struct EvictionStats {
    pub states: usize,
    pub checks: usize,
}

/// Every state of up to `max_blocks` blocks, every tier assignment and every
/// recency order, under both policies. For each state the full eviction order,
/// a single eviction, an over-large request and an insert at capacity are
/// compared with the sorted-list model.
pub fn check_eviction_exhaustive(max_blocks: usize) -> Result<EvictionStats, String> {
    let mut stats = EvictionStats::default();
    for n in 0..=max_blocks {
        let perms = permutations(n);
        for code in 0..4usize.pow(n as u32) {
            let tiers: Vec<Tier> = (0..n).map(|i| Tier::ALL[code / 4usize.pow(i as u32) % 4]).collect();
            for times in &perms {
                for policy in [EvictionPolicy::Priority, EvictionPolicy::Lru] {
                    stats.states += 1;
                    stats.checks += check_state(policy, &tiers, times)?;
                }
            }
        }
    }
    Ok(stats)
}

fn check_state(policy: EvictionPolicy, tiers: &[Tier], times: &[u64]) -> Result<usize, String> {
    let n = tiers.len();
    let ctx = || format!("{policy:?} tiers {tiers:?} times {times:?}");
    let mut order: Vec<(u8, u64, u64)> = (0..n)
        .filter_map(|i| rank(policy, tiers[i]).map(|r| (r, times[i], 100 - i as u64)))
        .collect();
    order.sort_unstable();
    let expected: Vec<u64> = order.iter().map(|o| o.2).collect();
    let evictable = expected.len();
    let mut checks = 0;

    let base = build(policy, n.max(1), tiers, times);
    if evictable > 0 {
        let mut s = base.clone();
        let got = s.evict(evictable).map_err(|e| format!("{}: {e}", ctx()))?;
        if got != expected {
            return Err(format!("{}: evicted {got:?}, expected {expected:?}", ctx()));
        }
        let survivors: Vec<u64> = (0..n).filter(|&i| rank(policy, tiers[i]).is_none()).map(|i| 100 - i as u64).collect();
        let mut left = ids(&s);
        left.reverse();
        if left != survivors {
            return Err(format!("{}: survivors {left:?}, expected {survivors:?}", ctx()));
        }

        let mut s = base.clone();
        let one = s.evict(1).map_err(|e| format!("{}: {e}", ctx()))?;
        if one != expected[..1] {
            return Err(format!("{}: first victim {one:?}, expected {:?}", ctx(), expected[0]));
        }

        let mut s = base.clone();
        let fresh = s.insert_block(block(1, Tier::IV, n as u64 + 1)).map_err(|e| format!("{}: {e}", ctx()))?;
        if fresh != expected[..1] || s.len() > s.capacity() {
            return Err(format!("{}: insert at capacity evicted {fresh:?}", ctx()));
        }
        checks += 3;
    }

    let mut s = base.clone();
    let before = ids(&s);
    match s.evict(evictable + 1) {
        Err(CacheError::CacheExhausted { needed, available }) if needed == evictable + 1 && available == evictable => {}
        other => return Err(format!("{}: over-large eviction gave {other:?}", ctx())),
    }
    if ids(&s) != before {
        return Err(format!("{}: failed eviction removed blocks", ctx()));
    }
    if n > 0 && evictable == 0 {
        let mut full = base;
        if full.insert_block(block(1, Tier::IV, n as u64 + 1)).is_ok() || ids(&full) != before {
            return Err(format!("{}: insert into an all-tier-I cache must fail untouched", ctx()));
        }
        checks += 1;
    }
    Ok(checks + 1)
}

// ---------------------------------------------------------------- sequences

#[derive(Debug, Clone)]
pub enum Op {
    Prefill { prompt: Vec<String>, tiers: Vec<(usize, Tier)>, session: u8 },
    Downgrade { session: u8 },
    Evict(usize),
}

pub fn op() -> impl Strategy<Value = Op> {
    let prefill = prompt((0..48).map(|i| format!("p{i}")).collect())
        .prop_flat_map(|(p, t)| (Just(p), Just(t), 0u8..3))
        .prop_map(|(prompt, tiers, session)| Op::Prefill { prompt, tiers, session });
    prop_oneof![
        6 => prefill,
        1 => (0u8..3).prop_map(|session| Op::Downgrade { session }),
        1 => (1usize..4).prop_map(Op::Evict),
    ]
}

/// Under the priority policy tier-I blocks never leave, the cache never
/// exceeds capacity, and any eviction output follows tier then recency order.
pub fn check_sequence(capacity: usize, block_size: usize, ops: &[Op]) -> Result<(), String> {
    let mut s = CacheState::new(capacity, block_size, EvictionPolicy::Priority);
    for op in ops {
        let tier_one = |s: &CacheState| {
            let mut v: Vec<u64> = s.blocks().filter(|b| b.tier == Tier::I).map(|b| b.id).collect();
            v.sort_unstable();
            v
        };
        let before_i = tier_one(&s);
        let snapshot: Vec<(u64, Tier, u64)> = s.blocks().map(|b| (b.id, b.tier, b.last_used)).collect();
        let evicted = match op {
            Op::Prefill { prompt, tiers, session } => s
                .prefill(&TokenSeq::from(prompt.clone()), &TierMap::from_lengths(tiers), Some(&format!("s{session}")))
                .map(|r| r.evicted)
                .unwrap_or_default(),
            Op::Downgrade { session } => {
                s.set_tier(&format!("s{session}"), Tier::II, Tier::III);
                Vec::new()
            }
            Op::Evict(n) => s.evict(*n).unwrap_or_default(),
        };
        if s.len() > capacity {
            return Err(format!("{} blocks resident over capacity {capacity}", s.len()));
        }
        let after_i = tier_one(&s);
        if let Some(lost) = before_i.iter().find(|id| after_i.binary_search(id).is_err()) {
            return Err(format!("tier-I block {lost} disappeared after {op:?}"));
        }
        let keys: Vec<(u8, u64)> = evicted
            .iter()
            .map(|id| {
                let (_, t, u) = snapshot.iter().find(|b| b.0 == *id).expect("evicted blocks were resident before");
                (rank(EvictionPolicy::Priority, *t).expect("tier I is never evicted"), *u)
            })
            .collect();
        if keys.windows(2).any(|w| w[0] > w[1]) {
            return Err(format!("eviction order {keys:?} after {op:?}"));
        }
    }
    Ok(())
}
