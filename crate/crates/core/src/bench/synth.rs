//! Seeded catalogue graphs: users `viewed` items, items `also_viewed` items.
//!
//! Every node keeps at most [`DEFAULT_CHUNK_K`] distinct neighbours so that
//! its vertex chunk lists the whole neighbourhood.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{AttrValue, GraphBuilder, GraphError, NodeRecord, PropertyGraph};
use crate::llm::{ALSO_VIEWED, NAME, TITLE, VIEWED};
use crate::retriever::DEFAULT_CHUNK_K;

const ADJECTIVES: [&str; 24] = [
    "amber", "bold", "brisk", "calm", "crisp", "dusty", "eager", "faded", "gentle", "glossy", "hardy", "lucky",
    "mellow", "nimble", "plain", "quiet", "rustic", "sturdy", "sunny", "tidy", "urban", "vivid", "warm", "zesty",
];
const MATERIALS: [&str; 20] = [
    "bamboo", "brass", "canvas", "cedar", "ceramic", "copper", "cotton", "denim", "felt", "glass", "granite",
    "leather", "linen", "maple", "marble", "nylon", "oak", "silk", "steel", "wool",
];
const NOUNS: [&str; 24] = [
    "backpack", "basket", "blanket", "bottle", "bowl", "candle", "chair", "clock", "desk", "jacket", "kettle",
    "lamp", "mirror", "mug", "notebook", "pillow", "planter", "scarf", "shelf", "speaker", "stool", "tray",
    "umbrella", "wallet",
];
const BRANDS: [&str; 8] = ["Acme", "Borealis", "Cobalt", "Dune", "Ember", "Fjord", "Granite", "Harbor"];
const FIRST: [&str; 30] = [
    "Ada", "Ben", "Cara", "Dev", "Eli", "Fay", "Gus", "Hana", "Ivo", "Jun", "Kai", "Lena", "Milo", "Nia", "Omar",
    "Pia", "Quin", "Rosa", "Sami", "Tess", "Uma", "Vik", "Wren", "Xia", "Yuri", "Zoe", "Ari", "Bea", "Cyd", "Dax",
];
const LAST: [&str; 30] = [
    "Abbott", "Baker", "Chen", "Diaz", "Ekwueme", "Fischer", "Garcia", "Haddad", "Ito", "Jensen", "Kowalski",
    "Lopez", "Moreau", "Nakamura", "Okafor", "Patel", "Quispe", "Rossi", "Silva", "Tanaka", "Ueda", "Varga",
    "Weber", "Xu", "Yilmaz", "Zhou", "Adler", "Brandt", "Castro", "Dubois",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub users: usize,
    pub items: usize,
    pub min_viewed: usize,
    pub max_viewed: usize,
    /// Viewers per item.
    pub max_viewers: usize,
    /// Target `also_viewed` partners per item.
    pub partners: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            users: 100,
            items: 400,
            min_viewed: 2,
            max_viewed: 4,
            max_viewers: 4,
            partners: 3,
        }
    }
}

impl SynthConfig {
    pub fn with_nodes(seed: u64, nodes: usize) -> Self {
        let users = nodes / 5;
        SynthConfig {
            seed,
            users,
            items: nodes - users,
            ..SynthConfig::default()
        }
    }
}

fn pad(prefix: char, i: usize, n: usize) -> String {
    let width = n.max(1).to_string().len();
    format!("{prefix}{i:0width$}")
}

fn distinct_names(rng: &mut ChaCha8Rng, n: usize, parts: &[&[&str]]) -> Vec<String> {
    let capacity: usize = parts.iter().map(|p| p.len()).product();
    assert!(n <= capacity, "cannot draw {n} distinct names from {capacity}");
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let name = parts
            .iter()
            .map(|p| *p.choose(rng).expect("non-empty word list"))
            .collect::<Vec<_>>()
            .join(" ");
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

/// Builds the graph described by `config`. Identical configs give identical graphs.
pub fn generate_graph(config: &SynthConfig) -> Result<PropertyGraph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let titles = distinct_names(&mut rng, config.items, &[&ADJECTIVES, &MATERIALS, &NOUNS]);
    let names = distinct_names(&mut rng, config.users, &[&FIRST, &LAST]);
    let mut b = GraphBuilder::default();

    let item_ids: Vec<String> = (0..config.items).map(|i| pad('i', i, config.items)).collect();
    for (id, title) in item_ids.iter().zip(&titles) {
        let mut attributes = BTreeMap::new();
        attributes.insert(TITLE.to_string(), AttrValue::str(title.clone()));
        attributes.insert("price".to_string(), AttrValue::num(rng.gen_range(5..200) as f64));
        attributes.insert("brand".to_string(), AttrValue::str(*BRANDS.choose(&mut rng).expect("brands")));
        b.add_node(NodeRecord {
            id: id.clone(),
            node_type: "item".into(),
            attributes,
        })?;
    }

    // Items keep viewers + partners within the chunk size.
    let partner_cap = DEFAULT_CHUNK_K - config.max_viewers;
    let mut viewers = vec![0usize; config.items];
    for (u, name) in names.iter().enumerate() {
        let id = pad('u', u, config.users);
        let mut attributes = BTreeMap::new();
        attributes.insert(NAME.to_string(), AttrValue::str(name.clone()));
        b.add_node(NodeRecord {
            id: id.clone(),
            node_type: "user".into(),
            attributes,
        })?;
        let want = rng.gen_range(config.min_viewed..=config.max_viewed);
        let mut chosen = BTreeSet::new();
        for _ in 0..want * 20 {
            if chosen.len() == want || config.items == 0 {
                break;
            }
            let i = rng.gen_range(0..config.items);
            if viewers[i] < config.max_viewers && chosen.insert(i) {
                viewers[i] += 1;
            }
        }
        for i in chosen {
            b.add_edge(id.clone(), item_ids[i].clone(), VIEWED);
        }
    }

    let mut partners: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); config.items];
    for i in 0..config.items {
        let target = config.partners.min(partner_cap);
        for _ in 0..target * 20 {
            if partners[i].len() >= target {
                break;
            }
            let j = rng.gen_range(0..config.items);
            if j != i && partners[j].len() < partner_cap && !partners[i].contains(&j) {
                partners[i].insert(j);
                partners[j].insert(i);
            }
        }
    }
    for (i, ps) in partners.iter().enumerate() {
        for &j in ps {
            b.add_edge(item_ids[i].clone(), item_ids[j].clone(), ALSO_VIEWED);
        }
    }
    b.build()
}
