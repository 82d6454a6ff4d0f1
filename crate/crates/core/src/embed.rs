//! Deterministic text embedder and exact cosine nearest-neighbour index.
//!
//! Text is lower-cased, wrapped in boundary markers and split into
//! character trigrams; each trigram increments one of `dim` buckets chosen
//! by a stable hash. The count vector is L2-normalised. A text with no
//! trigrams maps to the first basis vector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, PropertyGraph};
use crate::hash::fnv64;
use crate::num::Real;

pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("vector index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
}

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S> {
    values: Vec<S>,
}

impl<S: Real> Embedding<S> {
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &Self) -> S {
        self.values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |acc, (a, b)| acc + *a * *b)
    }

    /// Cosine similarity; both vectors are unit norm so this is the dot
    /// product clamped to [-1, 1].
    pub fn cosine(&self, other: &Self) -> S {
        let one = S::one();
        self.dot(other).max(-one).min(one)
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }
}

/// Character-trigram feature hashing embedder.
pub fn embed<S: Real>(text: &str, dim: usize) -> Embedding<S> {
    assert!(dim > 0, "embedding dimension must be positive");
    let chars: Vec<char> = std::iter::once('\u{2}')
        .chain(text.chars().flat_map(char::to_lowercase))
        .chain(std::iter::once('\u{3}'))
        .collect();
    let mut counts = vec![0u32; dim];
    let mut buf = String::new();
    for w in chars.windows(3) {
        buf.clear();
        buf.extend(w.iter());
        let bucket = (fnv64(buf.as_bytes()) % dim as u64) as usize;
        counts[bucket] += 1;
    }
    let mut values: Vec<S> = counts
        .iter()
        .map(|&c| S::from_u32(c).expect("count fits scalar"))
        .collect();
    let norm = values.iter().fold(S::zero(), |acc, v| acc + *v * *v).sqrt();
    if norm == S::zero() {
        values[0] = S::one();
    } else {
        for v in &mut values {
            *v = *v / norm;
        }
    }
    Embedding { values }
}

/// Which attribute provides the indexable text of each node type.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub dim: usize,
    /// node_type -> attribute name. Unlisted types fall back to
    /// `title`, then `name`.
    pub text_field: BTreeMap<String, String>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            dim: DEFAULT_DIM,
            text_field: BTreeMap::new(),
        }
    }
}

impl IndexConfig {
    /// The indexable text of a node, if it has one.
    pub fn node_text(&self, graph: &PropertyGraph, id: &str) -> Option<String> {
        let node = graph.node(id).ok()?;
        let fields: Vec<&str> = match self.text_field.get(&node.node_type) {
            Some(f) => vec![f.as_str()],
            None => vec!["title", "name"],
        };
        fields
            .into_iter()
            .find_map(|f| node.attributes.get(f))
            .map(|v| v.to_string())
    }
}

/// Exact kNN index. Entries are kept ascending by node id.
#[derive(Debug, Clone)]
pub struct VectorIndex<S> {
    dim: usize,
    entries: Vec<(NodeId, Embedding<S>)>,
}

impl<S: Real> VectorIndex<S> {
    pub fn build(graph: &PropertyGraph, config: &IndexConfig) -> Self {
        let entries = graph
            .nodes()
            .filter_map(|n| {
                config
                    .node_text(graph, &n.id)
                    .map(|t| (n.id.clone(), t))
            })
            .collect::<Vec<_>>();
        Self::from_texts(entries, config.dim)
    }

    /// Builds an index from (id, text) pairs in any order.
    pub fn from_texts(items: impl IntoIterator<Item = (NodeId, String)>, dim: usize) -> Self {
        let mut entries: Vec<(NodeId, Embedding<S>)> = items
            .into_iter()
            .map(|(id, text)| {
                let e = embed(&text, dim);
                (id, e)
            })
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        VectorIndex { dim, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(NodeId, Embedding<S>)] {
        &self.entries
    }

    /// Exact top-k by cosine, descending; ties ascending by id.
    pub fn nearest(&self, text: &str, k: usize) -> Result<Vec<(NodeId, S)>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let query = embed::<S>(text, self.dim);
        let mut scored: Vec<(&NodeId, S)> = self
            .entries
            .iter()
            .map(|(id, e)| (id, query.cosine(e)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(id, s)| (id.clone(), s)).collect())
    }
}
