//! Graph RAG retriever: the five graph functions exposed to agents,
//! vertex-chunk construction and rendering, and the bounded LRU cache
//! from query text to node id.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{IndexError, VectorIndex};
use crate::graph::{AttrValue, Direction, GraphError, NodeId, PropertyGraph};

pub const DEFAULT_CHUNK_K: usize = 8;
pub const DEFAULT_CACHE_CAPACITY: usize = 1024;

/// Failures of graph access. The orchestrator classifies all of these as
/// retrieval process errors.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("vector index is empty")]
    EmptyIndex,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("function {0} is not available in this deployment")]
    Disabled(&'static str),
    #[error("{0}")]
    Other(String),
}

impl From<GraphError> for RetrievalError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownNode(id) => RetrievalError::UnknownNode(id),
            other => RetrievalError::Other(other.to_string()),
        }
    }
}

impl From<IndexError> for RetrievalError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyIndex => RetrievalError::EmptyIndex,
            other => RetrievalError::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// In-degree plus out-degree over every edge type.
    #[default]
    TotalDegree,
    /// Out-degree over one edge type.
    EdgeType(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkConfig {
    pub k: usize,
    pub weight_mode: WeightMode,
    pub direction: Direction,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            k: DEFAULT_CHUNK_K,
            weight_mode: WeightMode::TotalDegree,
            direction: Direction::Both,
        }
    }
}

pub type AttrPairs = Vec<(String, String)>;

/// A center node plus its top-k weighted 1-hop neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexChunk {
    pub center: NodeId,
    pub center_attrs: AttrPairs,
    pub neighbours: Vec<(NodeId, AttrPairs)>,
}

impl VertexChunk {
    /// Two-line canonical rendering, no trailing newline.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

fn write_attrs(f: &mut fmt::Formatter<'_>, attrs: &AttrPairs) -> fmt::Result {
    f.write_str("{")?;
    for (i, (k, v)) in attrs.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{k}:{v}")?;
    }
    f.write_str("}")
}

impl fmt::Display for VertexChunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[Node:{} ", self.center)?;
        write_attrs(f, &self.center_attrs)?;
        f.write_str("]\n[neighbours:")?;
        for (i, (id, attrs)) in self.neighbours.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({id} ")?;
            write_attrs(f, attrs)?;
            f.write_str(")")?;
        }
        f.write_str("]")
    }
}

/// Attribute pairs of a node in key order, with the node type under `type`.
pub fn attr_pairs(graph: &PropertyGraph, id: &str) -> Result<AttrPairs, GraphError> {
    let node = graph.node(id)?;
    let mut map: BTreeMap<&str, String> = node
        .attributes
        .iter()
        .map(|(k, v)| (k.as_str(), v.to_string()))
        .collect();
    map.entry("type").or_insert_with(|| node.node_type.clone());
    Ok(map.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

/// Builds the vertex chunk of `id` under `config`.
pub fn build_chunk(
    graph: &PropertyGraph,
    id: &str,
    config: &ChunkConfig,
) -> Result<VertexChunk, GraphError> {
    let center_attrs = attr_pairs(graph, id)?;
    let mut weighted = Vec::new();
    for nb in graph.adjacent(id, config.direction)? {
        let weight = match &config.weight_mode {
            WeightMode::TotalDegree => graph.total_degree(&nb)?,
            WeightMode::EdgeType(t) => graph.degree(&nb, t)?,
        };
        weighted.push((weight, nb));
    }
    weighted.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    weighted.truncate(config.k);
    let neighbours = weighted
        .into_iter()
        .map(|(_, nb)| {
            let attrs = attr_pairs(graph, &nb)?;
            Ok((nb, attrs))
        })
        .collect::<Result<_, GraphError>>()?;
    Ok(VertexChunk {
        center: id.to_string(),
        center_attrs,
        neighbours,
    })
}

/// Bounded LRU map from retrieval query text to node id.
#[derive(Debug, Clone)]
pub struct RetrievalCache {
    capacity: usize,
    clock: u64,
    entries: HashMap<String, (NodeId, u64)>,
    by_age: BTreeMap<u64, String>,
}

impl RetrievalCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "retrieval cache capacity must be positive");
        RetrievalCache {
            capacity,
            clock: 0,
            entries: HashMap::new(),
            by_age: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Looks up `query`, refreshing its recency on a hit.
    pub fn get(&mut self, query: &str) -> Option<NodeId> {
        self.clock += 1;
        let stamp = self.clock;
        let entry = self.entries.get_mut(query)?;
        self.by_age.remove(&entry.1);
        entry.1 = stamp;
        self.by_age.insert(stamp, query.to_string());
        Some(entry.0.clone())
    }

    pub fn insert(&mut self, query: &str, id: NodeId) {
        self.clock += 1;
        let stamp = self.clock;
        if let Some(old) = self.entries.insert(query.to_string(), (id, stamp)) {
            self.by_age.remove(&old.1);
        }
        self.by_age.insert(stamp, query.to_string());
        while self.entries.len() > self.capacity {
            let (_, victim) = self.by_age.pop_first().expect("age index tracks entries");
            self.entries.remove(&victim);
        }
    }
}

/// Result of a `RetrieveNode` call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieved {
    pub id: NodeId,
    pub cache_hit: bool,
}

/// The graph functions available to snippets.
pub trait GraphApi: Send + Sync {
    fn retrieve_node(&self, text: &str) -> Result<Retrieved, RetrievalError>;
    fn node_info(&self, id: &str) -> Result<VertexChunk, RetrievalError>;
    fn node_feature(&self, ids: &[NodeId], name: &str) -> Result<Vec<Option<AttrValue>>, RetrievalError>;
    fn node_degree(&self, id: &str, edge_type: &str) -> Result<usize, RetrievalError>;
    fn neighbour_check(&self, id: &str, edge_type: &str) -> Result<Vec<NodeId>, RetrievalError>;

    /// Cached result of `retrieve_node(text)` without searching.
    fn cached_node(&self, _text: &str) -> Option<NodeId> {
        None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    pub chunk: ChunkConfig,
    /// `0` disables the retrieval cache.
    pub cache_capacity: usize,
    /// When false, `NodeInfo` is unavailable (attribute-at-a-time ablation).
    pub node_info: bool,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        RetrieverConfig {
            chunk: ChunkConfig::default(),
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            node_info: true,
        }
    }
}

/// Retriever over a shared read-only graph and index.
#[derive(Debug)]
pub struct Retriever {
    graph: Arc<PropertyGraph>,
    index: Arc<VectorIndex<f64>>,
    config: RetrieverConfig,
    cache: Option<Mutex<RetrievalCache>>,
    probes: AtomicUsize,
}

impl Retriever {
    pub fn new(graph: Arc<PropertyGraph>, index: Arc<VectorIndex<f64>>, config: RetrieverConfig) -> Self {
        let cache = (config.cache_capacity > 0).then(|| Mutex::new(RetrievalCache::new(config.cache_capacity)));
        Retriever {
            graph,
            index,
            config,
            cache,
            probes: AtomicUsize::new(0),
        }
    }

    pub fn graph(&self) -> &Arc<PropertyGraph> {
        &self.graph
    }

    pub fn index(&self) -> &Arc<VectorIndex<f64>> {
        &self.index
    }

    pub fn config(&self) -> &RetrieverConfig {
        &self.config
    }

    /// Number of vector-index searches performed so far.
    pub fn index_probes(&self) -> usize {
        self.probes.load(Ordering::Relaxed)
    }

    /// Cache lookup only; never touches the index.
    pub fn cached(&self, text: &str) -> Option<NodeId> {
        self.cache.as_ref()?.lock().expect("cache lock").get(text)
    }

    fn search(&self, text: &str) -> Result<NodeId, RetrievalError> {
        self.probes.fetch_add(1, Ordering::Relaxed);
        let hits = self.index.nearest(text, 1)?;
        Ok(hits.into_iter().next().expect("non-empty index yields a hit").0)
    }
}

impl GraphApi for Retriever {
    fn retrieve_node(&self, text: &str) -> Result<Retrieved, RetrievalError> {
        if let Some(id) = self.cached(text) {
            return Ok(Retrieved { id, cache_hit: true });
        }
        let id = self.search(text)?;
        if let Some(cache) = &self.cache {
            cache.lock().expect("cache lock").insert(text, id.clone());
        }
        Ok(Retrieved { id, cache_hit: false })
    }

    fn cached_node(&self, text: &str) -> Option<NodeId> {
        self.cached(text)
    }

    fn node_info(&self, id: &str) -> Result<VertexChunk, RetrievalError> {
        if !self.config.node_info {
            return Err(RetrievalError::Disabled("NodeInfo"));
        }
        Ok(build_chunk(&self.graph, id, &self.config.chunk)?)
    }

    fn node_feature(&self, ids: &[NodeId], name: &str) -> Result<Vec<Option<AttrValue>>, RetrievalError> {
        Ok(self.graph.feature(ids, name)?)
    }

    fn node_degree(&self, id: &str, edge_type: &str) -> Result<usize, RetrievalError> {
        Ok(self.graph.degree(id, edge_type)?)
    }

    fn neighbour_check(&self, id: &str, edge_type: &str) -> Result<Vec<NodeId>, RetrievalError> {
        Ok(self.graph.neighbours(id, edge_type)?.to_vec())
    }
}
