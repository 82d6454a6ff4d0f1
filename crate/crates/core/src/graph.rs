//! In-memory property graph: typed nodes with attribute maps and typed,
//! canonically ordered adjacency in both directions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::format_number;

pub type NodeId = String;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("edge {src} -> {dst} references an unknown node")]
    DanglingEdge { src: String, dst: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A scalar attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Num(f64),
    Str(String),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(true) => f.write_str("True"),
            Scalar::Bool(false) => f.write_str("False"),
            Scalar::Num(n) => f.write_str(&format_number(*n)),
            Scalar::Str(s) => f.write_str(s),
        }
    }
}

/// Attribute values are scalars or flat lists of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Scalar(Scalar),
    List(Vec<Scalar>),
}

impl AttrValue {
    pub fn str(s: impl Into<String>) -> Self {
        AttrValue::Scalar(Scalar::Str(s.into()))
    }

    pub fn num(n: f64) -> Self {
        AttrValue::Scalar(Scalar::Num(n))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Scalar(Scalar::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            AttrValue::Scalar(Scalar::Num(n)) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Scalar(s) => s.fmt(f),
            AttrValue::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    item.fmt(f)?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub node_type: String,
    pub attributes: BTreeMap<String, AttrValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub edge_type: String,
}

/// One line of the JSONL graph file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineRecord {
    Node {
        id: String,
        #[serde(rename = "type")]
        node_type: String,
        #[serde(default)]
        attrs: BTreeMap<String, AttrValue>,
    },
    Edge {
        src: String,
        dst: String,
        etype: String,
    },
}

type Adjacency = BTreeMap<NodeId, BTreeMap<String, Vec<NodeId>>>;

/// Immutable property graph. Adjacency lists are sorted ascending by id.
#[derive(Debug, Clone, Default)]
pub struct PropertyGraph {
    nodes: BTreeMap<NodeId, NodeRecord>,
    out_adj: Adjacency,
    in_adj: Adjacency,
    edge_count: usize,
}

/// Which edges count as 1-hop neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Both,
    Outgoing,
}

impl PropertyGraph {
    /// Loads a JSON Lines graph file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let text = fs::read_to_string(path)?;
        Self::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GraphError> {
        let mut builder = GraphBuilder::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: LineRecord =
                serde_json::from_str(line).map_err(|e| GraphError::MalformedRecord {
                    line: line_no,
                    message: e.to_string(),
                })?;
            match record {
                LineRecord::Node {
                    id,
                    node_type,
                    attrs,
                } => {
                    if id.is_empty() {
                        return Err(GraphError::MalformedRecord {
                            line: line_no,
                            message: "empty node id".into(),
                        });
                    }
                    if attrs.keys().any(|k| k.is_empty()) {
                        return Err(GraphError::MalformedRecord {
                            line: line_no,
                            message: "empty attribute name".into(),
                        });
                    }
                    builder.add_node(NodeRecord {
                        id,
                        node_type,
                        attributes: attrs,
                    })?;
                }
                LineRecord::Edge { src, dst, etype } => builder.add_edge(src, dst, etype),
            }
        }
        builder.build()
    }

    /// Canonical JSONL serialization: nodes by id, then edges by (src, type, dst).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for node in self.nodes.values() {
            let rec = LineRecord::Node {
                id: node.id.clone(),
                node_type: node.node_type.clone(),
                attrs: node.attributes.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("node serializes"));
            out.push('\n');
        }
        for edge in self.edges() {
            let rec = LineRecord::Edge {
                src: edge.src,
                dst: edge.dst,
                etype: edge.edge_type,
            };
            out.push_str(&serde_json::to_string(&rec).expect("edge serializes"));
            out.push('\n');
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn node(&self, id: &str) -> Result<&NodeRecord, GraphError> {
        self.nodes
            .get(id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    /// All edges in canonical (src, type, dst) order.
    pub fn edges(&self) -> Vec<EdgeRecord> {
        let mut edges = Vec::with_capacity(self.edge_count);
        for (src, by_type) in &self.out_adj {
            for (etype, dsts) in by_type {
                for dst in dsts {
                    edges.push(EdgeRecord {
                        src: src.clone(),
                        dst: dst.clone(),
                        edge_type: etype.clone(),
                    });
                }
            }
        }
        edges
    }

    /// Outgoing neighbours of `id` over edges of `edge_type`, ascending by id.
    pub fn neighbours(&self, id: &str, edge_type: &str) -> Result<&[NodeId], GraphError> {
        self.node(id)?;
        Ok(self
            .out_adj
            .get(id)
            .and_then(|m| m.get(edge_type))
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    pub fn degree(&self, id: &str, edge_type: &str) -> Result<usize, GraphError> {
        self.neighbours(id, edge_type).map(<[NodeId]>::len)
    }

    /// In-degree plus out-degree over all edge types.
    pub fn total_degree(&self, id: &str) -> Result<usize, GraphError> {
        self.node(id)?;
        let count = |adj: &Adjacency| {
            adj.get(id)
                .map(|m| m.values().map(Vec::len).sum::<usize>())
                .unwrap_or(0)
        };
        Ok(count(&self.out_adj) + count(&self.in_adj))
    }

    /// Distinct 1-hop neighbours across all edge types.
    pub fn adjacent(&self, id: &str, direction: Direction) -> Result<BTreeSet<NodeId>, GraphError> {
        self.node(id)?;
        let mut set = BTreeSet::new();
        let mut collect = |adj: &Adjacency| {
            if let Some(m) = adj.get(id) {
                for ids in m.values() {
                    set.extend(ids.iter().cloned());
                }
            }
        };
        collect(&self.out_adj);
        if direction == Direction::Both {
            collect(&self.in_adj);
        }
        set.remove(id);
        Ok(set)
    }

    /// Attribute lookup. `type` resolves to the node type when the node has
    /// no attribute of that name. `None` marks a missing attribute.
    pub fn attribute(&self, id: &str, name: &str) -> Result<Option<AttrValue>, GraphError> {
        let node = self.node(id)?;
        Ok(match node.attributes.get(name) {
            Some(v) => Some(v.clone()),
            None if name == "type" => Some(AttrValue::str(node.node_type.clone())),
            None => None,
        })
    }

    /// Feature values aligned with `ids`.
    pub fn feature(&self, ids: &[NodeId], name: &str) -> Result<Vec<Option<AttrValue>>, GraphError> {
        ids.iter().map(|id| self.attribute(id, name)).collect()
    }
}

/// Incremental construction with validation deferred to [`GraphBuilder::build`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: BTreeMap<NodeId, NodeRecord>,
    edges: Vec<EdgeRecord>,
}

impl GraphBuilder {
    pub fn add_node(&mut self, node: NodeRecord) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_edge(&mut self, src: impl Into<String>, dst: impl Into<String>, etype: impl Into<String>) {
        self.edges.push(EdgeRecord {
            src: src.into(),
            dst: dst.into(),
            edge_type: etype.into(),
        });
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn build(self) -> Result<PropertyGraph, GraphError> {
        let mut out_adj = Adjacency::new();
        let mut in_adj = Adjacency::new();
        for e in &self.edges {
            if !self.nodes.contains_key(&e.src) || !self.nodes.contains_key(&e.dst) {
                return Err(GraphError::DanglingEdge {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                });
            }
            out_adj
                .entry(e.src.clone())
                .or_default()
                .entry(e.edge_type.clone())
                .or_default()
                .push(e.dst.clone());
            in_adj
                .entry(e.dst.clone())
                .or_default()
                .entry(e.edge_type.clone())
                .or_default()
                .push(e.src.clone());
        }
        for adj in [&mut out_adj, &mut in_adj] {
            for lists in adj.values_mut() {
                for list in lists.values_mut() {
                    list.sort();
                }
            }
        }
        Ok(PropertyGraph {
            nodes: self.nodes,
            out_adj,
            in_adj,
            edge_count: self.edges.len(),
        })
    }
}
