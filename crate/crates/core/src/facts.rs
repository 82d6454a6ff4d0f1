//! The line grammar shared by notebook facts and baseline observations:
//!
//! ```text
//! <text> id: <node id>
//! <node id> neighbours <edge type>: [<id>, ...]
//! <node id> feature <attribute>: [<value>, ...]
//! <node id> degree <edge type>: <count>
//! [Node:<id> {k:v, ...}]
//! [neighbours:(<id> {k:v, ...}),...]
//! ```

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::graph::{AttrValue, NodeId};
use crate::snippet::Value;

pub fn id_line(text: &str, id: &str) -> String {
    format!("{text} id: {id}")
}

pub fn neighbours_line(id: &str, edge_type: &str, ids: &[NodeId]) -> String {
    format!("{id} neighbours {edge_type}: [{}]", ids.join(", "))
}

pub fn feature_line(id: &str, attr: &str, values: &[Option<AttrValue>]) -> String {
    let v = Value::List(values.iter().cloned().map(Value::from_attr).collect());
    format!("{id} feature {attr}: {v}")
}

pub fn degree_line(id: &str, edge_type: &str, degree: usize) -> String {
    format!("{id} degree {edge_type}: {degree}")
}

pub type Attrs = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChunkFacts {
    pub attrs: Attrs,
    pub neighbours: Vec<(NodeId, Attrs)>,
}

/// Everything recoverable from a block of fact lines.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Facts {
    pub ids: BTreeMap<String, NodeId>,
    pub neighbours: BTreeMap<(NodeId, String), Vec<NodeId>>,
    /// Feature values as printed, e.g. `[10]`.
    pub features: BTreeMap<(NodeId, String), String>,
    pub degrees: BTreeMap<(NodeId, String), usize>,
    pub chunks: BTreeMap<NodeId, ChunkFacts>,
}

struct Patterns {
    id: Regex,
    neighbours: Regex,
    feature: Regex,
    degree: Regex,
    node: Regex,
    chunk_nbr: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        id: Regex::new(r"^(.+?) id: (\S+)$").expect("static regex"),
        neighbours: Regex::new(r"^(\S+) neighbours (\S+): \[(.*)\]$").expect("static regex"),
        feature: Regex::new(r"^(\S+) feature (\S+): (\[.*\])$").expect("static regex"),
        degree: Regex::new(r"^(\S+) degree (\S+): (\d+)$").expect("static regex"),
        node: Regex::new(r"^\[Node:(\S+) \{(.*)\}\]$").expect("static regex"),
        chunk_nbr: Regex::new(r"\((\S+) \{([^}]*)\}\)").expect("static regex"),
    })
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn parse_attrs(s: &str) -> Attrs {
    let mut out = Attrs::new();
    for part in s.split(", ") {
        if let Some((k, v)) = part.split_once(':') {
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    out
}

impl Facts {
    /// Parses every recognisable line; other lines are ignored. A leading
    /// `Observation: ` is stripped.
    pub fn parse(text: &str) -> Facts {
        let p = patterns();
        let mut f = Facts::default();
        let mut last_node: Option<NodeId> = None;
        for raw in text.lines() {
            let line = raw.trim();
            let line = line.strip_prefix("Observation:").map_or(line, str::trim);
            if let Some(c) = p.node.captures(line) {
                let id = c[1].to_string();
                f.chunks.entry(id.clone()).or_default().attrs = parse_attrs(&c[2]);
                last_node = Some(id);
            } else if let Some(rest) = line.strip_prefix("[neighbours:") {
                if let Some(center) = last_node.take() {
                    let nbrs = p
                        .chunk_nbr
                        .captures_iter(rest)
                        .map(|c| (c[1].to_string(), parse_attrs(&c[2])))
                        .collect();
                    f.chunks.entry(center).or_default().neighbours = nbrs;
                }
            } else if let Some(c) = p.neighbours.captures(line) {
                f.neighbours.insert((c[1].to_string(), c[2].to_string()), split_list(&c[3]));
            } else if let Some(c) = p.feature.captures(line) {
                f.features.insert((c[1].to_string(), c[2].to_string()), c[3].to_string());
            } else if let Some(c) = p.degree.captures(line) {
                if let Ok(d) = c[3].parse() {
                    f.degrees.insert((c[1].to_string(), c[2].to_string()), d);
                }
            } else if let Some(c) = p.id.captures(line) {
                f.ids.insert(c[1].to_string(), c[2].to_string());
            }
        }
        f
    }

    /// Id of the chunk whose center has `attr == value`.
    pub fn chunk_with(&self, attr: &str, value: &str) -> Option<&NodeId> {
        self.chunks
            .iter()
            .find(|(_, c)| c.attrs.get(attr).map(String::as_str) == Some(value))
            .map(|(id, _)| id)
    }
}

/// Single element of a printed one-element list, e.g. `[10]` gives `10`.
pub fn single_value(printed: &str) -> Option<&str> {
    let inner = printed.strip_prefix('[')?.strip_suffix(']')?;
    (!inner.is_empty() && !inner.contains(", ")).then_some(inner)
}
