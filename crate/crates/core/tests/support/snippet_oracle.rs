//! Random straight-line snippets over random graphs, and a reference
//! evaluator that works on its own syntax tree, value model and raw edge
//! list. Only the rendered source is shared with the real interpreter.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use glm_core::embed::{IndexConfig, VectorIndex};
use glm_core::graph::PropertyGraph;
use glm_core::retriever::{Retriever, RetrieverConfig};
use glm_core::snippet::{execute, parse, ExecOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- graphs

#[derive(Debug, Clone)]
enum RScalar {
    Num(f64),
    Str(String),
}

#[derive(Debug, Clone)]
enum RAttr {
    One(RScalar),
    Many(Vec<RScalar>),
}

#[derive(Debug, Clone)]
struct RNode {
    id: String,
    kind: String,
    attrs: BTreeMap<String, RAttr>,
}

#[derive(Debug, Clone)]
pub struct RawGraph {
    nodes: Vec<RNode>,
    edges: Vec<(String, String, String)>,
}

const EDGE_TYPES: [&str; 3] = ["viewed", "also_viewed", "likes"];
const WORDS: [&str; 16] = [
    "red", "blue", "oak", "iron", "fast", "quiet", "lamp", "desk", "cup", "kite", "mint", "pearl", "sand", "wolf",
    "zinc", "jade",
];
const FEATURES: [&str; 8] = ["price", "title", "brand", "tags", "rating", "type", "name", "colour"];

fn scalar_json(s: &RScalar) -> serde_json::Value {
    match s {
        RScalar::Num(n) => serde_json::json!(n),
        RScalar::Str(s) => serde_json::json!(s),
    }
}

impl RawGraph {
    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let mut texts = Vec::new();
        while texts.len() < n {
            let t = format!(
                "{} {} {}",
                WORDS.choose(rng).unwrap(),
                WORDS.choose(rng).unwrap(),
                WORDS.choose(rng).unwrap()
            );
            if !texts.contains(&t) {
                texts.push(t);
            }
        }
        let mut nodes = Vec::new();
        for (i, text) in texts.into_iter().enumerate() {
            let mut attrs = BTreeMap::new();
            let item = rng.gen_bool(0.7);
            if item {
                attrs.insert("title".to_string(), RAttr::One(RScalar::Str(text)));
                if rng.gen_bool(0.9) {
                    attrs.insert("price".into(), RAttr::One(RScalar::Num(rng.gen_range(1..100) as f64)));
                }
                let brand = ["Acme", "Zed", "Kite", "Orb"].choose(rng).unwrap().to_string();
                attrs.insert("brand".into(), RAttr::One(RScalar::Str(brand)));
                if rng.gen_bool(0.3) {
                    attrs.insert("rating".into(), RAttr::One(RScalar::Num(rng.gen_range(0..10) as f64 / 4.0)));
                }
                if rng.gen_bool(0.2) {
                    let tags = (0..rng.gen_range(1..3))
                        .map(|_| RScalar::Str(WORDS.choose(rng).unwrap().to_string()))
                        .collect();
                    attrs.insert("tags".into(), RAttr::Many(tags));
                }
            } else {
                attrs.insert("name".to_string(), RAttr::One(RScalar::Str(text)));
                attrs.insert("age".into(), RAttr::One(RScalar::Num(rng.gen_range(18..80) as f64)));
            }
            nodes.push(RNode {
                id: format!("v{i:02}"),
                kind: if item { "item" } else { "user" }.to_string(),
                attrs,
            });
        }
        let mut edges = Vec::new();
        for _ in 0..n * 5 / 2 {
            let s = rng.gen_range(0..n);
            let d = if rng.gen_bool(0.03) { s } else { rng.gen_range(0..n) };
            let t = EDGE_TYPES.choose(rng).unwrap().to_string();
            edges.push((nodes[s].id.clone(), nodes[d].id.clone(), t));
        }
        RawGraph { nodes, edges }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let attrs: serde_json::Map<String, serde_json::Value> = n
                .attrs
                .iter()
                .map(|(k, v)| {
                    let j = match v {
                        RAttr::One(s) => scalar_json(s),
                        RAttr::Many(items) => serde_json::Value::Array(items.iter().map(scalar_json).collect()),
                    };
                    (k.clone(), j)
                })
                .collect();
            let line = serde_json::json!({"kind": "node", "id": n.id, "type": n.kind, "attrs": attrs});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        for (s, d, t) in &self.edges {
            out.push_str(&serde_json::json!({"kind": "edge", "src": s, "dst": d, "etype": t}).to_string());
            out.push('\n');
        }
        out
    }

    fn node(&self, id: &str) -> Option<&RNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn text_of(n: &RNode) -> String {
        match n.attrs.get("title").or_else(|| n.attrs.get("name")) {
            Some(RAttr::One(RScalar::Str(s))) => s.clone(),
            _ => unreachable!("every node carries a title or a name"),
        }
    }

    fn out_neighbours(&self, id: &str, t: &str) -> Vec<String> {
        let mut v: Vec<String> = self
            .edges
            .iter()
            .filter(|(s, _, et)| s == id && et == t)
            .map(|(_, d, _)| d.clone())
            .collect();
        v.sort();
        v
    }

    fn total_degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|(s, _, _)| s == id).count() + self.edges.iter().filter(|(_, d, _)| d == id).count()
    }

    fn attr_text(v: &RAttr) -> String {
        match v {
            RAttr::One(s) => show_scalar(s),
            RAttr::Many(items) => format!("[{}]", items.iter().map(show_scalar).collect::<Vec<_>>().join(", ")),
        }
    }

    fn attr_block(n: &RNode) -> String {
        let mut pairs: Vec<(String, String)> = n.attrs.iter().map(|(k, v)| (k.clone(), Self::attr_text(v))).collect();
        if !n.attrs.contains_key("type") {
            pairs.push(("type".into(), n.kind.clone()));
        }
        pairs.sort();
        let body: Vec<String> = pairs.into_iter().map(|(k, v)| format!("{k}:{v}")).collect();
        format!("{{{}}}", body.join(", "))
    }

    fn chunk(&self, id: &str) -> Option<String> {
        let center = self.node(id)?;
        let mut nbs: Vec<String> = Vec::new();
        for (s, d, _) in &self.edges {
            let other = if s == id {
                d
            } else if d == id {
                s
            } else {
                continue;
            };
            if other != id && !nbs.contains(other) {
                nbs.push(other.clone());
            }
        }
        let mut weighted: Vec<(usize, String)> = nbs.into_iter().map(|n| (self.total_degree(&n), n)).collect();
        weighted.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let shown: Vec<String> = weighted
            .iter()
            .take(8)
            .map(|(_, n)| format!("({n} {})", Self::attr_block(self.node(n).unwrap())))
            .collect();
        Some(format!("[Node:{id} {}]\n[neighbours:{}]", Self::attr_block(center), shown.join(",")))
    }

    fn feature(&self, id: &str, name: &str) -> Option<RV> {
        let n = self.node(id)?;
        Some(match n.attrs.get(name) {
            Some(RAttr::One(s)) => scalar_value(s),
            Some(RAttr::Many(items)) => RV::List(items.iter().map(scalar_value).collect()),
            None if name == "type" => RV::Text(n.kind.clone()),
            None => RV::Missing,
        })
    }
}

fn show_scalar(s: &RScalar) -> String {
    match s {
        RScalar::Num(n) => show_num(*n),
        RScalar::Str(s) => s.clone(),
    }
}

fn scalar_value(s: &RScalar) -> RV {
    match s {
        RScalar::Num(n) => RV::Num(*n),
        RScalar::Str(s) => RV::Text(s.clone()),
    }
}

fn show_num(n: f64) -> String {
    if n.is_finite() && n == n.trunc() && n.abs() < 1e15 {
        (n as i64).to_string()
    } else {
        n.to_string()
    }
}

// ---------------------------------------------------------------- programs

#[derive(Debug, Clone)]
enum G {
    Num(f64),
    Str(String),
    Bool(bool),
    Var(String),
    List(Vec<G>),
    Set(Vec<G>),
    Dict(Vec<(G, G)>),
    Bin(&'static str, Box<G>, Box<G>),
    Neg(Box<G>),
    Call(&'static str, Vec<G>),
    Index(Box<G>, Box<G>),
}

#[derive(Debug, Clone)]
enum S {
    Assign(String, G),
    Print(Vec<G>),
    Expr(G),
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn src(e: &G) -> String {
    let list = |items: &[G]| items.iter().map(src).collect::<Vec<_>>().join(", ");
    match e {
        G::Num(n) => show_num(*n),
        G::Str(s) => quote(s),
        G::Bool(b) => if *b { "True" } else { "False" }.to_string(),
        G::Var(v) => v.clone(),
        G::List(items) => format!("[{}]", list(items)),
        G::Set(items) => format!("{{{}}}", list(items)),
        G::Dict(pairs) => format!(
            "{{{}}}",
            pairs.iter().map(|(k, v)| format!("{}: {}", src(k), src(v))).collect::<Vec<_>>().join(", ")
        ),
        G::Bin(op, l, r) => format!("({} {op} {})", src(l), src(r)),
        G::Neg(x) => format!("(-{})", src(x)),
        G::Call(f, args) => format!("{f}({})", list(args)),
        G::Index(t, i) => format!("{}[{}]", src(t), src(i)),
    }
}

fn program_source(stmts: &[S]) -> String {
    let mut out = String::new();
    for s in stmts {
        match s {
            S::Assign(v, e) => out.push_str(&format!("{v} = {}\n", src(e))),
            S::Print(args) => {
                out.push_str(&format!("print({})\n", args.iter().map(src).collect::<Vec<_>>().join(", ")))
            }
            S::Expr(e) => out.push_str(&format!("{}\n", src(e))),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ty {
    Num,
    Text,
    Node,
    Nodes,
    Nums,
    Set,
    Bool,
    Dict,
}

const TYS: [Ty; 8] = [Ty::Num, Ty::Text, Ty::Node, Ty::Nodes, Ty::Nums, Ty::Set, Ty::Bool, Ty::Dict];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    graph: &'a RawGraph,
    vars: Vec<(String, Ty)>,
}

impl Gen<'_> {
    fn var_of(&mut self, ty: Ty) -> Option<G> {
        let names: Vec<String> = self.vars.iter().filter(|(_, t)| *t == ty).map(|(n, _)| n.clone()).collect();
        names.choose(self.rng).map(|n| G::Var(n.clone()))
    }

    fn pick(&mut self, tys: &[Ty]) -> Ty {
        *tys.choose(self.rng).unwrap()
    }

    fn node_id(&mut self) -> String {
        self.graph.nodes.choose(self.rng).unwrap().id.clone()
    }

    fn etype(&mut self) -> G {
        G::Str(EDGE_TYPES.choose(self.rng).unwrap().to_string())
    }

    fn word(&mut self) -> G {
        G::Str(WORDS.choose(self.rng).unwrap().to_string())
    }

    fn expr(&mut self, ty: Ty, depth: usize) -> G {
        if depth > 0 && self.rng.gen_bool(0.04) {
            let wild = *TYS.choose(self.rng).unwrap();
            return self.expr(wild, depth - 1);
        }
        if self.rng.gen_bool(0.3) {
            if let Some(v) = self.var_of(ty) {
                return v;
            }
        }
        let leaf = depth == 0;
        let d = depth.saturating_sub(1);
        let r = self.rng.gen_range(0..if leaf { 2 } else { 8 });
        match ty {
            Ty::Num => match r {
                0 => G::Num(self.rng.gen_range(0..20) as f64),
                1 => G::Num(self.rng.gen_range(0..20) as f64 / 4.0),
                2 => {
                    let op = *["+", "-", "*", "/"].choose(self.rng).unwrap();
                    G::Bin(op, Box::new(self.expr(Ty::Num, d)), Box::new(self.expr(Ty::Num, d)))
                }
                3 => G::Call("len", vec![{ let t = self.pick(&[Ty::Nodes, Ty::Set, Ty::Text]); self.expr(t, d) }]),
                4 => G::Call("NodeDegree", vec![self.expr(Ty::Node, d), self.etype()]),
                5 => G::Call(*["sum", "min", "max"].choose(self.rng).unwrap(), vec![self.expr(Ty::Nums, d)]),
                6 => G::Neg(Box::new(self.expr(Ty::Num, d))),
                _ => G::Index(
                    Box::new(self.expr(Ty::Nums, d)),
                    Box::new(G::Num(self.rng.gen_range(-2..3) as f64)),
                ),
            },
            Ty::Text => match r {
                0 => self.word(),
                1 => G::Str(String::new()),
                2 => G::Bin("+", Box::new(self.expr(Ty::Text, d)), Box::new(self.expr(Ty::Text, d))),
                3 => G::Index(
                    Box::new(G::Call("NodeFeature", vec![G::List(vec![self.expr(Ty::Node, d)]), G::Str("title".into())])),
                    Box::new(G::Num(0.0)),
                ),
                4 => G::Call("NodeInfo", vec![self.expr(Ty::Node, d)]),
                5 => G::Index(Box::new(self.expr(Ty::Text, d)), Box::new(G::Num(self.rng.gen_range(-1..4) as f64))),
                6 => G::Call(*["min", "max"].choose(self.rng).unwrap(), vec![self.expr(Ty::Nodes, d)]),
                _ => G::Index(Box::new(self.expr(Ty::Dict, d)), Box::new(G::Str("k".into()))),
            },
            Ty::Node => match r {
                0 => G::Str(self.node_id()),
                1 => {
                    let n = self.graph.nodes.choose(self.rng).unwrap();
                    G::Call("RetrieveNode", vec![G::Str(RawGraph::text_of(n))])
                }
                2 | 3 => G::Index(Box::new(self.expr(Ty::Nodes, d)), Box::new(G::Num(self.rng.gen_range(-1..2) as f64))),
                _ => {
                    let n = self.graph.nodes.choose(self.rng).unwrap();
                    G::Call("RetrieveNode", vec![G::Str(RawGraph::text_of(n))])
                }
            },
            Ty::Nodes => match r {
                0 => G::List((0..self.rng.gen_range(0..4)).map(|_| G::Str(self.node_id())).collect()),
                1 | 2 | 3 => G::Call("NeighbourCheck", vec![self.expr(Ty::Node, d), self.etype()]),
                4 => G::Call("sorted", vec![{ let t = self.pick(&[Ty::Nodes, Ty::Set]); self.expr(t, d) }]),
                5 => G::Bin("+", Box::new(self.expr(Ty::Nodes, d)), Box::new(self.expr(Ty::Nodes, d))),
                6 => G::Call("list", vec![self.expr(Ty::Set, d)]),
                _ => G::List(vec![self.expr(Ty::Node, d), self.expr(Ty::Node, d)]),
            },
            Ty::Nums => match r {
                0 => G::List((0..self.rng.gen_range(0..4)).map(|_| G::Num(self.rng.gen_range(0..9) as f64)).collect()),
                1 => G::List(vec![self.expr(Ty::Num, d), self.expr(Ty::Num, d)]),
                _ => {
                    let f = *FEATURES.choose(self.rng).unwrap();
                    let f = if self.rng.gen_bool(0.6) { "price" } else { f };
                    G::Call("NodeFeature", vec![self.expr(Ty::Nodes, d), G::Str(f.into())])
                }
            },
            Ty::Set => match r {
                0 => G::Set((0..self.rng.gen_range(1..4)).map(|_| G::Str(self.node_id())).collect()),
                1 => G::Call("set", vec![]),
                2 | 3 => G::Call("set", vec![{ let t = self.pick(&[Ty::Nodes, Ty::Nums, Ty::Text]); self.expr(t, d) }]),
                _ => {
                    let op = *["&", "|", "-"].choose(self.rng).unwrap();
                    G::Bin(op, Box::new(self.expr(Ty::Set, d)), Box::new(self.expr(Ty::Set, d)))
                }
            },
            Ty::Bool => match r {
                0 => G::Bool(self.rng.gen_bool(0.5)),
                1 => G::Bool(false),
                2 | 3 => {
                    let op = *["==", "!=", "<", "<=", ">", ">="].choose(self.rng).unwrap();
                    let t = *[Ty::Num, Ty::Text, Ty::Node, Ty::Nodes].choose(self.rng).unwrap();
                    G::Bin(op, Box::new(self.expr(t, d)), Box::new(self.expr(t, d)))
                }
                4 | 5 => {
                    let hay = *[Ty::Nodes, Ty::Set, Ty::Text, Ty::Dict].choose(self.rng).unwrap();
                    G::Bin("in", Box::new(self.expr(Ty::Node, d)), Box::new(self.expr(hay, d)))
                }
                _ => {
                    let op = *["&", "|"].choose(self.rng).unwrap();
                    G::Bin(op, Box::new(self.expr(Ty::Bool, d)), Box::new(self.expr(Ty::Bool, d)))
                }
            },
            Ty::Dict => {
                let n = if leaf { 1 } else { self.rng.gen_range(1..4) };
                let mut pairs = vec![(G::Str("k".into()), self.expr(Ty::Text, d))];
                for _ in 1..n {
                    let t = *TYS.choose(self.rng).unwrap();
                    let key = if self.rng.gen_bool(0.5) { self.word() } else { self.expr(Ty::Node, d) };
                    pairs.push((key, self.expr(t, d)));
                }
                G::Dict(pairs)
            }
        }
    }

    fn program(&mut self) -> Vec<S> {
        let n = self.rng.gen_range(2..9);
        let mut out = Vec::new();
        for _ in 0..n {
            let depth = self.rng.gen_range(1..4);
            match self.rng.gen_range(0..10) {
                0..=4 => {
                    let ty = *TYS.choose(self.rng).unwrap();
                    let name = if !self.vars.is_empty() && self.rng.gen_bool(0.2) {
                        self.vars.choose(self.rng).unwrap().0.clone()
                    } else {
                        format!("x{}", self.vars.len())
                    };
                    let e = self.expr(ty, depth);
                    self.vars.retain(|(n, _)| *n != name);
                    self.vars.push((name.clone(), ty));
                    out.push(S::Assign(name, e));
                }
                5..=8 => {
                    let k = self.rng.gen_range(1..4);
                    let args = (0..k)
                        .map(|_| {
                            let t = *TYS.choose(self.rng).unwrap();
                            self.expr(t, depth)
                        })
                        .collect();
                    out.push(S::Print(args));
                }
                _ => {
                    let t = *TYS.choose(self.rng).unwrap();
                    out.push(S::Expr(self.expr(t, depth)));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------- reference

#[derive(Debug, Clone)]
enum RV {
    Num(f64),
    Text(String),
    Bool(bool),
    Missing,
    List(Vec<RV>),
    /// Scalars, ascending and distinct under `key_cmp`.
    Set(Vec<RV>),
    /// Ascending by key.
    Dict(Vec<(String, RV)>),
}

struct Fail;

type R<T> = Result<T, Fail>;

fn show(v: &RV) -> String {
    let seq = |items: &[RV]| items.iter().map(show).collect::<Vec<_>>().join(", ");
    match v {
        RV::Num(n) => show_num(*n),
        RV::Text(s) => s.clone(),
        RV::Bool(true) => "True".into(),
        RV::Bool(false) => "False".into(),
        RV::Missing => "Missing".into(),
        RV::List(items) => format!("[{}]", seq(items)),
        RV::Set(items) if items.is_empty() => "set()".into(),
        RV::Set(items) => format!("{{{}}}", seq(items)),
        RV::Dict(pairs) => format!(
            "{{{}}}",
            pairs.iter().map(|(k, v)| format!("{k}: {}", show(v))).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn is_scalar(v: &RV) -> bool {
    matches!(v, RV::Num(_) | RV::Text(_) | RV::Bool(_) | RV::Missing)
}

fn scalar_rank(v: &RV) -> u8 {
    match v {
        RV::Missing => 0,
        RV::Bool(_) => 1,
        RV::Num(_) => 2,
        _ => 3,
    }
}

fn key_cmp(a: &RV, b: &RV) -> Ordering {
    match (a, b) {
        (RV::Bool(x), RV::Bool(y)) => x.cmp(y),
        (RV::Num(x), RV::Num(y)) => {
            let z = |n: f64| if n == 0.0 { 0.0 } else { n };
            z(*x).total_cmp(&z(*y))
        }
        (RV::Text(x), RV::Text(y)) => x.cmp(y),
        _ => scalar_rank(a).cmp(&scalar_rank(b)),
    }
}

fn normalise(v: RV) -> RV {
    match v {
        RV::Num(n) if n == 0.0 => RV::Num(0.0),
        other => other,
    }
}

fn make_set(items: Vec<RV>) -> R<RV> {
    let mut out: Vec<RV> = Vec::new();
    for v in items {
        if !is_scalar(&v) {
            return Err(Fail);
        }
        let v = normalise(v);
        match out.binary_search_by(|probe| key_cmp(probe, &v)) {
            Ok(_) => {}
            Err(i) => out.insert(i, v),
        }
    }
    Ok(RV::Set(out))
}

fn set_has(items: &[RV], v: &RV) -> bool {
    items.iter().any(|x| key_cmp(x, v) == Ordering::Equal)
}

fn eq(a: &RV, b: &RV) -> bool {
    match (a, b) {
        (RV::Missing, _) | (_, RV::Missing) => false,
        (RV::Num(x), RV::Num(y)) => x == y,
        (RV::Bool(x), RV::Bool(y)) => x == y,
        (RV::Text(x), RV::Text(y)) => x == y,
        (RV::List(x), RV::List(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| eq(p, q)),
        (RV::Set(x), RV::Set(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| key_cmp(p, q) == Ordering::Equal),
        (RV::Dict(x), RV::Dict(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.0 == q.0 && eq(&p.1, &q.1)),
        _ => false,
    }
}

fn order(a: &RV, b: &RV) -> R<Ordering> {
    match (a, b) {
        (RV::Num(x), RV::Num(y)) => x.partial_cmp(y).ok_or(Fail),
        (RV::Text(x), RV::Text(y)) => Ok(x.cmp(y)),
        _ => Err(Fail),
    }
}

fn items_of(v: RV) -> R<Vec<RV>> {
    match v {
        RV::List(items) | RV::Set(items) => Ok(items),
        RV::Dict(pairs) => Ok(pairs.into_iter().map(|(k, _)| RV::Text(k)).collect()),
        RV::Text(s) => Ok(s.chars().map(|c| RV::Text(c.to_string())).collect()),
        _ => Err(Fail),
    }
}

fn ids_of(v: &RV) -> R<Vec<String>> {
    match v {
        RV::Text(s) => Ok(vec![s.clone()]),
        RV::List(items) | RV::Set(items) => items
            .iter()
            .map(|i| match i {
                RV::Text(s) => Ok(s.clone()),
                _ => Err(Fail),
            })
            .collect(),
        _ => Err(Fail),
    }
}

fn text(v: &RV) -> R<String> {
    match v {
        RV::Text(s) => Ok(s.clone()),
        _ => Err(Fail),
    }
}

fn position(len: usize, i: &RV) -> R<usize> {
    let RV::Num(n) = i else { return Err(Fail) };
    if n.fract() != 0.0 {
        return Err(Fail);
    }
    let n = *n as i64;
    let k = if n < 0 { n + len as i64 } else { n };
    if k < 0 || k >= len as i64 {
        return Err(Fail);
    }
    Ok(k as usize)
}

struct Ref<'a> {
    graph: &'a RawGraph,
    env: HashMap<String, RV>,
    out: String,
}

impl Ref<'_> {
    fn eval(&mut self, e: &G) -> R<RV> {
        Ok(match e {
            G::Num(n) => RV::Num(*n),
            G::Str(s) => RV::Text(s.clone()),
            G::Bool(b) => RV::Bool(*b),
            G::Var(v) => self.env.get(v).cloned().ok_or(Fail)?,
            G::List(items) => RV::List(items.iter().map(|i| self.eval(i)).collect::<R<_>>()?),
            G::Set(items) => {
                let vals = items.iter().map(|i| self.eval(i)).collect::<R<Vec<_>>>()?;
                make_set(vals)?
            }
            G::Dict(pairs) => {
                let mut map: Vec<(String, RV)> = Vec::new();
                for (k, v) in pairs {
                    let key = text(&self.eval(k)?)?;
                    let val = self.eval(v)?;
                    match map.iter_mut().find(|(x, _)| *x == key) {
                        Some(slot) => slot.1 = val,
                        None => map.push((key, val)),
                    }
                }
                map.sort_by(|a, b| a.0.cmp(&b.0));
                RV::Dict(map)
            }
            G::Neg(x) => match self.eval(x)? {
                RV::Num(n) => RV::Num(-n),
                _ => return Err(Fail),
            },
            G::Bin(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                binop(op, a, b)?
            }
            G::Index(t, i) => {
                let t = self.eval(t)?;
                let i = self.eval(i)?;
                match t {
                    RV::List(items) => items[position(items.len(), &i)?].clone(),
                    RV::Dict(pairs) => {
                        let k = text(&i)?;
                        pairs.into_iter().find(|(x, _)| *x == k).map(|(_, v)| v).ok_or(Fail)?
                    }
                    RV::Text(s) => {
                        let chars: Vec<char> = s.chars().collect();
                        RV::Text(chars[position(chars.len(), &i)?].to_string())
                    }
                    _ => return Err(Fail),
                }
            }
            G::Call(f, args) => {
                let vals = args.iter().map(|a| self.eval(a)).collect::<R<Vec<_>>>()?;
                self.call(f, vals)?
            }
        })
    }

    fn call(&self, f: &str, mut a: Vec<RV>) -> R<RV> {
        let want = |n: usize| if a.len() == n { Ok(()) } else { Err(Fail) };
        let g = self.graph;
        Ok(match f {
            "RetrieveNode" => {
                want(1)?;
                let q = text(&a[0])?;
                let n = g.nodes.iter().find(|n| RawGraph::text_of(n) == q).expect("queries are node texts");
                RV::Text(n.id.clone())
            }
            "NodeInfo" => {
                want(1)?;
                match &a[0] {
                    RV::List(_) | RV::Set(_) => {
                        let ids = ids_of(&a[0])?;
                        RV::List(ids.iter().map(|id| g.chunk(id).map(RV::Text).ok_or(Fail)).collect::<R<_>>()?)
                    }
                    v => RV::Text(g.chunk(&text(v)?).ok_or(Fail)?),
                }
            }
            "NodeFeature" => {
                want(2)?;
                let ids = ids_of(&a[0])?;
                let name = text(&a[1])?;
                RV::List(ids.iter().map(|id| g.feature(id, &name).ok_or(Fail)).collect::<R<_>>()?)
            }
            "NodeDegree" | "NeighbourCheck" => {
                want(2)?;
                let id = text(&a[0])?;
                let t = text(&a[1])?;
                g.node(&id).ok_or(Fail)?;
                let nbs = g.out_neighbours(&id, &t);
                if f == "NodeDegree" {
                    RV::Num(nbs.len() as f64)
                } else {
                    RV::List(nbs.into_iter().map(RV::Text).collect())
                }
            }
            "len" => {
                want(1)?;
                RV::Num(match &a[0] {
                    RV::List(x) | RV::Set(x) => x.len(),
                    RV::Dict(x) => x.len(),
                    RV::Text(s) => s.chars().count(),
                    _ => return Err(Fail),
                } as f64)
            }
            "set" | "list" if a.is_empty() => {
                if f == "set" {
                    RV::Set(Vec::new())
                } else {
                    RV::List(Vec::new())
                }
            }
            "set" => {
                want(1)?;
                make_set(items_of(a.remove(0))?)?
            }
            "list" => {
                want(1)?;
                RV::List(items_of(a.remove(0))?)
            }
            "sorted" => {
                want(1)?;
                let mut items = items_of(a.remove(0))?;
                if !items.iter().all(is_scalar) {
                    return Err(Fail);
                }
                items.sort_by(key_cmp);
                RV::List(items)
            }
            "sum" => {
                want(1)?;
                let mut total = 0.0;
                for v in items_of(a.remove(0))? {
                    match v {
                        RV::Num(n) => total += n,
                        _ => return Err(Fail),
                    }
                }
                RV::Num(total)
            }
            "min" | "max" => {
                let items = if a.len() == 1 { items_of(a.remove(0))? } else { a };
                let mut it = items.into_iter();
                let mut best = it.next().ok_or(Fail)?;
                for v in it {
                    let o = order(&v, &best)?;
                    if (f == "min" && o == Ordering::Less) || (f == "max" && o == Ordering::Greater) {
                        best = v;
                    }
                }
                best
            }
            other => unreachable!("generator never emits {other}"),
        })
    }

    fn run(&mut self, prog: &[S]) {
        for s in prog {
            let ok = match s {
                S::Assign(v, e) => self.eval(e).map(|x| {
                    self.env.insert(v.clone(), x);
                }),
                S::Expr(e) => self.eval(e).map(|_| ()),
                S::Print(args) => args
                    .iter()
                    .map(|a| self.eval(a).map(|v| show(&v)))
                    .collect::<R<Vec<_>>>()
                    .map(|parts| {
                        self.out.push_str(&parts.join(" "));
                        self.out.push('\n');
                    }),
            };
            if ok.is_err() {
                return;
            }
        }
    }
}

fn binop(op: &str, a: RV, b: RV) -> R<RV> {
    let missing = matches!(a, RV::Missing) || matches!(b, RV::Missing);
    Ok(match op {
        "==" => RV::Bool(eq(&a, &b)),
        "!=" => RV::Bool(!missing && !eq(&a, &b)),
        "<" | "<=" | ">" | ">=" => {
            if missing {
                return Ok(RV::Bool(false));
            }
            let o = order(&a, &b)?;
            RV::Bool(match op {
                "<" => o == Ordering::Less,
                "<=" => o != Ordering::Greater,
                ">" => o == Ordering::Greater,
                _ => o != Ordering::Less,
            })
        }
        "in" => {
            if matches!(a, RV::Missing) {
                return Ok(RV::Bool(false));
            }
            RV::Bool(match &b {
                RV::List(items) => items.iter().any(|i| eq(i, &a)),
                RV::Set(items) => is_scalar(&a) && set_has(items, &a),
                RV::Dict(pairs) => matches!(&a, RV::Text(k) if pairs.iter().any(|(x, _)| x == k)),
                RV::Text(hay) => match &a {
                    RV::Text(needle) => hay.contains(needle.as_str()),
                    _ => return Err(Fail),
                },
                _ => return Err(Fail),
            })
        }
        "+" | "-" | "*" | "/" => {
            if missing {
                return Err(Fail);
            }
            match (op, a, b) {
                ("+", RV::Num(x), RV::Num(y)) => RV::Num(x + y),
                ("-", RV::Num(x), RV::Num(y)) => RV::Num(x - y),
                ("*", RV::Num(x), RV::Num(y)) => RV::Num(x * y),
                ("/", RV::Num(_), RV::Num(y)) if y == 0.0 => return Err(Fail),
                ("/", RV::Num(x), RV::Num(y)) => RV::Num(x / y),
                ("+", RV::List(x), RV::List(y)) => RV::List(x.into_iter().chain(y).collect()),
                ("-", RV::Set(x), RV::Set(y)) => RV::Set(x.into_iter().filter(|v| !set_has(&y, v)).collect()),
                ("+", RV::Text(x), RV::Text(y)) => RV::Text(x + &y),
                _ => return Err(Fail),
            }
        }
        "&" | "|" => match (a, b) {
            (RV::Set(x), RV::Set(y)) => {
                if op == "&" {
                    RV::Set(x.into_iter().filter(|v| set_has(&y, v)).collect())
                } else {
                    make_set(x.into_iter().chain(y).collect())?
                }
            }
            (RV::Bool(x), RV::Bool(y)) => RV::Bool(if op == "&" { x && y } else { x || y }),
            _ => return Err(Fail),
        },
        other => unreachable!("generator never emits {other}"),
    })
}

// ---------------------------------------------------------------- driver

pub struct OracleStats {
    pub programs: usize,
    /// Programs the reference ran to the end without an error.
    pub clean: usize,
    pub printed_lines: usize,
}

/// Compares interpreter and reference stdout on `programs` programs spread
/// over `programs / 20` random 50-node graphs.
pub fn compare(seed: u64, programs: usize) -> Result<OracleStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = OracleStats {
        programs: 0,
        clean: 0,
        printed_lines: 0,
    };
    while stats.programs < programs {
        let raw = RawGraph::random(&mut rng, 50);
        let graph = Arc::new(PropertyGraph::from_jsonl(&raw.to_jsonl()).map_err(|e| e.to_string())?);
        let index = Arc::new(VectorIndex::build(&graph, &IndexConfig::default()));
        let api = Retriever::new(graph, index, RetrieverConfig::default());
        for _ in 0..20.min(programs - stats.programs) {
            let prog = Gen {
                rng: &mut rng,
                graph: &raw,
                vars: Vec::new(),
            }
            .program();
            let source = program_source(&prog);
            let parsed = parse(&source).map_err(|e| format!("parse error {e:?} in:\n{source}"))?;
            let got = execute(&parsed, &api, ExecOptions::default());
            let mut reference = Ref {
                graph: &raw,
                env: HashMap::new(),
                out: String::new(),
            };
            reference.run(&prog);
            if got.stdout != reference.out {
                return Err(format!(
                    "stdout differs for:\n{source}\ninterpreter:\n{}\nreference:\n{}\nerror: {:?}",
                    got.stdout, reference.out, got.error
                ));
            }
            stats.programs += 1;
            stats.clean += usize::from(got.error.is_none());
            stats.printed_lines += got.stdout.lines().count();
        }
    }
    Ok(stats)
}
