//! Seeded question workloads with expected answers computed straight from
//! the graph.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::QuestionKind;
use crate::graph::{NodeId, PropertyGraph};
use crate::llm::{ALSO_VIEWED, NAME, TITLE, VIEWED};
use crate::num::format_number;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("graph too small: {0}")]
    GraphTooSmall(String),
    #[error("malformed workload line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadQuestion {
    pub id: String,
    pub text: String,
    pub kind: QuestionKind,
    /// Distinct nodes whose facts the answer depends on.
    pub required_facts: usize,
    pub expected_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Workload {
    pub questions: Vec<WorkloadQuestion>,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        self.questions
            .iter()
            .map(|q| serde_json::to_string(q).expect("questions serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, WorkloadError> {
        let mut questions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            questions.push(serde_json::from_str(line).map_err(|e| WorkloadError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Workload { questions })
    }

    pub fn ids(&self) -> Vec<String> {
        self.questions.iter().map(|q| q.id.clone()).collect()
    }
}

/// Collapses runs of whitespace so answers compare by content.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn text_attr(g: &PropertyGraph, id: &str, attr: &str) -> Option<String> {
    g.attribute(id, attr).ok().flatten().map(|v| v.to_string())
}

fn num_attr(g: &PropertyGraph, id: &str, attr: &str) -> Option<f64> {
    g.attribute(id, attr).ok().flatten().and_then(|v| v.as_num())
}

fn nbrs(g: &PropertyGraph, id: &str, edge: &str) -> Vec<NodeId> {
    g.neighbours(id, edge).map(<[NodeId]>::to_vec).unwrap_or_default()
}

/// The attribute exactly as a one-element feature list prints.
fn attribute_answer(g: &PropertyGraph, id: &str, attr: &str) -> Option<String> {
    let v = g.attribute(id, attr).ok().flatten()?;
    Some(match v.as_num() {
        Some(n) => format!("[{}]", format_number(n)),
        None => format!("[{v}]"),
    })
}

/// Item sharing an `also_viewed` edge with the most history items, history
/// excluded, ties to the smallest id.
fn recommend(g: &PropertyGraph, history: &BTreeSet<NodeId>) -> Option<String> {
    let mut votes: BTreeMap<NodeId, usize> = BTreeMap::new();
    for h in history {
        for n in nbrs(g, h, ALSO_VIEWED).into_iter().collect::<BTreeSet<_>>() {
            if !history.contains(&n) {
                *votes.entry(n).or_default() += 1;
            }
        }
    }
    let top = *votes.values().max()?;
    let (winner, _) = votes.into_iter().find(|(_, v)| *v == top)?;
    text_attr(g, &winner, TITLE)
}

fn extreme(g: &PropertyGraph, items: &[NodeId], attr: &str, highest: bool) -> Option<String> {
    let mut scored: Vec<(f64, &NodeId)> = items
        .iter()
        .filter_map(|i| num_attr(g, i, attr).map(|v| (v, i)))
        .collect();
    scored.sort_by(|a, b| {
        let by_value = if highest { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
        by_value.then_with(|| a.1.cmp(b.1))
    });
    scored.first().and_then(|(_, id)| text_attr(g, id, TITLE))
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    RecommendForUser,
    RecommendFromHistory,
    Extreme,
}

/// Generates `n` questions, a `nondet_ratio` share of them non-deterministic.
pub fn generate_workload(
    seed: u64,
    n: usize,
    nondet_ratio: f64,
    graph: &PropertyGraph,
) -> Result<Workload, WorkloadError> {
    let items: Vec<&str> = graph.nodes().filter(|r| r.node_type == "item").map(|r| r.id.as_str()).collect();
    let users: Vec<&str> = graph
        .nodes()
        .filter(|r| r.node_type == "user" && nbrs(graph, &r.id, VIEWED).len() >= 2)
        .map(|r| r.id.as_str())
        .collect();
    if items.len() < 2 {
        return Err(WorkloadError::GraphTooSmall("fewer than two items".into()));
    }
    if users.is_empty() && nondet_ratio > 0.0 {
        return Err(WorkloadError::GraphTooSmall("no user viewed two items".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nondet = (n as f64 * nondet_ratio.clamp(0.0, 1.0)).round() as usize;
    let mut kinds: Vec<bool> = (0..n).map(|i| i < nondet).collect();
    kinds.shuffle(&mut rng);

    let mut questions = Vec::with_capacity(n);
    for (i, is_nondet) in kinds.into_iter().enumerate() {
        let id = format!("q{i:04}");
        let q = if is_nondet {
            draw_nondet(&mut rng, graph, &users, id)?
        } else {
            let item = *items.choose(&mut rng).expect("items");
            let attr = if rng.gen_bool(0.5) { "price" } else { "brand" };
            let title = text_attr(graph, item, TITLE).unwrap_or_else(|| item.to_string());
            WorkloadQuestion {
                text: format!("What is the {attr} of {title}?"),
                kind: QuestionKind::Deterministic,
                required_facts: 1,
                expected_answer: attribute_answer(graph, item, attr),
                id,
            }
        };
        questions.push(q);
    }
    Ok(Workload { questions })
}

fn draw_nondet(
    rng: &mut ChaCha8Rng,
    g: &PropertyGraph,
    users: &[&str],
    id: String,
) -> Result<WorkloadQuestion, WorkloadError> {
    let shapes = [Shape::RecommendForUser, Shape::RecommendFromHistory, Shape::Extreme];
    for _ in 0..1000 {
        let user = *users.choose(rng).expect("users");
        let name = text_attr(g, user, NAME).unwrap_or_else(|| user.to_string());
        let viewed = nbrs(g, user, VIEWED);
        let (text, required, answer) = match *shapes.choose(rng).expect("shapes") {
            Shape::RecommendForUser => (
                format!("Recommend the next item for {name}."),
                viewed.len(),
                recommend(g, &viewed.iter().cloned().collect()),
            ),
            Shape::Extreme => {
                let highest = rng.gen_bool(0.5);
                (
                    format!(
                        "Which item viewed by {name} has the {} price?",
                        if highest { "highest" } else { "lowest" }
                    ),
                    viewed.len(),
                    extreme(g, &viewed, "price", highest),
                )
            }
            Shape::RecommendFromHistory => {
                let take = rng.gen_range(2..=viewed.len().min(4));
                let mut history = viewed.clone();
                history.shuffle(rng);
                history.truncate(take);
                let titles: Vec<String> = history.iter().filter_map(|h| text_attr(g, h, TITLE)).collect();
                (
                    format!("Recommend the next item based on user history: {}", titles.join(", ")),
                    take,
                    recommend(g, &history.into_iter().collect()),
                )
            }
        };
        if answer.is_some() {
            return Ok(WorkloadQuestion {
                id,
                text,
                kind: QuestionKind::NonDeterministic,
                required_facts: required,
                expected_answer: answer,
            });
        }
    }
    Err(WorkloadError::GraphTooSmall("no answerable non-deterministic question".into()))
}
