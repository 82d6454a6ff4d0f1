//! Heuristic stand-in for a language model. It understands a fixed set of
//! question shapes over the catalogue schema (users `viewed` items, items
//! `also_viewed` items) and answers every agent prompt of one deployment.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::{stream_lines, CompletionRequest, CompletionResult, Provider, ProviderError};
use crate::agents::{AgentKind, Chunking, Templates, REPAIR_MARKER};
use crate::facts::{single_value, Attrs, Facts};
use crate::graph::NodeId;
use crate::snippet::quote_str;

pub const VIEWED: &str = "viewed";
pub const ALSO_VIEWED: &str = "also_viewed";
pub const TITLE: &str = "title";
pub const NAME: &str = "name";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Question {
    /// "What is the <attr> of <text>?"
    Attribute { attr: String, text: String },
    /// "Recommend the next item for <name>."
    RecommendForUser { name: String },
    /// "Recommend the next item based on user history: <t1>, <t2>"
    RecommendFromHistory { titles: Vec<String> },
    /// "Which item viewed by <name> has the highest|lowest <attr>?"
    Extreme { name: String, attr: String, highest: bool },
}

struct QuestionPatterns {
    attribute: Regex,
    for_user: Regex,
    history: Regex,
    extreme: Regex,
}

fn question_patterns() -> &'static QuestionPatterns {
    static P: OnceLock<QuestionPatterns> = OnceLock::new();
    P.get_or_init(|| QuestionPatterns {
        attribute: Regex::new(r"^What is the (\w+) of (.+?)\?$").expect("static regex"),
        for_user: Regex::new(r"^Recommend the next item for (.+?)\.?$").expect("static regex"),
        history: Regex::new(r"^Recommend the next item based on user history: (.+?)\.?$").expect("static regex"),
        extreme: Regex::new(r"^Which item viewed by (.+?) has the (highest|lowest) (\w+)\?$")
            .expect("static regex"),
    })
}

pub fn parse_question(q: &str) -> Option<Question> {
    let p = question_patterns();
    let q = q.trim();
    if let Some(c) = p.history.captures(q) {
        return Some(Question::RecommendFromHistory {
            titles: c[1].split(',').map(|t| t.trim().to_string()).collect(),
        });
    }
    if let Some(c) = p.for_user.captures(q) {
        return Some(Question::RecommendForUser { name: c[1].to_string() });
    }
    if let Some(c) = p.extreme.captures(q) {
        return Some(Question::Extreme {
            name: c[1].to_string(),
            attr: c[3].to_string(),
            highest: &c[2] == "highest",
        });
    }
    p.attribute.captures(q).map(|c| Question::Attribute {
        attr: c[1].to_string(),
        text: c[2].to_string(),
    })
}

/// A single missing fact.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Need {
    /// Node id of `text`; `then` is what will be asked about it next.
    Retrieve { text: String, then: Then },
    Neighbours { id: NodeId, edge: String },
    Feature { id: NodeId, attr: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Then {
    Neighbours(String),
    Feature(String),
}

enum Plan {
    Need(Need),
    Finish(String),
}

fn num(s: &str) -> Option<f64> {
    s.parse().ok()
}

/// Item adjacent to the most of `history`, excluding `history`; ties go to
/// the smallest id.
fn most_common(history: &BTreeSet<NodeId>, adjacency: &[Vec<NodeId>]) -> Option<NodeId> {
    let mut counts: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for list in adjacency {
        for n in list.iter().collect::<BTreeSet<_>>() {
            if !history.contains(n) {
                *counts.entry(n).or_default() += 1;
            }
        }
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(id, _)| id.clone())
}

fn pick_extreme(values: &[(NodeId, f64)], highest: bool) -> Option<NodeId> {
    let mut best: Option<&(NodeId, f64)> = None;
    for v in values {
        let better = match best {
            None => true,
            Some(b) if highest => v.1 > b.1 || (v.1 == b.1 && v.0 < b.0),
            Some(b) => v.1 < b.1 || (v.1 == b.1 && v.0 < b.0),
        };
        if better {
            best = Some(v);
        }
    }
    best.map(|b| b.0.clone())
}

/// Next fact to fetch, one graph call at a time.
fn plan_facts(q: &Question, f: &Facts) -> Plan {
    let retrieve = |text: &str, then: Then| Plan::Need(Need::Retrieve { text: text.to_string(), then });
    let title_of = |id: &NodeId| match f.features.get(&(id.clone(), TITLE.to_string())) {
        Some(v) => Plan::Finish(single_value(v).unwrap_or(v).to_string()),
        None => Plan::Need(Need::Feature {
            id: id.clone(),
            attr: TITLE.into(),
        }),
    };
    match q {
        Question::Attribute { attr, text } => {
            let Some(id) = f.ids.get(text) else {
                return retrieve(text, Then::Feature(attr.clone()));
            };
            match f.features.get(&(id.clone(), attr.clone())) {
                Some(v) => Plan::Finish(v.clone()),
                None => Plan::Need(Need::Feature {
                    id: id.clone(),
                    attr: attr.clone(),
                }),
            }
        }
        Question::RecommendForUser { name } | Question::Extreme { name, .. } => {
            let Some(user) = f.ids.get(name) else {
                return retrieve(name, Then::Neighbours(VIEWED.into()));
            };
            let Some(viewed) = f.neighbours.get(&(user.clone(), VIEWED.to_string())) else {
                return Plan::Need(Need::Neighbours {
                    id: user.clone(),
                    edge: VIEWED.into(),
                });
            };
            let mut viewed: Vec<NodeId> = viewed.clone();
            viewed.sort();
            if let Question::Extreme { attr, highest, .. } = q {
                let mut values = Vec::new();
                for v in &viewed {
                    match f.features.get(&(v.clone(), attr.clone())) {
                        Some(x) => values.push((v.clone(), single_value(x).and_then(num).unwrap_or(f64::NAN))),
                        None => {
                            return Plan::Need(Need::Feature {
                                id: v.clone(),
                                attr: attr.clone(),
                            })
                        }
                    }
                }
                values.retain(|(_, x)| !x.is_nan());
                return match pick_extreme(&values, *highest) {
                    Some(id) => title_of(&id),
                    None => Plan::Finish("none".into()),
                };
            }
            let mut lists = Vec::new();
            for v in &viewed {
                match f.neighbours.get(&(v.clone(), ALSO_VIEWED.to_string())) {
                    Some(l) => lists.push(l.clone()),
                    None => {
                        return Plan::Need(Need::Neighbours {
                            id: v.clone(),
                            edge: ALSO_VIEWED.into(),
                        })
                    }
                }
            }
            match most_common(&viewed.into_iter().collect(), &lists) {
                Some(id) => title_of(&id),
                None => Plan::Finish("none".into()),
            }
        }
        Question::RecommendFromHistory { titles } => {
            let mut ids = BTreeSet::new();
            let mut lists = Vec::new();
            for t in titles {
                let Some(id) = f.ids.get(t) else {
                    return retrieve(t, Then::Neighbours(ALSO_VIEWED.into()));
                };
                match f.neighbours.get(&(id.clone(), ALSO_VIEWED.to_string())) {
                    Some(l) => lists.push(l.clone()),
                    None => {
                        return Plan::Need(Need::Neighbours {
                            id: id.clone(),
                            edge: ALSO_VIEWED.into(),
                        })
                    }
                }
                ids.insert(id.clone());
            }
            match most_common(&ids, &lists) {
                Some(id) => title_of(&id),
                None => Plan::Finish("none".into()),
            }
        }
    }
}

fn is_item(a: &Attrs) -> bool {
    a.get("type").map(String::as_str) == Some("item")
}

/// Answer from vertex chunks, or the chunk request still missing.
fn plan_chunks(q: &Question, f: &Facts) -> Result<String, String> {
    match q {
        Question::Attribute { attr, text } => {
            let id = f
                .chunk_with(TITLE, text)
                .or_else(|| f.chunk_with(NAME, text))
                .ok_or_else(|| format!("vertex chunk of {text}"))?;
            let v = f.chunks[id].attrs.get(attr).cloned().unwrap_or_else(|| "Missing".into());
            Ok(format!("[{v}]"))
        }
        Question::Extreme { name, attr, highest } => {
            let user = f.chunk_with(NAME, name).ok_or_else(|| format!("vertex chunk of {name}"))?;
            let items: Vec<&(NodeId, Attrs)> =
                f.chunks[user].neighbours.iter().filter(|(_, a)| is_item(a)).collect();
            let values: Vec<(NodeId, f64)> = items
                .iter()
                .filter_map(|(id, a)| a.get(attr).and_then(|v| num(v)).map(|x| (id.clone(), x)))
                .collect();
            let best = pick_extreme(&values, *highest).ok_or_else(|| format!("vertex chunk of {name}"))?;
            Ok(items
                .iter()
                .find(|(id, _)| *id == best)
                .and_then(|(_, a)| a.get(TITLE).cloned())
                .unwrap_or(best))
        }
        Question::RecommendForUser { name } => {
            let missing = || format!("vertex chunks of the items viewed by {name}");
            let user = f.chunk_with(NAME, name).ok_or_else(missing)?;
            let viewed: BTreeSet<NodeId> = f.chunks[user]
                .neighbours
                .iter()
                .filter(|(_, a)| is_item(a))
                .map(|(id, _)| id.clone())
                .collect();
            recommend_from_chunks(f, &viewed).ok_or_else(missing)
        }
        Question::RecommendFromHistory { titles } => {
            let missing = || format!("vertex chunks of {}", titles.join(", "));
            let mut ids = BTreeSet::new();
            for t in titles {
                ids.insert(f.chunk_with(TITLE, t).ok_or_else(missing)?.clone());
            }
            recommend_from_chunks(f, &ids).ok_or_else(missing)
        }
    }
}

fn recommend_from_chunks(f: &Facts, history: &BTreeSet<NodeId>) -> Option<String> {
    let mut lists = Vec::new();
    let mut titles = BTreeMap::new();
    for id in history {
        let chunk = f.chunks.get(id)?;
        let items: Vec<&(NodeId, Attrs)> = chunk.neighbours.iter().filter(|(_, a)| is_item(a)).collect();
        for (n, a) in &items {
            if let Some(t) = a.get(TITLE) {
                titles.insert(n.clone(), t.clone());
            }
        }
        lists.push(items.into_iter().map(|(n, _)| n.clone()).collect());
    }
    let best = most_common(history, &lists)?;
    Some(titles.get(&best).cloned().unwrap_or(best))
}

fn request_text(need: &Need) -> String {
    match need {
        Need::Retrieve { text, then: Then::Neighbours(e) } => format!("{e} neighbours of {text}"),
        Need::Retrieve { text, then: Then::Feature(a) } => format!("{a} of {text}"),
        Need::Neighbours { id, edge } => format!("{edge} neighbours of node {id}"),
        Need::Feature { id, attr } => format!("{attr} of node {id}"),
    }
}

fn thought_text(need: &Need) -> String {
    match need {
        Need::Retrieve { text, .. } => format!("Thought: I need the node id of {text}."),
        Need::Neighbours { id, edge } => format!("Thought: I need the {edge} neighbours of {id}."),
        Need::Feature { id, attr } => format!("Thought: I need the {attr} of {id}."),
    }
}

fn action_text(need: &Need) -> String {
    match need {
        Need::Retrieve { text, .. } => format!("Action: RetrieveNode[{text}]"),
        Need::Neighbours { id, edge } => format!("Action: NeighbourCheck[{id}, {edge}]"),
        Need::Feature { id, attr } => format!("Action: NodeFeature[{id}, {attr}]"),
    }
}

struct RequestPatterns {
    chunks_viewed: Regex,
    chunks_of: Regex,
    chunk_of: Regex,
    nbrs_node: Regex,
    nbrs_text: Regex,
    feature_node: Regex,
    feature_text: Regex,
}

fn request_patterns() -> &'static RequestPatterns {
    static P: OnceLock<RequestPatterns> = OnceLock::new();
    P.get_or_init(|| RequestPatterns {
        chunks_viewed: Regex::new(r"^vertex chunks of the items viewed by (.+)$").expect("static regex"),
        chunks_of: Regex::new(r"^vertex chunks of (.+)$").expect("static regex"),
        chunk_of: Regex::new(r"^vertex chunk of (.+)$").expect("static regex"),
        nbrs_node: Regex::new(r"^(\w+) neighbours of node (\S+)$").expect("static regex"),
        nbrs_text: Regex::new(r"^(\w+) neighbours of (.+)$").expect("static regex"),
        feature_node: Regex::new(r"^(\w+) of node (\S+)$").expect("static regex"),
        feature_text: Regex::new(r"^(\w+) of (.+)$").expect("static regex"),
    })
}

/// Writes the snippet for an action request.
fn snippet_for(request: &str) -> Option<String> {
    let p = request_patterns();
    let r = request.trim();
    if let Some(Question::Attribute { attr, text }) = parse_question(r) {
        return Some(format!(
            "node = RetrieveNode({})\nvalue = NodeFeature([node], {})\nprint(value)\n",
            quote_str(&text),
            quote_str(&attr)
        ));
    }
    if let Some(c) = p.chunks_viewed.captures(r) {
        return Some(format!(
            "user = RetrieveNode({})\nprint(NodeInfo(user))\nfor item in NeighbourCheck(user, {}):\n    print(NodeInfo(item))\n",
            quote_str(&c[1]),
            quote_str(VIEWED)
        ));
    }
    if let Some(c) = p.chunks_of.captures(r) {
        let titles: Vec<&str> = c[1].split(',').map(str::trim).collect();
        let mut s = format!("first = RetrieveNode({})\nprint(NodeInfo(first))\n", quote_str(titles[0]));
        if titles.len() > 1 {
            let rest: Vec<String> = titles[1..].iter().map(|t| quote_str(t)).collect();
            s.push_str(&format!(
                "for title in [{}]:\n    print(NodeInfo(RetrieveNode(title)))\n",
                rest.join(", ")
            ));
        }
        return Some(s);
    }
    if let Some(c) = p.chunk_of.captures(r) {
        return Some(format!("node = RetrieveNode({})\nprint(NodeInfo(node))\n", quote_str(&c[1])));
    }
    if let Some(c) = p.nbrs_node.captures(r) {
        let (edge, id) = (quote_str(&c[1]), quote_str(&c[2]));
        return Some(format!(
            "print({id}, {}, NeighbourCheck({id}, {edge}))\n",
            quote_str(&format!("neighbours {}:", &c[1]))
        ));
    }
    if let Some(c) = p.nbrs_text.captures(r) {
        return Some(format!(
            "node = RetrieveNode({text})\nprint({label}, node)\nprint(node, {what}, NeighbourCheck(node, {edge}))\n",
            text = quote_str(&c[2]),
            label = quote_str(&format!("{} id:", &c[2])),
            what = quote_str(&format!("neighbours {}:", &c[1])),
            edge = quote_str(&c[1]),
        ));
    }
    if let Some(c) = p.feature_node.captures(r) {
        let (attr, id) = (quote_str(&c[1]), quote_str(&c[2]));
        return Some(format!(
            "print({id}, {}, NodeFeature([{id}], {attr}))\n",
            quote_str(&format!("feature {}:", &c[1]))
        ));
    }
    if let Some(c) = p.feature_text.captures(r) {
        return Some(format!(
            "node = RetrieveNode({text})\nprint({label}, node)\nprint(node, {what}, NodeFeature([node], {attr}))\n",
            text = quote_str(&c[2]),
            label = quote_str(&format!("{} id:", &c[2])),
            what = quote_str(&format!("feature {}:", &c[1])),
            attr = quote_str(&c[1]),
        ));
    }
    None
}

/// Offline provider that plays every agent role for one template deployment.
pub struct RuleProvider {
    templates: Arc<Templates>,
}

impl RuleProvider {
    pub fn new(templates: Arc<Templates>) -> Self {
        RuleProvider { templates }
    }

    fn reply(&self, req: &CompletionRequest<'_>) -> Result<String, ProviderError> {
        let t = &self.templates;
        let prefix = match req.agent {
            AgentKind::Classification => t.classification.shared_prefix(),
            AgentKind::Reasoning => t.reasoning.shared_prefix(),
            AgentKind::Action => t.action.shared_prefix(),
            AgentKind::BaselineThought | AgentKind::BaselineAction => t.graphcot.shared_prefix(),
        };
        let rest = req
            .prompt
            .strip_prefix(prefix)
            .ok_or_else(|| ProviderError::Protocol("prompt does not use this deployment's template".into()))?;
        Ok(match req.agent {
            AgentKind::Classification => {
                match parse_question(rest) {
                    Some(Question::Attribute { .. }) => "yes",
                    _ => "no",
                }
                .to_string()
            }
            AgentKind::Reasoning => {
                let (notebook, q) = rest.rsplit_once('\n').unwrap_or(("", rest));
                let Some(question) = parse_question(q) else {
                    return Ok("I do not know how to approach this question.".into());
                };
                let facts = Facts::parse(notebook);
                let outcome = match t.chunking {
                    Chunking::Vertex => plan_chunks(&question, &facts),
                    Chunking::Fact => match plan_facts(&question, &facts) {
                        Plan::Finish(a) => Ok(a),
                        Plan::Need(n) => Err(request_text(&n)),
                    },
                };
                match outcome {
                    Ok(answer) => format!("Finish: {answer}"),
                    Err(missing) => format!("Missing: {missing}"),
                }
            }
            AgentKind::Action => {
                let request = rest.split(REPAIR_MARKER).next().unwrap_or(rest).trim();
                match snippet_for(request) {
                    Some(code) => format!("```\n{code}```"),
                    None => "I cannot write a snippet for this request.".into(),
                }
            }
            AgentKind::BaselineThought | AgentKind::BaselineAction => {
                let (q, history) = rest.split_once('\n').unwrap_or((rest, ""));
                let Some(question) = parse_question(q) else {
                    return Ok("I do not know how to approach this question.".into());
                };
                let plan = plan_facts(&question, &Facts::parse(history));
                match (req.agent, plan) {
                    (AgentKind::BaselineThought, Plan::Need(n)) => thought_text(&n),
                    (AgentKind::BaselineThought, Plan::Finish(_)) => {
                        "Thought: I have every fact I need, so I can answer.".into()
                    }
                    (_, Plan::Need(n)) => action_text(&n),
                    (_, Plan::Finish(a)) => format!("Action: Finish[{a}]"),
                }
            }
        })
    }
}

impl Provider for RuleProvider {
    fn complete(
        &self,
        req: &CompletionRequest<'_>,
        sink: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, ProviderError> {
        let text = self.reply(req)?;
        Ok(stream_lines(req.prompt, text, sink))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_shapes() {
        assert_eq!(
            parse_question("What is the price of alpha widget?"),
            Some(Question::Attribute {
                attr: "price".into(),
                text: "alpha widget".into()
            })
        );
        assert_eq!(
            parse_question("Recommend the next item based on user history: alpha widget, beta widget"),
            Some(Question::RecommendFromHistory {
                titles: vec!["alpha widget".into(), "beta widget".into()]
            })
        );
        assert_eq!(
            parse_question("Recommend the next item for Ann Lee."),
            Some(Question::RecommendForUser { name: "Ann Lee".into() })
        );
        assert_eq!(
            parse_question("Which item viewed by Ann Lee has the lowest price?"),
            Some(Question::Extreme {
                name: "Ann Lee".into(),
                attr: "price".into(),
                highest: false
            })
        );
        assert_eq!(parse_question("hello"), None);
    }

    #[test]
    fn recommendation_tie_breaks_on_smallest_id() {
        let history: BTreeSet<NodeId> = ["a".to_string()].into();
        let lists = vec![vec!["c".to_string(), "b".to_string(), "a".to_string()]];
        assert_eq!(most_common(&history, &lists), Some("b".into()));
        assert_eq!(
            pick_extreme(&[("b".into(), 3.0), ("a".into(), 3.0), ("c".into(), 1.0)], true),
            Some("a".into())
        );
    }

    #[test]
    fn snippets_parse() {
        for r in [
            "What is the price of alpha widget?",
            "vertex chunks of the items viewed by Ann",
            "vertex chunks of a, b \"c\"",
            "vertex chunk of Ann",
            "also_viewed neighbours of node n1",
            "also_viewed neighbours of alpha widget",
            "title of node n3",
            "price of alpha widget",
        ] {
            let code = snippet_for(r).unwrap();
            crate::snippet::parse(&code).unwrap_or_else(|e| panic!("{r}: {e}\n{code}"));
        }
    }
}
