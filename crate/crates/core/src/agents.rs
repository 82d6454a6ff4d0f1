//! Prompt templates, the notebook, and the output protocol of the
//! classification, reasoning and action agents (plus the single-agent
//! baseline's thought/action prompts).

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kvcache::{count_tokens, Tier, TierMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Classification,
    Reasoning,
    Action,
    BaselineThought,
    BaselineAction,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Classification,
        AgentKind::Reasoning,
        AgentKind::Action,
        AgentKind::BaselineThought,
        AgentKind::BaselineAction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Classification => "classification",
            AgentKind::Reasoning => "reasoning",
            AgentKind::Action => "action",
            AgentKind::BaselineThought => "baseline_thought",
            AgentKind::BaselineAction => "baseline_action",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether graph facts are fetched as whole vertex chunks or one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chunking {
    #[default]
    Vertex,
    Fact,
}

impl fmt::Display for Chunking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chunking::Vertex => "vertex",
            Chunking::Fact => "fact",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("unexpected agent output: {0}")]
    UnexpectedAgentOutput(String),
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {name}: {message}")]
    Malformed { name: String, message: String },
    #[error("reading template {name}: {source}")]
    Io {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Lit(String),
    Slot(String),
}

/// A template split into its constant prefix and a suffix of literal text
/// and named slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    prefix: String,
    suffix: Vec<Piece>,
}

/// Keeps `{{#mode}} ... {{/mode}}` sections for the active chunking mode and
/// drops the others.
fn select_sections(text: &str, chunking: Chunking) -> Result<String, String> {
    let active = chunking.to_string();
    let mut out = String::with_capacity(text.len());
    let mut open: Option<(String, bool)> = None;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if let Some(name) = t.strip_prefix("{{#").and_then(|r| r.strip_suffix("}}")) {
            if open.is_some() {
                return Err(format!("nested section `{name}`"));
            }
            open = Some((name.to_string(), name == active));
            continue;
        }
        if let Some(name) = t.strip_prefix("{{/").and_then(|r| r.strip_suffix("}}")) {
            match &open {
                Some((n, _)) if n == name => open = None,
                _ => return Err(format!("unmatched section end `{name}`")),
            }
            continue;
        }
        if open.as_ref().is_none_or(|(_, keep)| *keep) {
            out.push_str(line);
        }
    }
    if let Some((name, _)) = open {
        return Err(format!("section `{name}` is never closed"));
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn parse(name: &str, text: &str, chunking: Chunking) -> Result<Self, TemplateError> {
        let malformed = |message: String| TemplateError::Malformed {
            name: name.to_string(),
            message,
        };
        let text = select_sections(text, chunking).map_err(malformed)?;
        let first = text
            .find("{{")
            .ok_or_else(|| malformed("no {{slot}} placeholder".into()))?;
        let prefix = text[..first].to_string();
        let mut suffix = Vec::new();
        let mut rest = &text[first..];
        while !rest.is_empty() {
            match rest.find("{{") {
                Some(0) => {
                    let end = rest
                        .find("}}")
                        .ok_or_else(|| malformed("unclosed placeholder".into()))?;
                    let slot = rest[2..end].trim();
                    if slot.is_empty() || !slot.chars().all(|c| c.is_alphanumeric() || c == '_') {
                        return Err(malformed(format!("bad slot name `{slot}`")));
                    }
                    suffix.push(Piece::Slot(slot.to_string()));
                    rest = &rest[end + 2..];
                }
                Some(i) => {
                    suffix.push(Piece::Lit(rest[..i].to_string()));
                    rest = &rest[i..];
                }
                None => {
                    // Trailing whitespace after the last slot would sit between
                    // the question and an appended section; drop it.
                    if !rest.trim().is_empty() {
                        suffix.push(Piece::Lit(rest.to_string()));
                    }
                    rest = "";
                }
            }
        }
        Ok(PromptTemplate { prefix, suffix })
    }

    pub fn shared_prefix(&self) -> &str {
        &self.prefix
    }

    pub fn slots(&self) -> Vec<&str> {
        self.suffix
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Lit(_) => None,
            })
            .collect()
    }

    /// Fills the slots. Literal suffix text and unknown slots are tier IV.
    pub fn render(&self, values: &[(&str, &str, Tier)]) -> Prompt {
        let mut segments: Vec<(&str, Tier)> = vec![(self.prefix.as_str(), Tier::I)];
        for piece in &self.suffix {
            match piece {
                Piece::Lit(s) => segments.push((s, Tier::IV)),
                Piece::Slot(name) => {
                    if let Some((_, v, t)) = values.iter().find(|(n, _, _)| n == name) {
                        segments.push((v, *t));
                    }
                }
            }
        }
        Prompt::from_segments(&segments)
    }
}

/// A rendered prompt with the cache tier of every token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub text: String,
    pub tiers: TierMap,
}

impl Prompt {
    pub fn from_segments(segments: &[(&str, Tier)]) -> Self {
        let (text, tiers) = TierMap::for_segments(segments);
        Prompt { text, tiers }
    }

    pub fn token_count(&self) -> usize {
        count_tokens(&self.text)
    }

    fn append(&mut self, extra: &str, tier: Tier) {
        let mut segs = Vec::new();
        for (r, t) in self.tiers.ranges() {
            segs.push((r.len(), *t));
        }
        self.text.push_str(extra);
        segs.push((count_tokens(extra), tier));
        // Appending to a prompt that does not end in whitespace would merge
        // tokens; the repair section always begins with a newline.
        debug_assert!(extra.starts_with(char::is_whitespace));
        self.tiers = TierMap::from_lengths(&segs);
    }
}

const BUILTIN_CLASSIFICATION: &str = include_str!("../../../custom/classification.prompt");
const BUILTIN_REASONING: &str = include_str!("../../../custom/reasoning.prompt");
const BUILTIN_ACTION: &str = include_str!("../../../custom/action.prompt");
const BUILTIN_GRAPHCOT: &str = include_str!("../../../custom/graphcot.prompt");

/// The template set of one deployment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub chunking: Chunking,
    pub classification: PromptTemplate,
    pub reasoning: PromptTemplate,
    pub action: PromptTemplate,
    pub graphcot: PromptTemplate,
}

impl Templates {
    pub fn builtin(chunking: Chunking) -> Self {
        Templates::from_texts(
            chunking,
            BUILTIN_CLASSIFICATION,
            BUILTIN_REASONING,
            BUILTIN_ACTION,
            BUILTIN_GRAPHCOT,
        )
        .expect("builtin templates are well formed")
    }

    pub fn from_texts(
        chunking: Chunking,
        classification: &str,
        reasoning: &str,
        action: &str,
        graphcot: &str,
    ) -> Result<Self, TemplateError> {
        Ok(Templates {
            chunking,
            classification: PromptTemplate::parse("classification", classification, chunking)?,
            reasoning: PromptTemplate::parse("reasoning", reasoning, chunking)?,
            action: PromptTemplate::parse("action", action, chunking)?,
            graphcot: PromptTemplate::parse("graphcot", graphcot, chunking)?,
        })
    }

    /// Loads `<dir>/<agent>.prompt`, falling back to the builtin text for
    /// files that do not exist.
    pub fn from_dir(dir: &Path, chunking: Chunking) -> Result<Self, TemplateError> {
        let read = |name: &str, fallback: &str| -> Result<String, TemplateError> {
            let path = dir.join(format!("{name}.prompt"));
            match fs::read_to_string(&path) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(fallback.to_string()),
                Err(source) => Err(TemplateError::Io {
                    name: name.to_string(),
                    source,
                }),
            }
        };
        Templates::from_texts(
            chunking,
            &read("classification", BUILTIN_CLASSIFICATION)?,
            &read("reasoning", BUILTIN_REASONING)?,
            &read("action", BUILTIN_ACTION)?,
            &read("graphcot", BUILTIN_GRAPHCOT)?,
        )
    }

    pub fn render_classification(&self, question: &str) -> Result<Prompt, AgentError> {
        if question.trim().is_empty() {
            return Err(AgentError::EmptyQuestion);
        }
        Ok(self.classification.render(&[("question", question, Tier::IV)]))
    }

    pub fn render_reasoning(&self, notebook: &Notebook, question: &str) -> Prompt {
        let nb = notebook.render();
        self.reasoning.render(&[("notebook", &nb, Tier::II), ("question", question, Tier::IV)])
    }

    /// `repair` carries the failed snippet and its error message.
    pub fn render_action(&self, request: &str, repair: Option<(&str, &str)>) -> Prompt {
        let mut p = self.action.render(&[("request", request, Tier::IV)]);
        if let Some((snippet, error)) = repair {
            p.append(&repair_section(snippet, error), Tier::IV);
        }
        p
    }

    pub fn render_graphcot(&self, question: &str, history: &str) -> Prompt {
        self.graphcot
            .render(&[("question", question, Tier::IV), ("history", history, Tier::II)])
    }
}

pub const REPAIR_MARKER: &str = "Your previous snippet failed.";

fn repair_section(snippet: &str, error: &str) -> String {
    format!(
        "\n\n{REPAIR_MARKER}\n```\n{}\n```\nError: {}\nReply with a corrected snippet.\n",
        snippet.trim_end(),
        error
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub source: String,
    pub text: String,
}

/// Append-only list of facts gathered by the reasoning agent.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Notebook {
    facts: Vec<Fact>,
}

impl Notebook {
    pub fn new() -> Self {
        Notebook::default()
    }

    /// Appends `text`, terminated by a newline so later facts and the
    /// question start on their own line.
    pub fn append(&mut self, source: impl Into<String>, text: &str) {
        let mut text = text.to_string();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        self.facts.push(Fact {
            source: source.into(),
            text,
        });
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn render(&self) -> String {
        self.facts.iter().map(|f| f.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Deterministic,
    NonDeterministic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AgentOutput {
    Classified(QuestionKind),
    MissingInfo(String),
    Finish(String),
    Snippet(String),
}

fn unexpected(raw: &str) -> AgentError {
    let mut shown: String = raw.chars().take(80).collect();
    if raw.chars().count() > 80 {
        shown.push_str("...");
    }
    AgentError::UnexpectedAgentOutput(shown)
}

pub fn parse_classification(raw: &str) -> Result<QuestionKind, AgentError> {
    let word: String = raw
        .trim_start()
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Ok(QuestionKind::Deterministic),
        "no" => Ok(QuestionKind::NonDeterministic),
        _ => Err(unexpected(raw)),
    }
}

fn marker_line<'a>(raw: &'a str, marker: &str) -> Option<&'a str> {
    raw.lines()
        .map(str::trim_start)
        .find_map(|l| l.strip_prefix(marker))
        .map(str::trim)
}

/// Returns `Finish` or `MissingInfo`; `Finish` wins when both appear.
pub fn parse_reasoning(raw: &str) -> Result<AgentOutput, AgentError> {
    if let Some(answer) = marker_line(raw, "Finish:") {
        return Ok(AgentOutput::Finish(answer.to_string()));
    }
    if let Some(missing) = marker_line(raw, "Missing:") {
        return Ok(AgentOutput::MissingInfo(missing.to_string()));
    }
    Err(unexpected(raw))
}

/// Text of the first fenced code block.
pub fn parse_action(raw: &str) -> Result<String, AgentError> {
    let mut lines = raw.lines();
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            let mut body = String::new();
            for inner in lines.by_ref() {
                if inner.trim_start().starts_with("```") {
                    return Ok(body);
                }
                body.push_str(inner);
                body.push('\n');
            }
            return Err(unexpected(raw));
        }
    }
    Err(unexpected(raw))
}

/// The `Thought:` line of a baseline reply.
pub fn parse_thought(raw: &str) -> Result<String, AgentError> {
    marker_line(raw, "Thought:")
        .map(|t| format!("Thought: {t}"))
        .ok_or_else(|| unexpected(raw))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum BaselineAction {
    Call { function: String, args: Vec<String> },
    Finish(String),
}

impl fmt::Display for BaselineAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineAction::Call { function, args } => write!(f, "Action: {function}[{}]", args.join(", ")),
            BaselineAction::Finish(a) => write!(f, "Action: Finish[{a}]"),
        }
    }
}

/// Parses `Action: Fn[args]` or `Action: Finish[answer]`. `RetrieveNode`
/// takes its whole bracket content as one argument.
pub fn parse_baseline_action(raw: &str) -> Result<BaselineAction, AgentError> {
    let line = marker_line(raw, "Action:").ok_or_else(|| unexpected(raw))?;
    let open = line.find('[').ok_or_else(|| unexpected(raw))?;
    let close = line.rfind(']').filter(|c| *c > open).ok_or_else(|| unexpected(raw))?;
    let function = line[..open].trim();
    let inner = &line[open + 1..close];
    if function == "Finish" {
        return Ok(BaselineAction::Finish(inner.trim().to_string()));
    }
    if function.is_empty() || !function.chars().all(char::is_alphanumeric) {
        return Err(unexpected(raw));
    }
    let args = if function == "RetrieveNode" {
        vec![inner.trim().to_string()]
    } else {
        inner.split(',').map(|a| a.trim().to_string()).collect()
    };
    Ok(BaselineAction::Call {
        function: function.to_string(),
        args,
    })
}
