use std::collections::HashMap;

use serde::Deserialize;

use super::{stream_lines, CompletionRequest, CompletionResult, Provider, ProviderError};
use crate::agents::AgentKind;
use crate::kvcache::count_tokens;

const FILLER: &str = "~";

/// One line of a trace file. When `budget` is set the reply is padded with
/// filler tokens so that prompt and reply together use exactly that many.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ScriptEntry {
    pub session: String,
    pub agent: AgentKind,
    pub step: usize,
    pub text: String,
    #[serde(default)]
    pub budget: Option<usize>,
}

/// Replays recorded replies keyed by (session, agent, step).
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    entries: HashMap<(String, AgentKind, usize), ScriptEntry>,
}

impl ScriptedProvider {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        ScriptedProvider {
            entries: entries
                .into_iter()
                .map(|e| ((e.session.clone(), e.agent, e.step), e))
                .collect(),
        }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ProviderError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| ProviderError::Protocol(format!("trace line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        Ok(ScriptedProvider::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Provider for ScriptedProvider {
    fn complete(
        &self,
        req: &CompletionRequest<'_>,
        sink: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, ProviderError> {
        let key = (req.session.to_string(), req.agent, req.step);
        let entry = self.entries.get(&key).ok_or_else(|| {
            ProviderError::Protocol(format!(
                "no scripted reply for session {} agent {} step {}",
                req.session, req.agent, req.step
            ))
        })?;
        let mut text = entry.text.clone();
        if let Some(budget) = entry.budget {
            let used = count_tokens(req.prompt) + count_tokens(&text);
            let pad = budget.checked_sub(used).ok_or_else(|| {
                ProviderError::Protocol(format!("budget {budget} is below the {used} tokens already used"))
            })?;
            if pad > 0 {
                if !text.ends_with('\n') {
                    text.push('\n');
                }
                text.push_str(&vec![FILLER; pad].join(" "));
                text.push('\n');
            }
        }
        Ok(stream_lines(req.prompt, text, sink))
    }
}
