//! Completion providers. Every provider streams its reply to a sink in
//! line-sized increments and reports token counts under the shared
//! whitespace tokenizer.

mod faulty;
mod remote;
mod rule;
mod scripted;

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

pub use faulty::FaultyProvider;
pub use remote::{parse_sse_line, RemoteConfig, RemoteProvider, SseEvent};
pub use rule::{parse_question, Question, RuleProvider, ALSO_VIEWED, NAME, TITLE, VIEWED};
pub use scripted::{ScriptEntry, ScriptedProvider};

use crate::agents::AgentKind;
use crate::kvcache::count_tokens;

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub agent: AgentKind,
    pub session: &'a str,
    pub step: usize,
}

/// One streamed increment: output tokens decoded so far when it was sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Increment {
    pub tokens: usize,
    pub elapsed_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompletionResult {
    pub text: String,
    pub tokens_in: usize,
    pub tokens_out: usize,
    pub increments: Vec<Increment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("provider protocol error: {0}")]
    Protocol(String),
}

pub trait Provider: Send + Sync {
    /// Produces the reply for `req`, passing it to `sink` piece by piece.
    /// The concatenated pieces equal the returned text.
    fn complete(
        &self,
        req: &CompletionRequest<'_>,
        sink: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, ProviderError>;

    /// False for providers whose output may differ between runs.
    fn deterministic(&self) -> bool {
        true
    }
}

/// Streams `text` line by line and builds the result.
pub(crate) fn stream_lines(prompt: &str, text: String, sink: &mut dyn FnMut(&str)) -> CompletionResult {
    let start = Instant::now();
    let mut increments = Vec::new();
    let mut decoded = 0;
    for piece in text.split_inclusive('\n') {
        sink(piece);
        decoded += count_tokens(piece);
        increments.push(Increment {
            tokens: decoded,
            elapsed_us: start.elapsed().as_micros() as u64,
        });
    }
    CompletionResult {
        tokens_in: count_tokens(prompt),
        tokens_out: count_tokens(&text),
        text,
        increments,
    }
}
