use std::io::{BufRead, BufReader};
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{CompletionRequest, CompletionResult, Increment, Provider, ProviderError};
use crate::kvcache::count_tokens;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the chat completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Sent as a bearer token when present.
    #[serde(default)]
    pub api_key: Option<String>,
}

fn default_timeout_ms() -> u64 {
    60_000
}

/// Chat-completion client over HTTP with server-sent event streaming.
pub struct RemoteProvider {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        RemoteProvider { config, agent }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SseEvent {
    Delta(String),
    Done,
    Ignored,
}

/// Interprets one line of an event stream carrying chat completion chunks.
pub fn parse_sse_line(line: &str) -> Result<SseEvent, ProviderError> {
    let Some(data) = line.trim_end().strip_prefix("data:") else {
        return Ok(SseEvent::Ignored);
    };
    let data = data.trim();
    if data == "[DONE]" {
        return Ok(SseEvent::Done);
    }
    let v: serde_json::Value =
        serde_json::from_str(data).map_err(|e| ProviderError::Protocol(format!("bad chunk: {e}")))?;
    if let Some(err) = v.get("error") {
        return Err(ProviderError::Protocol(err.to_string()));
    }
    Ok(v["choices"][0]["delta"]["content"]
        .as_str()
        .map_or(SseEvent::Ignored, |s| SseEvent::Delta(s.to_string())))
}

impl Provider for RemoteProvider {
    fn complete(
        &self,
        req: &CompletionRequest<'_>,
        sink: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": 0,
            "stream": true,
        });
        let mut call = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = call.send_string(&body.to_string()).map_err(|e| match e {
            ureq::Error::Transport(t) if t.kind() == ureq::ErrorKind::Io => ProviderError::Timeout,
            other => ProviderError::Protocol(other.to_string()),
        })?;
        let start = Instant::now();
        let reader = BufReader::new(resp.into_reader());
        let mut text = String::new();
        let mut pending = String::new();
        let mut increments = Vec::new();
        let mut emit = |piece: &str, text: &mut String, increments: &mut Vec<Increment>| {
            sink(piece);
            text.push_str(piece);
            increments.push(Increment {
                tokens: count_tokens(text),
                elapsed_us: start.elapsed().as_micros() as u64,
            });
        };
        for line in reader.lines() {
            let line = line.map_err(|e| match e.kind() {
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => ProviderError::Timeout,
                _ => ProviderError::Protocol(e.to_string()),
            })?;
            match parse_sse_line(&line)? {
                SseEvent::Delta(d) => {
                    pending.push_str(&d);
                    while let Some(nl) = pending.find('\n') {
                        let piece: String = pending.drain(..=nl).collect();
                        emit(&piece, &mut text, &mut increments);
                    }
                }
                SseEvent::Done => break,
                SseEvent::Ignored => {}
            }
        }
        if !pending.is_empty() {
            emit(&pending, &mut text, &mut increments);
        }
        Ok(CompletionResult {
            tokens_in: count_tokens(req.prompt),
            tokens_out: count_tokens(&text),
            text,
            increments,
        })
    }

    fn deterministic(&self) -> bool {
        false
    }
}
