use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatEngine, ChatRequest, EngineError};

/// Canned responses replayed in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedTranscript {
    pub responses: Vec<String>,
    pub cursor: usize,
}

impl ScriptedTranscript {
    pub fn new(responses: Vec<String>) -> Self {
        Self { responses, cursor: 0 }
    }

    fn next(&mut self) -> Option<String> {
        let r = self.responses.get(self.cursor)?.clone();
        self.cursor += 1;
        Some(r)
    }
}

/// Deterministic engine for tests and fixtures. Also records every request it saw.
pub struct ScriptedEngine {
    name: String,
    state: Mutex<(ScriptedTranscript, Vec<ChatRequest>)>,
}

impl ScriptedEngine {
    pub fn new(name: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            name: name.into(),
            state: Mutex::new((ScriptedTranscript::new(responses), Vec::new())),
        }
    }

    pub fn calls(&self) -> usize {
        self.lock().0.cursor
    }

    pub fn remaining(&self) -> usize {
        let state = self.lock();
        state.0.responses.len() - state.0.cursor
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.lock().1.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, (ScriptedTranscript, Vec<ChatRequest>)> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl ChatEngine for ScriptedEngine {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, EngineError> {
        let mut state = self.lock();
        let response = state
            .0
            .next()
            .ok_or_else(|| EngineError::TranscriptExhausted(self.name.clone()))?;
        state.1.push(request.clone());
        Ok(response)
    }
}

/// Responses for both roles, as read from a transcript file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranscriptFile {
    pub forward: Vec<String>,
    pub backward: Vec<String>,
}

/// Parses a transcript file. Each response starts with a marker line
/// `=== forward ===` or `=== backward ===` and runs to the next marker.
/// Text before the first marker and lines starting with `#` directly after a
/// marker are ignored.
pub fn parse_transcript(text: &str) -> Result<TranscriptFile, String> {
    let mut out = TranscriptFile::default();
    let mut current: Option<(bool, Vec<&str>)> = None;
    let flush = |current: &mut Option<(bool, Vec<&str>)>, out: &mut TranscriptFile| {
        if let Some((forward, lines)) = current.take() {
            let body = lines.join("\n").trim().to_string();
            if forward {
                out.forward.push(body);
            } else {
                out.backward.push(body);
            }
        }
    };
    for line in text.lines() {
        let marker = line.trim();
        if let Some(role) = marker.strip_prefix("===").and_then(|m| m.strip_suffix("===")) {
            flush(&mut current, &mut out);
            current = Some(match role.trim() {
                "forward" => (true, Vec::new()),
                "backward" => (false, Vec::new()),
                other => return Err(format!("unknown transcript role `{other}`")),
            });
            continue;
        }
        if let Some((_, lines)) = current.as_mut() {
            if lines.is_empty() && line.starts_with('#') {
                continue;
            }
            lines.push(line);
        }
    }
    flush(&mut current, &mut out);
    if out.forward.is_empty() && out.backward.is_empty() {
        return Err("transcript has no responses".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest {
            system_text: "s".into(),
            user_text: "u".into(),
            temperature: 0.0,
            max_output_tokens: 16,
            seed: None,
        }
    }

    #[test]
    fn replays_in_order() {
        let e = ScriptedEngine::new("s", vec!["ok".into()]);
        assert_eq!(e.complete(&req()).unwrap(), "ok");
        assert_eq!(e.calls(), 1);
        assert_eq!(e.requests().len(), 1);
    }

    #[test]
    fn exhaustion_is_an_error() {
        let e = ScriptedEngine::new("s", vec!["ok".into()]);
        e.complete(&req()).unwrap();
        assert_eq!(e.complete(&req()), Err(EngineError::TranscriptExhausted("s".into())));
        assert_eq!(e.calls(), 1);
    }

    #[test]
    fn transcript_file_sections() {
        let t = parse_transcript("header\n=== forward ===\n# draft\n```\nx\n```\n=== backward ===\nreview\n\n=== forward ===\ny\n").unwrap();
        assert_eq!(t.forward, vec!["```\nx\n```".to_string(), "y".to_string()]);
        assert_eq!(t.backward, vec!["review".to_string()]);
        assert!(parse_transcript("=== sideways ===\n").is_err());
        assert!(parse_transcript("nothing").is_err());
    }
}
