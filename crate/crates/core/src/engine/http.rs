//! OpenAI-compatible chat-completions client with retries and a per-engine
//! request-rate limiter.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{ChatEngine, ChatRequest, EngineError, EngineRef};

pub const API_KEY_ENV: &str = "CODEGRAD_API_KEY";
pub const ENDPOINT_ENV: &str = "CODEGRAD_ENDPOINT";

const MAX_BACKOFF: Duration = Duration::from_secs(30);

pub struct HttpEngine {
    config: EngineRef,
    url: String,
    client: Client,
    api_key: Option<String>,
    next_slot: Mutex<Option<Instant>>,
}

impl HttpEngine {
    pub fn new(config: EngineRef) -> Result<Self, EngineError> {
        config.validate()?;
        let base = config.endpoint_url.as_deref().expect("validated").trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let client = Client::builder()
            .timeout(config.request_timeout())
            .build()
            .map_err(|e| EngineError::Config(format!("http client: {e}")))?;
        Ok(Self {
            url,
            client,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            next_slot: Mutex::new(None),
            config,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Blocks until the rate limit admits one more request.
    fn wait_for_slot(&self) {
        let Some(rpm) = self.config.rate_limit_rpm.filter(|r| *r > 0.0) else {
            return;
        };
        let interval = Duration::from_secs_f64(60.0 / rpm);
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = Duration::from_millis(self.config.retry_base_delay_ms);
        base.saturating_mul(1u32 << attempt.min(16)).min(MAX_BACKOFF)
    }
}

enum Attempt {
    Done(String),
    Transient(String, Option<Duration>),
    Fatal(EngineError),
}

impl HttpEngine {
    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string(), None),
        };
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<f64>().ok())
                .map(|s| Duration::from_secs_f64(s.clamp(0.0, MAX_BACKOFF.as_secs_f64())));
            let text = resp.text().unwrap_or_default();
            return Attempt::Transient(format!("HTTP {}: {}", status.as_u16(), snippet(&text)), retry_after);
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(e.to_string(), None),
        };
        if !status.is_success() {
            return Attempt::Fatal(EngineError::Rejected {
                engine: self.config.name.clone(),
                status: status.as_u16(),
                body: snippet(&text),
            });
        }
        match extract_message(&text) {
            Ok(content) => Attempt::Done(content),
            Err(detail) => Attempt::Fatal(EngineError::MalformedResponse {
                engine: self.config.name.clone(),
                detail,
            }),
        }
    }
}

impl ChatEngine for HttpEngine {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, EngineError> {
        let body = self.body(request);
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            self.wait_for_slot();
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(err, retry_after) => {
                    tracing::warn!(engine = %self.config.name, attempt, error = %err, "transient engine failure");
                    last_error = err;
                    if attempt + 1 < attempts {
                        thread::sleep(retry_after.unwrap_or_else(|| self.backoff(attempt)));
                    }
                }
            }
        }
        Err(EngineError::Unavailable {
            engine: self.config.name.clone(),
            attempts,
            last_error,
        })
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions response.
fn extract_message(text: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("response is not JSON: {e}"))?;
    match v.pointer("/choices/0/message/content") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(parts)) => {
            let joined: String = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if joined.is_empty() {
                Err("message content has no text parts".into())
            } else {
                Ok(joined)
            }
        }
        _ => Err(format!("no choices[0].message.content in {}", snippet(text))),
    }
}

fn snippet(text: &str) -> String {
    let mut cut = text.len().min(300);
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    text[..cut].to_string()
}
