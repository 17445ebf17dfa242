//! OpenAI-compatible chat-completions over blocking HTTP.

use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{BackendConfig, ChatBackend, ChatRequest, LlmError};

pub struct LiveBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: String,
    max_retries: u32,
    backoff_base: Duration,
}

impl LiveBackend {
    pub fn new(cfg: &BackendConfig, endpoint: String, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint,
            model: cfg.model_name.clone(),
            api_key,
            max_retries: cfg.max_retries,
            backoff_base: Duration::from_secs_f64(cfg.backoff_base_s.max(0.0)),
        }
    }

    fn body(&self, req: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if !req.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_text}));
        }
        messages.push(json!({"role": "user", "content": req.user_text}));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }

    /// One attempt. `Ok(Err(_))` marks a retryable failure.
    fn attempt(&self, body: &Value) -> Result<Result<String, String>, LlmError> {
        let mut resp = match self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
        {
            Ok(r) => r,
            Err(e) => return Ok(Err(format!("transport: {e}"))),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        if status == 429 || status >= 500 {
            return Ok(Err(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            tracing::warn!(status, body = %text, "chat request rejected");
            return Err(LlmError::Rejected { status, body: text });
        }
        let parsed: Value = serde_json::from_str(&text).map_err(|e| LlmError::Unavailable(format!("malformed response body: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| Ok(s.to_string()))
            .ok_or_else(|| LlmError::Unavailable("response has no choices[0].message.content".into()))
    }
}

impl ChatBackend for LiveBackend {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let body = self.body(req);
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                let base = self.backoff_base.mul_f64(2f64.powi(attempt as i32 - 1));
                let jitter = base.mul_f64(rand::thread_rng().gen_range(0.0..0.25));
                std::thread::sleep(base + jitter);
            }
            match self.attempt(&body)? {
                Ok(text) => return Ok(text),
                Err(reason) => {
                    tracing::debug!(attempt, %reason, "retryable chat failure");
                    last = reason;
                }
            }
        }
        Err(LlmError::Unavailable(format!("{} attempts failed, last: {last}", self.max_retries + 1)))
    }
}
