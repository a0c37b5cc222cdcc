//! Chat-completions client.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendConfig, BackendError, CompletionRequest, LanguageModel};

const MAX_RETRIES: u32 = 2;

#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    backoff: Duration,
    warned_penalty: AtomicBool,
}

impl HttpBackend {
    pub fn new(config: BackendConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        if config.endpoint.is_none() || config.model_name.is_none() {
            return Err(BackendError::Configuration(
                "http_chat backend requires endpoint and model_name".into(),
            ));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
            backoff: Duration::from_millis(500),
            warned_penalty: AtomicBool::new(false),
        })
    }

    /// Base delay before the first retry; doubles on each further retry.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn request_body(&self, request: &CompletionRequest) -> Value {
        let p = &request.params;
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_tokens": p.max_new_tokens,
        });
        if self.config.send_repetition_penalty {
            body["repetition_penalty"] = json!(p.repetition_penalty);
        } else if !self.warned_penalty.swap(true, Ordering::Relaxed) {
            tracing::info!("repetition_penalty not sent: disabled for this endpoint");
        }
        if !p.stop_sequences.is_empty() {
            body["stop"] = json!(p.stop_sequences);
        }
        body
    }

    /// One attempt. `Err((error, retryable))`.
    fn attempt(&self, body: &Value) -> Result<String, (String, Option<u16>, bool)> {
        let endpoint = self.config.endpoint.as_deref().expect("checked in new");
        let mut req = self.agent.post(endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (format!("transport: {e}"), None, true))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let retryable = status == 429 || status >= 500;
            return Err((
                format!("status {status}: {}", truncate(&text)),
                Some(status),
                retryable,
            ));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| (format!("invalid response body: {e}"), Some(status), false))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                (
                    "response has no choices[0].message.content".to_string(),
                    Some(status),
                    false,
                )
            })
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

impl LanguageModel for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let body = self.request_body(request);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((message, status, retryable)) => {
                    if !retryable || attempts > MAX_RETRIES {
                        return Err(BackendError::Remote {
                            message,
                            status,
                            attempts,
                        });
                    }
                    tracing::warn!(attempts, "retrying model call: {message}");
                    thread::sleep(self.backoff * 2u32.pow(attempts - 1));
                }
            }
        }
    }

    fn fork(&self) -> Arc<dyn LanguageModel> {
        let fresh = Self::new(self.config.clone(), self.api_key.clone())
            .expect("config already validated")
            .with_backoff(self.backoff);
        Arc::new(fresh)
    }

    fn name(&self) -> &str {
        "http_chat"
    }
}
