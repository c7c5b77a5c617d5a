use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatMessage, EndpointConfig, EvalError, ResponseRequest, Responder, TransportError};

/// `{base_url}/chat/completions`, unless the base already names that route.
pub fn chat_completions_url(base_url: &str) -> String {
    let base = base_url.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else {
        format!("{base}/chat/completions")
    }
}

/// Responder backed by an OpenAI-compatible chat-completions endpoint.
pub struct HttpResponder {
    agent: ureq::Agent,
    url: String,
    model: String,
    token: Option<String>,
}

impl std::fmt::Debug for HttpResponder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpResponder")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpResponder {
    /// Fails at construction if the named auth variable is unset or empty.
    pub fn new(config: &EndpointConfig) -> Result<Self, EvalError> {
        config.validate()?;
        let token = match &config.auth_token_env {
            Some(name) => match std::env::var(name) {
                Ok(v) if !v.is_empty() => Some(v),
                _ => return Err(EvalError::MissingAuthToken(name.clone())),
            },
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: chat_completions_url(&config.base_url),
            model: config.model_name.clone(),
            token,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn extract_content(body: &Value) -> Option<String> {
    let content = body.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

impl HttpResponder {
    /// One chat-completions call at temperature 0; no retries.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": 0,
        });
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::BadUri(_) | ureq::Error::Json(_) | ureq::Error::RequireHttpsOnly(_) => {
                TransportError::fatal(e.to_string())
            }
            _ => TransportError::retryable(e.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::retryable(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(TransportError::retryable(format!("HTTP {status}: {}", snippet(&text))));
        }
        if !(200..300).contains(&status) {
            return Err(TransportError::fatal(format!("HTTP {status}: {}", snippet(&text))));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| TransportError::fatal(format!("response is not JSON: {e}")))?;
        extract_content(&value)
            .ok_or_else(|| TransportError::fatal("response has no choices[0].message.content"))
    }
}

impl Responder for HttpResponder {
    fn respond(&self, request: &ResponseRequest<'_>) -> Result<String, TransportError> {
        self.complete(&request.payload.messages)
    }
}

fn snippet(text: &str) -> &str {
    match text.char_indices().nth(200) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}
