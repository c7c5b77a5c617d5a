//! Model evaluation over a chat-completions endpoint or a deterministic mock.
//!
//! [`run_evaluation`] renders one prompt per `(item, round)`, fans requests out
//! to a [`Responder`] with at most `max_concurrency` in flight, and appends one
//! [`SelectionRecord`](crate::metrics::SelectionRecord) per response to a JSONL
//! log. Records are written in task order, so a run is reproducible whenever
//! the responder is, and pairs already in the log are skipped on restart.

mod bench;
mod http;
mod mock;
mod prompt;
mod runner;

pub use bench::{read_bench, write_bench};
pub use http::{chat_completions_url, HttpResponder};
pub use mock::MockPolicy;
pub use prompt::{parse_selection, render_prompt, ChatMessage, ContentPart, ImageUrl, PromptPayload};
pub use runner::{backoff_delay, load_log, run_evaluation, RunOptions, RunSummary};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::perturb::{BenchmarkItem, PerturbError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_secs: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token; `None` sends no auth header.
    pub auth_token_env: Option<String>,
    pub timeout_secs: f64,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token_env: None,
            timeout_secs: 60.0,
            max_concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.max_concurrency == 0 {
            return Err(EvalError::InvalidConfig("max_concurrency must be >= 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(EvalError::InvalidConfig("max_attempts must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(EvalError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// A failed request. Retryable failures are retried with backoff.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// Everything a responder may look at for one request.
#[derive(Debug, Clone, Copy)]
pub struct ResponseRequest<'a> {
    pub item: &'a BenchmarkItem,
    pub round: u8,
    pub payload: &'a PromptPayload,
}

/// Produces the raw text of a model answer.
pub trait Responder: Sync {
    fn respond(&self, request: &ResponseRequest<'_>) -> Result<String, TransportError>;
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing frame files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFrames(Vec<PathBuf>),
    #[error("auth token environment variable {0} is not set")]
    MissingAuthToken(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{}: line {line}: {message}", path.display())]
    Log {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}
