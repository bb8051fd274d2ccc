use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Value;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Request body. Traces are in the JSON Lines wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeRequest {
    pub candidate_source: String,
    pub reference_source: String,
    pub candidate_trace: String,
    pub reference_trace: String,
    pub failing_input: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeResponse {
    pub k_star: i64,
    pub confidence: f64,
}

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("localizer request failed: {0}")]
    Transport(String),
    #[error("malformed localizer response: {0}")]
    Malformed(String),
}

/// Blocking HTTP client for a localization service.
#[derive(Debug, Clone)]
pub struct ExternalLocalizer {
    url: String,
    timeout: Duration,
}

impl ExternalLocalizer {
    pub fn new(url: impl Into<String>) -> Self {
        ExternalLocalizer { url: url.into(), timeout: DEFAULT_TIMEOUT }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn query(&self, request: &LocalizeRequest) -> Result<LocalizeResponse, ExternalError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let response = agent.post(&self.url).send_json(request).map_err(|e| ExternalError::Transport(e.to_string()))?;
        let body = response.into_string().map_err(|e| ExternalError::Transport(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| ExternalError::Malformed(e.to_string()))
    }
}
