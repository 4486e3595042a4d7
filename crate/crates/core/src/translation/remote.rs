use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{FailureReason, TranslationBackend, TranslationFailure};
use crate::model::Lang;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub text: String,
    pub src: String,
    pub dst: String,
}

#[derive(Debug, Deserialize)]
struct RemoteReply {
    text: String,
}

/// HTTP adapter: `POST <endpoint>/translate` with `{text, src, dst}`, expecting `{text}`.
/// A timed-out attempt is retried `retries` times; other failures are final.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    url: String,
    agent: ureq::Agent,
    retries: u32,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, timeout: Duration, retries: u32) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            url: format!("{}/translate", endpoint.trim_end_matches('/')),
            agent: ureq::Agent::new_with_config(config),
            retries,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, request: &RemoteRequest) -> Result<String, TranslationFailure> {
        let mut response = self.agent.post(&self.url).send_json(request).map_err(map_error)?;
        let status = response.status();
        if !status.is_success() {
            return Err(TranslationFailure::new(FailureReason::Status, format!("HTTP {}", status.as_u16())));
        }
        let body = response.body_mut().read_to_string().map_err(map_error)?;
        let reply: RemoteReply = serde_json::from_str(&body)
            .map_err(|e| TranslationFailure::new(FailureReason::Malformed, e.to_string()))?;
        Ok(reply.text)
    }

    /// Translate with retry, returning the outcome and the number of attempts made.
    pub fn remote_translate(&self, request: &RemoteRequest) -> (Result<String, TranslationFailure>, u32) {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request) {
                Err(f) if f.reason == FailureReason::Timeout && attempts <= self.retries => continue,
                outcome => return (outcome, attempts),
            }
        }
    }
}

fn map_error(err: ureq::Error) -> TranslationFailure {
    match err {
        ureq::Error::Timeout(t) => TranslationFailure::new(FailureReason::Timeout, t.to_string()),
        ureq::Error::Json(e) => TranslationFailure::new(FailureReason::Malformed, e.to_string()),
        ureq::Error::Io(e) if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
            TranslationFailure::new(FailureReason::Timeout, e.to_string())
        }
        other => TranslationFailure::new(FailureReason::Unreachable, other.to_string()),
    }
}

impl TranslationBackend for RemoteBackend {
    fn translate(&self, text: &str, src: &Lang, dst: &Lang) -> Result<String, TranslationFailure> {
        let request = RemoteRequest {
            text: text.to_owned(),
            src: src.to_string(),
            dst: dst.to_string(),
        };
        self.remote_translate(&request).0
    }
}
