use std::time::Duration;

use super::IngestError;
use crate::limit::Limiter;

/// Upper bound on fetched body size: 10 MB.
pub const MAX_BODY_BYTES: u64 = 10 * 1024 * 1024;

pub struct Fetched {
    pub content_type: String,
    pub body: Vec<u8>,
}

/// Single-URL HTTP fetcher with bounded concurrency and body size.
pub struct Fetcher {
    agent: ureq::Agent,
    limiter: Limiter,
    max_body: u64,
}

impl Default for Fetcher {
    fn default() -> Self {
        Self::new(4, Duration::from_secs(30))
    }
}

impl Fetcher {
    pub fn new(max_concurrent: usize, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, limiter: Limiter::new(max_concurrent), max_body: MAX_BODY_BYTES }
    }

    pub fn with_max_body(mut self, max_body: u64) -> Self {
        self.max_body = max_body;
        self
    }

    pub fn fetch(&self, url: &str) -> Result<Fetched, IngestError> {
        let _slot = self.limiter.acquire();
        let mut resp = self.agent.get(url).call().map_err(|e| IngestError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(IngestError::Fetch(status));
        }
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or("text/plain")
            .to_ascii_lowercase();
        if !(content_type.starts_with("text/html")
            || content_type.starts_with("application/xhtml")
            || content_type.starts_with("text/plain"))
        {
            return Err(IngestError::NotText(content_type));
        }
        let body = resp.body_mut().with_config().limit(self.max_body).read_to_vec().map_err(|e| match e {
            ureq::Error::BodyExceedsLimit(_) => IngestError::TooLarge(self.max_body),
            other => IngestError::Network(other.to_string()),
        })?;
        Ok(Fetched { content_type, body })
    }
}
