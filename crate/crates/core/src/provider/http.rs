//! Remote provider speaking the JSON wire format in `docs/provider-wire.md`.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{CompletionRequest, EmbedItem, EmbedMode, Judgment, Provider, ProviderError};
use crate::content::Page;
use crate::embedding::Embedding;
use crate::hash::ContentHash;
use crate::limit::Limiter;
use crate::store::BlobStore;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpProviderConfig {
    /// Short name; the provider id becomes `http:<name>`.
    pub name: String,
    pub endpoint: String,
    pub token: Option<String>,
    pub default_model: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Delay before the single retry of an unavailable call.
    pub retry_backoff: Duration,
}

impl HttpProviderConfig {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint: endpoint.into(),
            token: None,
            default_model: "default".into(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            retry_backoff: Duration::from_millis(250),
        }
    }
}

pub struct HttpProvider {
    id: String,
    config: HttpProviderConfig,
    agent: ureq::Agent,
    limiter: Limiter,
}

#[derive(Deserialize)]
struct WireError {
    code: String,
    message: String,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    output: Option<Value>,
    #[serde(default)]
    error: Option<WireError>,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            id: format!("http:{}", config.name),
            limiter: Limiter::new(config.max_in_flight),
            config,
            agent,
        }
    }

    pub fn config(&self) -> &HttpProviderConfig {
        &self.config
    }

    fn call(&self, op: &str, model: &str, inputs: Value) -> Result<Value, ProviderError> {
        let body = json!({"op": op, "model": model, "inputs": inputs});
        match self.call_once(&body) {
            Err(ProviderError::Unavailable(_)) => {
                std::thread::sleep(self.config.retry_backoff);
                self.call_once(&body)
            }
            other => other,
        }
    }

    fn call_once(&self, body: &Value) -> Result<Value, ProviderError> {
        let _slot = self.limiter.acquire();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::Unavailable(format!("endpoint returned status {status}")));
        }
        let parsed: WireResponse = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Json(e) => ProviderError::Malformed(e.to_string()),
            other => ProviderError::Unavailable(other.to_string()),
        })?;
        if let Some(err) = parsed.error {
            return Err(match err.code.as_str() {
                "unavailable" => ProviderError::Unavailable(err.message),
                "context_overflow" => ProviderError::ContextOverflow { bytes: 0, budget: 0 },
                "unsupported_mode" => ProviderError::InvalidRequest(format!("unsupported mode: {}", err.message)),
                _ => ProviderError::InvalidRequest(err.message),
            });
        }
        if !(200..300).contains(&status) {
            return Err(ProviderError::InvalidRequest(format!("endpoint returned status {status}")));
        }
        parsed.output.ok_or_else(|| ProviderError::Malformed("response has no output".into()))
    }
}

fn decode_image(v: &Value) -> Result<Vec<u8>, ProviderError> {
    let s = v.as_str().ok_or_else(|| ProviderError::Malformed("image output must be a base64 string".into()))?;
    B64.decode(s).map_err(|e| ProviderError::Malformed(format!("image output: {e}")))
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn params(&self) -> Value {
        json!({"kind": "http", "endpoint": self.config.endpoint})
    }

    fn default_model(&self) -> &str {
        &self.config.default_model
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        req.check(usize::MAX)?;
        let inputs = json!({
            "system": req.system,
            "context": req.context,
            "prompt": req.prompt,
            "history": req.history,
        });
        match self.call("complete", &req.model, inputs)? {
            Value::String(s) => Ok(s),
            _ => Err(ProviderError::Malformed("complete output must be a string".into())),
        }
    }

    fn embed(&self, model: &str, mode: EmbedMode, items: &[EmbedItem]) -> Result<Vec<Embedding>, ProviderError> {
        if items.is_empty() {
            return Err(ProviderError::InvalidRequest("no items to embed".into()));
        }
        let wire: Vec<Value> = items
            .iter()
            .map(|i| json!({"text": i.text, "images": i.images.iter().map(|b| B64.encode(b)).collect::<Vec<_>>()}))
            .collect();
        let out = self
            .call("embed", model, json!({"mode": mode, "items": wire}))
            .map_err(|e| match e {
                ProviderError::InvalidRequest(m) if m.starts_with("unsupported mode") => ProviderError::UnsupportedMode(mode),
                other => other,
            })?;
        let vectors: Vec<Vec<f32>> =
            serde_json::from_value(out).map_err(|e| ProviderError::Malformed(format!("embed output: {e}")))?;
        if vectors.len() != items.len() {
            return Err(ProviderError::Malformed(format!(
                "expected {} vectors, got {}",
                items.len(),
                vectors.len()
            )));
        }
        vectors
            .into_iter()
            .map(|v| {
                let e = Embedding::from_components(v);
                e.check().map_err(ProviderError::Malformed)?;
                Ok(e)
            })
            .collect()
    }

    fn judge(&self, model: &str, page: &Page, prompt: &str, threshold: f64) -> Result<Judgment, ProviderError> {
        if page.text.trim().is_empty() && page.image_refs.is_empty() {
            return Err(ProviderError::InvalidRequest("page has neither text nor images".into()));
        }
        let inputs = json!({
            "page": {"index": page.index, "text": page.text, "image_refs": page.image_refs},
            "extraction_prompt": prompt,
            "threshold": threshold,
        });
        #[derive(Deserialize)]
        struct Wire {
            score: f64,
            #[serde(default)]
            rationale: String,
        }
        let w: Wire = serde_json::from_value(self.call("judge", model, inputs)?)
            .map_err(|e| ProviderError::Malformed(format!("judge output: {e}")))?;
        if !w.score.is_finite() {
            return Err(ProviderError::Malformed("judge score is not finite".into()));
        }
        Ok(Judgment::from_score(w.score, threshold, w.rationale))
    }

    fn generate_image(&self, model: &str, prompt: &str, blobs: &dyn BlobStore) -> Result<ContentHash, ProviderError> {
        let png = decode_image(&self.call("generate_image", model, json!({"prompt": prompt}))?)?;
        blobs.put_blob(&png).map_err(|e| ProviderError::Store(e.to_string()))
    }

    fn restyle_image(
        &self,
        model: &str,
        source: &ContentHash,
        prompt: &str,
        blobs: &dyn BlobStore,
    ) -> Result<ContentHash, ProviderError> {
        let bytes = blobs
            .get_blob(source)
            .map_err(|e| ProviderError::Store(e.to_string()))?
            .ok_or(ProviderError::MissingBlob(*source))?;
        let inputs = json!({"source": B64.encode(bytes), "prompt": prompt});
        let png = decode_image(&self.call("restyle_image", model, inputs)?)?;
        blobs.put_blob(&png).map_err(|e| ProviderError::Store(e.to_string()))
    }
}
