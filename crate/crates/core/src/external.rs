//! Blocking JSON-over-HTTP clients for the optional external services:
//! sentence embeddings, an LLM speaker, and an LLM decision backend.
//!
//! Each client reads its endpoint, timeout and retry budget from the
//! environment (`NPCBENCH_<SERVICE>_URL`, `_TIMEOUT_MS`, `_RETRIES`).

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("{service} endpoint not configured (set {var})")]
    NotConfigured { service: &'static str, var: String },
    #[error("request to {url} failed after {attempts} attempt(s): {msg}")]
    Failed { url: String, attempts: u32, msg: String },
    #[error("malformed response from {url}: {msg}")]
    Decode { url: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub url: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl ClientConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), timeout: Duration::from_secs(10), retries: 2 }
    }

    /// Reads `NPCBENCH_{service}_URL`, `_TIMEOUT_MS` and `_RETRIES`.
    pub fn from_env(service: &'static str) -> Result<Self, TransportError> {
        let var = format!("NPCBENCH_{service}_URL");
        let url = std::env::var(&var).map_err(|_| TransportError::NotConfigured { service, var })?;
        let mut cfg = Self::new(url);
        if let Some(ms) = env_u64(&format!("NPCBENCH_{service}_TIMEOUT_MS")) {
            cfg.timeout = Duration::from_millis(ms);
        }
        if let Some(r) = env_u64(&format!("NPCBENCH_{service}_RETRIES")) {
            cfg.retries = r as u32;
        }
        Ok(cfg)
    }
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok()?.parse().ok()
}

#[derive(Debug, Clone)]
struct JsonClient {
    cfg: ClientConfig,
    agent: ureq::Agent,
}

impl JsonClient {
    fn new(cfg: ClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        Self { cfg, agent }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, TransportError> {
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for _ in 0..attempts {
            match self.agent.post(&self.cfg.url).send_json(body) {
                Ok(resp) => {
                    return resp.into_json::<Resp>().map_err(|e| TransportError::Decode {
                        url: self.cfg.url.clone(),
                        msg: e.to_string(),
                    })
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(TransportError::Failed { url: self.cfg.url.clone(), attempts, msg: last })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingClient(JsonClient);

impl EmbeddingClient {
    pub fn new(cfg: ClientConfig) -> Self {
        Self(JsonClient::new(cfg))
    }

    pub fn from_env() -> Result<Self, TransportError> {
        ClientConfig::from_env("EMBED").map(Self::new)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        let resp: EmbedResponse = self.0.post(&EmbedRequest { texts: texts.to_vec() })?;
        Ok(resp.vectors)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

/// Plain prompt-in, text-out LLM endpoint.
#[derive(Debug, Clone)]
pub struct LlmClient(JsonClient);

impl LlmClient {
    pub fn new(cfg: ClientConfig) -> Self {
        Self(JsonClient::new(cfg))
    }

    pub fn from_env() -> Result<Self, TransportError> {
        ClientConfig::from_env("LLM").map(Self::new)
    }

    pub fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let resp: CompletionResponse = self.0.post(&CompletionRequest { prompt: prompt.to_string() })?;
        Ok(resp.text)
    }

    /// Generic JSON exchange on the same endpoint (used by the decision backend).
    pub fn exchange<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, TransportError> {
        self.0.post(body)
    }
}
