//! Chat-completions and embeddings over HTTP.

use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{ChatRequest, GatewayConfig, LlmError, Provider};

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    base: String,
    key: Option<String>,
    embedding_model: String,
}

impl HttpProvider {
    pub fn new(config: &GatewayConfig) -> Result<Self, LlmError> {
        let base = config
            .api_base
            .clone()
            .ok_or_else(|| LlmError::ProviderUnavailable("no API base URL configured".into()))?;
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            base: base.trim_end_matches('/').to_string(),
            key: config.api_key.clone(),
            embedding_model: config.embedding_model.clone(),
        })
    }

    fn post(&self, path: &str, body: &Json, timeout: Duration) -> Result<Json, LlmError> {
        let mut req = self.client.post(format!("{}{}", self.base, path)).json(body).timeout(timeout);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::ProviderUnavailable(format!("HTTP {status} from {path}")));
        }
        resp.json::<Json>().map_err(|e| LlmError::ProviderUnavailable(e.to_string()))
    }
}

impl Provider for HttpProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut messages = Vec::new();
        if !req.system.is_empty() {
            messages.push(json!({ "role": "system", "content": req.system }));
        }
        messages.push(json!({ "role": "user", "content": req.user }));
        let body = json!({ "model": req.model, "messages": messages, "temperature": 0 });
        let reply = self.post("/chat/completions", &body, req.timeout)?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::ProviderUnavailable("reply has no message content".into()))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let body = json!({ "model": self.embedding_model, "input": texts });
        let reply = self.post("/embeddings", &body, Duration::from_secs(60))?;
        let data = reply["data"]
            .as_array()
            .ok_or_else(|| LlmError::ProviderUnavailable("embedding reply has no data".into()))?;
        data.iter()
            .map(|d| {
                d["embedding"]
                    .as_array()
                    .map(|xs| xs.iter().filter_map(Json::as_f64).collect())
                    .ok_or_else(|| LlmError::ProviderUnavailable("malformed embedding".into()))
            })
            .collect()
    }

    fn name(&self) -> &str {
        "http"
    }
}
