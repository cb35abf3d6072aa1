//! Client for an external text-generation server.
//!
//! `POST {base_url}/generate` with `{"prompt", "max_new_tokens", "greedy"}`;
//! a 2xx reply must carry `{"text": ...}`.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{GenerationError, GenerationRequest, Generator};

pub const BACKEND_URL_ENV: &str = "POLYG2P_BACKEND_URL";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    max_new_tokens: usize,
    greedy: bool,
}

#[derive(Deserialize)]
struct WireReply {
    text: String,
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    base_url: String,
    client: Client,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, GenerationError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let mut builder = Client::builder().timeout(timeout);
        if is_local(&base_url) {
            builder = builder.no_proxy();
        }
        let client = builder
            .build()
            .map_err(|e| GenerationError::BackendUnavailable(e.to_string()))?;
        Ok(Self { base_url, client })
    }

    /// Uses `POLYG2P_BACKEND_URL`.
    pub fn from_env(timeout: Duration) -> Result<Self, GenerationError> {
        let url = std::env::var(BACKEND_URL_ENV).map_err(|_| {
            GenerationError::BackendUnavailable(format!("{BACKEND_URL_ENV} is not set"))
        })?;
        Self::new(url, timeout)
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

fn is_local(url: &str) -> bool {
    let rest = url
        .strip_prefix("http://")
        .or_else(|| url.strip_prefix("https://"))
        .unwrap_or(url);
    rest.starts_with("localhost") || rest.starts_with("127.0.0.1") || rest.starts_with("[::1]")
}

impl Generator for RemoteBackend {
    fn backend_id(&self) -> String {
        format!("remote({})", self.base_url)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let unavailable = |m: String| GenerationError::BackendUnavailable(m);
        let response = self
            .client
            .post(format!("{}/generate", self.base_url))
            .json(&WireRequest {
                prompt: &request.prompt_text,
                max_new_tokens: request.max_new_tokens,
                greedy: request.greedy,
            })
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(unavailable(format!("server answered {status}")));
        }
        let reply: WireReply = response
            .json()
            .map_err(|e| unavailable(format!("malformed reply: {e}")))?;
        Ok(reply.text)
    }
}
