//! Blocking HTTP client for remote generator/discriminator backends.

use std::time::Duration;

use covergen_core::genai::{
    ClientError, CoverBackend, CoverImage, ErrorBody, GenerateRequest, GenerateResponse, HealthResponse,
    ImagePayload, ScoreReport, ScoreRequest, DEFAULT_BATCH_CAP,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

const MAX_BODY: u64 = 512 * 1024 * 1024;

/// Speaks `POST /generate`, `POST /score` and `GET /health`.
#[derive(Clone)]
pub struct HttpBackend {
    generator: String,
    discriminator: String,
    batch_cap: usize,
    agent: Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("generator", &self.generator)
            .field("discriminator", &self.discriminator)
            .field("batch_cap", &self.batch_cap)
            .finish()
    }
}

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

impl HttpBackend {
    pub fn new(generator: &str, discriminator: &str) -> Self {
        Self {
            generator: generator.trim_end_matches('/').to_string(),
            discriminator: discriminator.trim_end_matches('/').to_string(),
            batch_cap: DEFAULT_BATCH_CAP,
            agent: agent(Duration::from_secs(120)),
        }
    }

    pub fn with_batch_cap(mut self, cap: usize) -> Self {
        self.batch_cap = cap.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = agent(timeout);
        self
    }

    pub fn generator_health(&self) -> Result<HealthResponse, ClientError> {
        self.get_json(&format!("{}/health", self.generator))
    }

    pub fn discriminator_health(&self) -> Result<HealthResponse, ClientError> {
        self.get_json(&format!("{}/health", self.discriminator))
    }

    fn get_json<T: DeserializeOwned>(&self, url: &str) -> Result<T, ClientError> {
        self.with_retry(|| {
            let resp = self.agent.get(url).call().map_err(transport)?;
            decode(resp)
        })
    }

    fn post_json<B: Serialize, T: DeserializeOwned>(&self, url: &str, body: &B) -> Result<T, ClientError> {
        self.with_retry(|| {
            let resp = self.agent.post(url).send_json(body).map_err(transport)?;
            decode(resp)
        })
    }

    /// One retry, and only for transport failures.
    fn with_retry<T>(&self, call: impl Fn() -> Result<T, ClientError>) -> Result<T, ClientError> {
        match call() {
            Err(e) if e.is_transport() => call(),
            other => other,
        }
    }
}

fn transport(e: ureq::Error) -> ClientError {
    ClientError::Transport(e.to_string())
}

fn decode<T: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T, ClientError> {
    let status = resp.status();
    let text = resp
        .body_mut()
        .with_config()
        .limit(MAX_BODY)
        .read_to_string()
        .map_err(transport)?;
    if !status.is_success() {
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or_else(|_| format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        return Err(ClientError::Backend(message));
    }
    serde_json::from_str(&text).map_err(|e| ClientError::protocol(field_hint(&e), e.to_string()))
}

/// serde_json reports missing fields in the message only; pull the name out for the error.
fn field_hint(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`').nth(1).unwrap_or("body").to_string()
}

impl CoverBackend for HttpBackend {
    fn identity(&self) -> String {
        format!("http:{}|{}", self.generator, self.discriminator)
    }

    fn generate(&self, titles: &[String], seed: u64, width: u32, height: u32) -> Result<Vec<CoverImage>, ClientError> {
        if titles.is_empty() {
            return Err(ClientError::protocol("titles", "must not be empty"));
        }
        let url = format!("{}/generate", self.generator);
        let mut out = Vec::with_capacity(titles.len());
        for chunk in titles.chunks(self.batch_cap) {
            let req = GenerateRequest {
                titles: chunk.to_vec(),
                seed,
                width,
                height,
            };
            let resp: GenerateResponse = self.post_json(&url, &req)?;
            out.extend(resp.into_images(chunk.len())?);
        }
        Ok(out)
    }

    fn score(&self, images: &[CoverImage], titles: Option<&[String]>) -> Result<ScoreReport, ClientError> {
        if images.is_empty() {
            return Err(ClientError::protocol("images", "must not be empty"));
        }
        if titles.is_some_and(|t| t.len() != images.len()) {
            return Err(ClientError::protocol("titles", "must align with images"));
        }
        let url = format!("{}/score", self.discriminator);
        let mut report = ScoreReport {
            unconditional: Vec::with_capacity(images.len()),
            conditional: titles.map(|_| Vec::with_capacity(images.len())),
        };
        let mut offset = 0;
        for chunk in images.chunks(self.batch_cap) {
            let req = ScoreRequest {
                images: chunk.iter().map(|i| ImagePayload { png_base64: i.to_base64_png() }).collect(),
                titles: titles.map(|t| t[offset..offset + chunk.len()].to_vec()),
            };
            let resp: ScoreReport = self.post_json(&url, &req)?;
            resp.validate(chunk.len(), titles.is_some())?;
            report.unconditional.extend(resp.unconditional);
            match (&mut report.conditional, resp.conditional) {
                (Some(all), Some(c)) => all.extend(c),
                // backend did not return conditional scores for this batch
                (all @ Some(_), None) => *all = None,
                _ => {}
            }
            offset += chunk.len();
        }
        Ok(report)
    }
}
