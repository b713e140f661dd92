//! Client for a chat-completion style reasoning service, with bounded
//! retries, exponential backoff and a JSONL audit trail.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::stub::StubBackend;
use super::{ArbitrationError, ArbitrationRequest, Choice};

pub const DEFAULT_API_KEY_ENV: &str = "SHAREDRIVE_VLM_API_KEY";
pub const ENDPOINT_ENV: &str = "SHAREDRIVE_VLM_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlmClientConfig {
    /// Full URL of the chat-completions endpoint. Falls back to the
    /// `SHAREDRIVE_VLM_ENDPOINT` environment variable when empty.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer credential.
    pub api_key_env: String,
    /// Credential given directly; takes precedence over `api_key_env`.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_s: f64,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles on every further attempt.
    pub backoff_ms: u64,
    pub temperature: f64,
    pub audit_log: Option<PathBuf>,
}

impl Default for VlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "gpt-4o".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            api_key: None,
            timeout_s: 10.0,
            max_attempts: 3,
            backoff_ms: 250,
            temperature: 0.0,
            audit_log: None,
        }
    }
}

impl VlmClientConfig {
    pub fn validate(&self) -> Result<(), ArbitrationError> {
        if !(self.timeout_s > 0.0) {
            return Err(ArbitrationError::Config("vlm timeout_s must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(ArbitrationError::Config("vlm max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum VlmBackend {
    Stub(StubBackend),
    Http,
}

#[derive(Debug, Clone)]
struct HttpTarget {
    endpoint: String,
    api_key: String,
}

#[derive(Debug, Clone)]
pub struct VlmClient {
    config: VlmClientConfig,
    backend: VlmBackend,
    target: Option<HttpTarget>,
    audit: Option<Arc<Mutex<File>>>,
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    frame: u64,
    prompt: &'a str,
    raw_response: Option<&'a str>,
    parsed_choice: Option<Choice>,
    latency_ms: f64,
}

impl VlmClient {
    pub fn stub() -> Self {
        Self::with_stub(StubBackend::Rules)
    }

    pub fn with_stub(stub: StubBackend) -> Self {
        Self {
            config: VlmClientConfig::default(),
            backend: VlmBackend::Stub(stub),
            target: None,
            audit: None,
        }
    }

    /// HTTP client. Fails before any request when the endpoint or the
    /// credential is missing.
    pub fn http(config: VlmClientConfig) -> Result<Self, ArbitrationError> {
        config.validate()?;
        let endpoint = if config.endpoint.trim().is_empty() {
            std::env::var(ENDPOINT_ENV).unwrap_or_default()
        } else {
            config.endpoint.clone()
        };
        if endpoint.trim().is_empty() {
            return Err(ArbitrationError::Config(format!(
                "no reasoning endpoint: set vlm.endpoint or {ENDPOINT_ENV}"
            )));
        }
        let api_key = match &config.api_key {
            Some(k) => k.clone(),
            None => std::env::var(&config.api_key_env).map_err(|_| {
                ArbitrationError::Config(format!("credential variable {} is not set", config.api_key_env))
            })?,
        };
        let mut client = Self {
            config,
            backend: VlmBackend::Http,
            target: Some(HttpTarget { endpoint, api_key }),
            audit: None,
        };
        if let Some(path) = client.config.audit_log.clone() {
            client = client.with_audit_log(path)?;
        }
        Ok(client)
    }

    pub fn with_audit_log(mut self, path: PathBuf) -> Result<Self, ArbitrationError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ArbitrationError::Config(format!("cannot open audit log {}: {e}", path.display())))?;
        self.audit = Some(Arc::new(Mutex::new(file)));
        Ok(self)
    }

    pub fn backend(&self) -> &VlmBackend {
        &self.backend
    }

    pub fn config(&self) -> &VlmClientConfig {
        &self.config
    }

    /// Raw completion for `prompt`.
    pub fn complete(&self, _frame: u64, prompt: &str, _req: &ArbitrationRequest) -> Result<String, ArbitrationError> {
        match &self.backend {
            VlmBackend::Stub(stub) => stub.respond(prompt),
            VlmBackend::Http => self.call_http(prompt),
        }
    }

    fn call_http(&self, prompt: &str) -> Result<String, ArbitrationError> {
        let target = self
            .target
            .as_ref()
            .ok_or_else(|| ArbitrationError::Config("http backend without endpoint".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(self.config.timeout_s)))
            .build()
            .into();
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut last_error = String::new();
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let result = agent
                .post(&target.endpoint)
                .header("Authorization", &format!("Bearer {}", target.api_key))
                .send_json(&body)
                .and_then(|mut r| r.body_mut().read_json::<serde_json::Value>());
            match result {
                Ok(v) => {
                    return extract_content(&v).ok_or_else(|| {
                        ArbitrationError::MalformedResponse("reply has no choices[0].message.content".into())
                    });
                }
                Err(e) => {
                    log::warn!("reasoning call attempt {} failed: {e}", attempt + 1);
                    last_error = e.to_string();
                }
            }
        }
        Err(ArbitrationError::VlmUnavailable(format!(
            "{} attempts failed, last error: {last_error}",
            self.config.max_attempts
        )))
    }

    /// Appends one audit record when an audit log is configured.
    pub fn audit(&self, frame: u64, prompt: &str, raw: Option<&str>, parsed: Option<Choice>, started: Instant) {
        let Some(file) = &self.audit else { return };
        let record = AuditRecord {
            frame,
            prompt,
            raw_response: raw,
            parsed_choice: parsed,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        };
        let line = serde_json::to_string(&record).expect("audit record serializes");
        let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("cannot write audit record: {e}");
        }
    }
}

fn extract_content(v: &serde_json::Value) -> Option<String> {
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}
