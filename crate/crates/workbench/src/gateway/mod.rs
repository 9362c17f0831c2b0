//! Single point of access to language models.
//!
//! Speaks the standard chat-completions wire protocol over HTTP, or serves
//! scripted fixtures through the mock provider. Adds retry with exponential
//! backoff, a content-addressed response cache, bounded in-flight
//! concurrency, and structured-output parsing with a single repair pass.

mod mock;

pub use mock::{Fixture, FixtureBook};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    String,
    Number,
    Enum,
    List,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<String>>,
}

impl SchemaField {
    pub fn string(name: &str) -> Self {
        Self { name: name.into(), kind: FieldKind::String, enum_values: None }
    }
    pub fn number(name: &str) -> Self {
        Self { name: name.into(), kind: FieldKind::Number, enum_values: None }
    }
    pub fn list(name: &str) -> Self {
        Self { name: name.into(), kind: FieldKind::List, enum_values: None }
    }
    pub fn enumeration(name: &str, values: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Enum,
            enum_values: Some(values.iter().map(|s| s.to_string()).collect()),
        }
    }
}

/// Required fields of a structured LLM response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub required_fields: Vec<SchemaField>,
}

impl SchemaSpec {
    pub fn new(fields: Vec<SchemaField>) -> Self {
        assert!(!fields.is_empty(), "SchemaSpec requires at least one field");
        Self { required_fields: fields }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub response_schema: Option<SchemaSpec>,
    /// Pipeline stage name ("intent", "score", "summarize", "judge",
    /// "generate", ...). Bookkeeping only; excluded from the cache key.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(model: &str, tag: &str, messages: Vec<Message>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            response_schema: None,
            tag: tag.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Mock,
}

fn default_max_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    250
}
fn default_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env_var: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub base_backoff_ms: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn mock() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint_url: String::new(),
            model: "mock".into(),
            api_key_env_var: String::new(),
            max_retries: default_max_retries(),
            base_backoff_ms: default_backoff(),
            concurrency_limit: default_concurrency(),
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.kind == ProviderKind::Http && self.endpoint_url.is_empty() {
            return Err(GatewayError::Config("http provider requires endpoint_url".into()));
        }
        if self.concurrency_limit == 0 {
            return Err(GatewayError::Config("concurrency_limit must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub provider: ProviderKind,
    pub cached: bool,
    pub latency_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("retries exhausted, last status {0}")]
    ExhaustedRetries(u16),
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("no fixture registered for tag `{0}`")]
    NoFixture(String),
    #[error("response does not satisfy schema: {0}")]
    SchemaParse(String),
    #[error("api key environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("unexpected HTTP status {0}")]
    UnexpectedStatus(u16),
    #[error("provider returned empty content")]
    EmptyResponse,
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("cache io error: {0}")]
    CacheIo(#[from] std::io::Error),
}

impl GatewayError {
    /// True for failures that should abort a whole run rather than degrade
    /// a single call.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::Auth(_)
                | GatewayError::MissingApiKey(_)
                | GatewayError::ProviderUnreachable(_)
                | GatewayError::Config(_)
        )
    }
}

/// Deterministic digest over the semantic content of a request. The `tag`
/// is excluded: it names the pipeline stage, not the request.
pub fn cache_key(req: &ChatRequest, cfg: &ProviderConfig) -> String {
    let canonical = serde_json::json!({
        "kind": cfg.kind,
        "model": req.model,
        "messages": req.messages,
        "temperature": req.temperature,
        "schema": req.response_schema,
    });
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&canonical).expect("canonical value serializes"));
    hex::encode(hasher.finalize())
}

/// Counting semaphore; blocking admission, no fairness guarantee.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits), cv: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.sem.permits.lock().unwrap() += 1;
        self.sem.cv.notify_one();
    }
}

/// Shareable gateway; all LLM traffic in the workbench flows through here.
pub struct Gateway {
    cfg: ProviderConfig,
    fixtures: FixtureBook,
    sem: Semaphore,
    http: reqwest::blocking::Client,
    tag_counts: Mutex<BTreeMap<String, u64>>,
}

impl Gateway {
    pub fn new(cfg: ProviderConfig) -> Result<Self, GatewayError> {
        Self::with_fixtures(cfg, FixtureBook::new())
    }

    pub fn with_fixtures(cfg: ProviderConfig, fixtures: FixtureBook) -> Result<Self, GatewayError> {
        cfg.validate()?;
        if let Some(dir) = &cfg.cache_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            sem: Semaphore::new(cfg.concurrency_limit),
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| GatewayError::Config(e.to_string()))?,
            cfg,
            fixtures,
            tag_counts: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    /// Number of `complete_chat` calls seen per tag (cache hits included).
    pub fn tag_counts(&self) -> BTreeMap<String, u64> {
        self.tag_counts.lock().unwrap().clone()
    }

    pub fn complete_chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        *self.tag_counts.lock().unwrap().entry(req.tag.clone()).or_insert(0) += 1;

        let key = cache_key(req, &self.cfg);
        if let Some(dir) = &self.cfg.cache_dir {
            let path = dir.join(&key);
            if let Ok(content) = std::fs::read_to_string(&path) {
                return Ok(ChatResponse {
                    content,
                    provider: self.cfg.kind,
                    cached: true,
                    latency_ms: started.elapsed().as_secs_f64() * 1000.0,
                });
            }
        }

        let _permit = self.sem.acquire();
        let content = match self.cfg.kind {
            ProviderKind::Mock => self.fixtures.respond(req)?,
            ProviderKind::Http => self.http_complete(req)?,
        };
        if content.is_empty() {
            return Err(GatewayError::EmptyResponse);
        }

        if let Some(dir) = &self.cfg.cache_dir {
            // Write-temp-then-rename; concurrent writers of the same key
            // produce identical content, so last-rename-wins is benign.
            let tmp = dir.join(format!(".{key}.{:?}.tmp", std::thread::current().id()));
            std::fs::write(&tmp, &content)?;
            std::fs::rename(&tmp, dir.join(&key))?;
        }

        Ok(ChatResponse {
            content,
            provider: self.cfg.kind,
            cached: false,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }

    fn http_complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let url = format!("{}/chat/completions", self.cfg.endpoint_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        let api_key = if self.cfg.api_key_env_var.is_empty() {
            None
        } else {
            Some(
                std::env::var(&self.cfg.api_key_env_var)
                    .map_err(|_| GatewayError::MissingApiKey(self.cfg.api_key_env_var.clone()))?,
            )
        };

        let mut last_status: u16 = 0;
        let mut last_transport_error: Option<String> = None;
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let backoff = self.cfg.base_backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let mut builder = self.http.post(&url).json(&body);
            if let Some(key) = &api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    match status {
                        200 => {
                            let value: serde_json::Value = resp
                                .json()
                                .map_err(|e| GatewayError::ProviderUnreachable(e.to_string()))?;
                            let content = value["choices"][0]["message"]["content"]
                                .as_str()
                                .unwrap_or("")
                                .to_string();
                            if content.is_empty() {
                                return Err(GatewayError::EmptyResponse);
                            }
                            return Ok(content);
                        }
                        401 | 403 => return Err(GatewayError::Auth(status)),
                        429 | 500..=599 => {
                            last_status = status;
                            last_transport_error = None;
                        }
                        other => return Err(GatewayError::UnexpectedStatus(other)),
                    }
                }
                Err(e) => {
                    last_transport_error = Some(e.to_string());
                }
            }
        }
        match last_transport_error {
            Some(e) => Err(GatewayError::ProviderUnreachable(e)),
            None => Err(GatewayError::ExhaustedRetries(last_status)),
        }
    }

    /// Chat call whose response must parse into all required schema fields.
    pub fn complete_structured(
        &self,
        req: &ChatRequest,
        schema: &SchemaSpec,
    ) -> Result<serde_json::Map<String, serde_json::Value>, GatewayError> {
        let response = self.complete_chat(req)?;
        parse_structured(&response.content, schema)
    }
}

/// Parses LLM output as a JSON object satisfying `schema`. If the raw parse
/// fails, one repair pass strips code fences and extracts the first
/// balanced `{...}` block before giving up.
pub fn parse_structured(
    content: &str,
    schema: &SchemaSpec,
) -> Result<serde_json::Map<String, serde_json::Value>, GatewayError> {
    let parsed: serde_json::Value = match serde_json::from_str(content.trim()) {
        Ok(v) => v,
        Err(_) => {
            let repaired = repair_json(content)
                .ok_or_else(|| GatewayError::SchemaParse(content.to_string()))?;
            serde_json::from_str(&repaired)
                .map_err(|_| GatewayError::SchemaParse(content.to_string()))?
        }
    };
    let obj = match parsed {
        serde_json::Value::Object(o) => o,
        _ => return Err(GatewayError::SchemaParse(content.to_string())),
    };
    for field in &schema.required_fields {
        let value = obj
            .get(&field.name)
            .ok_or_else(|| GatewayError::SchemaParse(format!("missing field `{}` in: {content}", field.name)))?;
        let ok = match field.kind {
            FieldKind::String => value.is_string(),
            FieldKind::Number => value.is_number(),
            FieldKind::List => value.is_array(),
            FieldKind::Enum => match (value.as_str(), &field.enum_values) {
                (Some(s), Some(allowed)) => allowed.iter().any(|a| a == s),
                (Some(_), None) => true,
                _ => false,
            },
        };
        if !ok {
            return Err(GatewayError::SchemaParse(format!(
                "field `{}` has wrong kind or value in: {content}",
                field.name
            )));
        }
    }
    Ok(obj)
}

/// Strips markdown fences and returns the first balanced `{...}` block.
fn repair_json(content: &str) -> Option<String> {
    let stripped: String = content
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    let start = stripped.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in stripped[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(stripped[start..start + i + c.len_utf8()].to_string());
                }
            }
            _ => {}
        }
    }
    None
}
