//! Completion backends, retrying execution, and revision parsing.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::Recipe;
use crate::jsonl;
use crate::par::Exec;
use crate::prompt::{build_revision_prompt, PromptError, PromptText, ORIGINAL_HEADER, SEPARATOR};

pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("completion is empty")]
    Empty,
    #[error("step number {found} does not follow {previous}; raw completion: {raw:?}")]
    NonIncreasing {
        previous: u64,
        found: u64,
        raw: String,
    },
    #[error("step {number} is empty; raw completion: {raw:?}")]
    EmptyStep { number: u64, raw: String },
}

/// Failure of a single backend attempt.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("backend rejected request: {0}")]
    Fatal(String),
    #[error("no scripted completion for prompt fingerprint {0}")]
    UnknownFixture(String),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
    #[error("throttled after {attempts} attempts: {last}")]
    Throttled { attempts: u32, last: String },
    #[error(transparent)]
    Backend(BackendError),
    #[error("could not parse completion for {recipe_id}: {source}")]
    Parse {
        recipe_id: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: PromptText,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    pub attempt_budget: u32,
}

impl CompletionRequest {
    pub fn check(&self) -> Result<(), GatewayError> {
        if self.attempt_budget < 1 {
            return Err(GatewayError::InvalidRequest("attempt_budget must be >= 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(GatewayError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

/// Exponential backoff between retried attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial: Duration,
    pub factor: f64,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial: Duration::from_millis(500),
            factor: 2.0,
            max: Duration::from_secs(8),
        }
    }
}

impl Backoff {
    pub fn none() -> Self {
        Self {
            initial: Duration::ZERO,
            factor: 1.0,
            max: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let scaled = self.initial.as_secs_f64() * self.factor.powi(retry as i32);
        Duration::from_secs_f64(scaled.min(self.max.as_secs_f64()))
    }
}

/// Request settings applied by [`revise_recipe`].
#[derive(Debug, Clone, PartialEq)]
pub struct RequestDefaults {
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    pub attempt_budget: u32,
    pub backoff: Backoff,
    /// Pins `created_at` for reproducible output.
    pub fixed_time: Option<DateTime<Utc>>,
}

impl Default for RequestDefaults {
    fn default() -> Self {
        Self {
            max_tokens: 1024,
            temperature: 0.7,
            stop_sequences: vec![SEPARATOR.to_string()],
            attempt_budget: 3,
            backoff: Backoff::default(),
            fixed_time: None,
        }
    }
}

impl RequestDefaults {
    pub fn request(&self, prompt: PromptText) -> CompletionRequest {
        CompletionRequest {
            prompt,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            stop_sequences: self.stop_sequences.clone(),
            attempt_budget: self.attempt_budget,
        }
    }
}

/// A source of completions. One call is one attempt; retries live in
/// [`complete`].
pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;
    fn attempt(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

/// Runs `request`, retrying transient failures and rate limits with
/// exponential backoff until `attempt_budget` attempts are spent.
pub fn complete(
    request: &CompletionRequest,
    backend: &dyn CompletionBackend,
    backoff: &Backoff,
) -> Result<String, GatewayError> {
    request.check()?;
    let mut attempt = 0;
    loop {
        attempt += 1;
        let err = match backend.attempt(request) {
            Ok(text) => return Ok(text),
            Err(err @ (BackendError::Transient(_) | BackendError::RateLimited(_))) => err,
            Err(other) => return Err(GatewayError::Backend(other)),
        };
        if attempt >= request.attempt_budget {
            return Err(match err {
                BackendError::RateLimited(last) => GatewayError::Throttled { attempts: attempt, last },
                BackendError::Transient(last) => GatewayError::Transport { attempts: attempt, last },
                other => GatewayError::Backend(other),
            });
        }
        let delay = backoff.delay(attempt - 1);
        log::debug!(
            "{} attempt {attempt} failed ({err}); retrying in {delay:?}",
            backend.id()
        );
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
    }
}

fn step_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[ \t]*(\d+)\. ").expect("static regex"))
}

/// Splits a completion that continues after the prompt's `"1. "` anchor.
///
/// The text before the first numbered line is step 1. Later steps start at
/// lines of the form `<spaces><integer>. `; numbers must strictly increase
/// but may skip. Lines without a number continue the current step.
pub fn parse_revision(raw: &str) -> Result<Vec<String>, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let re = step_line_regex();
    // (number, lines); the implicit first step has no number.
    let mut steps: Vec<(Option<u64>, Vec<&str>)> = vec![(None, Vec::new())];
    let mut previous = 1u64;
    let mut numbered_seen = false;
    for line in raw.lines() {
        if let Some(caps) = re.captures(line) {
            let digits = caps.get(1).expect("group 1").as_str();
            let number: u64 = digits.parse().unwrap_or(u64::MAX);
            let implicit_empty = !numbered_seen && steps[0].1.iter().all(|l| l.trim().is_empty());
            if implicit_empty {
                // Completion restarted its own numbering; the implicit step is dropped.
                steps.clear();
            } else if number <= previous {
                return Err(ParseError::NonIncreasing {
                    previous,
                    found: number,
                    raw: raw.to_string(),
                });
            }
            numbered_seen = true;
            previous = number;
            let rest = &line[caps.get(0).expect("group 0").end()..];
            steps.push((Some(number), vec![rest]));
        } else {
            steps.last_mut().expect("at least one step").1.push(line);
        }
    }
    steps
        .into_iter()
        .map(|(number, lines)| {
            let text = lines.join("\n").trim().to_string();
            if text.is_empty() {
                Err(ParseError::EmptyStep {
                    number: number.unwrap_or(1),
                    raw: raw.to_string(),
                })
            } else {
                Ok(text)
            }
        })
        .collect()
}

/// Renders steps the way a completion continues the prompt: step 1 bare,
/// then `"\n2. "`, `"\n3. "` and so on.
pub fn render_continuation(steps: &[String]) -> String {
    let mut out = String::new();
    for (idx, step) in steps.iter().enumerate() {
        if idx > 0 {
            out.push_str(&format!("\n{}. ", idx + 1));
        }
        out.push_str(step);
    }
    out
}

/// Echoes the prompt's original steps back as the revision.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMock;

impl IdentityMock {
    fn original_steps(prompt: &str) -> Option<Vec<String>> {
        let header = format!("\n{ORIGINAL_HEADER}\n");
        let start = prompt.find(&header)? + header.len();
        let body = &prompt[start..];
        let end = body.find(&format!("\n{SEPARATOR}\n"))?;
        let re = step_line_regex();
        body[..end]
            .lines()
            .map(|line| {
                re.find(line)
                    .map(|m| line[m.end()..].to_string())
            })
            .collect()
    }
}

impl CompletionBackend for IdentityMock {
    fn id(&self) -> String {
        "identity-mock".into()
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        Self::original_steps(&request.prompt.text)
            .filter(|s| !s.is_empty())
            .map(|steps| render_continuation(&steps))
            .ok_or_else(|| BackendError::Fatal("prompt has no Original Recipe section".into()))
    }
}

/// Returns fixed completions keyed by prompt fingerprint.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    fixtures: HashMap<String, String>,
}

impl ScriptedMock {
    pub fn new(fixtures: HashMap<String, String>) -> Self {
        Self { fixtures }
    }

    /// Loads a JSON object mapping fingerprint to completion text.
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("fixture file {}: {e}", path.display())))?;
        let fixtures = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("fixture file {}: {e}", path.display())))?;
        Ok(Self { fixtures })
    }

    pub fn insert(&mut self, fingerprint: impl Into<String>, completion: impl Into<String>) {
        self.fixtures.insert(fingerprint.into(), completion.into());
    }
}

impl CompletionBackend for ScriptedMock {
    fn id(&self) -> String {
        "scripted-mock".into()
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let fp = request.prompt.fingerprint();
        self.fixtures
            .get(&fp)
            .cloned()
            .ok_or(BackendError::UnknownFixture(fp))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal POST transport so the remote backend can be exercised offline.
/// `Err` means the request never produced an HTTP response.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &serde_json::Value) -> Result<HttpReply, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &serde_json::Value) -> Result<HttpReply, String> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .json(body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// OpenAI-style text completion endpoint (`POST {base_url}/completions`).
pub struct RemoteBackend {
    base_url: String,
    model: String,
    api_key: String,
    transport: Box<dyn HttpTransport>,
}

impl RemoteBackend {
    /// Reads the credential from `LLM_API_KEY`.
    pub fn from_env(base_url: &str, model: &str) -> Result<Self, GatewayError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GatewayError::Config(format!("{API_KEY_ENV} is not set")))?;
        let transport = ReqwestTransport::new(Duration::from_secs(120))?;
        Self::with_transport(base_url, model, &api_key, Box::new(transport))
    }

    pub fn with_transport(
        base_url: &str,
        model: &str,
        api_key: &str,
        transport: Box<dyn HttpTransport>,
    ) -> Result<Self, GatewayError> {
        if base_url.trim().is_empty() || model.trim().is_empty() {
            return Err(GatewayError::Config("base URL and model id are required".into()));
        }
        if api_key.trim().is_empty() {
            return Err(GatewayError::Config(format!("{API_KEY_ENV} is empty")));
        }
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            transport,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/completions", self.base_url)
    }

    pub fn request_body(&self, request: &CompletionRequest) -> serde_json::Value {
        json!({
            "model": self.model,
            "prompt": request.prompt.text,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "stop": request.stop_sequences,
        })
    }
}

impl CompletionBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let reply = self
            .transport
            .post_json(&self.endpoint(), &self.api_key, &self.request_body(request))
            .map_err(BackendError::Transient)?;
        match reply.status {
            200..=299 => {
                let value: serde_json::Value = serde_json::from_str(&reply.body)
                    .map_err(|e| BackendError::Fatal(format!("bad response body: {e}")))?;
                value["choices"][0]["text"]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| BackendError::Fatal("response has no choices[0].text".into()))
            }
            429 => Err(BackendError::RateLimited(reply.body)),
            408 | 500..=599 => Err(BackendError::Transient(format!("HTTP {}", reply.status))),
            status => Err(BackendError::Fatal(format!("HTTP {status}: {}", reply.body))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionResult {
    pub recipe_id: String,
    pub revised_steps: Vec<String>,
    pub raw_completion: String,
    pub backend_id: String,
    pub prompt_fingerprint: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub created_at: DateTime<Utc>,
}

/// Prompt, complete, parse. A parse failure earns exactly one fresh
/// completion before the error is surfaced.
pub fn revise_recipe(
    recipe: &Recipe,
    backend: &dyn CompletionBackend,
    defaults: &RequestDefaults,
) -> Result<RevisionResult, GatewayError> {
    let prompt = build_revision_prompt(recipe)?;
    let prompt_fingerprint = prompt.fingerprint();
    let request = defaults.request(prompt);

    let mut raw = complete(&request, backend, &defaults.backoff)?;
    let steps = match parse_revision(&raw) {
        Ok(steps) => steps,
        Err(first) => {
            log::warn!("re-prompting {} after parse failure: {first}", recipe.id);
            raw = complete(&request, backend, &defaults.backoff)?;
            parse_revision(&raw).map_err(|source| GatewayError::Parse {
                recipe_id: recipe.id.clone(),
                source,
            })?
        }
    };
    Ok(RevisionResult {
        recipe_id: recipe.id.clone(),
        revised_steps: steps,
        raw_completion: raw,
        backend_id: backend.id(),
        prompt_fingerprint,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        created_at: defaults.fixed_time.unwrap_or_else(Utc::now),
    })
}

/// Appends results to `<dir>/<recipe_id>.revision.jsonl`; writes are
/// serialized.
pub struct ResultStore {
    dir: PathBuf,
    lock: Mutex<()>,
}

impl ResultStore {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            lock: Mutex::new(()),
        })
    }

    pub fn path_for(&self, recipe_id: &str) -> PathBuf {
        let safe: String = recipe_id
            .chars()
            .map(|c| if c == '/' || c == '\\' { '_' } else { c })
            .collect();
        self.dir.join(format!("{safe}.revision.jsonl"))
    }

    pub fn persist(&self, result: &RevisionResult) -> io::Result<()> {
        let mut line = serde_json::to_string(result)?;
        line.push('\n');
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path_for(&result.recipe_id))?;
        file.write_all(line.as_bytes())
    }
}

/// Revises every recipe with at most `max_in_flight` concurrent completions.
/// Results keep input order.
pub fn revise_batch(
    recipes: &[Recipe],
    backend: &dyn CompletionBackend,
    defaults: &RequestDefaults,
    max_in_flight: usize,
    exec: Exec,
    store: Option<&ResultStore>,
) -> Vec<Result<RevisionResult, GatewayError>> {
    exec.map_bounded(recipes, max_in_flight.max(1), |recipe| {
        let result = revise_recipe(recipe, backend, defaults)?;
        if let Some(store) = store {
            store
                .persist(&result)
                .map_err(|e| GatewayError::Config(format!("persisting {}: {e}", recipe.id)))?;
        }
        Ok(result)
    })
}

pub fn write_revisions(path: &Path, results: &[RevisionResult]) -> io::Result<()> {
    jsonl::write_records(path, results)
}

pub fn read_revisions(path: &Path) -> io::Result<Vec<RevisionResult>> {
    let lines = jsonl::read_lines(path)?;
    let (ok, errors) = jsonl::parse_lines::<RevisionResult>(&lines);
    if let Some(first) = errors.first() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, first.to_string()));
    }
    Ok(ok.into_iter().map(|(_, r)| r).collect())
}
