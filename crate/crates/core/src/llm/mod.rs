//! Language-model gateway: two model tiers, schema-checked JSON replies,
//! embeddings, and a deterministic offline stub.

mod extract;
mod http;
pub mod prompts;
pub mod schemas;
mod stub;
pub mod tape;

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

pub use extract::extract_json;
pub use http::HttpProvider;
pub use prompts::Prompt;
pub use stub::{stub_embed, words, DisabledProvider, StubProvider, STUB_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Reasoning,
    Lightweight,
}

/// Every prompt-backed task. The discriminant indexes the schema table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    StoryCompile = 0,
    ViewCaption = 1,
    Capture = 2,
    Tags = 3,
    Drift = 4,
    Issues = 5,
    IssueLabels = 6,
    Reflections = 7,
}

impl Task {
    pub const COUNT: usize = 8;
    pub const ALL: [Task; Task::COUNT] = [
        Task::StoryCompile,
        Task::ViewCaption,
        Task::Capture,
        Task::Tags,
        Task::Drift,
        Task::Issues,
        Task::IssueLabels,
        Task::Reflections,
    ];

    pub fn tier(self) -> Tier {
        match self {
            Task::StoryCompile | Task::ViewCaption => Tier::Reasoning,
            _ => Tier::Lightweight,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::StoryCompile => "story_compile",
            Task::ViewCaption => "view_caption",
            Task::Capture => "capture",
            Task::Tags => "tags",
            Task::Drift => "drift",
            Task::Issues => "issues",
            Task::IssueLabels => "issue_labels",
            Task::Reflections => "reflections",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("language model provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("{task} output still invalid after {attempts} attempts: {last_error}")]
    SchemaValidationExhausted { task: Task, attempts: u32, last_error: String, raw: String },
    #[error("embedding input is empty")]
    EmptyInput,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierConfig {
    pub model_name: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl TierConfig {
    fn named(model: &str, timeout_secs: u64) -> Self {
        Self { model_name: model.to_string(), timeout_secs, max_retries: 1 }
    }
}

impl Default for TierConfig {
    fn default() -> Self {
        Self::named("", 60)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub api_base: Option<String>,
    pub api_key: Option<String>,
    pub reasoning: TierConfig,
    pub lightweight: TierConfig,
    pub embedding_model: String,
    pub stub_mode: bool,
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            api_base: None,
            api_key: None,
            reasoning: TierConfig::named("gpt-4o", 120),
            lightweight: TierConfig::named("gpt-4o-mini", 30),
            embedding_model: "text-embedding-3-small".into(),
            stub_mode: true,
            max_in_flight: 4,
        }
    }
}

impl GatewayConfig {
    pub fn tier(&self, tier: Tier) -> &TierConfig {
        match tier {
            Tier::Reasoning => &self.reasoning,
            Tier::Lightweight => &self.lightweight,
        }
    }

    /// Overrides from `NARRASCOPE_*` variables and `STUB_MODE`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("NARRASCOPE_API_BASE") {
            self.api_base = Some(v);
        }
        if let Some(v) = get("NARRASCOPE_API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = get("NARRASCOPE_REASONING_MODEL") {
            self.reasoning.model_name = v;
        }
        if let Some(v) = get("NARRASCOPE_LIGHTWEIGHT_MODEL") {
            self.lightweight.model_name = v;
        }
        if let Some(v) = get("NARRASCOPE_EMBEDDING_MODEL") {
            self.embedding_model = v;
        }
        if let Some(v) = get("STUB_MODE") {
            self.stub_mode = matches!(v.to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on");
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.stub_mode {
            return Ok(());
        }
        if self.api_base.as_deref().unwrap_or("").is_empty() {
            return Err(LlmError::Config("api_base is required outside stub mode".into()));
        }
        if self.reasoning.model_name.is_empty() || self.lightweight.model_name.is_empty() {
            return Err(LlmError::Config("both model tiers must be named outside stub mode".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub task: Task,
    pub tier: Tier,
    pub model: String,
    pub system: String,
    pub user: String,
    pub attempt: u32,
    #[serde(skip)]
    pub timeout: Duration,
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
    fn name(&self) -> &str;
    /// Embeddings are a pure function of the text, so a replay may recompute them.
    fn deterministic_embeddings(&self) -> bool {
        false
    }
}

/// One successful round trip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatExchange {
    pub task: Task,
    pub tier: Tier,
    pub system: String,
    pub user: String,
    pub raw_response: String,
    pub parsed: Json,
    pub attempts: u32,
}

struct InFlight {
    limit: usize,
    count: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    config: Arc<GatewayConfig>,
    in_flight: Arc<InFlight>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("provider", &self.provider.name()).finish()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, config: GatewayConfig) -> Self {
        let limit = config.max_in_flight.max(1);
        Self {
            provider,
            config: Arc::new(config),
            in_flight: Arc::new(InFlight { limit, count: Mutex::new(0), freed: Condvar::new() }),
        }
    }

    pub fn from_config(config: GatewayConfig) -> Result<Self, LlmError> {
        config.validate()?;
        if config.stub_mode {
            Ok(Self::new(Arc::new(StubProvider::new()), config))
        } else {
            let http = HttpProvider::new(&config)?;
            Ok(Self::new(Arc::new(http), config))
        }
    }

    pub fn stub(stub: StubProvider) -> Self {
        Self::new(Arc::new(stub), GatewayConfig::default())
    }

    /// Stub embeddings, no canned chat replies.
    pub fn offline() -> Self {
        Self::stub(StubProvider::new())
    }

    /// No chat, no embeddings: every caller takes its rule-based path.
    pub fn disabled() -> Self {
        Self::new(Arc::new(DisabledProvider), GatewayConfig::default())
    }

    pub fn provider(&self) -> Arc<dyn Provider> {
        self.provider.clone()
    }

    /// Same configuration, different provider.
    pub fn with_provider(&self, provider: Arc<dyn Provider>) -> Self {
        Self::new(provider, (*self.config).clone())
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn chat(&self, prompt: &Prompt) -> Result<ChatExchange, LlmError> {
        self.chat_checked(prompt, |_| Ok(()))
    }

    /// Sends the prompt, extracts JSON, validates it against the task schema and
    /// then `check`. Failures are re-asked with the error appended, up to the
    /// tier's retry budget.
    pub fn chat_checked(
        &self,
        prompt: &Prompt,
        check: impl Fn(&Json) -> Result<(), String>,
    ) -> Result<ChatExchange, LlmError> {
        let tier = prompt.task.tier();
        let tc = self.config.tier(tier);
        let attempts = 1 + tc.max_retries;
        let mut user = prompt.user.clone();
        let mut last_error = String::new();
        let mut last_raw = String::new();
        for attempt in 1..=attempts {
            let req = ChatRequest {
                task: prompt.task,
                tier,
                model: tc.model_name.clone(),
                system: prompt.system.clone(),
                user: user.clone(),
                attempt,
                timeout: Duration::from_secs(tc.timeout_secs.max(1)),
            };
            let raw = {
                let _permit = self.in_flight.acquire();
                self.provider.complete(&req)?
            };
            let outcome = extract_json(&raw)
                .and_then(|v| schemas::check(prompt.task, &v).map(|_| v))
                .and_then(|v| check(&v).map(|_| v));
            match outcome {
                Ok(parsed) => {
                    return Ok(ChatExchange {
                        task: prompt.task,
                        tier,
                        system: prompt.system.clone(),
                        user,
                        raw_response: raw,
                        parsed,
                        attempts: attempt,
                    })
                }
                Err(e) => {
                    user = format!(
                        "{}\n\nYour previous reply was rejected: {e}\nReturn only JSON in the required format.",
                        prompt.user
                    );
                    last_error = e;
                    last_raw = raw;
                }
            }
        }
        Err(LlmError::SchemaValidationExhausted { task: prompt.task, attempts, last_error, raw: last_raw })
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::EmptyInput);
        }
        let vectors = {
            let _permit = self.in_flight.acquire();
            self.provider.embed(texts)?
        };
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
                return Err(LlmError::DimensionMismatch(first.len(), bad.len()));
            }
        }
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn capture_prompt() -> Prompt {
        prompts::interaction_capture(&serde_json::json!({"interaction_log": []}))
    }

    const GOOD_CAPTURE: &str = r#"{"narrative_suggestion": null, "source_elementId": null, "source_view_title": null, "explanation": null}"#;

    #[test]
    fn canned_reply_served_without_network() {
        let stub = StubProvider::new();
        stub.register(Task::Capture, GOOD_CAPTURE);
        let gw = Gateway::stub(stub);
        let ex = gw.chat(&capture_prompt()).unwrap();
        assert_eq!(ex.parsed["narrative_suggestion"], Json::Null);
        assert_eq!(ex.attempts, 1);
        assert_eq!(gw.provider_name(), "stub");
    }

    #[test]
    fn prose_wrapped_reply_is_extracted() {
        let stub = StubProvider::new();
        stub.register(Task::Capture, format!("Sure! ```json\n{GOOD_CAPTURE}\n``` hope that helps"));
        let ex = Gateway::stub(stub).chat(&capture_prompt()).unwrap();
        assert!(ex.parsed.is_object());
    }

    #[test]
    fn invalid_then_valid_retries_once() {
        let stub = StubProvider::new();
        stub.register(Task::Capture, "{}");
        stub.register(Task::Capture, GOOD_CAPTURE);
        let ex = Gateway::stub(stub).chat(&capture_prompt()).unwrap();
        assert_eq!(ex.attempts, 2);
        assert!(ex.user.contains("previous reply was rejected"));
    }

    #[test]
    fn twice_invalid_exhausts() {
        let stub = StubProvider::new();
        stub.register(Task::Capture, "not json at all");
        let err = Gateway::stub(stub).chat(&capture_prompt()).unwrap_err();
        assert!(matches!(err, LlmError::SchemaValidationExhausted { attempts: 2, .. }));
    }

    #[test]
    fn unregistered_task_is_unavailable() {
        let err = Gateway::offline().chat(&capture_prompt()).unwrap_err();
        assert!(matches!(err, LlmError::ProviderUnavailable(_)));
        assert!(Gateway::disabled().embed(&["x".into()]).is_err());
    }

    #[test]
    fn tier_routing() {
        assert_eq!(Task::StoryCompile.tier(), Tier::Reasoning);
        assert_eq!(Task::ViewCaption.tier(), Tier::Reasoning);
        for t in [Task::Capture, Task::Tags, Task::Drift, Task::Issues, Task::IssueLabels, Task::Reflections] {
            assert_eq!(t.tier(), Tier::Lightweight);
        }
    }

    #[test]
    fn embed_rejects_empty_and_is_uniform() {
        let gw = Gateway::offline();
        assert_eq!(gw.embed(&[]).unwrap_err(), LlmError::EmptyInput);
        let v = gw.embed(&["a b".into(), "a b".into(), "zzz".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert!(v.iter().all(|x| x.len() == STUB_DIM));
    }

    struct Slow {
        live: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Provider for Slow {
        fn complete(&self, _req: &ChatRequest) -> Result<String, LlmError> {
            let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            self.live.fetch_sub(1, Ordering::SeqCst);
            Ok(GOOD_CAPTURE.into())
        }
        fn embed(&self, _t: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
            Ok(vec![])
        }
        fn name(&self) -> &str {
            "slow"
        }
    }

    #[test]
    fn in_flight_is_bounded() {
        let slow = Arc::new(Slow { live: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
        let cfg = GatewayConfig { max_in_flight: 2, ..Default::default() };
        let gw = Gateway::new(slow.clone(), cfg);
        std::thread::scope(|s| {
            for _ in 0..6 {
                let gw = gw.clone();
                s.spawn(move || gw.chat(&capture_prompt()).unwrap());
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn env_overrides_and_validation() {
        let mut cfg = GatewayConfig::default();
        cfg.apply_env(|k| match k {
            "STUB_MODE" => Some("false".into()),
            "NARRASCOPE_API_BASE" => Some("http://localhost:1".into()),
            _ => None,
        });
        assert!(!cfg.stub_mode);
        assert!(cfg.validate().is_ok());
        cfg.api_base = None;
        assert!(matches!(cfg.validate(), Err(LlmError::Config(_))));
    }
}
