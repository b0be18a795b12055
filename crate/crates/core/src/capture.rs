//! Interaction log and capture suggestions.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::llm::{prompts, Gateway};

pub const BUFFER_CAPACITY: usize = 50;
pub const PROMPT_WINDOW: usize = 5;
pub const FALLBACK_EXPLANATION: &str =
    "Captured from the most recent interaction that revealed a concrete value in this view.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaptureError {
    #[error("no view `{0}` in this session")]
    UnknownView(String),
    #[error("the suggestion is empty")]
    NullSuggestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    Chart,
    Map,
    Table,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DashboardConfig {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub view_type: String,
    #[serde(default)]
    pub variable_map: serde_json::Map<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InteractionEvent {
    pub element_id: String,
    #[serde(default)]
    pub element_name: String,
    pub element_type: ElementType,
    pub action: String,
    #[serde(default)]
    pub dashboard_config: DashboardConfig,
    #[serde(default)]
    pub chart_data: Json,
    #[serde(default = "Utc::now")]
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CaptureSuggestion {
    pub narrative_suggestion: Option<String>,
    #[serde(rename = "source_elementId", default)]
    pub source_element_id: String,
    #[serde(default)]
    pub source_view_title: String,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureOrigin {
    Model,
    Fallback,
}

/// Chronological event log, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventBuffer {
    events: VecDeque<InteractionEvent>,
}

impl EventBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, event: InteractionEvent) {
        if self.events.len() == BUFFER_CAPACITY {
            self.events.pop_front();
        }
        self.events.push_back(event);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> impl Iterator<Item = &InteractionEvent> {
        self.events.iter()
    }

    /// The last `min(5, len)` events, oldest first.
    pub fn window(&self) -> Vec<&InteractionEvent> {
        let skip = self.events.len().saturating_sub(PROMPT_WINDOW);
        self.events.iter().skip(skip).collect()
    }
}

fn numeral_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").unwrap())
}

/// Every digit run in `text`.
pub fn numerals(text: &str) -> Vec<&str> {
    numeral_re().find_iter(text).map(|m| m.as_str()).collect()
}

fn has_digit(s: &str) -> bool {
    s.chars().any(|c| c.is_ascii_digit())
}

/// First (label, number) pair an event reveals. The number is kept in its
/// serialized form so it can be quoted verbatim.
fn revealed(data: &Json) -> Option<(Option<String>, String)> {
    match data {
        Json::Number(n) => Some((None, n.to_string())),
        Json::Object(map) => {
            let (key, num) = map.iter().find_map(|(k, v)| v.as_number().map(|n| (k.clone(), n.to_string())))?;
            let label = map.values().find_map(|v| v.as_str().filter(|s| !s.trim().is_empty()).map(str::to_string));
            Some((Some(label.unwrap_or(key)), num))
        }
        Json::Array(items) => items.iter().find_map(revealed),
        _ => None,
    }
}

fn view_name(e: &InteractionEvent) -> String {
    let title = e.dashboard_config.title.trim();
    if !title.is_empty() && !has_digit(title) {
        return title.to_string();
    }
    let name = e.element_name.trim();
    if !name.is_empty() && !has_digit(name) {
        return name.to_string();
    }
    let kind = e.dashboard_config.view_type.trim();
    if !kind.is_empty() && !has_digit(kind) {
        format!("the {kind} view")
    } else {
        "this view".to_string()
    }
}

/// Deterministic suggestion from the newest event that reveals a number.
/// Numerals in the sentence come only from that event's data.
pub fn fallback_suggestion(window: &[&InteractionEvent]) -> CaptureSuggestion {
    for e in window.iter().rev() {
        if let Some((label, number)) = revealed(&e.chart_data) {
            let subject = label.unwrap_or_else(|| "the highlighted mark".to_string());
            return CaptureSuggestion {
                narrative_suggestion: Some(format!("In {}, {} shows {}.", view_name(e), subject, number)),
                source_element_id: e.element_id.clone(),
                source_view_title: e.dashboard_config.title.clone(),
                explanation: FALLBACK_EXPLANATION.to_string(),
            };
        }
    }
    CaptureSuggestion::default()
}

fn check_reply(parsed: &Json, window: &[&InteractionEvent]) -> Result<(), String> {
    if parsed["narrative_suggestion"].is_null() {
        return Ok(());
    }
    let words = parsed["explanation"].as_str().unwrap_or("").split_whitespace().count();
    if !(10..=20).contains(&words) {
        return Err(format!("explanation must be 10-20 words, got {words}"));
    }
    let source = parsed["source_elementId"].as_str().unwrap_or("");
    if !window.iter().any(|e| e.element_id == source) {
        return Err(format!("source_elementId `{source}` is not in the interaction log"));
    }
    Ok(())
}

pub fn capture(
    buffer: &EventBuffer,
    current_sentence: &str,
    narrative_context: &str,
    gateway: &Gateway,
) -> (CaptureSuggestion, CaptureOrigin) {
    let window = buffer.window();
    if window.is_empty() {
        return (CaptureSuggestion::default(), CaptureOrigin::Fallback);
    }
    let input = json!({
        "narrative_context": narrative_context,
        "current_sentence": current_sentence,
        "interaction_log": window,
    });
    let prompt = prompts::interaction_capture(&input);
    match gateway.chat_checked(&prompt, |v| check_reply(v, &window)) {
        Ok(ex) => match serde_json::from_value::<CaptureSuggestion>(ex.parsed) {
            Ok(s) => (s, CaptureOrigin::Model),
            Err(_) => (fallback_suggestion(&window), CaptureOrigin::Fallback),
        },
        Err(_) => (fallback_suggestion(&window), CaptureOrigin::Fallback),
    }
}
