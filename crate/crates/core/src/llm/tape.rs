//! Recording and replay of provider traffic, so a session log can be replayed
//! to the same state without contacting a model.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{stub_embed, ChatRequest, LlmError, Provider, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum TapeItem {
    Chat { task: Task, reply: Result<String, String> },
    /// `vectors: None` marks stub embeddings, recomputed on replay.
    Embed { vectors: Option<Vec<Vec<f64>>>, error: Option<String> },
}

pub struct RecordingProvider {
    inner: Arc<dyn Provider>,
    tape: Mutex<Vec<TapeItem>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>) -> Self {
        Self { inner, tape: Mutex::new(Vec::new()) }
    }

    pub fn take(&self) -> Vec<TapeItem> {
        std::mem::take(&mut *self.tape.lock().unwrap())
    }
}

fn message(e: &LlmError) -> String {
    match e {
        LlmError::ProviderUnavailable(m) => m.clone(),
        other => other.to_string(),
    }
}

impl Provider for RecordingProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let reply = self.inner.complete(req);
        let item = TapeItem::Chat { task: req.task, reply: reply.as_ref().map(Clone::clone).map_err(message) };
        self.tape.lock().unwrap().push(item);
        reply
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let out = self.inner.embed(texts);
        let item = match &out {
            Ok(_) if self.inner.deterministic_embeddings() => TapeItem::Embed { vectors: None, error: None },
            Ok(v) => TapeItem::Embed { vectors: Some(v.clone()), error: None },
            Err(e) => TapeItem::Embed { vectors: None, error: Some(message(e)) },
        };
        self.tape.lock().unwrap().push(item);
        out
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn deterministic_embeddings(&self) -> bool {
        self.inner.deterministic_embeddings()
    }
}

/// Serves a recorded tape in order. Recorded failures come back as
/// `ProviderUnavailable`; a call past the end of the tape does too.
pub struct ReplayProvider {
    tape: Mutex<VecDeque<TapeItem>>,
}

impl ReplayProvider {
    pub fn new(tape: Vec<TapeItem>) -> Self {
        Self { tape: Mutex::new(tape.into()) }
    }

    pub fn remaining(&self) -> usize {
        self.tape.lock().unwrap().len()
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        match self.tape.lock().unwrap().pop_front() {
            Some(TapeItem::Chat { task, reply }) if task == req.task => reply.map_err(LlmError::ProviderUnavailable),
            other => Err(LlmError::ProviderUnavailable(format!("tape out of step at {}: {other:?}", req.task))),
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        match self.tape.lock().unwrap().pop_front() {
            Some(TapeItem::Embed { error: Some(e), .. }) => Err(LlmError::ProviderUnavailable(e)),
            Some(TapeItem::Embed { vectors: Some(v), .. }) => Ok(v),
            Some(TapeItem::Embed { vectors: None, .. }) => Ok(texts.iter().map(|t| stub_embed(t)).collect()),
            other => Err(LlmError::ProviderUnavailable(format!("tape out of step at embed: {other:?}"))),
        }
    }

    fn name(&self) -> &str {
        "replay"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{prompts, Gateway, GatewayConfig, StubProvider};

    #[test]
    fn replay_reproduces_recorded_traffic() {
        let stub = StubProvider::new();
        stub.register(Task::Capture, r#"{"narrative_suggestion":null,"source_elementId":null,"source_view_title":null,"explanation":null}"#);
        let rec = Arc::new(RecordingProvider::new(Arc::new(stub)));
        let gw = Gateway::new(rec.clone(), GatewayConfig::default());
        let prompt = prompts::interaction_capture(&serde_json::json!({}));
        let first = gw.chat(&prompt).unwrap();
        let v1 = gw.embed(&["crime in Camden".into()]).unwrap();
        assert!(gw.chat(&prompts::inquiry_issues(&Vec::<String>::new())).is_err());
        let tape = rec.take();
        assert_eq!(tape.len(), 3);
        assert!(matches!(&tape[1], TapeItem::Embed { vectors: None, error: None }));

        let replay = Gateway::new(Arc::new(ReplayProvider::new(tape)), GatewayConfig::default());
        assert_eq!(replay.chat(&prompt).unwrap().raw_response, first.raw_response);
        assert_eq!(replay.embed(&["crime in Camden".into()]).unwrap(), v1);
        assert!(matches!(
            replay.chat(&prompts::inquiry_issues(&Vec::<String>::new())),
            Err(LlmError::ProviderUnavailable(_))
        ));
    }
}
