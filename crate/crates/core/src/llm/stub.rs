//! Deterministic offline provider.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ChatRequest, LlmError, Provider, Task};

pub const STUB_DIM: usize = 256;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric words; everything else separates.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Character-trigram hashing embedding. Each word is padded with spaces so
/// word boundaries contribute trigrams; the result is L2-normalized.
pub fn stub_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0f64; STUB_DIM];
    for w in words(text) {
        let padded: Vec<char> = format!(" {w} ").chars().collect();
        for tri in padded.windows(3) {
            let s: String = tri.iter().collect();
            v[(fnv1a(s.as_bytes()) % STUB_DIM as u64) as usize] += 1.0;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

type Responder = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Canned replies per task. Registered replies are served in order and the
/// last one repeats. Tasks with nothing registered report the provider as
/// unavailable so callers take their deterministic fallback.
#[derive(Default)]
pub struct StubProvider {
    canned: Mutex<HashMap<Task, VecDeque<String>>>,
    responders: HashMap<Task, Responder>,
    chat_calls: AtomicUsize,
}

impl StubProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, task: Task, response: impl Into<String>) {
        self.canned.lock().unwrap().entry(task).or_default().push_back(response.into());
    }

    pub fn with_responder(
        mut self,
        task: Task,
        f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responders.insert(task, Box::new(f));
        self
    }

    pub fn chat_calls(&self) -> usize {
        self.chat_calls.load(Ordering::SeqCst)
    }
}

impl Provider for StubProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        {
            let mut canned = self.canned.lock().unwrap();
            if let Some(q) = canned.get_mut(&req.task) {
                let reply = if q.len() > 1 { q.pop_front() } else { q.front().cloned() };
                if let Some(r) = reply {
                    return Ok(r);
                }
            }
        }
        if let Some(f) = self.responders.get(&req.task) {
            if let Some(r) = f(req) {
                return Ok(r);
            }
        }
        Err(LlmError::ProviderUnavailable(format!("stub has no reply for {}", req.task.as_str())))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Ok(texts.iter().map(|t| stub_embed(t)).collect())
    }

    fn name(&self) -> &str {
        "stub"
    }

    fn deterministic_embeddings(&self) -> bool {
        true
    }
}

/// Provider used by forced-fallback mode: every call is unavailable.
pub struct DisabledProvider;

impl Provider for DisabledProvider {
    fn complete(&self, _req: &ChatRequest) -> Result<String, LlmError> {
        Err(LlmError::ProviderUnavailable("language model disabled".into()))
    }

    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Err(LlmError::ProviderUnavailable("embeddings disabled".into()))
    }

    fn name(&self) -> &str {
        "disabled"
    }
}

#[cfg(test)]
mod tests {
    use super::super::cosine;
    use super::*;

    #[test]
    fn identical_texts_identical_vectors() {
        let a = stub_embed("Porto stands out");
        assert_eq!(a, stub_embed("Porto stands out"));
        assert_eq!(a.len(), STUB_DIM);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_beats_disjoint() {
        let q = stub_embed("crime in Camden");
        let near = cosine(&q, &stub_embed("crime in Hackney"));
        let far = cosine(&q, &stub_embed("hotel prices"));
        assert!(near > far, "{near} <= {far}");
    }

    #[test]
    fn empty_text_is_zero_vector() {
        assert!(stub_embed("  ...  ").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
