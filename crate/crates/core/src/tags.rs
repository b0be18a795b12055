//! Tag sets and the rule-based normalizer that maps text onto a vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::TagVocabulary;
use crate::llm::{Gateway, Prompt, Task};

pub const OVERVIEW: &str = "overview";

const LEXICON: &str = include_str!("../data/lexicon.json");

const STOPWORDS: &[&str] = &["the", "of", "and", "per", "for", "in", "to", "a", "an", "rate", "total", "avg", "mean"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagSet {
    #[serde(default)]
    pub geo: BTreeSet<String>,
    #[serde(default)]
    pub topic: BTreeSet<String>,
    #[serde(default)]
    pub time: BTreeSet<String>,
    #[serde(default)]
    pub intent: BTreeSet<String>,
}

impl TagSet {
    pub fn is_empty(&self) -> bool {
        self.geo.is_empty() && self.topic.is_empty() && self.time.is_empty() && self.intent.is_empty()
    }

    /// Key-qualified values, e.g. "geo:Porto".
    pub fn keys(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (k, vs) in [("geo", &self.geo), ("topic", &self.topic), ("time", &self.time), ("intent", &self.intent)] {
            out.extend(vs.iter().map(|v| format!("{k}:{v}")));
        }
        out
    }

    pub fn union(&self, other: &TagSet) -> TagSet {
        let u = |a: &BTreeSet<String>, b: &BTreeSet<String>| a.union(b).cloned().collect();
        TagSet {
            geo: u(&self.geo, &other.geo),
            topic: u(&self.topic, &other.topic),
            time: u(&self.time, &other.time),
            intent: u(&self.intent, &other.intent),
        }
    }

    pub fn jaccard(&self, other: &TagSet) -> f64 {
        jaccard(&self.keys(), &other.keys())
    }
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Lowercase alphanumeric words; underscores and punctuation separate.
pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone)]
struct Phrase {
    words: Vec<String>,
    prefix: bool,
}

impl Phrase {
    fn parse(s: &str) -> Self {
        let prefix = s.ends_with('*');
        Phrase { words: tokens(s.trim_end_matches('*')), prefix }
    }

    fn found_in(&self, words: &[String]) -> bool {
        let n = self.words.len();
        if n == 0 || words.len() < n {
            return false;
        }
        words.windows(n).any(|w| {
            w.iter().zip(&self.words).enumerate().all(|(i, (have, want))| {
                if self.prefix && i == n - 1 {
                    have.starts_with(want.as_str())
                } else {
                    have == want
                }
            })
        })
    }
}

#[derive(Deserialize)]
struct LexiconFile {
    concepts: BTreeMap<String, String>,
    intents: BTreeMap<String, Vec<String>>,
}

/// Maps narrative text onto a tag vocabulary. Built once per vocabulary.
#[derive(Debug, Clone)]
pub struct TagNormalizer {
    vocab: TagVocabulary,
    geo: Vec<(Phrase, String)>,
    time: Vec<(Phrase, String)>,
    topic: Vec<(Phrase, String)>,
    topic_heads: Vec<(String, String)>,
    concepts: Vec<(String, String)>,
    intents: Vec<(Phrase, String)>,
}

fn head_token(name: &str) -> Option<String> {
    tokens(name)
        .into_iter()
        .find(|t| t.len() >= 3 && !STOPWORDS.contains(&t.as_str()) && !t.chars().all(|c| c.is_ascii_digit()))
}

impl TagNormalizer {
    pub fn new(vocab: &TagVocabulary) -> Self {
        let lex: LexiconFile = serde_json::from_str(LEXICON).expect("bundled lexicon parses");
        let phrases = |set: &BTreeSet<String>| set.iter().map(|v| (Phrase::parse(v), v.clone())).collect::<Vec<_>>();
        let mut vocab = vocab.clone();
        vocab.intent.insert(OVERVIEW.to_string());
        let intents = lex
            .intents
            .iter()
            .filter(|(intent, _)| vocab.intent.contains(*intent))
            .flat_map(|(intent, kws)| kws.iter().map(move |k| (Phrase::parse(k), intent.clone())))
            .collect();
        TagNormalizer {
            geo: phrases(&vocab.geo),
            time: phrases(&vocab.time),
            topic: phrases(&vocab.topic),
            topic_heads: vocab.topic.iter().filter_map(|t| head_token(t).map(|h| (h, t.clone()))).collect(),
            concepts: lex.concepts.into_iter().collect(),
            intents,
            vocab,
        }
    }

    pub fn vocabulary(&self) -> &TagVocabulary {
        &self.vocab
    }

    pub fn normalize(&self, text: &str) -> TagSet {
        let words = tokens(text);
        let hits = |table: &[(Phrase, String)]| -> BTreeSet<String> {
            table.iter().filter(|(p, _)| p.found_in(&words)).map(|(_, v)| v.clone()).collect()
        };
        let mut tags = TagSet {
            geo: hits(&self.geo),
            time: hits(&self.time),
            topic: hits(&self.topic),
            intent: hits(&self.intents),
        };
        // head-token aliasing: "cost" names cost_of_stay
        for (head, topic) in &self.topic_heads {
            if words.iter().any(|w| w == head) {
                tags.topic.insert(topic.clone());
            }
        }
        for w in &words {
            for (stem, concept) in &self.concepts {
                if w.starts_with(stem.as_str()) {
                    for t in &self.vocab.topic {
                        let toks = tokens(t);
                        if toks.iter().any(|x| x == concept) {
                            tags.topic.insert(t.clone());
                        }
                    }
                }
            }
        }
        tags
    }

    /// Keeps only values present in the vocabulary.
    pub fn restrict(&self, tags: &TagSet) -> TagSet {
        let keep = |vals: &BTreeSet<String>, allowed: &BTreeSet<String>| -> BTreeSet<String> {
            vals.iter().filter(|v| allowed.contains(*v)).cloned().collect()
        };
        TagSet {
            geo: keep(&tags.geo, &self.vocab.geo),
            topic: keep(&tags.topic, &self.vocab.topic),
            time: keep(&tags.time, &self.vocab.time),
            intent: keep(&tags.intent, &self.vocab.intent),
        }
    }

    /// Rule tags, optionally widened by a model suggestion limited to the vocabulary.
    pub fn normalize_refined(&self, text: &str, gateway: &Gateway) -> TagSet {
        let rules = self.normalize(text);
        let prompt = Prompt {
            task: Task::Tags,
            system: "Tag the sentence with values from the vocabulary. Return JSON {\"geo\":[],\"topic\":[],\"time\":[],\"intent\":[]}."
                .to_string(),
            user: serde_json::json!({ "sentence": text, "vocabulary": self.vocab }).to_string(),
        };
        match gateway.chat(&prompt) {
            Ok(ex) => match serde_json::from_value::<TagSet>(ex.parsed) {
                Ok(suggested) => rules.union(&self.restrict(&suggested)),
                Err(_) => rules,
            },
            Err(_) => rules,
        }
    }
}
