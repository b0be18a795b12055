//! Story mode: compiles every branch of the exploration into a linear data
//! story and checks it against the output contract.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::inquiry::{IbisGraph, Status};
use crate::llm::{prompts, Gateway, LlmError};
use crate::narrative::{NarrativeTree, Sentence};
use crate::timeline::{DriftType, Timeline};

pub const MIN_POINTS: usize = 8;
pub const MAX_POINTS: usize = 15;
pub const OPENERS: [&str; 5] = ["Across ", "From ", "Behind every ", "Focusing on ", "In "];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RefId {
    One(String),
    Many(Vec<String>),
}

impl RefId {
    pub fn ids(&self) -> Vec<&str> {
        match self {
            RefId::One(s) => vec![s.as_str()],
            RefId::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }

    fn from_ids(mut ids: Vec<String>) -> Self {
        if ids.len() == 1 {
            RefId::One(ids.remove(0))
        } else {
            RefId::Many(ids)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryPoint {
    pub data_story_sentence: String,
    pub ref_id: RefId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataStory {
    pub points: Vec<StoryPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    LengthViolation { len: usize },
    OpenerViolation,
    EmptySentence { point: usize },
    EmptyRef { point: usize },
    UnknownRef { point: usize, ref_id: String },
    SelfReferenceViolation { point: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoryError {
    #[error("no sentence is grounded in a view or a data column")]
    NoGroundedContent,
    #[error("story failed validation: {0:?}")]
    StoryValidationFailed(Vec<Violation>),
    #[error("story output unusable: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoryOrigin {
    Model,
    Drafted,
}

/// One entry of the compile input, in the prompt's field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub sentence_id: String,
    pub sentence_content: String,
    pub drift_type: Vec<DriftType>,
}

/// Every live sentence, depth first over all branches.
pub fn exploration_path(tree: &NarrativeTree, timeline: &Timeline) -> Vec<PathEntry> {
    tree.depth_first()
        .into_iter()
        .map(|s| PathEntry {
            sentence_id: s.sentence_id.0.clone(),
            sentence_content: s.content.clone(),
            drift_type: timeline
                .latest_for(s.sentence_id.as_str())
                .and_then(|n| n.changed_from_previous.as_ref())
                .map(|d| d.drift_types.clone())
                .unwrap_or_default(),
        })
        .collect()
}

/// Sentences with a linked view or a timeline node that touched data columns.
pub fn grounded_sentences(tree: &NarrativeTree, timeline: &Timeline) -> BTreeSet<String> {
    tree.depth_first()
        .into_iter()
        .filter(|s| {
            !s.view_ids.is_empty()
                || timeline
                    .latest_for(s.sentence_id.as_str())
                    .is_some_and(|n| !n.related_source.related_columns.is_empty())
        })
        .map(|s| s.sentence_id.0.clone())
        .collect()
}

fn padded_lower(text: &str) -> String {
    let spaced: String = text.chars().map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' }).collect();
    format!(" {} ", spaced.to_lowercase())
}

pub fn has_self_reference(text: &str) -> bool {
    let p = padded_lower(text);
    [" i ", " we ", " the model "].iter().any(|w| p.contains(w))
}

/// Checks a story against the output contract; empty means valid.
pub fn validate(story: &DataStory, known_ids: &BTreeSet<String>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = story.points.len();
    if !(MIN_POINTS..=MAX_POINTS).contains(&n) {
        out.push(Violation::LengthViolation { len: n });
    }
    if let Some(first) = story.points.first() {
        if !OPENERS.iter().any(|o| first.data_story_sentence.starts_with(o)) {
            out.push(Violation::OpenerViolation);
        }
    }
    for (i, p) in story.points.iter().enumerate() {
        if p.data_story_sentence.trim().is_empty() {
            out.push(Violation::EmptySentence { point: i });
        }
        let ids = p.ref_id.ids();
        if ids.is_empty() {
            out.push(Violation::EmptyRef { point: i });
        }
        for id in ids {
            if !known_ids.contains(id) {
                out.push(Violation::UnknownRef { point: i, ref_id: id.to_string() });
            }
        }
        if has_self_reference(&p.data_story_sentence) {
            out.push(Violation::SelfReferenceViolation { point: i });
        }
    }
    out
}

/// Parses and validates raw JSON; a shape that does not parse as a story is
/// reported, never thrown.
pub fn validate_json(value: &Json, known_ids: &BTreeSet<String>) -> Result<Vec<Violation>, String> {
    let story: DataStory = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
    Ok(validate(&story, known_ids))
}

const HEDGES: &[&str] = &[
    "i think that ", "i think ", "i notice that ", "i notice ", "i see that ", "i see ", "i found that ",
    "i found ", "we see that ", "we see ", "it seems that ", "it seems ", "interestingly, ", "so ",
];

/// A sentence restated for publication, or None if it is a question or still
/// speaks in the first person.
pub fn restate(content: &str) -> Option<String> {
    let mut t = content.trim().to_string();
    if t.ends_with('?') {
        return None;
    }
    loop {
        let lower = t.to_lowercase();
        match HEDGES.iter().find(|h| lower.starts_with(*h)) {
            Some(h) => t = t[h.len()..].trim_start().to_string(),
            None => break,
        }
    }
    let mut chars = t.chars();
    let first = chars.next()?;
    let mut s: String = first.to_uppercase().chain(chars).collect();
    if !s.ends_with(['.', '!']) {
        s.push('.');
    }
    (!has_self_reference(&s) && s.split_whitespace().count() >= 3).then_some(s)
}

fn topics_of(timeline: &Timeline, ids: &[String]) -> Vec<String> {
    let mut seen = Vec::new();
    for id in ids {
        if let Some(n) = timeline.latest_for(id) {
            for t in &n.tags.topic {
                if !seen.contains(t) {
                    seen.push(t.clone());
                }
            }
        }
    }
    seen
}

fn list_phrase(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [a] => a.clone(),
        [a, b] => format!("{a} and {b}"),
        _ => format!("{} and {}", items[..items.len() - 1].join(", "), items[items.len() - 1]),
    }
}

/// A question or first-person plan restated as a thread of the exploration,
/// worded by the status its issue reached.
pub fn restate_thread(content: &str, status: Option<Status>) -> Option<String> {
    let lower = content.to_lowercase();
    let is_thread = content.trim().ends_with('?') || lower.contains("whether");
    if !is_thread {
        return None;
    }
    let title = crate::inquiry::issue_title(content);
    let text = match status {
        Some(Status::Resolved) => format!("The data settles the question \"{title}\""),
        Some(Status::Stalled) => format!("One thread was left unexplored: \"{title}\""),
        Some(Status::Open) => format!("One question remains open: \"{title}\""),
        // off the active path, so its status was never tracked
        None => format!("Another line of inquiry asked: \"{title}\""),
    };
    (!has_self_reference(&text)).then_some(text)
}

/// Deterministic story used when no model is reachable: an overview, one
/// point per publishable grounded sentence in exploration order (merged into
/// buckets when there are too many), and a closing point.
pub fn draft(tree: &NarrativeTree, timeline: &Timeline, ibis: &IbisGraph) -> Result<DataStory, StoryError> {
    let grounded = grounded_sentences(tree, timeline);
    if grounded.is_empty() {
        return Err(StoryError::NoGroundedContent);
    }
    let order: Vec<&Sentence> = tree.depth_first().into_iter().filter(|s| grounded.contains(s.sentence_id.as_str())).collect();
    let status_of: BTreeMap<&str, Status> = ibis
        .issues
        .values()
        .filter_map(|i| i.sentence_refs.first().map(|r| (r.as_str(), i.status)))
        .collect();
    let findings: Vec<(String, String)> = order
        .iter()
        .filter_map(|s| {
            let text = restate(&s.content)
                .or_else(|| restate_thread(&s.content, status_of.get(s.sentence_id.as_str()).copied()))?;
            Some((s.sentence_id.0.clone(), text))
        })
        .collect();

    let all_ids: Vec<String> = order.iter().map(|s| s.sentence_id.0.clone()).collect();
    let branches = tree.leaves().len();
    let topics = topics_of(timeline, &all_ids);
    let opener = if topics.is_empty() {
        format!("Across {} of exploration, {} grounded observations emerge.", plural(branches, "branch", "branches"), all_ids.len())
    } else {
        format!("Across {} of exploration, the data covers {}.", plural(branches, "branch", "branches"), list_phrase(&topics))
    };
    let branch_heads: Vec<String> = {
        let mut heads: Vec<String> = Vec::new();
        for leaf in tree.leaves() {
            let path = tree.path_to(&leaf).unwrap_or_default();
            if let Some(h) = path.iter().rev().find(|id| grounded.contains(id.as_str())) {
                if !heads.contains(&h.0) {
                    heads.push(h.0.clone());
                }
            }
        }
        heads
    };

    let room = MAX_POINTS - 2;
    let mut points = vec![StoryPoint { data_story_sentence: opener, ref_id: RefId::from_ids(branch_heads.clone()) }];
    for bucket in buckets(&findings, room) {
        let ids: Vec<String> = bucket.iter().map(|(id, _)| id.clone()).collect();
        let text = bucket
            .iter()
            .max_by_key(|(_, t)| (t.chars().filter(|c| c.is_ascii_digit()).count(), std::cmp::Reverse(t.len())))
            .map(|(_, t)| t.clone())
            .unwrap_or_default();
        points.push(StoryPoint { data_story_sentence: text, ref_id: RefId::from_ids(ids) });
    }
    let closing = if topics.is_empty() {
        "Overall, the grounded findings converge across the explored branches.".to_string()
    } else {
        format!("Overall, the evidence converges on {}.", list_phrase(&topics[..topics.len().min(3)]))
    };
    points.push(StoryPoint { data_story_sentence: closing, ref_id: RefId::from_ids(branch_heads) });

    let story = DataStory { points };
    let violations = validate(&story, &grounded);
    if violations.is_empty() {
        Ok(story)
    } else {
        Err(StoryError::StoryValidationFailed(violations))
    }
}

fn plural(n: usize, one: &str, many: &str) -> String {
    if n == 1 {
        format!("one {one}")
    } else {
        format!("{n} {many}")
    }
}

/// Splits items into at most `cap` contiguous groups of near-equal size.
fn buckets<T>(items: &[T], cap: usize) -> Vec<&[T]> {
    if items.is_empty() || cap == 0 {
        return Vec::new();
    }
    let k = items.len().min(cap);
    let (base, extra) = (items.len() / k, items.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(&items[at..at + len]);
        at += len;
    }
    out
}

/// Model compile with one retry; the draft when no model is reachable.
pub fn compile(
    tree: &NarrativeTree,
    timeline: &Timeline,
    ibis: &IbisGraph,
    gateway: &Gateway,
) -> Result<(DataStory, StoryOrigin), StoryError> {
    let grounded = grounded_sentences(tree, timeline);
    if grounded.is_empty() {
        return Err(StoryError::NoGroundedContent);
    }
    let path = exploration_path(tree, timeline);
    let prompt = prompts::data_story(&path);
    let check = |v: &Json| match validate_json(v, &grounded) {
        Ok(vs) if vs.is_empty() => Ok(()),
        Ok(vs) => Err(format!("violations: {}", serde_json::to_string(&vs).unwrap_or_default())),
        Err(e) => Err(e),
    };
    match gateway.chat_checked(&prompt, check) {
        Ok(ex) => serde_json::from_value(ex.parsed)
            .map(|s| (s, StoryOrigin::Model))
            .map_err(|e| StoryError::Malformed(e.to_string())),
        Err(LlmError::ProviderUnavailable(_)) => draft(tree, timeline, ibis).map(|s| (s, StoryOrigin::Drafted)),
        Err(LlmError::SchemaValidationExhausted { raw, last_error, .. }) => {
            let violations = crate::llm::extract_json(&raw)
                .ok()
                .and_then(|v| validate_json(&v, &grounded).ok())
                .filter(|v| !v.is_empty());
            match violations {
                Some(v) => Err(StoryError::StoryValidationFailed(v)),
                None => Err(StoryError::Malformed(last_error)),
            }
        }
        Err(e) => Err(StoryError::Malformed(e.to_string())),
    }
}

/// Markdown rendering with the views behind each point.
pub fn to_markdown(story: &DataStory, tree: &NarrativeTree) -> String {
    let mut views_of: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in tree.sentences() {
        views_of.insert(s.sentence_id.as_str(), s.view_ids.iter().map(String::as_str).collect());
    }
    let mut out = String::from("# Data story\n\n");
    for (i, p) in story.points.iter().enumerate() {
        let ids = p.ref_id.ids();
        let views: BTreeSet<&str> = ids.iter().flat_map(|id| views_of.get(id).cloned().unwrap_or_default()).collect();
        out.push_str(&format!("{}. {} _(sentences: {}", i + 1, p.data_story_sentence, ids.join(", ")));
        if !views.is_empty() {
            out.push_str(&format!("; views: {}", views.into_iter().collect::<Vec<_>>().join(", ")));
        }
        out.push_str(")_\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{StubProvider, Task};

    fn ids(n: usize) -> BTreeSet<String> {
        (1..=n).map(|i| format!("s{i}")).collect()
    }

    fn story(n: usize, first: &str) -> DataStory {
        let mut points = vec![StoryPoint { data_story_sentence: first.into(), ref_id: RefId::One("s1".into()) }];
        for i in 1..n {
            points.push(StoryPoint {
                data_story_sentence: format!("Point {i} holds at {i}.5 units."),
                ref_id: RefId::Many(vec!["s1".into(), "s2".into()]),
            });
        }
        DataStory { points }
    }

    #[test]
    fn eight_point_story_is_valid() {
        assert!(validate(&story(8, "Across the cities, costs diverge."), &ids(2)).is_empty());
    }

    #[test]
    fn seven_points_is_a_length_violation() {
        assert_eq!(validate(&story(7, "In Porto, stays are cheap."), &ids(2)), vec![Violation::LengthViolation { len: 7 }]);
    }

    #[test]
    fn we_is_self_reference() {
        let mut s = story(8, "From the data, Lima rises.");
        s.points[3].data_story_sentence = "Here we find that Lima rises.".into();
        assert_eq!(validate(&s, &ids(2)), vec![Violation::SelfReferenceViolation { point: 3 }]);
        assert!(has_self_reference("I believe it."));
        assert!(!has_self_reference("Ice cream sales peak in Illinois."));
    }

    #[test]
    fn ref_id_wire_forms() {
        let p: StoryPoint = serde_json::from_str(r#"{"data_story_sentence":"x","ref_id":"s1"}"#).unwrap();
        assert_eq!(p.ref_id, RefId::One("s1".into()));
        let p: StoryPoint = serde_json::from_str(r#"{"data_story_sentence":"x","ref_id":["s1","s2"]}"#).unwrap();
        assert_eq!(p.ref_id.ids(), ["s1", "s2"]);
        assert!(validate_json(&serde_json::json!({"not": "a story"}), &ids(1)).is_err());
    }

    #[test]
    fn restate_drops_hedges_and_questions() {
        assert_eq!(restate("I notice that Porto is cheap").as_deref(), Some("Porto is cheap."));
        assert_eq!(restate("Is Porto cheap?"), None);
        assert_eq!(restate("I wonder if we should go"), None);
    }

    #[test]
    fn buckets_respect_cap() {
        let items: Vec<u32> = (0..20).collect();
        let b = buckets(&items, 11);
        assert_eq!(b.len(), 11);
        assert_eq!(b.iter().map(|x| x.len()).sum::<usize>(), 20);
        assert_eq!(buckets(&items[..3], 11).len(), 3);
    }

    fn grounded_tree(n: usize) -> (NarrativeTree, Timeline) {
        let mut tree = NarrativeTree::new();
        for i in 0..n {
            let s = tree.append(&format!("Destination {i} has a cost of {}.5 per night", 40 + i)).unwrap();
            tree.link_view(&s.sentence_id, &format!("v{i}")).unwrap();
        }
        (tree, Timeline::new())
    }

    #[test]
    fn draft_passes_validation() {
        let (tree, tl) = grounded_tree(10);
        let (s, origin) = compile(&tree, &tl, &IbisGraph::default(), &Gateway::offline()).unwrap();
        assert_eq!(origin, StoryOrigin::Drafted);
        assert!(validate(&s, &grounded_sentences(&tree, &tl)).is_empty());
        assert!(to_markdown(&s, &tree).contains("views: v0"));
    }

    #[test]
    fn nothing_grounded_is_an_error() {
        let mut tree = NarrativeTree::new();
        tree.append("Just musing").unwrap();
        assert_eq!(
            compile(&tree, &Timeline::new(), &IbisGraph::default(), &Gateway::offline()),
            Err(StoryError::NoGroundedContent)
        );
    }

    #[test]
    fn invalid_model_story_fails_hard() {
        let (tree, tl) = grounded_tree(3);
        let stub = std::sync::Arc::new(StubProvider::new());
        stub.register(Task::StoryCompile, r#"[{"data_story_sentence":"Across all, x.","ref_id":"s99"}]"#);
        let gw = Gateway::new(stub.clone(), Default::default());
        match compile(&tree, &tl, &IbisGraph::default(), &gw) {
            Err(StoryError::StoryValidationFailed(v)) => {
                assert!(v.contains(&Violation::LengthViolation { len: 1 }));
                assert!(v.iter().any(|x| matches!(x, Violation::UnknownRef { .. })));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(stub.chat_calls(), 2);
    }
}
