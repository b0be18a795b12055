//! Insight timeline: drift classification, the provenance tree, restoration
//! and reflection prompts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::catalog::{Catalog, SemanticRole};
use crate::llm::prompts::{self, ReflectionInput};
use crate::llm::Gateway;
use crate::tags::{tokens, TagNormalizer, TagSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimelineError {
    #[error("no timeline node {0}")]
    UnknownNode(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftType {
    ProvideOverview,
    Adjust,
    DetectPattern,
    MatchMentalModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    None,
    Minor,
    Moderate,
    Critical,
}

impl Severity {
    fn from_changes(n: usize) -> Self {
        match n {
            0 => Severity::None,
            1 => Severity::Minor,
            2 => Severity::Moderate,
            _ => Severity::Critical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub drift_types: Vec<DriftType>,
    pub severity: Severity,
    #[serde(default)]
    pub dimensions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelatedSource {
    pub related_categories: Vec<String>,
    pub related_columns: Vec<String>,
}

impl RelatedSource {
    pub fn is_empty(&self) -> bool {
        self.related_categories.is_empty() && self.related_columns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedSentence {
    pub node_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineNode {
    pub node_id: u64,
    pub sentence_id: String,
    pub sentence_content: String,
    pub changed_from_previous: Option<DriftRecord>,
    pub related_source: RelatedSource,
    pub related_sentence: Option<RelatedSentence>,
    pub parent_node_id: Option<u64>,
    pub branch_id: u64,
    #[serde(default)]
    pub tags: TagSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyOrigin {
    Model,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub prompt: String,
    pub reason: String,
    pub related_sentence: Option<ReflectionRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRef {
    pub node_id: u64,
    #[serde(default)]
    pub sentence_content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceState {
    pub sentence_id: String,
    pub sentence_content: String,
    pub node_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoredState {
    pub node_id: u64,
    pub sentences: Vec<SentenceState>,
    #[serde(default)]
    pub view_ids: BTreeSet<String>,
}

/// Everything classification reads besides the timeline itself.
pub struct ClassifyContext<'a> {
    pub tagger: &'a TagNormalizer,
    pub catalog: &'a Catalog,
    pub gateway: &'a Gateway,
}

const SUPERLATIVES: &[&str] = &[
    "highest", "lowest", "most", "least", "best", "worst", "largest", "smallest", "top", "bottom", "cheapest",
    "priciest", "percent", "correlated", "correlation", "correlates", "relationship", "outlier", "trend",
];
const EXPECTATIONS: &[&[&str]] = &[&["as", "expected"], &["confirms"], &["confirmed"], &["surprising"], &["surprisingly"], &["contrary"]];

fn contains_phrase(words: &[String], phrase: &[&str]) -> bool {
    words.windows(phrase.len()).any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

fn has_numeral(text: &str) -> bool {
    text.chars().any(|c| c.is_ascii_digit())
}

fn describe(set: &BTreeSet<String>) -> String {
    if set.is_empty() {
        "none".to_string()
    } else {
        set.iter().cloned().collect::<Vec<_>>().join(", ")
    }
}

/// Rule-based drift between two sentences.
pub fn fallback_drift(prev: &TagSet, cur: &TagSet, content: &str, after_fork: bool) -> DriftRecord {
    let words = tokens(content);
    let mut dimensions = BTreeMap::new();
    for (aspect, p, c) in [("geo", &prev.geo, &cur.geo), ("topic", &prev.topic, &cur.topic), ("time", &prev.time, &cur.time)] {
        if c.iter().any(|v| !p.contains(v)) {
            dimensions.insert(aspect.to_string(), format!("{} - {}", describe(p), describe(c)));
        }
    }
    let mut types = BTreeSet::new();
    if !dimensions.is_empty() {
        types.insert(DriftType::Adjust);
    }
    if content.contains('%') || words.iter().any(|w| SUPERLATIVES.contains(&w.as_str())) {
        types.insert(DriftType::DetectPattern);
    }
    if EXPECTATIONS.iter().any(|p| contains_phrase(&words, p)) {
        types.insert(DriftType::MatchMentalModel);
    }
    if after_fork || (cur.topic.len() >= 2 && !has_numeral(content)) {
        types.insert(DriftType::ProvideOverview);
    }
    if types.is_empty() {
        types.insert(DriftType::Adjust);
    }
    DriftRecord {
        drift_types: types.into_iter().collect(),
        severity: Severity::from_changes(dimensions.len()),
        dimensions,
    }
}

/// Columns and categories the tags point at.
pub fn related_source(tags: &TagSet, catalog: &Catalog) -> RelatedSource {
    let mut columns = BTreeSet::new();
    let mut categories = BTreeSet::new();
    let mut tables = BTreeSet::new();
    for table in catalog.tables() {
        let schema = &table.schema;
        for col in &schema.columns {
            let hit = match col.semantic_role {
                SemanticRole::Measure => tags.topic.contains(&col.name),
                SemanticRole::Geo => !tags.geo.is_empty() && table.distinct_values(&col.name).iter().any(|v| tags.geo.contains(v)),
                SemanticRole::Time => !tags.time.is_empty(),
                _ => false,
            };
            if hit {
                columns.insert(col.name.clone());
                tables.insert(table.name().to_string());
            }
        }
        categories.extend(schema.category_tags.iter().filter(|t| tags.topic.contains(*t)).cloned());
    }
    if categories.is_empty() {
        categories = tables;
    }
    RelatedSource { related_categories: categories.into_iter().collect(), related_columns: columns.into_iter().collect() }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    nodes: Vec<TimelineNode>,
    pending_fork: Option<(u64, u64)>,
    next_branch: u64,
}

impl Timeline {
    pub fn new() -> Self {
        Timeline { nodes: Vec::new(), pending_fork: None, next_branch: 1 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TimelineNode] {
        &self.nodes
    }

    pub fn get(&self, node_id: u64) -> Result<&TimelineNode, TimelineError> {
        node_id
            .checked_sub(1)
            .and_then(|i| self.nodes.get(i as usize))
            .ok_or(TimelineError::UnknownNode(node_id))
    }

    pub fn children(&self, node_id: u64) -> Vec<u64> {
        self.nodes.iter().filter(|n| n.parent_node_id == Some(node_id)).map(|n| n.node_id).collect()
    }

    pub fn leaves(&self) -> Vec<u64> {
        let parents: BTreeSet<u64> = self.nodes.iter().filter_map(|n| n.parent_node_id).collect();
        self.nodes.iter().map(|n| n.node_id).filter(|id| !parents.contains(id)).collect()
    }

    /// Root-first chain ending at `node_id`.
    pub fn chain(&self, node_id: u64) -> Result<Vec<&TimelineNode>, TimelineError> {
        let mut out = vec![self.get(node_id)?];
        while let Some(p) = out.last().unwrap().parent_node_id {
            out.push(self.get(p)?);
        }
        out.reverse();
        Ok(out)
    }

    pub fn latest_for(&self, sentence_id: &str) -> Option<&TimelineNode> {
        self.nodes.iter().rev().find(|n| n.sentence_id == sentence_id)
    }

    /// Latest node whose whole chain lies on `path`.
    pub fn head_on_path(&self, path: &[String]) -> Option<u64> {
        let on_path: BTreeSet<&str> = path.iter().map(String::as_str).collect();
        self.nodes.iter().rev().map(|n| n.node_id).find(|&id| {
            self.chain(id).map(|c| c.iter().all(|n| on_path.contains(n.sentence_id.as_str()))).unwrap_or(false)
        })
    }

    /// The next classification parents to `at_node` on branch `new_branch_id`.
    pub fn record_fork(&mut self, at_node: u64, new_branch_id: u64) -> Result<(), TimelineError> {
        self.get(at_node)?;
        self.pending_fork = Some((at_node, new_branch_id));
        self.next_branch = self.next_branch.max(new_branch_id + 1);
        Ok(())
    }

    pub fn allocate_branch(&self) -> u64 {
        self.next_branch
    }

    pub fn has_pending_fork(&self) -> bool {
        self.pending_fork.is_some()
    }

    /// Adds a node for `content` under the latest node on `path` (or under a
    /// pending fork point).
    pub fn classify(
        &mut self,
        sentence_id: &str,
        content: &str,
        path: &[String],
        ctx: &ClassifyContext<'_>,
    ) -> (TimelineNode, ClassifyOrigin) {
        let fork = self.pending_fork.take();
        let parent = match fork {
            Some((at, _)) => Some(at),
            None => self.head_on_path(path),
        };
        let branch_id = match (fork, parent) {
            (Some((_, b)), _) => b,
            (None, Some(p)) => {
                let p_branch = self.get(p).map(|n| n.branch_id).unwrap_or(0);
                if self.children(p).is_empty() {
                    p_branch
                } else {
                    let b = self.next_branch;
                    self.next_branch += 1;
                    b
                }
            }
            (None, None) => 0,
        };
        let node_id = self.nodes.len() as u64 + 1;
        let tags = ctx.tagger.normalize(content);
        let prev = parent.and_then(|p| self.get(p).ok()).cloned();
        let ancestors: Vec<TimelineNode> = match parent {
            Some(p) => self.chain(p).map(|c| c.into_iter().cloned().collect()).unwrap_or_default(),
            None => Vec::new(),
        };

        let mut node = TimelineNode {
            node_id,
            sentence_id: sentence_id.to_string(),
            sentence_content: content.to_string(),
            changed_from_previous: prev
                .as_ref()
                .map(|p| fallback_drift(&p.tags, &tags, content, fork.is_some())),
            related_source: related_source(&tags, ctx.catalog),
            related_sentence: ancestors
                .iter()
                .rev()
                .find(|a| a.tags.topic.iter().any(|t| tags.topic.contains(t)))
                .map(|a| RelatedSentence { node_id: a.node_id, reason: "same topic".into() }),
            parent_node_id: parent,
            branch_id,
            tags,
        };
        let origin = match self.model_classify(&node, prev.as_ref(), &ancestors, ctx.gateway) {
            Some(m) => {
                node.changed_from_previous = if prev.is_some() { m.0 } else { None };
                node.related_source = m.1;
                node.related_sentence = m.2;
                ClassifyOrigin::Model
            }
            None => ClassifyOrigin::Fallback,
        };
        self.nodes.push(node.clone());
        (node, origin)
    }

    #[allow(clippy::type_complexity)]
    fn model_classify(
        &self,
        node: &TimelineNode,
        prev: Option<&TimelineNode>,
        ancestors: &[TimelineNode],
        gateway: &Gateway,
    ) -> Option<(Option<DriftRecord>, RelatedSource, Option<RelatedSentence>)> {
        let brief = |n: &TimelineNode| json!({ "node_id": n.node_id, "sentence_id": n.sentence_id, "sentence_content": n.sentence_content });
        let input = json!({
            "node_id": node.node_id,
            "sentence_id": node.sentence_id,
            "sentence_content": node.sentence_content,
            "previous_sentence": prev.map(brief),
            "active_path": ancestors.iter().map(brief).collect::<Vec<_>>(),
        });
        let rs = &node.related_source;
        let related = (!rs.is_empty()).then_some((rs.related_categories.as_slice(), rs.related_columns.as_slice()));
        let prompt = prompts::insight_timeline(related, &input);
        let known: BTreeSet<u64> = ancestors.iter().map(|a| a.node_id).collect();
        let unwrap = |v: &Json| if v.is_array() { v[0].clone() } else { v.clone() };
        let check = |v: &Json| -> Result<(), String> {
            let v = unwrap(v);
            if v["node_id"].as_u64() != Some(node.node_id) || v["sentence_id"].as_str() != Some(&node.sentence_id) {
                return Err("node_id and sentence_id must be echoed exactly".into());
            }
            if let Some(r) = v["related_sentence"]["node_id"].as_u64() {
                if !known.contains(&r) {
                    return Err(format!("related_sentence.node_id {r} is not on the active path"));
                }
            }
            Ok(())
        };
        let ex = gateway.chat_checked(&prompt, check).ok()?;
        let v = unwrap(&ex.parsed);
        let drift: Option<DriftRecord> = serde_json::from_value(v["changed_from_previous"].clone()).ok()?;
        let source: RelatedSource = serde_json::from_value(v["related_source"].clone()).ok()?;
        let related: Option<RelatedSentence> = serde_json::from_value(v["related_sentence"].clone()).ok()?;
        Some((drift, source, related))
    }

    /// Sentence snapshots along the chain to `node_id`, latest revision of
    /// each sentence, in order of first appearance.
    pub fn restore(&self, node_id: u64) -> Result<RestoredState, TimelineError> {
        let mut order: Vec<String> = Vec::new();
        let mut latest: BTreeMap<String, SentenceState> = BTreeMap::new();
        for n in self.chain(node_id)? {
            if !latest.contains_key(&n.sentence_id) {
                order.push(n.sentence_id.clone());
            }
            latest.insert(
                n.sentence_id.clone(),
                SentenceState { sentence_id: n.sentence_id.clone(), sentence_content: n.sentence_content.clone(), node_id: n.node_id },
            );
        }
        let sentences = order.into_iter().filter_map(|s| latest.remove(&s)).collect();
        Ok(RestoredState { node_id, sentences, view_ids: BTreeSet::new() })
    }

    pub fn suggest_reflections(
        &self,
        node_id: u64,
        tagger: &TagNormalizer,
        gateway: &Gateway,
    ) -> Result<Vec<Reflection>, TimelineError> {
        let node = self.get(node_id)?;
        let mut context = Vec::new();
        for a in self.chain(node_id)?.into_iter().rev().skip(1) {
            let reason = if a.tags.topic.iter().any(|t| node.tags.topic.contains(t)) {
                "same topic"
            } else if a.tags.geo.iter().any(|g| node.tags.geo.contains(g)) {
                "same place"
            } else if !a.tags.time.is_empty() && !node.tags.time.is_empty() && a.tags.time != node.tags.time {
                "time mismatch"
            } else {
                continue;
            };
            context.push(json!({
                "node_id": a.node_id,
                "sentence_id": a.sentence_id,
                "sentence_content": a.sentence_content,
                "reason_for_relevance": reason,
            }));
        }
        let source = serde_json::to_value(&node.related_source).unwrap();
        let related = Json::Array(context);
        let prompt = prompts::reflection(&ReflectionInput {
            related_source: &source,
            related_sentences: &related,
            node_id,
            sentence_id: &node.sentence_id,
            sentence_content: &node.sentence_content,
        });
        let allowed: BTreeSet<&str> = node
            .related_source
            .related_columns
            .iter()
            .chain(&node.related_source.related_categories)
            .map(String::as_str)
            .collect();
        let check = |v: &Json| -> Result<(), String> {
            for r in v["reflect"].as_array().into_iter().flatten() {
                if let Some(id) = r["related_sentence"]["node_id"].as_u64() {
                    if self.get(id).is_err() {
                        return Err(format!("related_sentence.node_id {id} does not exist"));
                    }
                }
                let text = r["prompt"].as_str().unwrap_or("");
                for topic in tagger.normalize(text).topic {
                    if !allowed.contains(topic.as_str()) {
                        return Err(format!("prompt strays outside the related data: {topic}"));
                    }
                }
            }
            Ok(())
        };
        Ok(match gateway.chat_checked(&prompt, check) {
            Ok(ex) => serde_json::from_value(ex.parsed["reflect"].clone()).unwrap_or_default(),
            Err(_) => Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tag_vocabulary;
    use crate::llm::{StubProvider, Task};

    const CRIME: &[u8] = b"borough,year,crime_rate,income\nCamden,2019,10.5,30\nCamden,2020,12.3,31\nHackney,2019,9.1,28\nHackney,2020,8.7,29\n";

    fn setup() -> (Catalog, TagNormalizer) {
        let mut c = Catalog::new();
        c.ingest_table(CRIME, "crime").unwrap();
        let t = TagNormalizer::new(&tag_vocabulary(c.table("crime").unwrap()));
        (c, t)
    }

    fn path(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn first_node_has_null_drift() {
        let (c, t) = setup();
        let g = Gateway::offline();
        let ctx = ClassifyContext { tagger: &t, catalog: &c, gateway: &g };
        let mut tl = Timeline::new();
        let (n, origin) = tl.classify("s1", "Camden has high crime_rate.", &path(&["s1"]), &ctx);
        assert_eq!(origin, ClassifyOrigin::Fallback);
        assert!(n.changed_from_previous.is_none());
        assert_eq!(n.parent_node_id, None);
        assert_eq!(n.related_source.related_columns, vec!["borough", "crime_rate"]);
    }

    #[test]
    fn new_topic_is_adjust_with_dimension() {
        let (c, t) = setup();
        let prev = t.normalize("Camden has high crime_rate.");
        let cur = t.normalize("Camden income is modest.");
        let d = fallback_drift(&prev, &cur, "Camden income is modest.", false);
        assert!(d.drift_types.contains(&DriftType::Adjust));
        assert_eq!(d.dimensions["topic"], "crime_rate - income");
        assert_eq!(d.severity, Severity::Minor);
        let _ = c;
    }

    #[test]
    fn drift_keywords() {
        let e = TagSet::default();
        assert!(fallback_drift(&e, &e, "Camden has the highest rate", false).drift_types.contains(&DriftType::DetectPattern));
        assert!(fallback_drift(&e, &e, "As expected, rents are high", false).drift_types.contains(&DriftType::MatchMentalModel));
        assert!(fallback_drift(&e, &e, "More notes", true).drift_types.contains(&DriftType::ProvideOverview));
        assert_eq!(fallback_drift(&e, &e, "More notes", false).drift_types, vec![DriftType::Adjust]);
    }

    #[test]
    fn forks_and_leaves() {
        let (c, t) = setup();
        let g = Gateway::offline();
        let ctx = ClassifyContext { tagger: &t, catalog: &c, gateway: &g };
        let mut tl = Timeline::new();
        tl.classify("s1", "a", &path(&["s1"]), &ctx);
        tl.classify("s2", "b", &path(&["s1", "s2"]), &ctx);
        tl.classify("s3", "c", &path(&["s1", "s2", "s3"]), &ctx);
        let b = tl.allocate_branch();
        tl.record_fork(2, b).unwrap();
        let (n, _) = tl.classify("s4", "d", &path(&["s1", "s2", "s4"]), &ctx);
        assert_eq!(n.parent_node_id, Some(2));
        assert_eq!(n.branch_id, b);
        assert!(n.changed_from_previous.unwrap().drift_types.contains(&DriftType::ProvideOverview));
        // a second child of node 2 found from the path alone
        let (m, _) = tl.classify("s5", "e", &path(&["s1", "s2", "s5"]), &ctx);
        assert_eq!(m.parent_node_id, Some(2));
        assert_eq!(tl.children(2).len(), 3);
        assert_eq!(tl.leaves().len(), 3);
        assert!(tl.record_fork(99, 7).is_err());
    }

    #[test]
    fn restore_shows_snapshot_before_update() {
        let (c, t) = setup();
        let g = Gateway::offline();
        let ctx = ClassifyContext { tagger: &t, catalog: &c, gateway: &g };
        let mut tl = Timeline::new();
        tl.classify("s1", "first", &path(&["s1"]), &ctx);
        tl.classify("s2", "second", &path(&["s1", "s2"]), &ctx);
        tl.classify("s1", "first, revised", &path(&["s1", "s2"]), &ctx);
        let early = tl.restore(2).unwrap();
        assert_eq!(early.sentences[0].sentence_content, "first");
        let late = tl.restore(3).unwrap();
        let contents: Vec<_> = late.sentences.iter().map(|s| s.sentence_content.as_str()).collect();
        assert_eq!(contents, ["first, revised", "second"]);
        assert_eq!(tl.restore(1).unwrap().sentences.len(), 1);
        assert_eq!(tl.get(1).unwrap().sentence_content, "first");
    }

    #[test]
    fn related_sentence_needs_shared_topic() {
        let (c, t) = setup();
        let g = Gateway::offline();
        let ctx = ClassifyContext { tagger: &t, catalog: &c, gateway: &g };
        let mut tl = Timeline::new();
        tl.classify("s1", "crime_rate in Camden", &path(&["s1"]), &ctx);
        tl.classify("s2", "income in Hackney", &path(&["s1", "s2"]), &ctx);
        let (n, _) = tl.classify("s3", "crime_rate again", &path(&["s1", "s2", "s3"]), &ctx);
        assert_eq!(n.related_sentence, Some(RelatedSentence { node_id: 1, reason: "same topic".into() }));
        let (m, _) = tl.classify("s4", "nothing here", &path(&["s1", "s2", "s3", "s4"]), &ctx);
        assert_eq!(m.related_sentence, None);
    }

    #[test]
    fn model_reply_validated_and_enum_closed() {
        let (c, t) = setup();
        let stub = StubProvider::new();
        stub.register(
            Task::Drift,
            r#"[{"node_id":2,"sentence_id":"s2","sentence_content":"x","changed_from_previous":{"drift_types":["detect_pattern"],"severity":"moderate","dimensions":{"time":"2019 - 2020"}},"related_source":{"related_categories":[],"related_columns":["crime_rate"]},"related_sentence":{"node_id":1,"reason":"same topic"}}]"#,
        );
        let g = Gateway::stub(stub);
        let ctx = ClassifyContext { tagger: &t, catalog: &c, gateway: &g };
        let mut tl = Timeline::new();
        let (first, _) = tl.classify("s1", "crime_rate", &path(&["s1"]), &ctx);
        assert!(first.changed_from_previous.is_none());
        let (n, origin) = tl.classify("s2", "crime_rate rose", &path(&["s1", "s2"]), &ctx);
        assert_eq!(origin, ClassifyOrigin::Model);
        assert_eq!(n.changed_from_previous.unwrap().severity, Severity::Moderate);

        let bad = StubProvider::new();
        bad.register(
            Task::Drift,
            r#"{"node_id":1,"sentence_id":"s1","sentence_content":"x","changed_from_previous":{"drift_types":["vibes"],"severity":"huge"},"related_source":{"related_categories":[],"related_columns":[]},"related_sentence":null}"#,
        );
        let g = Gateway::stub(bad);
        let ctx = ClassifyContext { tagger: &t, catalog: &c, gateway: &g };
        let mut tl = Timeline::new();
        let (_, origin) = tl.classify("s1", "crime_rate", &path(&["s1"]), &ctx);
        assert_eq!(origin, ClassifyOrigin::Fallback);
    }

    #[test]
    fn reflections() {
        let (c, t) = setup();
        let g = Gateway::offline();
        let ctx = ClassifyContext { tagger: &t, catalog: &c, gateway: &g };
        let mut tl = Timeline::new();
        tl.classify("s1", "crime_rate in Camden", &path(&["s1"]), &ctx);
        assert!(tl.suggest_reflections(1, &t, &g).unwrap().is_empty());
        assert_eq!(tl.suggest_reflections(5, &t, &g).unwrap_err(), TimelineError::UnknownNode(5));

        let stub = StubProvider::new();
        stub.register(
            Task::Reflections,
            r#"{"reflect":[{"prompt":"Does income explain this?","reason":"r","related_sentence":null}]}"#,
        );
        // income is outside the node's related data
        assert!(tl.suggest_reflections(1, &t, &Gateway::stub(stub)).unwrap().is_empty());
        let stub = StubProvider::new();
        stub.register(
            Task::Reflections,
            r#"{"reflect":[{"prompt":"Is the crime_rate in Camden stable?","reason":"r","related_sentence":{"node_id":1,"sentence_content":"x"}}]}"#,
        );
        assert_eq!(tl.suggest_reflections(1, &t, &Gateway::stub(stub)).unwrap().len(), 1);
    }
}
