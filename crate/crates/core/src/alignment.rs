//! Joint semantic index over propositions and chart captions, sentence
//! matching, view selection and sentence/view links.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::llm::prompts::sha256_hex;
use crate::llm::{cosine, Gateway, LlmError};
use crate::propositions::{template_for, PropositionInstance, PropositionTemplate};
use crate::query::{execute, QueryError};
use crate::tags::{jaccard, tokens, TagNormalizer, TagSet, OVERVIEW};
use crate::value::Value;
use crate::views::{default_kind, render_view, template_for_family, ChartKind, ChartTemplate, ViewError, ViewSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error("the joint index needs at least one entry")]
    EmptyIndex,
    #[error("no joint index has been built")]
    IndexNotBuilt,
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    EmbeddingDimensionMismatch { expected: usize, found: usize },
    #[error("no entry matches the sentence")]
    NoMatch,
    #[error("unknown index entry `{0}`")]
    UnknownEntry(String),
    #[error("malformed index line {line}: {message}")]
    MalformedIndex { line: usize, message: String },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub cosine_weight: f64,
    pub jaccard_weight: f64,
    pub threshold: f64,
    pub dashboard_cap: usize,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig { cosine_weight: 0.7, jaccard_weight: 0.3, threshold: 0.55, dashboard_cap: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Proposition,
    ChartCaption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub entry_id: String,
    pub kind: EntryKind,
    pub text: String,
    pub tags: TagSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposition_instance_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_template_id: Option<String>,
}

impl JointEntry {
    pub fn proposition(p: &PropositionInstance) -> Self {
        JointEntry {
            entry_id: format!("p:{}", p.instance_id),
            kind: EntryKind::Proposition,
            text: p.filled_text.clone(),
            tags: p.tags.clone(),
            embedding: None,
            proposition_instance_id: Some(p.instance_id.clone()),
            chart_template_id: None,
        }
    }

    pub fn chart(c: &ChartTemplate) -> Self {
        JointEntry {
            entry_id: format!("c:{}", c.template_id),
            kind: EntryKind::ChartCaption,
            text: c.caption.clone(),
            tags: c.tags.clone(),
            embedding: None,
            proposition_instance_id: None,
            chart_template_id: Some(c.template_id.clone()),
        }
    }

    fn well_formed(&self) -> bool {
        match self.kind {
            EntryKind::Proposition => self.proposition_instance_id.is_some() && self.chart_template_id.is_none(),
            EntryKind::ChartCaption => self.chart_template_id.is_some() && self.proposition_instance_id.is_none(),
        }
    }
}

/// Text handed to the encoder: the entry text followed by its tag values, so
/// the vector carries the normalized vocabulary as well as the wording.
/// Queries go through the same function.
pub fn encoder_text(text: &str, tags: &TagSet) -> String {
    let mut out = text.to_string();
    for v in tags.geo.iter().chain(&tags.topic).chain(&tags.time).chain(&tags.intent) {
        out.push(' ');
        out.push_str(v);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    SingleChart,
    Dashboard,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub ranked: Vec<(String, f64)>,
    pub decision: Decision,
    pub query_tags: TagSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointIndex {
    entries: Vec<JointEntry>,
    by_id: BTreeMap<String, usize>,
    config: AlignmentConfig,
    tag_keys: Vec<BTreeSet<String>>,
    words: Vec<BTreeSet<String>>,
}

impl JointIndex {
    /// Embeds every entry through `gateway`; when the provider cannot embed,
    /// the index is built vectorless and matching falls back to tags.
    pub fn build(
        mut entries: Vec<JointEntry>,
        gateway: &Gateway,
        config: AlignmentConfig,
    ) -> Result<Self, AlignmentError> {
        if entries.is_empty() {
            return Err(AlignmentError::EmptyIndex);
        }
        let texts: Vec<String> = entries.iter().map(|e| encoder_text(&e.text, &e.tags)).collect();
        match gateway.embed(&texts) {
            Ok(vectors) => {
                for (e, v) in entries.iter_mut().zip(vectors) {
                    e.embedding = Some(v);
                }
            }
            Err(LlmError::ProviderUnavailable(_)) => {
                for e in &mut entries {
                    e.embedding = None;
                }
            }
            Err(LlmError::DimensionMismatch(expected, found)) => {
                return Err(AlignmentError::EmbeddingDimensionMismatch { expected, found })
            }
            Err(e) => return Err(e.into()),
        }
        Self::from_entries(entries, config)
    }

    pub fn from_entries(entries: Vec<JointEntry>, config: AlignmentConfig) -> Result<Self, AlignmentError> {
        if entries.is_empty() {
            return Err(AlignmentError::EmptyIndex);
        }
        let dim = entries.iter().find_map(|e| e.embedding.as_ref().map(Vec::len));
        let mut by_id = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if !e.well_formed() {
                return Err(AlignmentError::MalformedIndex { line: i + 1, message: "foreign id does not match kind".into() });
            }
            match (dim, &e.embedding) {
                (Some(d), Some(v)) if v.len() != d => {
                    return Err(AlignmentError::EmbeddingDimensionMismatch { expected: d, found: v.len() })
                }
                (Some(d), None) => return Err(AlignmentError::EmbeddingDimensionMismatch { expected: d, found: 0 }),
                _ => {}
            }
            if by_id.insert(e.entry_id.clone(), i).is_some() {
                return Err(AlignmentError::MalformedIndex { line: i + 1, message: format!("duplicate id {}", e.entry_id) });
            }
        }
        let tag_keys = entries.iter().map(|e| e.tags.keys()).collect();
        let words = entries.iter().map(|e| tokens(&e.text).into_iter().collect()).collect();
        Ok(JointIndex { entries, by_id, config, tag_keys, words })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[JointEntry] {
        &self.entries
    }

    pub fn get(&self, entry_id: &str) -> Option<&JointEntry> {
        self.by_id.get(entry_id).map(|&i| &self.entries[i])
    }

    pub fn config(&self) -> &AlignmentConfig {
        &self.config
    }

    pub fn has_vectors(&self) -> bool {
        self.entries.first().is_some_and(|e| e.embedding.is_some())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, config: AlignmentConfig) -> Result<Self, AlignmentError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(line)
                .map_err(|err| AlignmentError::MalformedIndex { line: i + 1, message: err.to_string() })?;
            entries.push(e);
        }
        Self::from_entries(entries, config)
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }

    /// Score of one entry; `query_vec` is absent in vectorless mode.
    pub fn score(&self, entry: &JointEntry, query_vec: Option<&[f64]>, query_tags: &TagSet) -> f64 {
        self.combine(query_vec, entry.embedding.as_deref(), query_tags.jaccard(&entry.tags))
    }

    fn combine(&self, query_vec: Option<&[f64]>, entry_vec: Option<&[f64]>, j: f64) -> f64 {
        let s = match (query_vec, entry_vec) {
            (Some(q), Some(v)) => self.config.cosine_weight * cosine(q, v).max(0.0) + self.config.jaccard_weight * j,
            _ => j,
        };
        s.clamp(0.0, 1.0)
    }

    pub fn match_text(&self, text: &str, tagger: &TagNormalizer, gateway: &Gateway) -> MatchResult {
        let tags = tagger.normalize(text);
        self.match_tagged(text, tags, gateway)
    }

    pub fn match_tagged(&self, text: &str, query_tags: TagSet, gateway: &Gateway) -> MatchResult {
        let query_vec = if self.has_vectors() {
            gateway.embed(&[encoder_text(text, &query_tags)]).ok().and_then(|mut v| v.pop())
        } else {
            None
        };
        let dim_ok = match (&query_vec, self.entries[0].embedding.as_ref()) {
            (Some(q), Some(v)) => q.len() == v.len(),
            _ => false,
        };
        let query_vec = query_vec.filter(|_| dim_ok);
        let vector_mode = query_vec.is_some();

        let query_words: BTreeSet<String> = tokens(text).into_iter().collect();
        let query_keys = query_tags.keys();
        let threshold = |s: f64| if vector_mode { s >= self.config.threshold } else { s > 0.0 };
        // ties: exact text, then word overlap, then id
        let mut scored: Vec<(usize, f64, bool, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let j = jaccard(&query_keys, &self.tag_keys[i]);
                (i, self.combine(query_vec.as_deref(), e.embedding.as_deref(), j))
            })
            .filter(|&(_, s)| threshold(s))
            .map(|(i, s)| (i, s, self.entries[i].text == text, jaccard(&query_words, &self.words[i])))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| b.2.cmp(&a.2))
                .then_with(|| b.3.partial_cmp(&a.3).unwrap_or(Ordering::Equal))
                .then_with(|| self.entries[a.0].entry_id.cmp(&self.entries[b.0].entry_id))
        });
        let ranked: Vec<(String, f64)> =
            scored.iter().map(|&(i, s, _, _)| (self.entries[i].entry_id.clone(), s)).collect();
        let decision = self.decide(&ranked, &query_tags);
        MatchResult { ranked, decision, query_tags }
    }

    fn decide(&self, ranked: &[(String, f64)], query_tags: &TagSet) -> Decision {
        if ranked.is_empty() {
            return Decision::NoMatch;
        }
        if query_tags.intent.contains(OVERVIEW) {
            return Decision::Dashboard;
        }
        let topics: BTreeSet<&String> = ranked
            .iter()
            .take(3)
            .filter_map(|(id, _)| self.get(id))
            .flat_map(|e| e.tags.topic.iter())
            .collect();
        if topics.len() >= 2 {
            Decision::Dashboard
        } else {
            Decision::SingleChart
        }
    }
}

/// What an entry renders from.
pub struct ViewSources<'a> {
    pub catalog: &'a Catalog,
    pub instances: &'a BTreeMap<String, PropositionInstance>,
    pub templates: &'a [PropositionTemplate],
    pub charts: &'a BTreeMap<String, ChartTemplate>,
}

impl ViewSources<'_> {
    pub fn chart_kind(&self, entry: &JointEntry) -> Option<ChartKind> {
        match entry.kind {
            EntryKind::Proposition => {
                let inst = self.instances.get(entry.proposition_instance_id.as_deref()?)?;
                let tpl = template_for(self.templates, inst)?;
                Some(default_kind(inst.family, tpl.columns.contains_key(&crate::query::Slot::Label)))
            }
            EntryKind::ChartCaption => Some(self.charts.get(entry.chart_template_id.as_deref()?)?.chart_kind),
        }
    }

    /// Proposition template or chart template behind an entry.
    pub fn source_template(&self, entry: &JointEntry) -> Option<String> {
        match entry.kind {
            EntryKind::Proposition => {
                Some(self.instances.get(entry.proposition_instance_id.as_deref()?)?.template_id.clone())
            }
            EntryKind::ChartCaption => entry.chart_template_id.clone(),
        }
    }

    /// Executes the entry's plan and renders it.
    pub fn render(&self, entry: &JointEntry, query_tags: &TagSet) -> Result<ViewSpec, AlignmentError> {
        let unknown = || AlignmentError::UnknownEntry(entry.entry_id.clone());
        match entry.kind {
            EntryKind::Proposition => {
                let inst = self.instances.get(entry.proposition_instance_id.as_deref().ok_or_else(unknown)?).ok_or_else(unknown)?;
                let tpl = template_for(self.templates, inst).ok_or_else(unknown)?;
                let table = self.catalog.table(&tpl.table).map_err(|_| unknown())?;
                let has_label = tpl.columns.contains_key(&crate::query::Slot::Label);
                let kind = default_kind(inst.family, has_label);
                let chart = template_for_family(inst.family, kind, &tpl.table, &tpl.columns).ok_or_else(unknown)?;
                let result = execute(table, &inst.plan)?;
                Ok(render_view(&chart, &result, &inst.plan, &inst.filled_text, &chart.caption)?)
            }
            EntryKind::ChartCaption => {
                let chart = self.charts.get(entry.chart_template_id.as_deref().ok_or_else(unknown)?).ok_or_else(unknown)?;
                let table = self.catalog.table(&chart.table).map_err(|_| unknown())?;
                let time = match query_tags.time.len() {
                    1 => table.schema.time_column().and_then(|c| {
                        let wanted = query_tags.time.iter().next()?;
                        table.distinct_sorted(&c.name).into_iter().find(|v| &v.display() == wanted)
                    }),
                    _ => None::<Value>,
                };
                let plan = chart.plan(&table.schema, time.as_ref());
                let result = execute(table, &plan)?;
                let title = match &time {
                    Some(t) => format!("{} ({})", chart.caption, t.display()),
                    None => chart.caption.clone(),
                };
                Ok(render_view(chart, &result, &plan, &title, &chart.caption)?)
            }
        }
    }
}

/// Entries backing a single chart or a dashboard. Dashboard entries are taken
/// greedily by rank, each adding a new chart kind or a new topic.
pub fn select_entries<'a>(
    index: &'a JointIndex,
    result: &MatchResult,
    sources: &ViewSources<'_>,
) -> Vec<&'a JointEntry> {
    let ranked = result.ranked.iter().filter_map(|(id, _)| index.get(id));
    match result.decision {
        Decision::NoMatch => Vec::new(),
        Decision::SingleChart => ranked.take(1).collect(),
        Decision::Dashboard => {
            let mut kinds = BTreeSet::new();
            let mut topics: BTreeSet<&String> = BTreeSet::new();
            let mut out = Vec::new();
            for e in ranked {
                if out.len() == index.config.dashboard_cap {
                    break;
                }
                let Some(kind) = sources.chart_kind(e) else { continue };
                let new_topic = e.tags.topic.iter().any(|t| !topics.contains(t));
                if out.is_empty() || !kinds.contains(&kind) || new_topic {
                    kinds.insert(kind);
                    topics.extend(e.tags.topic.iter());
                    out.push(e);
                }
            }
            // a dashboard shows at least two views when two source templates survive
            if out.len() < 2 {
                let used: BTreeSet<String> = out.iter().filter_map(|e| sources.source_template(e)).collect();
                if let Some(extra) = result
                    .ranked
                    .iter()
                    .filter_map(|(id, _)| index.get(id))
                    .find(|e| sources.source_template(e).is_some_and(|t| !used.contains(&t)))
                {
                    out.push(extra);
                }
            }
            out
        }
    }
}

/// Sentence/view links, kept consistent in both directions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkTable {
    views_by_sentence: BTreeMap<String, BTreeSet<String>>,
    sentences_by_view: BTreeMap<String, BTreeSet<String>>,
}

impl LinkTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the link already existed.
    pub fn link(&mut self, sentence_id: &str, view_id: &str) -> bool {
        let fresh = self.views_by_sentence.entry(sentence_id.to_string()).or_default().insert(view_id.to_string());
        self.sentences_by_view.entry(view_id.to_string()).or_default().insert(sentence_id.to_string());
        fresh
    }

    pub fn unlink(&mut self, sentence_id: &str, view_id: &str) -> bool {
        let removed = self.views_by_sentence.get_mut(sentence_id).is_some_and(|s| s.remove(view_id));
        if let Some(s) = self.sentences_by_view.get_mut(view_id) {
            s.remove(sentence_id);
        }
        self.views_by_sentence.retain(|_, v| !v.is_empty());
        self.sentences_by_view.retain(|_, v| !v.is_empty());
        removed
    }

    pub fn views_of(&self, sentence_id: &str) -> BTreeSet<String> {
        self.views_by_sentence.get(sentence_id).cloned().unwrap_or_default()
    }

    pub fn sentences_of(&self, view_id: &str) -> BTreeSet<String> {
        self.sentences_by_view.get(view_id).cloned().unwrap_or_default()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&String, &String)> {
        self.views_by_sentence.iter().flat_map(|(s, vs)| vs.iter().map(move |v| (s, v)))
    }

    pub fn len(&self) -> usize {
        self.views_by_sentence.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.views_by_sentence.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let forward: BTreeSet<(&String, &String)> = self.pairs().collect();
        let backward: BTreeSet<(&String, &String)> = self
            .sentences_by_view
            .iter()
            .flat_map(|(v, ss)| ss.iter().map(move |s| (s, v)))
            .collect();
        forward == backward
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tag_vocabulary;
    use crate::propositions::{all_instances, generate_templates};
    use crate::views::adapt_templates;

    struct Fixture {
        catalog: Catalog,
        tagger: TagNormalizer,
        instances: BTreeMap<String, PropositionInstance>,
        templates: Vec<PropositionTemplate>,
        charts: BTreeMap<String, ChartTemplate>,
    }

    fn travel() -> Fixture {
        let mut catalog = Catalog::new();
        catalog.ingest_table(include_bytes!("../data/travel_destinations.csv"), "travel").unwrap();
        let table = catalog.table("travel").unwrap().clone();
        let tagger = TagNormalizer::new(&tag_vocabulary(&table));
        let instances = all_instances(&table, &tagger).unwrap().into_iter().map(|i| (i.instance_id.clone(), i)).collect();
        let templates = generate_templates(&table).unwrap();
        let charts = adapt_templates(&table, &tagger, &Gateway::offline())
            .into_iter()
            .map(|c| (c.template_id.clone(), c))
            .collect();
        Fixture { catalog, tagger, instances, templates, charts }
    }

    impl Fixture {
        fn entries(&self) -> Vec<JointEntry> {
            self.instances
                .values()
                .map(JointEntry::proposition)
                .chain(self.charts.values().map(JointEntry::chart))
                .collect()
        }

        fn sources(&self) -> ViewSources<'_> {
            ViewSources { catalog: &self.catalog, instances: &self.instances, templates: &self.templates, charts: &self.charts }
        }
    }

    #[test]
    fn index_size_and_rebuild_determinism() {
        let f = travel();
        let a = JointIndex::build(f.entries(), &Gateway::offline(), AlignmentConfig::default()).unwrap();
        let b = JointIndex::build(f.entries(), &Gateway::offline(), AlignmentConfig::default()).unwrap();
        assert_eq!(a.len(), f.instances.len() + f.charts.len());
        assert!(a.has_vectors());
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = JointIndex::build(f.entries(), &Gateway::disabled(), AlignmentConfig::default()).unwrap();
        assert!(!c.has_vectors());
    }

    #[test]
    fn jsonl_round_trip() {
        let f = travel();
        let a = JointIndex::build(f.entries(), &Gateway::offline(), AlignmentConfig::default()).unwrap();
        let b = JointIndex::from_jsonl(&a.to_jsonl(), AlignmentConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            JointIndex::from_jsonl("{\"oops\":1}\n", AlignmentConfig::default()),
            Err(AlignmentError::MalformedIndex { line: 1, .. })
        ));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let f = travel();
        let mut entries = f.entries();
        entries.truncate(2);
        entries[0].embedding = Some(vec![1.0, 0.0]);
        entries[1].embedding = Some(vec![1.0, 0.0, 0.0]);
        assert_eq!(
            JointIndex::from_entries(entries, AlignmentConfig::default()).unwrap_err(),
            AlignmentError::EmbeddingDimensionMismatch { expected: 2, found: 3 }
        );
        assert_eq!(JointIndex::from_entries(vec![], AlignmentConfig::default()).unwrap_err(), AlignmentError::EmptyIndex);
    }

    #[test]
    fn worked_examples() {
        let f = travel();
        let g = Gateway::offline();
        let idx = JointIndex::build(f.entries(), &g, AlignmentConfig::default()).unwrap();
        let porto = idx.match_text("Porto stands out for affordability", &f.tagger, &g);
        assert_eq!(porto.decision, Decision::SingleChart, "{:?}", &porto.ranked[..porto.ranked.len().min(5)]);
        let asia = idx.match_text("Asia is cheaper but more crowded", &f.tagger, &g);
        assert_eq!(asia.decision, Decision::Dashboard, "{:?}", &asia.ranked[..asia.ranked.len().min(5)]);
    }

    #[test]
    fn unrelated_text_is_no_match() {
        let f = travel();
        for g in [Gateway::offline(), Gateway::disabled()] {
            let idx = JointIndex::build(f.entries(), &g, AlignmentConfig::default()).unwrap();
            let m = idx.match_text("the weather was lovely", &f.tagger, &g);
            assert_eq!(m.decision, Decision::NoMatch);
            assert!(m.ranked.is_empty());
        }
    }

    #[test]
    fn scores_bounded_and_sorted() {
        let f = travel();
        let g = Gateway::offline();
        let idx = JointIndex::build(f.entries(), &g, AlignmentConfig::default()).unwrap();
        let m = idx.match_text("Lisbon cost_of_stay in 2023 compared with Porto", &f.tagger, &g);
        assert!(!m.ranked.is_empty());
        assert!(m.ranked.iter().all(|(_, s)| (0.0..=1.0).contains(s)));
        assert!(m.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn overview_forces_dashboard_with_distinct_views() {
        let f = travel();
        let g = Gateway::offline();
        let idx = JointIndex::build(f.entries(), &g, AlignmentConfig::default()).unwrap();
        let m = idx.match_text("The overall landscape of cost_of_stay across Europe", &f.tagger, &g);
        assert_eq!(m.decision, Decision::Dashboard);
        let picked = select_entries(&idx, &m, &f.sources());
        assert!((2..=4).contains(&picked.len()), "{}", picked.len());
        for e in picked {
            f.sources().render(e, &m.query_tags).unwrap();
        }
    }

    #[test]
    fn proposition_entry_renders_bar() {
        let f = travel();
        let inst = f.instances.values().find(|i| i.template_id.starts_with("ranking_highest:")).unwrap();
        let v = f.sources().render(&JointEntry::proposition(inst), &inst.tags).unwrap();
        assert_eq!(v.chart_kind, ChartKind::Bar);
        assert_eq!(v.title, inst.filled_text);
    }

    #[test]
    fn links_are_symmetric_and_idempotent() {
        let mut l = LinkTable::new();
        assert!(l.link("s1", "v1"));
        assert!(!l.link("s1", "v1"));
        assert!(l.views_of("s1").contains("v1"));
        assert!(l.sentences_of("v1").contains("s1"));
        assert!(l.sentences_of("v9").is_empty());
        assert_eq!(l.len(), 1);
        assert!(l.unlink("s1", "v1"));
        assert!(l.is_empty() && l.is_consistent());
    }
}
