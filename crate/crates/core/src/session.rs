//! Sessions: every module behind one event-sourced state.
//!
//! Each mutation runs against a copy of the state and is committed together
//! with a log entry holding the operation, its timestamp and the provider
//! traffic it caused. Replaying the log through that recorded traffic
//! rebuilds the same state without contacting a model.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::alignment::{
    select_entries, AlignmentConfig, AlignmentError, Decision, JointEntry, JointIndex, LinkTable, MatchResult,
    ViewSources,
};
use crate::capture::{capture, CaptureError, CaptureOrigin, CaptureSuggestion, EventBuffer, InteractionEvent};
use crate::catalog::{Catalog, CatalogError, TableSchema};
use crate::inquiry::{enrich, extract_issues, Board, IbisGraph, NarrativeItem, Status};
use crate::llm::prompts::sha256_hex;
use crate::llm::tape::{RecordingProvider, ReplayProvider, TapeItem};
use crate::llm::{Gateway, GatewayConfig, LlmError};
use crate::narrative::{Author, NarrativeTree, Sentence, SentenceId, TreeError, TreeEvent, TreeSnapshot};
use crate::propositions::{generate_templates, instantiate, PropositionInstance, PropositionTemplate};
use crate::story::{compile, DataStory, StoryError, StoryOrigin};
use crate::tags::TagNormalizer;
use crate::timeline::{ClassifyContext, Reflection, RestoredState, Timeline, TimelineError, TimelineNode};
use crate::views::{adapt_templates, compose_dashboard, ChartTemplate, Dashboard, ViewError, ViewSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Story(#[from] StoryError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("no view `{0}`")]
    UnknownView(String),
    #[error("snapshot does not match its event log: {0}")]
    ReplayDiverged(String),
    #[error("invalid request: {0}")]
    Invalid(String),
}

/// Coarse error class, one per HTTP status family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Invalid,
    Upstream,
}

impl SessionError {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            SessionError::Tree(e) => match e {
                TreeError::UnknownSentence(_) => NotFound,
                TreeError::EmptyContent | TreeError::InvalidSnapshot(_) => Invalid,
                _ => Conflict,
            },
            SessionError::Catalog(CatalogError::UnknownTable(_)) => NotFound,
            SessionError::Catalog(CatalogError::DuplicateTable(_)) => Conflict,
            SessionError::Catalog(_) => Invalid,
            SessionError::Timeline(_) | SessionError::UnknownView(_) => NotFound,
            SessionError::Capture(CaptureError::UnknownView(_)) => NotFound,
            SessionError::Capture(CaptureError::NullSuggestion) => Invalid,
            SessionError::Story(StoryError::NoGroundedContent) => Conflict,
            SessionError::Story(StoryError::StoryValidationFailed(_)) => Invalid,
            SessionError::Story(StoryError::Malformed(_)) => Upstream,
            SessionError::Alignment(AlignmentError::IndexNotBuilt) => Conflict,
            SessionError::Alignment(AlignmentError::NoMatch) => Invalid,
            SessionError::Alignment(AlignmentError::Llm(_)) | SessionError::Llm(_) => Upstream,
            SessionError::Alignment(_) | SessionError::View(_) => Invalid,
            SessionError::ReplayDiverged(_) => Conflict,
            SessionError::Invalid(_) => Invalid,
        }
    }

    /// Machine-readable code, the variant name of the underlying error.
    pub fn code(&self) -> String {
        let debug = match self {
            SessionError::Tree(e) => format!("{e:?}"),
            SessionError::Catalog(e) => format!("{e:?}"),
            SessionError::Timeline(e) => format!("{e:?}"),
            SessionError::Capture(e) => format!("{e:?}"),
            SessionError::Story(e) => format!("{e:?}"),
            SessionError::Alignment(AlignmentError::Llm(e)) | SessionError::Llm(e) => format!("{e:?}"),
            SessionError::Alignment(e) => format!("{e:?}"),
            SessionError::View(e) => format!("{e:?}"),
            SessionError::UnknownView(_) => "UnknownView".into(),
            SessionError::ReplayDiverged(_) => "ReplayDiverged".into(),
            SessionError::Invalid(_) => "Invalid".into(),
        };
        debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    IngestDataset {
        name: String,
        csv: String,
        #[serde(default)]
        category_tags: Vec<String>,
    },
    AppendSentence { content: String },
    InsertSentence { anchor: String, content: String },
    UpdateSentence { sentence_id: String, content: String },
    DeleteSentence { sentence_id: String },
    CreateBranch { from: String },
    DeleteBranch { fork_child: String },
    ShowView { sentence_id: String },
    RecordEvent { event: InteractionEvent },
    AcceptCapture { suggestion: CaptureSuggestion },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: Actor,
    pub operation: Operation,
    /// Retry budgets (reasoning, lightweight) in force, so replay asks the
    /// tape the same number of times.
    pub retries: (u32, u32),
    #[serde(default)]
    pub tape: Vec<TapeItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shown {
    View(ViewSpec),
    Dashboard(Dashboard),
}

impl Shown {
    pub fn views(&self) -> Vec<&ViewSpec> {
        match self {
            Shown::View(v) => vec![v],
            Shown::Dashboard(d) => d.views.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Schema(TableSchema),
    Sentence(Sentence),
    Shown { shown: Shown, matched: MatchResult },
    Done,
}

/// Everything derived from the registered tables.
#[derive(Debug, Clone, Default)]
struct Derived {
    catalog: Catalog,
    tagger: Option<TagNormalizer>,
    templates: Vec<PropositionTemplate>,
    instances: BTreeMap<String, PropositionInstance>,
    charts: BTreeMap<String, ChartTemplate>,
    index: Option<JointIndex>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    created_at: DateTime<Utc>,
    schemas: Vec<TableSchema>,
    derived: Arc<Derived>,
    empty_tagger: Arc<TagNormalizer>,
    tree: NarrativeTree,
    timeline: Timeline,
    ibis: IbisGraph,
    views: BTreeMap<String, ViewSpec>,
    dashboards: BTreeMap<String, Dashboard>,
    links: LinkTable,
    buffer: EventBuffer,
    log: Vec<LogEntry>,
}

/// Serialized session: the state for inspection plus the log that rebuilds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub datasets: Vec<TableSchema>,
    pub tree: TreeSnapshot,
    pub timeline: Timeline,
    pub ibis: IbisGraph,
    pub views: BTreeMap<String, ViewSpec>,
    pub dashboards: BTreeMap<String, Dashboard>,
    pub links: LinkTable,
    pub buffer: EventBuffer,
    pub event_log: Vec<LogEntry>,
}

impl SessionSnapshot {
    /// The snapshot without its log, as JSON.
    pub fn state(&self) -> Json {
        let mut v = serde_json::to_value(self).expect("snapshot serializes");
        v.as_object_mut().expect("object").remove("event_log");
        v
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("snapshot serializes").as_bytes())
    }
}

fn sid(s: &str) -> SentenceId {
    SentenceId(s.to_string())
}

impl Session {
    pub fn new(id: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Session {
            id: id.into(),
            created_at,
            schemas: Vec::new(),
            derived: Arc::new(Derived::default()),
            empty_tagger: Arc::new(TagNormalizer::new(&Catalog::new().vocabulary())),
            tree: NarrativeTree::new(),
            timeline: Timeline::new(),
            ibis: IbisGraph::default(),
            views: BTreeMap::new(),
            dashboards: BTreeMap::new(),
            links: LinkTable::new(),
            buffer: EventBuffer::new(),
            log: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tree(&self) -> &NarrativeTree {
        &self.tree
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn ibis(&self) -> &IbisGraph {
        &self.ibis
    }

    pub fn links(&self) -> &LinkTable {
        &self.links
    }

    pub fn views(&self) -> &BTreeMap<String, ViewSpec> {
        &self.views
    }

    pub fn buffer(&self) -> &EventBuffer {
        &self.buffer
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn catalog(&self) -> &Catalog {
        &self.derived.catalog
    }

    pub fn index(&self) -> Option<&JointIndex> {
        self.derived.index.as_ref()
    }

    pub fn tagger(&self) -> &TagNormalizer {
        self.derived.tagger.as_ref().unwrap_or(&self.empty_tagger)
    }

    /// Applies one operation atomically and logs it.
    pub fn apply(&mut self, op: Operation, actor: Actor, gateway: &Gateway) -> Result<Outcome, SessionError> {
        self.apply_at(op, actor, gateway, Utc::now())
    }

    pub fn apply_at(
        &mut self,
        op: Operation,
        actor: Actor,
        gateway: &Gateway,
        at: DateTime<Utc>,
    ) -> Result<Outcome, SessionError> {
        let recorder = Arc::new(RecordingProvider::new(gateway.provider()));
        let recorded = gateway.with_provider(recorder.clone());
        let mut next = self.clone();
        let outcome = next.execute(&op, &recorded, at)?;
        let cfg = gateway.config();
        next.log.push(LogEntry {
            seq: self.log.len() as u64 + 1,
            timestamp: at,
            actor,
            operation: op,
            retries: (cfg.reasoning.max_retries, cfg.lightweight.max_retries),
            tape: recorder.take(),
        });
        *self = next;
        Ok(outcome)
    }

    /// Rebuilds a session from its log alone.
    pub fn replay(id: &str, created_at: DateTime<Utc>, log: &[LogEntry]) -> Result<Self, SessionError> {
        let mut s = Session::new(id, created_at);
        for entry in log {
            let mut config = GatewayConfig::default();
            config.reasoning.max_retries = entry.retries.0;
            config.lightweight.max_retries = entry.retries.1;
            let gw = Gateway::new(Arc::new(ReplayProvider::new(entry.tape.clone())), config);
            s.execute(&entry.operation, &gw, entry.timestamp)
                .map_err(|e| SessionError::ReplayDiverged(format!("entry {} failed: {e}", entry.seq)))?;
            s.log.push(entry.clone());
        }
        Ok(s)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            created_at: self.created_at,
            datasets: self.schemas.clone(),
            tree: self.tree.snapshot(),
            timeline: self.timeline.clone(),
            ibis: self.ibis.clone(),
            views: self.views.clone(),
            dashboards: self.dashboards.clone(),
            links: self.links.clone(),
            buffer: self.buffer.clone(),
            event_log: self.log.clone(),
        }
    }

    /// Replays the snapshot's log and checks the result against its state.
    pub fn from_snapshot(snap: &SessionSnapshot) -> Result<Self, SessionError> {
        let s = Session::replay(&snap.session_id, snap.created_at, &snap.event_log)?;
        let (got, want) = (s.snapshot().state(), snap.state());
        if got != want {
            let field = want
                .as_object()
                .and_then(|w| w.iter().find(|(k, v)| got.get(k.as_str()) != Some(v)).map(|(k, _)| k.clone()))
                .unwrap_or_default();
            return Err(SessionError::ReplayDiverged(format!("field `{field}` differs")));
        }
        Ok(s)
    }

    fn execute(&mut self, op: &Operation, gw: &Gateway, at: DateTime<Utc>) -> Result<Outcome, SessionError> {
        let outcome = match op {
            Operation::IngestDataset { name, csv, category_tags } => {
                let schema = self.ingest(name, csv, category_tags, gw)?;
                Outcome::Schema(schema)
            }
            Operation::AppendSentence { content } => {
                let s = self.tree.append_at(content, Author::User, at)?;
                self.sentence_changed(&s.sentence_id, gw)?;
                Outcome::Sentence(self.sentence(&s.sentence_id)?)
            }
            Operation::InsertSentence { anchor, content } => {
                let s = self.tree.insert_after_at(&sid(anchor), content, Author::User, at)?;
                self.sentence_changed(&s.sentence_id, gw)?;
                Outcome::Sentence(self.sentence(&s.sentence_id)?)
            }
            Operation::UpdateSentence { sentence_id, content } => {
                let id = sid(sentence_id);
                let before = self.tree.get(&id).map(|s| s.content.clone());
                self.tree.update(&id, content)?;
                if before.as_deref() != Some(self.tree.get(&id).map(|s| s.content.as_str()).unwrap_or_default()) {
                    self.sentence_changed(&id, gw)?;
                }
                Outcome::Sentence(self.sentence(&id)?)
            }
            Operation::DeleteSentence { sentence_id } => {
                self.tree.delete_sentence(&sid(sentence_id))?;
                self.structure_changed(gw);
                Outcome::Done
            }
            Operation::CreateBranch { from } => {
                let s = self.tree.create_branch(&sid(from))?;
                if let Some(at_node) = self.timeline.latest_for(from).map(|n| n.node_id) {
                    let branch = self.timeline.allocate_branch();
                    self.timeline.record_fork(at_node, branch)?;
                }
                self.structure_changed(gw);
                Outcome::Sentence(s)
            }
            Operation::DeleteBranch { fork_child } => {
                self.tree.delete_branch(&sid(fork_child))?;
                self.structure_changed(gw);
                Outcome::Done
            }
            Operation::ShowView { sentence_id } => self.show_view(&sid(sentence_id), gw)?,
            Operation::RecordEvent { event } => {
                self.buffer.record(event.clone());
                Outcome::Done
            }
            Operation::AcceptCapture { suggestion } => {
                let text = suggestion.narrative_suggestion.as_deref().filter(|t| !t.trim().is_empty());
                let text = text.ok_or(CaptureError::NullSuggestion)?;
                let view_id = suggestion.source_element_id.clone();
                if !self.views.contains_key(&view_id) {
                    return Err(CaptureError::UnknownView(view_id).into());
                }
                let s = self.tree.append_at(text, Author::Captured, at)?;
                self.link(&s.sentence_id, &view_id)?;
                self.sentence_changed(&s.sentence_id, gw)?;
                Outcome::Sentence(self.sentence(&s.sentence_id)?)
            }
        };
        self.tree.take_events();
        Ok(outcome)
    }

    fn sentence(&self, id: &SentenceId) -> Result<Sentence, SessionError> {
        Ok(self.tree.get(id).cloned().ok_or_else(|| TreeError::UnknownSentence(id.clone()))?)
    }

    fn ingest(&mut self, name: &str, csv: &str, tags: &[String], gw: &Gateway) -> Result<TableSchema, SessionError> {
        let mut catalog = self.derived.catalog.clone();
        let schema = catalog.ingest_table_tagged(csv.as_bytes(), name, tags.iter().cloned())?.clone();
        let tagger = TagNormalizer::new(&catalog.vocabulary());
        let mut templates = Vec::new();
        let mut instances = BTreeMap::new();
        let mut charts = BTreeMap::new();
        for table in catalog.tables() {
            // tables without measures still register, they just propose nothing
            if let Ok(mut ts) = generate_templates(table) {
                ts.sort_by(|a, b| a.template_id.cmp(&b.template_id));
                for t in &ts {
                    for inst in instantiate(table, t, &tagger).map_err(|e| SessionError::Invalid(e.to_string()))? {
                        instances.entry(inst.instance_id.clone()).or_insert(inst);
                    }
                }
                templates.extend(ts);
            }
            for c in adapt_templates(table, &tagger, gw) {
                charts.insert(c.template_id.clone(), c);
            }
        }
        let entries: Vec<JointEntry> =
            instances.values().map(JointEntry::proposition).chain(charts.values().map(JointEntry::chart)).collect();
        let index = if entries.is_empty() {
            None
        } else {
            Some(JointIndex::build(entries, gw, AlignmentConfig::default())?)
        };
        self.derived = Arc::new(Derived { catalog, tagger: Some(tagger), templates, instances, charts, index });
        self.schemas.push(schema.clone());
        Ok(schema)
    }

    fn path_strings(&self, ids: &[SentenceId]) -> Vec<String> {
        ids.iter().map(|s| s.0.clone()).collect()
    }

    /// A sentence was written or rewritten: log it on the timeline and
    /// rebuild the inquiry board.
    fn sentence_changed(&mut self, id: &SentenceId, gw: &Gateway) -> Result<(), SessionError> {
        let active = self.tree.active_path_ids();
        let path = if active.contains(id) { active } else { self.tree.path_to(id)? };
        let path = self.path_strings(&path);
        let content = self.sentence(id)?.content;
        let derived = self.derived.clone();
        let empty = self.empty_tagger.clone();
        let tagger = derived.tagger.as_ref().unwrap_or(&empty);
        let ctx = ClassifyContext { tagger, catalog: &derived.catalog, gateway: gw };
        let (node, _) = self.timeline.classify(id.as_str(), &content, &path, &ctx);
        self.tree.set_timeline_node(id, node.node_id)?;
        self.rebuild_inquiry(gw);
        Ok(())
    }

    fn tagger_of<'a>(&'a self, derived: &'a Derived) -> &'a TagNormalizer {
        derived.tagger.as_ref().unwrap_or(&self.empty_tagger)
    }

    fn structure_changed(&mut self, gw: &Gateway) {
        for ev in self.tree.take_events() {
            let gone: Vec<String> = match ev {
                TreeEvent::Deleted { tombstone } => vec![tombstone.sentence_id.0],
                TreeEvent::BranchDeleted { removed, .. } => removed.into_iter().map(|s| s.0).collect(),
                _ => continue,
            };
            for s in gone {
                for v in self.links.views_of(&s) {
                    self.links.unlink(&s, &v);
                    if let Some(view) = self.views.get_mut(&v) {
                        view.linked_sentence_ids.remove(&s);
                    }
                }
            }
        }
        self.rebuild_inquiry(gw);
    }

    fn rebuild_inquiry(&mut self, gw: &Gateway) {
        let items: Vec<NarrativeItem> = self
            .tree
            .active_path()
            .unwrap_or_default()
            .into_iter()
            .map(|s| NarrativeItem { sentence_id: s.sentence_id.0.clone(), content: s.content.clone() })
            .collect();
        if items.is_empty() {
            self.ibis = IbisGraph::default();
            return;
        }
        let derived = self.derived.clone();
        let tagger = self.tagger_of(&derived);
        let (issues, _) = extract_issues(&items, tagger, gw);
        let (enrichments, _) = enrich(&issues, &items, tagger, gw);
        self.ibis = IbisGraph::build(issues, enrichments);
    }

    fn link(&mut self, sentence: &SentenceId, view_id: &str) -> Result<(), SessionError> {
        self.tree.link_view(sentence, view_id)?;
        self.links.link(sentence.as_str(), view_id);
        if let Some(v) = self.views.get_mut(view_id) {
            v.linked_sentence_ids.insert(sentence.0.clone());
        }
        Ok(())
    }

    fn show_view(&mut self, id: &SentenceId, gw: &Gateway) -> Result<Outcome, SessionError> {
        let content = self.sentence(id)?.content;
        let derived = self.derived.clone();
        let index = derived.index.as_ref().ok_or(AlignmentError::IndexNotBuilt)?;
        let matched = index.match_text(&content, self.tagger_of(&derived), gw);
        let sources = ViewSources {
            catalog: &derived.catalog,
            instances: &derived.instances,
            templates: &derived.templates,
            charts: &derived.charts,
        };
        let picked = select_entries(index, &matched, &sources);
        if matched.decision == Decision::NoMatch || picked.is_empty() {
            return Err(AlignmentError::NoMatch.into());
        }
        let mut rendered: Vec<ViewSpec> = Vec::new();
        for e in picked {
            let v = sources.render(e, &matched.query_tags)?;
            if !rendered.iter().any(|r| r.view_id == v.view_id) {
                rendered.push(v);
            }
        }
        for v in &rendered {
            self.views.entry(v.view_id.clone()).or_insert_with(|| v.clone());
            self.link(id, &v.view_id)?;
        }
        let rendered: Vec<ViewSpec> = rendered.iter().map(|v| self.views[&v.view_id].clone()).collect();
        let shown = if rendered.len() == 1 {
            Shown::View(rendered.into_iter().next().expect("one view"))
        } else {
            let d = compose_dashboard(rendered)?;
            self.dashboards.insert(d.dashboard_id.clone(), d.clone());
            Shown::Dashboard(d)
        };
        Ok(Outcome::Shown { shown, matched })
    }

    // Reads below never touch the log.

    pub fn board(&self, filter: Option<Status>) -> Board {
        self.ibis.board(filter)
    }

    pub fn capture(&self, gw: &Gateway) -> (CaptureSuggestion, CaptureOrigin) {
        let current = self.tree.cursor_id().and_then(|c| self.tree.get(c)).map(|s| s.content.clone()).unwrap_or_default();
        let context = self.tree.to_linear_text().unwrap_or_default();
        capture(&self.buffer, &current, &context, gw)
    }

    pub fn restore(&self, node_id: u64) -> Result<RestoredState, SessionError> {
        let mut state = self.timeline.restore(node_id)?;
        for s in &state.sentences {
            state.view_ids.extend(self.links.views_of(&s.sentence_id));
        }
        Ok(state)
    }

    pub fn reflections(&self, node_id: u64, gw: &Gateway) -> Result<Vec<Reflection>, SessionError> {
        Ok(self.timeline.suggest_reflections(node_id, self.tagger(), gw)?)
    }

    pub fn story(&self, gw: &Gateway) -> Result<(DataStory, StoryOrigin), SessionError> {
        Ok(compile(&self.tree, &self.timeline, &self.ibis, gw)?)
    }

    pub fn timeline_nodes(&self) -> &[TimelineNode] {
        self.timeline.nodes()
    }
}
