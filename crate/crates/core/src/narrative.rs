//! Branching narrative tree.
//!
//! One cursor per tree defines the active path (root to cursor). Creating a
//! branch moves the cursor to the fork point; the next append then grows a new
//! child there, so the new branch inherits exactly the prefix up to the fork.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentenceId(pub String);

impl SentenceId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

// Shorter ids first so "s2" < "s10".
impl Ord for SentenceId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for SentenceId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SentenceId {
    fn from(s: &str) -> Self {
        SentenceId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    User,
    Captured,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: SentenceId,
    pub content: String,
    pub author: Author,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub view_ids: BTreeSet<String>,
    #[serde(default)]
    pub timeline_node_id: Option<u64>,
    #[serde(default)]
    pub revision: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("sentence content must not be empty")]
    EmptyContent,
    #[error("unknown sentence `{0}`")]
    UnknownSentence(SentenceId),
    #[error("sentence `{0}` is not on the active path")]
    AnchorOffActivePath(SentenceId),
    #[error("deleting root `{0}` would leave several roots")]
    WouldOrphanForest(SentenceId),
    #[error("`{0}` heads the only remaining path")]
    LastPath(SentenceId),
    #[error("the narrative is empty")]
    EmptyTree,
    #[error("inconsistent snapshot: {0}")]
    InvalidSnapshot(String),
}

/// Structural changes, drained by the session to drive provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeEvent {
    Appended { id: SentenceId },
    Inserted { id: SentenceId, anchor: SentenceId },
    Updated { id: SentenceId, revision: u32, previous_content: String },
    Deleted { tombstone: Sentence },
    BranchCreated { from: SentenceId },
    BranchDeleted { head: SentenceId, removed: Vec<SentenceId> },
    CursorMoved { to: SentenceId },
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    sentence: Sentence,
    parent: Option<SentenceId>,
    children: Vec<SentenceId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NarrativeTree {
    nodes: BTreeMap<SentenceId, Node>,
    root: Option<SentenceId>,
    cursor: Option<SentenceId>,
    next_id: u64,
    tombstones: BTreeMap<SentenceId, Sentence>,
    events: Vec<TreeEvent>,
}

fn clean(content: &str) -> Result<String, TreeError> {
    let t = content.trim();
    if t.is_empty() {
        Err(TreeError::EmptyContent)
    } else {
        Ok(t.to_string())
    }
}

impl NarrativeTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_id(&self) -> Option<&SentenceId> {
        self.root.as_ref()
    }

    pub fn cursor_id(&self) -> Option<&SentenceId> {
        self.cursor.as_ref()
    }

    pub fn get(&self, id: &SentenceId) -> Option<&Sentence> {
        self.nodes.get(id).map(|n| &n.sentence)
    }

    /// Live sentence, or its tombstone if it was deleted.
    pub fn get_or_tombstone(&self, id: &SentenceId) -> Option<&Sentence> {
        self.get(id).or_else(|| self.tombstones.get(id))
    }

    pub fn contains(&self, id: &SentenceId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn is_known(&self, id: &SentenceId) -> bool {
        self.contains(id) || self.tombstones.contains_key(id)
    }

    pub fn tombstones(&self) -> impl Iterator<Item = &Sentence> {
        self.tombstones.values()
    }

    pub fn parent_of(&self, id: &SentenceId) -> Option<&SentenceId> {
        self.nodes.get(id).and_then(|n| n.parent.as_ref())
    }

    pub fn children_of(&self, id: &SentenceId) -> &[SentenceId] {
        self.nodes.get(id).map(|n| n.children.as_slice()).unwrap_or(&[])
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.nodes.values().map(|n| &n.sentence)
    }

    pub fn take_events(&mut self) -> Vec<TreeEvent> {
        std::mem::take(&mut self.events)
    }

    fn node(&self, id: &SentenceId) -> Result<&Node, TreeError> {
        self.nodes.get(id).ok_or_else(|| TreeError::UnknownSentence(id.clone()))
    }

    fn node_mut(&mut self, id: &SentenceId) -> Result<&mut Node, TreeError> {
        self.nodes.get_mut(id).ok_or_else(|| TreeError::UnknownSentence(id.clone()))
    }

    fn fresh(&mut self, content: String, author: Author, at: DateTime<Utc>) -> Sentence {
        self.next_id += 1;
        Sentence {
            sentence_id: SentenceId(format!("s{}", self.next_id)),
            content,
            author,
            created_at: at,
            view_ids: BTreeSet::new(),
            timeline_node_id: None,
            revision: 0,
        }
    }

    pub fn append(&mut self, content: &str) -> Result<Sentence, TreeError> {
        self.append_at(content, Author::User, Utc::now())
    }

    pub fn append_at(&mut self, content: &str, author: Author, at: DateTime<Utc>) -> Result<Sentence, TreeError> {
        let content = clean(content)?;
        let sentence = self.fresh(content, author, at);
        let id = sentence.sentence_id.clone();
        let parent = self.cursor.clone();
        match &parent {
            Some(p) => self.node_mut(p)?.children.push(id.clone()),
            None => self.root = Some(id.clone()),
        }
        self.nodes.insert(id.clone(), Node { sentence: sentence.clone(), parent, children: Vec::new() });
        self.cursor = Some(id.clone());
        self.events.push(TreeEvent::Appended { id });
        Ok(sentence)
    }

    pub fn insert_after(&mut self, anchor: &SentenceId, content: &str) -> Result<Sentence, TreeError> {
        self.insert_after_at(anchor, content, Author::User, Utc::now())
    }

    pub fn insert_after_at(
        &mut self,
        anchor: &SentenceId,
        content: &str,
        author: Author,
        at: DateTime<Utc>,
    ) -> Result<Sentence, TreeError> {
        self.node(anchor)?;
        let path = self.active_path_ids();
        let pos = path
            .iter()
            .position(|p| p == anchor)
            .ok_or_else(|| TreeError::AnchorOffActivePath(anchor.clone()))?;
        let content = clean(&content)?;
        if pos + 1 == path.len() {
            // anchor is the cursor: plain append
            let s = self.append_at(&content, author, at)?;
            if let Some(TreeEvent::Appended { id }) = self.events.pop() {
                self.events.push(TreeEvent::Inserted { id, anchor: anchor.clone() });
            }
            return Ok(s);
        }
        let next = path[pos + 1].clone();
        let sentence = self.fresh(content, author, at);
        let id = sentence.sentence_id.clone();
        let anchor_node = self.node_mut(anchor)?;
        let slot = anchor_node.children.iter().position(|c| *c == next).expect("path child");
        anchor_node.children[slot] = id.clone();
        self.node_mut(&next)?.parent = Some(id.clone());
        self.nodes.insert(
            id.clone(),
            Node { sentence: sentence.clone(), parent: Some(anchor.clone()), children: vec![next] },
        );
        self.events.push(TreeEvent::Inserted { id, anchor: anchor.clone() });
        Ok(sentence)
    }

    pub fn update(&mut self, id: &SentenceId, content: &str) -> Result<Sentence, TreeError> {
        let content = clean(content)?;
        let node = self.node_mut(id)?;
        let previous_content = std::mem::replace(&mut node.sentence.content, content);
        node.sentence.revision += 1;
        let s = node.sentence.clone();
        self.events.push(TreeEvent::Updated { id: id.clone(), revision: s.revision, previous_content });
        Ok(s)
    }

    pub fn delete_sentence(&mut self, id: &SentenceId) -> Result<(), TreeError> {
        let node = self.node(id)?.clone();
        match &node.parent {
            None => {
                if node.children.len() >= 2 {
                    return Err(TreeError::WouldOrphanForest(id.clone()));
                }
                self.root = node.children.first().cloned();
                if let Some(child) = self.root.clone() {
                    self.node_mut(&child)?.parent = None;
                }
                if self.cursor.as_ref() == Some(id) {
                    self.cursor = self.root.clone();
                }
            }
            Some(parent) => {
                let p = self.node_mut(parent)?;
                let slot = p.children.iter().position(|c| c == id).expect("child of parent");
                p.children.splice(slot..=slot, node.children.iter().cloned());
                for c in &node.children {
                    self.node_mut(c)?.parent = Some(parent.clone());
                }
                if self.cursor.as_ref() == Some(id) {
                    self.cursor = Some(parent.clone());
                }
            }
        }
        self.nodes.remove(id);
        self.tombstones.insert(id.clone(), node.sentence.clone());
        self.events.push(TreeEvent::Deleted { tombstone: node.sentence });
        Ok(())
    }

    /// Moves the cursor to `from`; the next append forks a new child there.
    pub fn create_branch(&mut self, from: &SentenceId) -> Result<Sentence, TreeError> {
        let s = self.node(from)?.sentence.clone();
        self.cursor = Some(from.clone());
        self.events.push(TreeEvent::BranchCreated { from: from.clone() });
        Ok(s)
    }

    pub fn delete_branch(&mut self, fork_child: &SentenceId) -> Result<(), TreeError> {
        let node = self.node(fork_child)?.clone();
        let parent = match &node.parent {
            Some(p) if self.node(p)?.children.len() >= 2 => p.clone(),
            _ => return Err(TreeError::LastPath(fork_child.clone())),
        };
        let removed = self.subtree(fork_child);
        let siblings = self.node(&parent)?.children.clone();
        let slot = siblings.iter().position(|c| c == fork_child).expect("child of parent");
        let survivor = if slot > 0 { siblings[slot - 1].clone() } else { siblings[slot + 1].clone() };

        let cursor_inside = self.cursor.as_ref().is_some_and(|c| removed.contains(c));
        self.node_mut(&parent)?.children.remove(slot);
        for r in &removed {
            if let Some(n) = self.nodes.remove(r) {
                self.tombstones.insert(r.clone(), n.sentence);
            }
        }
        if cursor_inside {
            let mut leaf = survivor;
            while let Some(first) = self.children_of(&leaf).first() {
                leaf = first.clone();
            }
            self.cursor = Some(leaf);
        }
        self.events.push(TreeEvent::BranchDeleted { head: fork_child.clone(), removed });
        Ok(())
    }

    /// Explicit branch switch.
    pub fn set_cursor(&mut self, id: &SentenceId) -> Result<(), TreeError> {
        self.node(id)?;
        self.cursor = Some(id.clone());
        self.events.push(TreeEvent::CursorMoved { to: id.clone() });
        Ok(())
    }

    pub fn link_view(&mut self, id: &SentenceId, view_id: &str) -> Result<(), TreeError> {
        self.node_mut(id)?.sentence.view_ids.insert(view_id.to_string());
        Ok(())
    }

    pub fn set_timeline_node(&mut self, id: &SentenceId, node_id: u64) -> Result<(), TreeError> {
        self.node_mut(id)?.sentence.timeline_node_id = Some(node_id);
        Ok(())
    }

    /// Pre-order ids of the subtree rooted at `id`.
    pub fn subtree(&self, id: &SentenceId) -> Vec<SentenceId> {
        let mut out = Vec::new();
        let mut stack = vec![id.clone()];
        while let Some(cur) = stack.pop() {
            if let Some(n) = self.nodes.get(&cur) {
                stack.extend(n.children.iter().rev().cloned());
                out.push(cur);
            }
        }
        out
    }

    /// Depth-first, pre-order walk over every branch.
    pub fn depth_first(&self) -> Vec<&Sentence> {
        match &self.root {
            Some(r) => self.subtree(r).iter().filter_map(|id| self.get(id)).collect(),
            None => Vec::new(),
        }
    }

    pub fn path_to(&self, id: &SentenceId) -> Result<Vec<SentenceId>, TreeError> {
        self.node(id)?;
        let mut path = vec![id.clone()];
        let mut cur = id.clone();
        while let Some(p) = self.parent_of(&cur) {
            path.push(p.clone());
            cur = p.clone();
        }
        path.reverse();
        Ok(path)
    }

    pub fn active_path_ids(&self) -> Vec<SentenceId> {
        match &self.cursor {
            Some(c) => self.path_to(c).unwrap_or_default(),
            None => Vec::new(),
        }
    }

    pub fn active_path(&self) -> Result<Vec<&Sentence>, TreeError> {
        if self.is_empty() {
            return Err(TreeError::EmptyTree);
        }
        Ok(self.active_path_ids().iter().filter_map(|id| self.get(id)).collect())
    }

    pub fn to_linear_text(&self) -> Result<String, TreeError> {
        Ok(self
            .active_path()?
            .iter()
            .map(|s| s.content.as_str())
            .collect::<Vec<_>>()
            .join(" "))
    }

    pub fn leaves(&self) -> Vec<SentenceId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.children.is_empty())
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Checks structural invariants; used by property tests and snapshot loading.
    pub fn check(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::InvalidSnapshot(m));
        if self.nodes.is_empty() {
            if self.root.is_some() || self.cursor.is_some() {
                return bad("empty tree with root or cursor".into());
            }
            return Ok(());
        }
        let Some(root) = &self.root else { return bad("missing root".into()) };
        let roots: Vec<_> = self.nodes.iter().filter(|(_, n)| n.parent.is_none()).collect();
        if roots.len() != 1 || roots[0].0 != root {
            return bad(format!("expected single root {root}, found {}", roots.len()));
        }
        for (id, n) in &self.nodes {
            if n.sentence.sentence_id != *id {
                return bad(format!("node key {id} differs from sentence id"));
            }
            if let Some(p) = &n.parent {
                match self.nodes.get(p) {
                    Some(pn) if pn.children.iter().filter(|c| *c == id).count() == 1 => {}
                    _ => return bad(format!("{id} not listed once under parent {p}")),
                }
            }
            for c in &n.children {
                match self.nodes.get(c) {
                    Some(cn) if cn.parent.as_ref() == Some(id) => {}
                    _ => return bad(format!("child {c} of {id} does not point back")),
                }
            }
        }
        if self.subtree(root).len() != self.nodes.len() {
            return bad("unreachable nodes or cycle".into());
        }
        match &self.cursor {
            Some(c) if self.nodes.contains_key(c) => Ok(()),
            _ => bad("cursor not in tree".into()),
        }
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        let nodes = self
            .nodes
            .values()
            .map(|n| SnapshotNode {
                sentence_id: n.sentence.sentence_id.clone(),
                parent_id: n.parent.clone(),
                child_ids: n.children.clone(),
                content: n.sentence.content.clone(),
                author: n.sentence.author,
                view_ids: n.sentence.view_ids.clone(),
                timeline_node_id: n.sentence.timeline_node_id,
                created_at: n.sentence.created_at,
                revision: n.sentence.revision,
            })
            .collect();
        TreeSnapshot {
            nodes,
            root_id: self.root.clone(),
            cursor_id: self.cursor.clone(),
            next_id: self.next_id,
            tombstones: self.tombstones.values().cloned().collect(),
        }
    }

    pub fn from_snapshot(snap: TreeSnapshot) -> Result<Self, TreeError> {
        let mut tree = NarrativeTree {
            root: snap.root_id,
            cursor: snap.cursor_id,
            next_id: snap.next_id,
            ..Default::default()
        };
        for n in snap.nodes {
            let sentence = Sentence {
                sentence_id: n.sentence_id.clone(),
                content: n.content,
                author: n.author,
                created_at: n.created_at,
                view_ids: n.view_ids,
                timeline_node_id: n.timeline_node_id,
                revision: n.revision,
            };
            tree.nodes.insert(n.sentence_id, Node { sentence, parent: n.parent_id, children: n.child_ids });
        }
        for t in snap.tombstones {
            tree.tombstones.insert(t.sentence_id.clone(), t);
        }
        tree.check()?;
        Ok(tree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub sentence_id: SentenceId,
    pub parent_id: Option<SentenceId>,
    pub child_ids: Vec<SentenceId>,
    pub content: String,
    pub author: Author,
    pub view_ids: BTreeSet<String>,
    pub timeline_node_id: Option<u64>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub revision: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub nodes: Vec<SnapshotNode>,
    pub root_id: Option<SentenceId>,
    pub cursor_id: Option<SentenceId>,
    #[serde(default)]
    pub next_id: u64,
    #[serde(default)]
    pub tombstones: Vec<Sentence>,
}
