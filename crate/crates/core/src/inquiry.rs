//! Inquiry board: issues raised by the narrative, their status, and an IBIS
//! graph of positions, arguments and issue links.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::llm::{prompts, Gateway, LlmError};
use crate::tags::{tokens, TagNormalizer};

pub const ISSUE_CUES: &[&str] = &["whether", "should check", "need to find", "it seems"];
const SUPERLATIVES: &[&str] = &["highest", "lowest", "most", "least", "best", "worst", "largest", "smallest", "cheapest"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Open,
    Resolved,
    Stalled,
}

impl std::str::FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Status::Open),
            "resolved" => Ok(Status::Resolved),
            "stalled" => Ok(Status::Stalled),
            _ => Err(format!("unknown status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub qid: String,
    pub title: String,
    pub status: Status,
    #[serde(rename = "sentenceRefs")]
    pub sentence_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Data,
    Mechanism,
    Pattern,
    Comparison,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkType {
    SuggestedBy,
    GeneralizedFrom,
    SpecializedFrom,
    Replaces,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub text: String,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Argument {
    pub text: String,
    pub basis: Basis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueLink {
    pub qid: String,
    #[serde(rename = "type")]
    pub link_type: LinkType,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueEnrichment {
    pub qid: String,
    pub position_suggested_by: Option<Position>,
    pub argument_suggested_by: Option<Argument>,
    #[serde(default)]
    pub links: Vec<IssueLink>,
}

impl IssueEnrichment {
    pub fn empty(qid: &str) -> Self {
        IssueEnrichment { qid: qid.to_string(), position_suggested_by: None, argument_suggested_by: None, links: Vec::new() }
    }
}

/// A sentence as the inquiry prompts see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeItem {
    pub sentence_id: String,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InquiryOrigin {
    Model,
    Rules,
    Rejected,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IbisGraph {
    pub issues: BTreeMap<String, Issue>,
    pub enrichments: BTreeMap<String, IssueEnrichment>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Board {
    pub open: Vec<Issue>,
    pub resolved: Vec<Issue>,
    pub stalled: Vec<Issue>,
}

impl Board {
    pub fn total(&self) -> usize {
        self.open.len() + self.resolved.len() + self.stalled.len()
    }
}

fn content_tags(tagger: &TagNormalizer, text: &str) -> BTreeSet<String> {
    let t = tagger.normalize(text);
    let mut keys = t.keys();
    keys.retain(|k| !k.starts_with("intent:"));
    keys
}

fn is_issue(content: &str) -> bool {
    let lower = content.to_lowercase();
    content.trim_end().ends_with('?') || ISSUE_CUES.iter().any(|c| lower.contains(c))
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

/// Question form of an issue sentence.
pub fn issue_title(content: &str) -> String {
    let trimmed = content.trim();
    if trimmed.ends_with('?') {
        return trimmed.to_string();
    }
    let lower = trimmed.to_lowercase();
    let rest = |cue: &str| -> Option<String> {
        let at = lower.find(cue)? + cue.len();
        let tail = trimmed[at..].trim().trim_end_matches(['.', '!', ';', ',']).trim();
        (!tail.is_empty()).then(|| tail.to_string())
    };
    if let Some(t) = rest("whether") {
        return format!("Whether {t}?");
    }
    if let Some(t) = rest("it seems") {
        let t = t.strip_prefix("that ").unwrap_or(&t).to_string();
        return format!("Is it true that {t}?");
    }
    for cue in ["need to find out", "need to find", "should check"] {
        if let Some(t) = rest(cue) {
            return format!("{}?", capitalize(&t));
        }
    }
    format!("{}?", trimmed.trim_end_matches(['.', '!']))
}

fn resolves(tagger: &TagNormalizer, issue_tags: &BTreeSet<String>, later: &str) -> bool {
    let shared = content_tags(tagger, later).intersection(issue_tags).count();
    let words = tokens(later);
    shared >= 2 && (later.chars().any(|c| c.is_ascii_digit()) || words.iter().any(|w| SUPERLATIVES.contains(&w.as_str())))
}

/// Rule-based issues over an ordered active path.
pub fn rule_issues(sentences: &[NarrativeItem], tagger: &TagNormalizer) -> Vec<Issue> {
    let n = sentences.len();
    let tags: Vec<BTreeSet<String>> = sentences.iter().map(|s| content_tags(tagger, &s.content)).collect();
    let mut out = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        if !is_issue(&s.content) {
            continue;
        }
        let later = &sentences[i + 1..];
        let status = if later.iter().any(|l| resolves(tagger, &tags[i], &l.content)) {
            Status::Resolved
        } else if i + 3 < n && (i + 1..n).all(|j| tags[j].is_disjoint(&tags[i])) {
            Status::Stalled
        } else {
            Status::Open
        };
        out.push(Issue {
            qid: format!("iss_{}", s.sentence_id),
            title: issue_title(&s.content),
            status,
            sentence_refs: vec![s.sentence_id.clone()],
        });
    }
    out
}

fn check_issues(v: &Json, known: &BTreeSet<&str>) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for item in v.as_array().into_iter().flatten() {
        let qid = item["qid"].as_str().unwrap_or("");
        if !seen.insert(qid.to_string()) {
            return Err(format!("duplicate qid {qid}"));
        }
        for r in item["sentenceRefs"].as_array().into_iter().flatten() {
            let r = r.as_str().unwrap_or("");
            if !known.contains(r) {
                return Err(format!("sentenceRefs names unknown sentence {r}"));
            }
        }
    }
    Ok(())
}

/// Model extraction; the rule set when no model is reachable, nothing when
/// the model keeps answering out of contract.
pub fn extract_issues(sentences: &[NarrativeItem], tagger: &TagNormalizer, gateway: &Gateway) -> (Vec<Issue>, InquiryOrigin) {
    if sentences.is_empty() {
        return (Vec::new(), InquiryOrigin::Rules);
    }
    let known: BTreeSet<&str> = sentences.iter().map(|s| s.sentence_id.as_str()).collect();
    let prompt = prompts::inquiry_issues(&sentences);
    match gateway.chat_checked(&prompt, |v| check_issues(v, &known)) {
        Ok(ex) => match serde_json::from_value(ex.parsed) {
            Ok(issues) => (issues, InquiryOrigin::Model),
            Err(_) => (Vec::new(), InquiryOrigin::Rejected),
        },
        Err(LlmError::ProviderUnavailable(_)) => (rule_issues(sentences, tagger), InquiryOrigin::Rules),
        Err(_) => (Vec::new(), InquiryOrigin::Rejected),
    }
}

/// Rule enrichment: resolved issues take their resolving sentence as the
/// position; a later issue over a strict superset of an earlier issue's tags
/// is specialized from it, a strict subset generalized from it.
pub fn rule_enrichments(issues: &[Issue], sentences: &[NarrativeItem], tagger: &TagNormalizer) -> Vec<IssueEnrichment> {
    let index: BTreeMap<&str, usize> = sentences.iter().enumerate().map(|(i, s)| (s.sentence_id.as_str(), i)).collect();
    let issue_tags: Vec<BTreeSet<String>> = issues
        .iter()
        .map(|iss| {
            iss.sentence_refs
                .iter()
                .filter_map(|r| index.get(r.as_str()))
                .flat_map(|&i| content_tags(tagger, &sentences[i].content))
                .collect()
        })
        .collect();
    issues
        .iter()
        .enumerate()
        .map(|(k, iss)| {
            let mut e = IssueEnrichment::empty(&iss.qid);
            let last = iss.sentence_refs.iter().filter_map(|r| index.get(r.as_str())).max();
            if let (Status::Resolved, Some(&at)) = (iss.status, last) {
                if let Some(s) = sentences[at + 1..].iter().find(|s| resolves(tagger, &issue_tags[k], &s.content)) {
                    e.position_suggested_by = Some(Position { text: s.content.clone(), confidence: Confidence::High });
                    if s.content.chars().any(|c| c.is_ascii_digit()) {
                        e.argument_suggested_by = Some(Argument { text: s.content.clone(), basis: Basis::Data });
                    }
                }
            }
            for (j, earlier) in issues[..k].iter().enumerate() {
                let (a, b) = (&issue_tags[k], &issue_tags[j]);
                let link = if !b.is_empty() && b.is_subset(a) && a.len() > b.len() {
                    Some((LinkType::SpecializedFrom, "narrows the earlier question"))
                } else if !a.is_empty() && a.is_subset(b) && b.len() > a.len() {
                    Some((LinkType::GeneralizedFrom, "broadens the earlier question"))
                } else {
                    None
                };
                if let Some((link_type, why)) = link {
                    e.links.push(IssueLink { qid: earlier.qid.clone(), link_type, explanation: why.into() });
                }
            }
            e
        })
        .collect()
}

fn check_enrichments(v: &Json, qids: &BTreeSet<&str>) -> Result<(), String> {
    for item in v.as_array().into_iter().flatten() {
        let qid = item["qid"].as_str().unwrap_or("");
        if !qids.contains(qid) {
            return Err(format!("enrichment for unknown qid {qid}"));
        }
        for l in item["links"].as_array().into_iter().flatten() {
            let target = l["qid"].as_str().unwrap_or("");
            if target == qid {
                return Err(format!("{qid} links to itself"));
            }
            if !qids.contains(target) {
                return Err(format!("link to unknown qid {target}"));
            }
        }
    }
    Ok(())
}

pub fn enrich(
    issues: &[Issue],
    sentences: &[NarrativeItem],
    tagger: &TagNormalizer,
    gateway: &Gateway,
) -> (Vec<IssueEnrichment>, InquiryOrigin) {
    if issues.is_empty() {
        return (Vec::new(), InquiryOrigin::Rules);
    }
    let qids: BTreeSet<&str> = issues.iter().map(|i| i.qid.as_str()).collect();
    let all_null = || issues.iter().map(|i| IssueEnrichment::empty(&i.qid)).collect();
    let prompt = prompts::inquiry_labels(&sentences, &issues);
    match gateway.chat_checked(&prompt, |v| check_enrichments(v, &qids)) {
        Ok(ex) => match serde_json::from_value::<Vec<IssueEnrichment>>(ex.parsed) {
            Ok(found) => {
                let mut by_qid: BTreeMap<String, IssueEnrichment> =
                    found.into_iter().map(|e| (e.qid.clone(), e)).collect();
                let full = issues
                    .iter()
                    .map(|i| by_qid.remove(&i.qid).unwrap_or_else(|| IssueEnrichment::empty(&i.qid)))
                    .collect();
                (full, InquiryOrigin::Model)
            }
            Err(_) => (all_null(), InquiryOrigin::Rejected),
        },
        Err(LlmError::ProviderUnavailable(_)) => (rule_enrichments(issues, sentences, tagger), InquiryOrigin::Rules),
        Err(_) => (all_null(), InquiryOrigin::Rejected),
    }
}

impl IbisGraph {
    pub fn build(issues: Vec<Issue>, enrichments: Vec<IssueEnrichment>) -> Self {
        let issues: BTreeMap<String, Issue> = issues.into_iter().map(|i| (i.qid.clone(), i)).collect();
        let enrichments = enrichments
            .into_iter()
            .filter(|e| issues.contains_key(&e.qid))
            .map(|mut e| {
                let own = e.qid.clone();
                e.links.retain(|l| l.qid != own && issues.contains_key(&l.qid));
                (own, e)
            })
            .collect();
        IbisGraph { issues, enrichments }
    }

    /// Issues grouped by status, in sentence order; `filter` keeps one group.
    pub fn board(&self, filter: Option<Status>) -> Board {
        let mut b = Board::default();
        for i in self.issues.values() {
            if filter.is_some_and(|f| f != i.status) {
                continue;
            }
            match i.status {
                Status::Open => b.open.push(i.clone()),
                Status::Resolved => b.resolved.push(i.clone()),
                Status::Stalled => b.stalled.push(i.clone()),
            }
        }
        b
    }

    pub fn is_consistent(&self) -> bool {
        self.enrichments.keys().all(|k| self.issues.contains_key(k))
            && self
                .enrichments
                .values()
                .all(|e| e.links.iter().all(|l| l.qid != e.qid && self.issues.contains_key(&l.qid)))
    }

    /// Export with the prompt contracts' field names.
    pub fn export(&self) -> Json {
        let items: Vec<Json> = self
            .issues
            .values()
            .map(|i| {
                let mut v = serde_json::to_value(i).unwrap();
                let e = self.enrichments.get(&i.qid).cloned().unwrap_or_else(|| IssueEnrichment::empty(&i.qid));
                v["position_suggested_by"] = serde_json::to_value(&e.position_suggested_by).unwrap();
                v["argument_suggested_by"] = serde_json::to_value(&e.argument_suggested_by).unwrap();
                v["links"] = serde_json::to_value(&e.links).unwrap();
                v
            })
            .collect();
        Json::Array(items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{tag_vocabulary, Catalog};
    use crate::llm::{StubProvider, Task};

    fn tagger() -> TagNormalizer {
        let mut c = Catalog::new();
        c.ingest_table(
            b"borough,year,crime_rate,income\nCamden,2019,10.5,30\nCamden,2020,12.3,31\nHackney,2019,9.1,28\nHackney,2020,8.7,29\n",
            "crime",
        )
        .unwrap();
        TagNormalizer::new(&tag_vocabulary(c.table("crime").unwrap()))
    }

    fn items(texts: &[&str]) -> Vec<NarrativeItem> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| NarrativeItem { sentence_id: format!("s{}", i + 1), content: t.to_string() })
            .collect()
    }

    #[test]
    fn no_questions_no_issues() {
        let (issues, _) = extract_issues(&items(&["Camden is busy.", "Hackney is quiet."]), &tagger(), &Gateway::offline());
        assert!(issues.is_empty());
    }

    #[test]
    fn question_then_numeric_answer_resolves() {
        let s = items(&[
            "Is crime_rate in Camden rising?",
            "Camden crime_rate reached 12.3 in 2020.",
            "Hackney has lower income.",
        ]);
        let (issues, origin) = extract_issues(&s, &tagger(), &Gateway::offline());
        assert_eq!(origin, InquiryOrigin::Rules);
        assert_eq!(issues.len(), 1);
        assert!(issues[0].qid.starts_with("iss_"));
        assert_eq!(issues[0].status, Status::Resolved);
    }

    #[test]
    fn abandoned_question_stalls() {
        let s = items(&[
            "I should check whether income in Hackney grew.",
            "Camden is central.",
            "Crime is a concern in Camden.",
            "Camden crime_rate is 12.3.",
            "Camden crime_rate fell in 2019.",
        ]);
        let (issues, _) = extract_issues(&s, &tagger(), &Gateway::offline());
        assert_eq!(issues[0].status, Status::Stalled);
        assert_eq!(issues[0].title, "Whether income in Hackney grew?");
        // recent questions stay open
        let (issues, _) = extract_issues(&s[..2], &tagger(), &Gateway::offline());
        assert_eq!(issues[0].status, Status::Open);
    }

    #[test]
    fn narrower_question_is_specialized() {
        let s = items(&["How does crime_rate vary?", "How does crime_rate vary in Camden in 2020?"]);
        let t = tagger();
        let issues = rule_issues(&s, &t);
        let e = rule_enrichments(&issues, &s, &t);
        assert!(e[0].links.is_empty());
        assert_eq!(e[1].links[0].link_type, LinkType::SpecializedFrom);
        assert_eq!(e[1].links[0].qid, "iss_s1");
    }

    #[test]
    fn malformed_model_output_gives_empty_list() {
        let stub = StubProvider::new();
        stub.register(Task::Issues, r#"[{"qid":"q1","title":"x","status":"maybe","sentenceRefs":[]}]"#);
        let (issues, origin) = extract_issues(&items(&["Is it?"]), &tagger(), &Gateway::stub(stub));
        assert!(issues.is_empty());
        assert_eq!(origin, InquiryOrigin::Rejected);
    }

    #[test]
    fn unknown_qid_enrichment_rejected() {
        let s = items(&["Is it?"]);
        let t = tagger();
        let issues = rule_issues(&s, &t);
        let stub = StubProvider::new();
        stub.register(Task::IssueLabels, r#"[{"qid":"iss_zz","position_suggested_by":null,"argument_suggested_by":null,"links":[]}]"#);
        let (e, origin) = enrich(&issues, &s, &t, &Gateway::stub(stub));
        assert_eq!(origin, InquiryOrigin::Rejected);
        assert_eq!(e, vec![IssueEnrichment::empty("iss_s1")]);
    }

    #[test]
    fn board_partitions() {
        let s = items(&[
            "Is crime_rate in Camden rising?",
            "Camden crime_rate reached 12.3 in 2020.",
            "Whether income matters?",
        ]);
        let t = tagger();
        let issues = rule_issues(&s, &t);
        let g = IbisGraph::build(issues.clone(), rule_enrichments(&issues, &s, &t));
        assert!(g.is_consistent());
        let b = g.board(None);
        assert_eq!(b.total(), issues.len());
        assert!(g.board(Some(Status::Open)).resolved.is_empty());
        let export = g.export();
        assert!(export[0].get("sentenceRefs").is_some());
        assert!(export[0].get("position_suggested_by").is_some());
    }
}
