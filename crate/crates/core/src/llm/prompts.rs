//! Prompt templates, stored verbatim as fixture files and rendered here.

use serde::Serialize;
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use super::Task;

pub const DATA_STORY: &str = include_str!("../../prompts/data_story.txt");
pub const REFLECTION: &str = include_str!("../../prompts/reflection.txt");
pub const INTERACTION_CAPTURE: &str = include_str!("../../prompts/interaction_capture.txt");
pub const INSIGHT_TIMELINE: &str = include_str!("../../prompts/insight_timeline.txt");
pub const INQUIRY_LABELS: &str = include_str!("../../prompts/inquiry_labels.txt");
pub const INQUIRY_ISSUES: &str = include_str!("../../prompts/inquiry_issues.txt");
pub const MANIFEST: &str = include_str!("../../prompts/manifest.json");

/// (fixture file name, embedded text) for every stored prompt.
pub const FIXTURES: [(&str, &str); 6] = [
    ("data_story.txt", DATA_STORY),
    ("reflection.txt", REFLECTION),
    ("interaction_capture.txt", INTERACTION_CAPTURE),
    ("insight_timeline.txt", INSIGHT_TIMELINE),
    ("inquiry_labels.txt", INQUIRY_LABELS),
    ("inquiry_issues.txt", INQUIRY_ISSUES),
];

const TIMELINE_DATASETS: &str = "${related_datasets ? `
Categories: ${related_datasets.related_categories?.join(', ') || 'None identified'}
Columns: ${related_datasets.related_columns?.join(', ') || 'None identified'}
` : 'No specific datasets identified for this sentence.'}";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prompt {
    pub task: Task,
    pub system: String,
    pub user: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Expected hash for a fixture, read from the manifest.
pub fn manifest_hash(file: &str) -> Option<String> {
    let m: Json = serde_json::from_str(MANIFEST).ok()?;
    m["sha256"][file].as_str().map(str::to_string)
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_else(|_| "null".into())
}

fn fill(template: &str, pairs: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (placeholder, value) in pairs {
        debug_assert!(out.contains(placeholder), "missing placeholder {placeholder}");
        out = out.replace(placeholder, value);
    }
    out
}

/// Story drafting: the template is the system message, the path goes in the user message.
pub fn data_story<T: Serialize>(exploration_path: &T) -> Prompt {
    Prompt {
        task: Task::StoryCompile,
        system: DATA_STORY.to_string(),
        user: pretty(&serde_json::json!({ "exploration_path": exploration_path })),
    }
}

pub fn interaction_capture<T: Serialize>(input: &T) -> Prompt {
    Prompt { task: Task::Capture, system: INTERACTION_CAPTURE.to_string(), user: pretty(input) }
}

pub struct ReflectionInput<'a> {
    pub related_source: &'a Json,
    pub related_sentences: &'a Json,
    pub node_id: u64,
    pub sentence_id: &'a str,
    pub sentence_content: &'a str,
}

pub fn reflection(input: &ReflectionInput<'_>) -> Prompt {
    let text = fill(
        REFLECTION,
        &[
            ("${JSON.stringify(firstStepData.related_source, null, 2)}", pretty(input.related_source)),
            ("${JSON.stringify(relatedSentencesContext, null, 2)}", pretty(input.related_sentences)),
            ("${firstStepData.node_id}", input.node_id.to_string()),
            ("${firstStepData.sentence_id}", input.sentence_id.to_string()),
            ("${firstStepData.sentence_content}", input.sentence_content.to_string()),
        ],
    );
    Prompt { task: Task::Reflections, system: String::new(), user: text }
}

/// `related` is (categories, columns); `None` renders the no-dataset branch.
pub fn insight_timeline<T: Serialize>(related: Option<(&[String], &[String])>, llm_input: &T) -> Prompt {
    let datasets = match related {
        Some((cats, cols)) => {
            let join = |v: &[String]| if v.is_empty() { "None identified".to_string() } else { v.join(", ") };
            format!("\nCategories: {}\nColumns: {}\n", join(cats), join(cols))
        }
        None => "No specific datasets identified for this sentence.".to_string(),
    };
    let text = fill(
        INSIGHT_TIMELINE,
        &[(TIMELINE_DATASETS, datasets), ("${JSON.stringify(llmInput, null, 2)}", pretty(llm_input))],
    );
    Prompt { task: Task::Drift, system: String::new(), user: text }
}

pub fn inquiry_issues<T: Serialize>(sentences: &T) -> Prompt {
    let text = fill(INQUIRY_ISSUES, &[("${JSON.stringify(sentenceList, null, 2)}", pretty(sentences))]);
    Prompt { task: Task::Issues, system: String::new(), user: text }
}

pub fn inquiry_labels<S: Serialize, I: Serialize>(sentences: &S, issues: &I) -> Prompt {
    let text = fill(
        INQUIRY_LABELS,
        &[
            ("${JSON.stringify(sentenceList, null, 2)}", pretty(sentences)),
            ("${JSON.stringify(issueList, null, 2)}", pretty(issues)),
        ],
    );
    Prompt { task: Task::IssueLabels, system: String::new(), user: text }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_match_manifest() {
        for (file, text) in FIXTURES {
            assert_eq!(Some(sha256_hex(text.as_bytes())), manifest_hash(file), "{file} drifted");
        }
    }

    #[test]
    fn rendered_prompts_have_no_placeholders_left() {
        let src = serde_json::json!({"related_categories": ["cost"], "related_columns": ["cost_of_stay"]});
        let ctx = serde_json::json!([]);
        let rendered = [
            reflection(&ReflectionInput {
                related_source: &src,
                related_sentences: &ctx,
                node_id: 3,
                sentence_id: "s3",
                sentence_content: "Porto is cheap.",
            }),
            insight_timeline(Some((&["cost".into()], &[])), &serde_json::json!({"x": 1})),
            insight_timeline(None, &serde_json::json!({})),
            inquiry_issues(&serde_json::json!([])),
            inquiry_labels(&serde_json::json!([]), &serde_json::json!([])),
        ];
        for p in rendered {
            assert!(!p.user.contains("${"), "{:?} left a placeholder", p.task);
        }
    }

    #[test]
    fn timeline_dataset_block() {
        let p = insight_timeline(Some((&["cost".into(), "safety".into()], &[])), &serde_json::json!({}));
        assert!(p.user.contains("\nCategories: cost, safety\nColumns: None identified\n"));
        let p = insight_timeline(None, &serde_json::json!({}));
        assert!(p.user.contains("No specific datasets identified for this sentence."));
    }

    #[test]
    fn reflection_uses_two_space_json() {
        let src = serde_json::json!({"related_categories": ["cost"]});
        let p = reflection(&ReflectionInput {
            related_source: &src,
            related_sentences: &serde_json::json!([]),
            node_id: 7,
            sentence_id: "s2",
            sentence_content: "x",
        });
        assert!(p.user.contains("{\n  \"related_categories\": [\n    \"cost\"\n  ]\n}"));
        assert!(p.user.contains("\"node_id\": 7,"));
    }
}
