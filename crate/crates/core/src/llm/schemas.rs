//! Output schemas for every prompt-backed task.

use std::sync::OnceLock;

use jsonschema::Validator;
use serde_json::{json, Value as Json};

use super::Task;

fn nullable(schema: Json) -> Json {
    json!({ "anyOf": [ { "type": "null" }, schema ] })
}

fn string_list() -> Json {
    json!({ "type": "array", "items": { "type": "string" } })
}

fn story() -> Json {
    json!({
        "type": "array",
        "items": {
            "type": "object",
            "required": ["data_story_sentence", "ref_id"],
            "additionalProperties": false,
            "properties": {
                "data_story_sentence": { "type": "string" },
                "ref_id": {
                    "anyOf": [
                        { "type": "string" },
                        { "type": "array", "items": { "type": "string" }, "minItems": 1 }
                    ]
                }
            }
        }
    })
}

fn capture() -> Json {
    json!({
        "type": "object",
        "required": ["narrative_suggestion", "source_elementId", "source_view_title", "explanation"],
        "properties": {
            "narrative_suggestion": nullable(json!({ "type": "string" })),
            "source_elementId": nullable(json!({ "type": "string" })),
            "source_view_title": nullable(json!({ "type": "string" })),
            "explanation": nullable(json!({ "type": "string" }))
        }
    })
}

fn timeline_node() -> Json {
    json!({
        "type": "object",
        "required": ["node_id", "sentence_id", "changed_from_previous", "related_source", "related_sentence"],
        "properties": {
            "node_id": { "type": "integer", "minimum": 0 },
            "sentence_id": { "type": "string" },
            "sentence_content": { "type": "string" },
            "changed_from_previous": nullable(json!({
                "type": "object",
                "required": ["drift_types", "severity"],
                "properties": {
                    "drift_types": {
                        "type": "array",
                        "minItems": 1,
                        "items": { "enum": ["provide_overview", "adjust", "detect_pattern", "match_mental_model"] }
                    },
                    "severity": { "enum": ["none", "minor", "moderate", "critical"] },
                    "dimensions": { "type": "object", "additionalProperties": { "type": "string" } }
                }
            })),
            "related_source": {
                "type": "object",
                "required": ["related_categories", "related_columns"],
                "properties": {
                    "related_categories": string_list(),
                    "related_columns": string_list()
                }
            },
            "related_sentence": nullable(json!({
                "type": "object",
                "required": ["node_id", "reason"],
                "properties": {
                    "node_id": { "type": "integer", "minimum": 0 },
                    "reason": { "type": "string" }
                }
            }))
        }
    })
}

/// The template shows a one-element array while its prose asks for an object; accept both.
fn timeline() -> Json {
    json!({
        "anyOf": [
            timeline_node(),
            { "type": "array", "minItems": 1, "maxItems": 1, "items": timeline_node() }
        ]
    })
}

fn reflection() -> Json {
    json!({
        "type": "object",
        "required": ["reflect"],
        "properties": {
            "node_id": { "type": "integer" },
            "sentence_id": { "type": "string" },
            "sentence_content": { "type": "string" },
            "reflect": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["prompt", "reason"],
                    "properties": {
                        "prompt": { "type": "string", "minLength": 1 },
                        "reason": { "type": "string" },
                        "related_sentence": nullable(json!({
                            "type": "object",
                            "required": ["node_id"],
                            "properties": {
                                "node_id": { "type": "integer" },
                                "sentence_content": { "type": "string" }
                            }
                        }))
                    }
                }
            }
        }
    })
}

fn issues() -> Json {
    json!({
        "type": "array",
        "items": {
            "type": "object",
            "required": ["qid", "title", "status", "sentenceRefs"],
            "properties": {
                "qid": { "type": "string", "pattern": "^iss_" },
                "title": { "type": "string", "minLength": 1 },
                "status": { "enum": ["open", "resolved", "stalled"] },
                "sentenceRefs": { "type": "array", "minItems": 1, "items": { "type": "string" } }
            }
        }
    })
}

fn labels() -> Json {
    json!({
        "type": "array",
        "items": {
            "type": "object",
            "required": ["qid", "position_suggested_by", "argument_suggested_by", "links"],
            "properties": {
                "qid": { "type": "string" },
                "position_suggested_by": nullable(json!({
                    "type": "object",
                    "required": ["text", "confidence"],
                    "properties": {
                        "text": { "type": "string" },
                        "confidence": { "enum": ["low", "medium", "high"] }
                    }
                })),
                "argument_suggested_by": nullable(json!({
                    "type": "object",
                    "required": ["text", "basis"],
                    "properties": {
                        "text": { "type": "string" },
                        "basis": { "enum": ["data", "mechanism", "pattern", "comparison", "other"] }
                    }
                })),
                "links": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["qid", "type"],
                        "properties": {
                            "qid": { "type": "string" },
                            "type": { "enum": ["suggested_by", "generalized_from", "specialized_from", "replaces"] },
                            "explanation": { "type": "string" }
                        }
                    }
                }
            }
        }
    })
}

fn caption() -> Json {
    json!({
        "type": "object",
        "required": ["caption"],
        "properties": { "caption": { "type": "string", "minLength": 1 } }
    })
}

fn tags() -> Json {
    json!({
        "type": "object",
        "properties": {
            "geo": string_list(),
            "topic": string_list(),
            "time": string_list(),
            "intent": string_list()
        }
    })
}

pub fn schema_json(task: Task) -> Json {
    match task {
        Task::StoryCompile => story(),
        Task::Capture => capture(),
        Task::Drift => timeline(),
        Task::Reflections => reflection(),
        Task::Issues => issues(),
        Task::IssueLabels => labels(),
        Task::ViewCaption => caption(),
        Task::Tags => tags(),
    }
}

pub fn validator(task: Task) -> &'static Validator {
    static CELLS: [OnceLock<Validator>; Task::COUNT] = [const { OnceLock::new() }; Task::COUNT];
    CELLS[task as usize].get_or_init(|| jsonschema::validator_for(&schema_json(task)).expect("static schema compiles"))
}

/// First validation error message, if any.
pub fn check(task: Task, value: &Json) -> Result<(), String> {
    match validator(task).iter_errors(value).next() {
        None => Ok(()),
        Some(e) => Err(format!("{} at {}", e, e.instance_path())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn story_shape() {
        assert!(check(Task::StoryCompile, &json!([{"data_story_sentence": "x", "ref_id": ["s1"]}])).is_ok());
        assert!(check(Task::StoryCompile, &json!([{"data_story_sentence": "x", "ref_id": []}])).is_err());
        assert!(check(Task::StoryCompile, &json!([{"data_story_sentence": "x", "ref_id": "s1", "extra": 1}])).is_err());
    }

    #[test]
    fn timeline_accepts_object_or_singleton_array() {
        let node = json!({
            "node_id": 1, "sentence_id": "s1", "sentence_content": "x",
            "changed_from_previous": null,
            "related_source": {"related_categories": [], "related_columns": []},
            "related_sentence": null
        });
        assert!(check(Task::Drift, &node).is_ok());
        assert!(check(Task::Drift, &json!([node.clone()])).is_ok());
        let mut bad = node.clone();
        bad["changed_from_previous"] = json!({"drift_types": ["zoom"], "severity": "none"});
        assert!(check(Task::Drift, &bad).is_err());
        bad["changed_from_previous"] = json!({"drift_types": ["adjust"], "severity": "huge"});
        assert!(check(Task::Drift, &bad).is_err());
    }

    #[test]
    fn issue_prefix_enforced() {
        let ok = json!([{"qid": "iss_1", "title": "Why?", "status": "open", "sentenceRefs": ["s1"]}]);
        assert!(check(Task::Issues, &ok).is_ok());
        let bad = json!([{"qid": "q1", "title": "Why?", "status": "open", "sentenceRefs": ["s1"]}]);
        assert!(check(Task::Issues, &bad).is_err());
    }

    #[test]
    fn every_schema_compiles() {
        for t in Task::ALL {
            let _ = validator(t);
        }
    }
}
