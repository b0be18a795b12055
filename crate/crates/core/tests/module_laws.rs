use chrono::DateTime;
use proptest::prelude::*;
use serde_json::{json, Value as Json};

use narrascope_core::capture::{fallback_suggestion, numerals, DashboardConfig, ElementType, EventBuffer, InteractionEvent};
use narrascope_core::catalog::tag_vocabulary;
use narrascope_core::inquiry::{rule_issues, NarrativeItem, Status};
use narrascope_core::story::{validate_json, DataStory};
use narrascope_core::tags::TagNormalizer;
use narrascope_core::Catalog;

fn chart_data() -> impl Strategy<Value = Json> {
    let number = prop_oneof![
        (0i64..100_000).prop_map(|n| json!(n)),
        (0u32..1_000_000).prop_map(|n| json!(n as f64 / 100.0)),
        (-500i64..500).prop_map(|n| json!(n as f64 / 8.0)),
    ];
    let label = "[A-Z][a-z]{2,8}( [0-9]{1,3})?";
    prop_oneof![
        1 => Just(Json::Null),
        1 => label.prop_map(|l| json!({ "name": l })),
        3 => (label, number.clone()).prop_map(|(l, n)| json!({ "label": l, "value": n })),
        2 => prop::collection::vec((label, number.clone()), 1..4)
            .prop_map(|rows| Json::Array(rows.into_iter().map(|(l, n)| json!({"city": l, "cost": n})).collect())),
        1 => number,
    ]
}

fn event() -> impl Strategy<Value = InteractionEvent> {
    ("v[0-9]{1,2}", "[A-Za-z ]{0,12}[0-9]{0,2}", "(bar|line|scatter)?", chart_data()).prop_map(|(id, title, kind, data)| {
        InteractionEvent {
            element_id: id.clone(),
            element_name: format!("{id} chart"),
            element_type: ElementType::Chart,
            action: "interactive_hover".into(),
            dashboard_config: DashboardConfig { title, view_type: kind, variable_map: Default::default() },
            chart_data: data,
            timestamp: DateTime::from_timestamp(0, 0).unwrap(),
        }
    })
}

proptest! {
    #[test]
    fn fallback_capture_never_invents_numbers(events in prop::collection::vec(event(), 0..12)) {
        let mut buffer = EventBuffer::new();
        for e in events {
            buffer.record(e);
        }
        let window = buffer.window();
        let s = fallback_suggestion(&window);
        let data: String = buffer.events().map(|e| e.chart_data.to_string()).collect();
        if let Some(text) = &s.narrative_suggestion {
            for n in numerals(text) {
                prop_assert!(data.contains(n), "{n} not in buffered data: {text}");
            }
            prop_assert!(window.iter().any(|e| e.element_id == s.source_element_id));
        }
    }

    #[test]
    fn validate_is_total(v in any_json()) {
        let known = ["s1".to_string()].into_iter().collect();
        let _ = validate_json(&v, &known);
        if let Ok(story) = serde_json::from_value::<DataStory>(v) {
            let _ = narrascope_core::story::validate(&story, &known);
        }
    }
}

fn any_json() -> impl Strategy<Value = Json> {
    let leaf = prop_oneof![
        Just(Json::Null),
        any::<bool>().prop_map(Json::from),
        any::<i32>().prop_map(Json::from),
        "[a-zA-Z ]{0,10}".prop_map(Json::from),
        Just(json!("s1")),
    ];
    leaf.prop_recursive(3, 24, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..10).prop_map(Json::Array),
            (inner.clone(), inner).prop_map(|(a, b)| json!({"data_story_sentence": a, "ref_id": b})),
        ]
    })
}

const SENTENCES: &[&str] = &[
    "Is crime_rate in Camden rising?",
    "I should check whether income in Hackney grew.",
    "Camden crime_rate reached 12.3 in 2020.",
    "Hackney has the lowest income.",
    "It seems Islington is safer.",
    "Income in Hackney was 29 in 2020.",
    "The weather was nice.",
    "Islington crime_rate is the lowest.",
];

fn tagger() -> TagNormalizer {
    let mut c = Catalog::new();
    c.ingest_table(
        b"borough,year,crime_rate,income\nCamden,2019,10.5,30\nCamden,2020,12.3,31\nHackney,2019,9.1,28\nHackney,2020,8.7,29\nIslington,2019,11.0,35\nIslington,2020,7.2,36\n",
        "crime",
    )
    .unwrap();
    TagNormalizer::new(&tag_vocabulary(c.table("crime").unwrap()))
}

proptest! {
    #[test]
    fn appending_never_reopens_a_resolved_issue(picks in prop::collection::vec(0..SENTENCES.len(), 1..14)) {
        let t = tagger();
        let items: Vec<NarrativeItem> = picks
            .iter()
            .enumerate()
            .map(|(i, &p)| NarrativeItem { sentence_id: format!("s{}", i + 1), content: SENTENCES[p].into() })
            .collect();
        let mut resolved = std::collections::BTreeSet::new();
        for k in 1..=items.len() {
            let issues = rule_issues(&items[..k], &t);
            for i in &issues {
                if resolved.contains(&i.qid) {
                    prop_assert_eq!(i.status, Status::Resolved, "{} reopened", i.qid);
                }
                if i.status == Status::Resolved {
                    resolved.insert(i.qid.clone());
                }
            }
        }
    }
}
