use std::time::Instant;

use narrascope_core::alignment::{AlignmentConfig, JointEntry, JointIndex};
use narrascope_core::catalog::tag_vocabulary;
use narrascope_core::llm::Gateway;
use narrascope_core::propositions::all_instances;
use narrascope_core::tags::TagNormalizer;
use narrascope_core::views::adapt_templates;
use narrascope_core::Catalog;

fn check(gateway: Gateway) {
    let mut catalog = Catalog::new();
    catalog.ingest_table(include_bytes!("../data/travel_destinations.csv"), "travel").unwrap();
    let table = catalog.table("travel").unwrap();
    let tagger = TagNormalizer::new(&tag_vocabulary(table));
    let instances = all_instances(table, &tagger).unwrap();
    assert!(instances.len() >= 150);
    let charts = adapt_templates(table, &tagger, &gateway);
    let entries: Vec<JointEntry> =
        instances.iter().map(JointEntry::proposition).chain(charts.iter().map(JointEntry::chart)).collect();
    let index = JointIndex::build(entries, &gateway, AlignmentConfig::default()).unwrap();
    let misses: Vec<&str> = instances
        .iter()
        .filter(|i| {
            let m = index.match_text(&i.filled_text, &tagger, &gateway);
            m.ranked.first().map(|(id, _)| id.as_str()) != Some(format!("p:{}", i.instance_id).as_str())
        })
        .map(|i| i.filled_text.as_str())
        .collect();
    assert!(misses.is_empty(), "{} misses, e.g. {:?}", misses.len(), &misses[..misses.len().min(5)]);
}

#[test]
fn every_instance_retrieves_itself_with_stub_embeddings() {
    let t = Instant::now();
    check(Gateway::offline());
    eprintln!("stub embeddings: {:?}", t.elapsed());
}

#[test]
fn every_instance_retrieves_itself_from_tags_alone() {
    let t = Instant::now();
    check(Gateway::disabled());
    eprintln!("tag fallback: {:?}", t.elapsed());
}
