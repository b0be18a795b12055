use std::sync::OnceLock;

use chrono::DateTime;
use proptest::prelude::*;
use serde_json::json;

use narrascope_core::capture::{DashboardConfig, ElementType, InteractionEvent};
use narrascope_core::llm::Gateway;
use narrascope_core::narrative::SentenceId;
use narrascope_core::session::{Actor, Operation, Session};

const CRIME: &str = "borough,year,crime_rate,income\nCamden,2019,10.5,30\nCamden,2020,12.3,31\nHackney,2019,9.1,28\nHackney,2020,8.7,29\nIslington,2019,11.0,35\nIslington,2020,7.2,36\n";

const TEXTS: &[&str] = &[
    "Crime is a concern in Camden",
    "Camden has the highest crime_rate",
    "Is crime_rate in Hackney falling?",
    "Income in Islington rose in 2020",
    "I should check whether income explains crime",
    "Hackney crime_rate fell to 8.7 in 2020",
    "Overall the boroughs differ",
];

#[derive(Debug, Clone)]
enum Op {
    Append(usize),
    Insert(usize, usize),
    Update(usize, usize),
    Delete(usize),
    Branch(usize),
    DeleteBranch(usize),
    Show(usize),
    Event(usize, u32),
}

fn op() -> impl Strategy<Value = Op> {
    let t = 0..TEXTS.len();
    prop_oneof![
        4 => t.clone().prop_map(Op::Append),
        1 => (any::<usize>(), t.clone()).prop_map(|(a, b)| Op::Insert(a, b)),
        1 => (any::<usize>(), t).prop_map(|(a, b)| Op::Update(a, b)),
        1 => any::<usize>().prop_map(Op::Delete),
        2 => any::<usize>().prop_map(Op::Branch),
        1 => any::<usize>().prop_map(Op::DeleteBranch),
        2 => any::<usize>().prop_map(Op::Show),
        1 => (any::<usize>(), 0..1000u32).prop_map(|(a, b)| Op::Event(a, b)),
    ]
}

fn base() -> &'static Session {
    static BASE: OnceLock<Session> = OnceLock::new();
    BASE.get_or_init(|| {
        let mut s = Session::new("law", DateTime::from_timestamp(0, 0).unwrap());
        let op = Operation::IngestDataset { name: "crime".into(), csv: CRIME.into(), category_tags: vec![] };
        s.apply(op, Actor::User, &Gateway::offline()).unwrap();
        s
    })
}

fn pick<T: Clone>(items: &[T], i: usize) -> Option<T> {
    (!items.is_empty()).then(|| items[i % items.len()].clone())
}

fn to_operation(s: &Session, op: &Op) -> Option<Operation> {
    let live: Vec<String> = s.tree().depth_first().iter().map(|x| x.sentence_id.0.clone()).collect();
    let active: Vec<String> = s.tree().active_path_ids().into_iter().map(|x| x.0).collect();
    Some(match *op {
        Op::Append(t) => Operation::AppendSentence { content: TEXTS[t].into() },
        Op::Insert(a, t) => Operation::InsertSentence { anchor: pick(&active, a)?, content: TEXTS[t].into() },
        Op::Update(a, t) => Operation::UpdateSentence { sentence_id: pick(&live, a)?, content: TEXTS[t].into() },
        Op::Delete(a) => Operation::DeleteSentence { sentence_id: pick(&live, a)? },
        Op::Branch(a) => Operation::CreateBranch { from: pick(&live, a)? },
        Op::DeleteBranch(a) => Operation::DeleteBranch { fork_child: pick(&live, a)? },
        Op::Show(a) => Operation::ShowView { sentence_id: pick(&live, a)? },
        Op::Event(a, n) => {
            let views: Vec<String> = s.views().keys().cloned().collect();
            Operation::RecordEvent {
                event: InteractionEvent {
                    element_id: pick(&views, a).unwrap_or_else(|| "none".into()),
                    element_name: "chart".into(),
                    element_type: ElementType::Chart,
                    action: "interactive_hover".into(),
                    dashboard_config: DashboardConfig::default(),
                    chart_data: json!({"borough": "Camden", "crime_rate": n as f64 / 10.0}),
                    timestamp: DateTime::from_timestamp(n as i64, 0).unwrap(),
                },
            }
        }
    })
}

fn run(ops: &[Op], gw: &Gateway) -> Session {
    let mut s = base().clone();
    for op in ops {
        if let Some(operation) = to_operation(&s, op) {
            // rejected operations are part of the law: they must not change state
            let before = s.snapshot().hash();
            if s.apply(operation, Actor::User, gw).is_err() {
                assert_eq!(s.snapshot().hash(), before);
            }
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn replaying_the_log_reproduces_the_state(ops in prop::collection::vec(op(), 1..25)) {
        let s = run(&ops, &Gateway::offline());
        let snap = s.snapshot();
        let replayed = Session::replay(&snap.session_id, snap.created_at, &snap.event_log).unwrap();
        prop_assert_eq!(replayed.snapshot().state(), snap.state());
    }

    #[test]
    fn links_stay_symmetric_and_match_the_tree(ops in prop::collection::vec(op(), 1..25)) {
        let s = run(&ops, &Gateway::disabled());
        prop_assert!(s.links().is_consistent());
        for (sentence, view) in s.links().pairs() {
            prop_assert!(s.tree().get(&SentenceId(sentence.clone())).unwrap().view_ids.contains(view));
            prop_assert!(s.views()[view].linked_sentence_ids.contains(sentence));
        }
    }

    #[test]
    fn issue_jump_targets_resolve(ops in prop::collection::vec(op(), 1..25)) {
        let s = run(&ops, &Gateway::offline());
        for issue in s.ibis().issues.values() {
            for r in &issue.sentence_refs {
                prop_assert!(s.tree().is_known(&SentenceId(r.clone())));
            }
        }
        let board = s.board(None);
        prop_assert_eq!(board.total(), s.ibis().issues.len());
    }

    #[test]
    fn timeline_leaves_match_narrative_branches(ops in prop::collection::vec(
        prop_oneof![3 => (0..TEXTS.len()).prop_map(Op::Append), 1 => any::<usize>().prop_map(Op::Branch)],
        1..20,
    )) {
        let mut s = run(&ops, &Gateway::offline());
        // a fork without a sentence under it yet is not a branch
        s.apply(Operation::AppendSentence { content: TEXTS[0].into() }, Actor::User, &Gateway::offline()).unwrap();
        prop_assert_eq!(s.timeline().leaves().len(), s.tree().leaves().len());
        let roots = s.timeline().nodes().iter().filter(|n| n.parent_node_id.is_none()).count();
        prop_assert_eq!(roots, 1);
        prop_assert!(s.timeline().nodes()[0].changed_from_previous.is_none());
    }
}
