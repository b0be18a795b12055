use std::collections::{BTreeMap, BTreeSet};

use narrascope_core::narrative::{NarrativeTree, SentenceId, TreeError};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Append,
    Insert(usize),
    Update(usize),
    Delete(usize),
    Branch(usize),
    DeleteBranch(usize),
    Cursor(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => Just(Op::Append),
        2 => any::<usize>().prop_map(Op::Insert),
        2 => any::<usize>().prop_map(Op::Update),
        1 => any::<usize>().prop_map(Op::Delete),
        2 => any::<usize>().prop_map(Op::Branch),
        1 => any::<usize>().prop_map(Op::DeleteBranch),
        1 => any::<usize>().prop_map(Op::Cursor),
    ]
}

fn pick(ids: &[SentenceId], i: usize) -> Option<SentenceId> {
    if ids.is_empty() {
        None
    } else {
        Some(ids[i % ids.len()].clone())
    }
}

fn all_ids(t: &NarrativeTree) -> Vec<SentenceId> {
    t.sentences().map(|s| s.sentence_id.clone()).collect()
}

fn contents(t: &NarrativeTree, path: &[SentenceId]) -> Vec<String> {
    path.iter().map(|id| t.get(id).unwrap().content.clone()).collect()
}

/// Root-to-leaf content for every leaf off the active path.
fn inactive_paths(t: &NarrativeTree) -> BTreeMap<SentenceId, Vec<String>> {
    let active: BTreeSet<_> = t.active_path_ids().into_iter().collect();
    t.leaves()
        .into_iter()
        .filter(|l| !active.contains(l))
        .map(|l| {
            let p = t.path_to(&l).unwrap();
            (l, contents(t, &p))
        })
        .collect()
}

fn parents(t: &NarrativeTree) -> BTreeMap<SentenceId, Option<SentenceId>> {
    all_ids(t).into_iter().map(|id| (id.clone(), t.parent_of(&id).cloned())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn random_operation_sequences_keep_tree_laws(ops in prop::collection::vec(op(), 1..40)) {
        let mut t = NarrativeTree::new();
        let mut seen: BTreeSet<SentenceId> = BTreeSet::new();
        let mut counter = 0;
        for op in ops {
            counter += 1;
            let ids = all_ids(&t);
            let before_path = t.active_path_ids();
            let before_inactive = inactive_paths(&t);
            match op {
                Op::Append => {
                    let s = t.append(&format!("text {counter}")).unwrap();
                    let mut expected = before_path.clone();
                    expected.push(s.sentence_id.clone());
                    prop_assert_eq!(t.active_path_ids(), expected);
                    prop_assert!(seen.insert(s.sentence_id));
                    prop_assert_eq!(inactive_paths(&t), before_inactive);
                }
                Op::Insert(i) => {
                    let Some(anchor) = pick(&before_path, i) else { continue };
                    let before_parents = parents(&t);
                    let pos = before_path.iter().position(|p| *p == anchor).unwrap();
                    let s = t.insert_after(&anchor, &format!("ins {counter}")).unwrap();
                    prop_assert!(seen.insert(s.sentence_id.clone()));
                    let mut expected = before_path.clone();
                    expected.insert(pos + 1, s.sentence_id.clone());
                    prop_assert_eq!(t.active_path_ids(), expected);
                    let moved = before_path.get(pos + 1);
                    for (id, p) in before_parents {
                        if Some(&id) != moved {
                            prop_assert_eq!(t.parent_of(&id).cloned(), p);
                        }
                    }
                }
                Op::Update(i) => {
                    let Some(id) = pick(&before_path, i) else { continue };
                    t.take_events();
                    t.update(&id, &format!("upd {counter}")).unwrap();
                    prop_assert_eq!(t.take_events().len(), 1);
                    prop_assert_eq!(t.active_path_ids(), before_path);
                    // inactive leaves whose path avoids the edited sentence are unchanged
                    for (leaf, text) in &before_inactive {
                        let p = t.path_to(leaf).unwrap();
                        if !p.contains(&id) {
                            prop_assert_eq!(&contents(&t, &p), text);
                        }
                    }
                }
                Op::Delete(i) => {
                    let Some(id) = pick(&ids, i) else { continue };
                    let is_root = t.root_id() == Some(&id);
                    let kids = t.children_of(&id).len();
                    match t.delete_sentence(&id) {
                        Ok(()) => prop_assert!(!t.contains(&id)),
                        Err(TreeError::WouldOrphanForest(_)) => prop_assert!(is_root && kids >= 2),
                        Err(e) => prop_assert!(false, "unexpected {e:?}"),
                    }
                }
                Op::Branch(i) => {
                    let Some(from) = pick(&ids, i) else { continue };
                    let prefix = t.path_to(&from).unwrap();
                    t.create_branch(&from).unwrap();
                    prop_assert_eq!(t.active_path_ids(), prefix.clone());
                    let s = t.append(&format!("fork {counter}")).unwrap();
                    prop_assert!(seen.insert(s.sentence_id.clone()));
                    let mut expected = prefix;
                    expected.push(s.sentence_id);
                    prop_assert_eq!(t.active_path_ids(), expected);
                }
                Op::DeleteBranch(i) => {
                    let Some(head) = pick(&ids, i) else { continue };
                    let leaves = t.leaves().len();
                    match t.delete_branch(&head) {
                        Ok(()) => prop_assert!(t.leaves().len() < leaves),
                        Err(TreeError::LastPath(_)) => {}
                        Err(e) => prop_assert!(false, "unexpected {e:?}"),
                    }
                }
                Op::Cursor(i) => {
                    let Some(id) = pick(&ids, i) else { continue };
                    t.set_cursor(&id).unwrap();
                    prop_assert_eq!(t.active_path_ids().last().cloned(), Some(id));
                }
            }
            prop_assert!(t.check().is_ok(), "{:?}", t.check());
            if !t.is_empty() {
                let path = t.active_path_ids();
                prop_assert_eq!(path.first(), t.root_id());
            }
        }
        let snap = t.snapshot();
        let back = NarrativeTree::from_snapshot(snap.clone()).unwrap();
        prop_assert_eq!(back.snapshot(), snap);
    }
}
