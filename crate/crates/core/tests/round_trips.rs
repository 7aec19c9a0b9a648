mod common;

use dexparse::transform::{binarize, debinarize, strip_annotations, TransformConfig};
use dexparse::treebank_io::{parse_bracketed, serialize_tree, write_treebank};
use dexparse::Tree;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LABELS: [&str; 6] = ["S", "NP", "VP", "PP", "AP", "CNP"];
const TAGS: [&str; 6] = ["ART.Nom.Sg", "NN", "VVFIN", "$.", "$(", "APPR"];
const WORDS: [&str; 7] = ["der", "Mann", "(", ")", "ŝîn", "3.", "a_b"];

fn annotate(rng: &mut impl Rng, tree: &Tree) -> Tree {
    match tree {
        Tree::Leaf(_) => tree.clone(),
        Tree::Node { label, children } if tree.is_preterminal() => Tree::node(label.clone(), children.clone()),
        Tree::Node { label, children } => {
            let mut label = label.clone();
            if rng.random_bool(0.4) {
                label.push_str(["-SB", "-OA", "-MO-X"][rng.random_range(0..3)]);
            }
            if rng.random_bool(0.2) {
                label.push_str(&format!("={}", rng.random_range(1..9)));
            }
            let mut kids: Vec<Tree> = children.iter().map(|c| annotate(rng, c)).collect();
            if rng.random_bool(0.2) {
                let trace = if rng.random_bool(0.5) {
                    Tree::preterminal("-NONE-", "*T*-1")
                } else {
                    Tree::node("NP-SB", vec![Tree::preterminal("-NONE-", "*")])
                };
                let at = rng.random_range(0..=kids.len());
                kids.insert(at, trace);
            }
            Tree::node(label, kids)
        }
    }
}

#[test]
fn serialize_parse_identity_on_1000_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trees: Vec<Tree> = (0..1000).map(|_| common::random_tree(&mut rng, 12, &LABELS, &TAGS, &WORDS)).collect();
    for t in &trees {
        assert_eq!(parse_bracketed(&serialize_tree(t)).unwrap(), vec![t.clone()]);
    }
    assert_eq!(parse_bracketed(&write_treebank(&trees)).unwrap(), trees);
}

#[test]
fn binarize_debinarize_identity_on_1000_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let t = common::random_tree(&mut rng, 12, &LABELS, &TAGS, &WORDS);
        let b = binarize(&t);
        b.walk(&mut |n| assert!(n.children().len() <= 2, "{b}"));
        assert_eq!(debinarize(&b).unwrap(), t);
    }
}

#[test]
fn strip_is_idempotent_on_500_annotated_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = TransformConfig::default();
    for _ in 0..500 {
        let t = common::random_tree(&mut rng, 10, &LABELS, &TAGS, &WORDS);
        let annotated = annotate(&mut rng, &t);
        let once = strip_annotations(&annotated, &cfg).unwrap();
        assert_eq!(strip_annotations(&once, &cfg).unwrap(), once);
        assert_eq!(once, t, "{annotated}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn round_trips_hold_for_any_seed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = common::random_tree(&mut rng, 15, &LABELS, &TAGS, &WORDS);
        prop_assert_eq!(parse_bracketed(&serialize_tree(&t)).unwrap(), vec![t.clone()]);
        prop_assert_eq!(debinarize(&binarize(&t)).unwrap(), t.clone());
        let b = binarize(&t);
        prop_assert_eq!(b.leaves(), t.leaves());
    }
}
