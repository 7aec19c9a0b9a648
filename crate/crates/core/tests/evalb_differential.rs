mod common;

use dexparse::evalb::{score_corpus, EvalConfig};
use dexparse::Tree;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LABELS: [&str; 4] = ["S", "NP", "VP", "PP"];
const TAGS: [&str; 5] = ["ART", "NN", "VVFIN", "$,", "$."];
const WORDS: [&str; 3] = ["a", "b", "c"];

/// A second tree over the same preterminals with random structure.
fn reshape(rng: &mut impl Rng, gold: &Tree) -> Tree {
    let pts: Vec<Tree> = gold
        .preterminals()
        .into_iter()
        .map(|(l, w)| Tree::preterminal(l, w))
        .collect();
    fn build(rng: &mut impl Rng, items: &[Tree]) -> Tree {
        let label = *LABELS.choose(rng).unwrap();
        if items.len() == 1 || rng.random_bool(0.3) {
            return Tree::node(label, items.to_vec());
        }
        let k = rng.random_range(1..items.len());
        let left = if k == 1 && rng.random_bool(0.5) { items[0].clone() } else { build(rng, &items[..k]) };
        Tree::node(label, vec![left, build(rng, &items[k..])])
    }
    build(rng, &pts)
}

fn pairs(seed: u64, count: usize) -> (Vec<Tree>, Vec<Tree>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gold: Vec<Tree> = (0..count).map(|_| common::random_tree(&mut rng, 10, &LABELS, &TAGS, &WORDS)).collect();
    let pred = gold
        .iter()
        .map(|g| if rng.random_bool(0.2) { g.clone() } else { reshape(&mut rng, g) })
        .collect();
    (gold, pred)
}

fn assert_matches_naive(gold: &[Tree], pred: &[Tree], cfg: &EvalConfig) {
    let report = score_corpus(gold, pred, cfg).unwrap();
    let naive = common::naive_counts(gold, pred, cfg);
    let (r, p, f, cm) = common::naive_metrics(&naive);
    let got = &report.result;
    assert_eq!(got.matched, naive.matched);
    assert_eq!(got.gold_total, naive.gold);
    assert_eq!((got.recall, got.precision, got.fscore, got.complete_match), (r, p, f, cm));
}

#[test]
fn matches_naive_scorer_on_random_pairs() {
    for seed in 0..20 {
        let (gold, pred) = pairs(seed, 50);
        assert_matches_naive(&gold, &pred, &EvalConfig::default());
        let cfg = EvalConfig {
            exclude_root: true,
            ignore_labels: ["PP".to_string()].into(),
            label_equivalences: [("VP".to_string(), "S".to_string())].into(),
            ..EvalConfig::default()
        };
        assert_matches_naive(&gold, &pred, &cfg);
    }
}

#[test]
fn self_comparison_is_perfect() {
    let (gold, _) = pairs(99, 50);
    let r = score_corpus(&gold, &gold, &EvalConfig::default()).unwrap().result;
    assert_eq!(r.summary_line(), "100.00 100.00 100.00 100.00");
}

fn insert_punctuation(rng: &mut impl Rng, tree: &Tree) -> Tree {
    match tree {
        Tree::Node { label, children } if !tree.is_preterminal() => {
            let mut kids: Vec<Tree> = children.iter().map(|c| insert_punctuation(rng, c)).collect();
            if rng.random_bool(0.3) {
                let at = rng.random_range(0..=kids.len());
                kids.insert(at, Tree::preterminal(*["$,", "$.", "$("].choose(rng).unwrap(), ","));
            }
            Tree::node(label.clone(), kids)
        }
        _ => tree.clone(),
    }
}

#[test]
fn punctuation_insertion_leaves_metrics_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (gold, pred) = pairs(7, 50);
    let before = score_corpus(&gold, &pred, &EvalConfig::default()).unwrap().result;
    let gold_p: Vec<Tree> = gold.iter().map(|t| insert_punctuation(&mut rng, t)).collect();
    let pred_p: Vec<Tree> = pred.iter().map(|t| insert_punctuation(&mut rng, t)).collect();
    let after = score_corpus(&gold_p, &pred_p, &EvalConfig::default()).unwrap().result;
    assert_eq!(before, after);
}
