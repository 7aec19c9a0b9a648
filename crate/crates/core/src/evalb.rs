//! Labeled bracket scoring in the style of the standard evalb tool:
//! precision, recall, F1 and complete match over constituent spans,
//! ignoring preterminals and punctuation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank_io::Tree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Preterminal labels whose leaves are deleted before scoring.
    pub punctuation_tags: BTreeSet<String>,
    pub ignore_labels: BTreeSet<String>,
    /// Labels rewritten before comparison.
    pub label_equivalences: BTreeMap<String, String>,
    pub exclude_root: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            punctuation_tags: ["$,", "$.", "$("].iter().map(|s| s.to_string()).collect(),
            ignore_labels: BTreeSet::new(),
            label_equivalences: BTreeMap::new(),
            exclude_root: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        LabeledSpan {
            start,
            end,
            label: label.into(),
        }
    }
}

/// Summary scores; percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub recall: f64,
    pub precision: f64,
    pub fscore: f64,
    pub complete_match: f64,
    pub matched: usize,
    pub gold_total: usize,
    pub pred_total: usize,
    pub exact_trees: usize,
    pub total_trees: usize,
}

impl EvalResult {
    pub fn from_counts(matched: usize, gold_total: usize, pred_total: usize, exact_trees: usize, total_trees: usize) -> Self {
        let recall = percentage(matched, gold_total, pred_total);
        let precision = percentage(matched, pred_total, gold_total);
        let fscore = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let complete_match = if total_trees == 0 {
            0.0
        } else {
            100.0 * exact_trees as f64 / total_trees as f64
        };
        EvalResult {
            recall,
            precision,
            fscore,
            complete_match,
            matched,
            gold_total,
            pred_total,
            exact_trees,
            total_trees,
        }
    }

    /// `R P F CM` with two decimals.
    pub fn summary_line(&self) -> String {
        format!(
            "{:.2} {:.2} {:.2} {:.2}",
            self.recall, self.precision, self.fscore, self.complete_match
        )
    }
}

/// `100 * matched / total`. An empty denominator scores 100 when the other
/// side is empty too and 0 otherwise.
fn percentage(matched: usize, total: usize, other_total: usize) -> f64 {
    match (total, other_total) {
        (0, 0) => 100.0,
        (0, _) => 0.0,
        _ => 100.0 * matched as f64 / total as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceScore {
    pub index: usize,
    pub gold_spans: usize,
    pub pred_spans: usize,
    pub matched: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub result: EvalResult,
    pub sentences: Vec<SentenceScore>,
    /// Pairs excluded because their leaf counts differ.
    pub skipped: Vec<(usize, String)>,
}

/// Scoring spans of `tree`, as a sorted multiset.
pub fn extract_eval_spans(tree: &Tree, cfg: &EvalConfig) -> Vec<LabeledSpan> {
    let mut spans = Vec::new();
    let mut position = 0;
    collect_spans(tree, cfg, true, &mut position, &mut spans);
    spans.sort();
    spans
}

fn collect_spans(tree: &Tree, cfg: &EvalConfig, is_root: bool, position: &mut usize, out: &mut Vec<LabeledSpan>) {
    match tree {
        Tree::Leaf(_) => *position += 1,
        Tree::Node { label, children } => {
            if tree.is_preterminal() {
                if !cfg.punctuation_tags.contains(label) {
                    *position += children.len();
                }
                return;
            }
            let start = *position;
            for c in children {
                collect_spans(c, cfg, false, position, out);
            }
            let label = cfg.label_equivalences.get(label).unwrap_or(label);
            if *position > start && !cfg.ignore_labels.contains(label) && !(is_root && cfg.exclude_root) {
                out.push(LabeledSpan::new(start, *position, label.clone()));
            }
        }
    }
}

fn scored_length(tree: &Tree, cfg: &EvalConfig) -> usize {
    let mut n = 0;
    tree.walk(&mut |t| {
        if let Tree::Node { label, children } = t {
            if !cfg.punctuation_tags.contains(label) || !t.is_preterminal() {
                n += children.iter().filter(|c| c.is_leaf()).count();
            }
        }
    });
    n
}

/// Size of the multiset intersection of two sorted span lists.
fn intersection_size(a: &[LabeledSpan], b: &[LabeledSpan]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

pub fn score_corpus(gold: &[Tree], pred: &[Tree], cfg: &EvalConfig) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "gold has {} trees but prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut sentences = Vec::with_capacity(gold.len());
    let mut skipped = Vec::new();
    let (mut matched, mut gold_total, mut pred_total, mut exact) = (0, 0, 0, 0);
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        let (gn, pn) = (scored_length(g, cfg), scored_length(p, cfg));
        if gn != pn {
            skipped.push((index, format!("length mismatch: gold {gn}, predicted {pn}")));
            continue;
        }
        let gs = extract_eval_spans(g, cfg);
        let ps = extract_eval_spans(p, cfg);
        let m = intersection_size(&gs, &ps);
        let is_exact = gs == ps;
        matched += m;
        gold_total += gs.len();
        pred_total += ps.len();
        exact += usize::from(is_exact);
        sentences.push(SentenceScore {
            index,
            gold_spans: gs.len(),
            pred_spans: ps.len(),
            matched: m,
            exact: is_exact,
        });
    }
    let result = EvalResult::from_counts(matched, gold_total, pred_total, exact, sentences.len());
    Ok(EvalReport {
        result,
        sentences,
        skipped,
    })
}

/// Report text: summary header lines, then one tab-separated line per
/// sentence (`index gold pred matched exact`); skipped pairs show `ERROR`.
pub fn write_report(report: &EvalReport) -> String {
    let r = &report.result;
    let mut out = String::new();
    let _ = writeln!(out, "recall\t{:.2}", r.recall);
    let _ = writeln!(out, "precision\t{:.2}", r.precision);
    let _ = writeln!(out, "fscore\t{:.2}", r.fscore);
    let _ = writeln!(out, "complete_match\t{:.2}", r.complete_match);
    let _ = writeln!(out, "skipped\t{}", report.skipped.len());
    let _ = writeln!(out, "index\tgold\tpred\tmatched\texact");
    let mut rows: Vec<(usize, String)> = report
        .sentences
        .iter()
        .map(|s| {
            (
                s.index,
                format!("{}\t{}\t{}\t{}\t{}", s.index, s.gold_spans, s.pred_spans, s.matched, u8::from(s.exact)),
            )
        })
        .collect();
    rows.extend(report.skipped.iter().map(|(i, msg)| (*i, format!("{i}\tERROR\t{msg}"))));
    rows.sort_by_key(|(i, _)| *i);
    for (_, row) in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}
