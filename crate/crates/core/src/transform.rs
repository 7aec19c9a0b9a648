//! Tree normalization: annotation stripping, delexicalization,
//! binarization and target treebank filtering.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank_io::{ExtendedTag, TaggedSentence, Tree};

/// Label of the intermediate nodes introduced by binarization.
pub const EMPTY_LABEL: &str = "∅";
/// Joins the labels of a collapsed unary chain.
pub const UNARY_JOIN: char = '+';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    /// Constituent labels are cut at the first occurrence (e.g. `NP-SB`).
    pub edge_separator: char,
    /// Preterminal label marking trace nodes.
    pub trace_label: String,
    /// Token prefixes marking trace leaves.
    pub trace_token_prefixes: Vec<String>,
    pub morph_separator: char,
    pub keep_morphology: bool,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            edge_separator: '-',
            trace_label: "-NONE-".to_string(),
            trace_token_prefixes: vec!["*T*".to_string(), "*".to_string()],
            morph_separator: '.',
            keep_morphology: true,
        }
    }
}

impl TransformConfig {
    pub fn validate(&self) -> Result<()> {
        let seps = [self.edge_separator, self.morph_separator];
        if seps.iter().any(|c| !c.is_ascii_graphic()) || self.edge_separator == self.morph_separator {
            return Err(Error::Config(
                "edge and morphology separators must be distinct printable ASCII characters".into(),
            ));
        }
        Ok(())
    }

    fn is_trace(&self, label: &str, token: &str) -> bool {
        label == self.trace_label
            || self
                .trace_token_prefixes
                .iter()
                .any(|p| !p.is_empty() && token.starts_with(p.as_str()))
    }

    fn clean_label(&self, label: &str) -> String {
        let mut out = match label.char_indices().skip(1).find(|&(_, c)| c == self.edge_separator) {
            Some((i, _)) => &label[..i],
            None => label,
        };
        // Coreference indices, possibly stacked: NP=1=2.
        while let Some(i) = out.rfind('=') {
            let suffix = &out[i + 1..];
            if i == 0 || suffix.is_empty() || !suffix.bytes().all(|b| b.is_ascii_digit()) {
                break;
            }
            out = &out[..i];
        }
        out.to_string()
    }
}

/// Removes edge labels, coreference indices and trace subtrees.
pub fn strip_annotations(tree: &Tree, cfg: &TransformConfig) -> Result<Tree> {
    strip_node(tree, cfg).ok_or(Error::EmptyAfterStripping)
}

fn strip_node(tree: &Tree, cfg: &TransformConfig) -> Option<Tree> {
    match tree {
        Tree::Leaf(_) => Some(tree.clone()),
        Tree::Node { label, children } if tree.is_preterminal() => {
            let trace = children
                .iter()
                .any(|c| cfg.is_trace(label, c.token().unwrap_or_default()));
            (!trace).then(|| tree.clone())
        }
        Tree::Node { label, children } => {
            let kept: Vec<Tree> = children.iter().filter_map(|c| strip_node(c, cfg)).collect();
            (!kept.is_empty()).then(|| Tree::node(cfg.clean_label(label), kept))
        }
    }
}

/// Replaces every token by the extended tag of its preterminal and reduces
/// the preterminal label to the bare part of speech.
pub fn delexicalize_tree(tree: &Tree, cfg: &TransformConfig) -> Result<Tree> {
    match tree {
        Tree::Leaf(tok) => Err(Error::MalformedTree(format!("leaf {tok:?} outside a preterminal"))),
        Tree::Node { label, children } if children.iter().any(Tree::is_leaf) => {
            if children.len() != 1 {
                return Err(Error::MalformedTree(format!(
                    "preterminal {label} has {} children",
                    children.len()
                )));
            }
            let tag = ExtendedTag::parse_with(label, cfg.morph_separator)?;
            let token = if cfg.keep_morphology {
                tag.to_string_with(cfg.morph_separator)
            } else {
                tag.pos.clone()
            };
            Ok(Tree::preterminal(tag.pos, &token))
        }
        Tree::Node { label, children } => {
            let children = children
                .iter()
                .map(|c| delexicalize_tree(c, cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok(Tree::node(label.clone(), children))
        }
    }
}

pub fn delexicalize_sentence(sentence: &TaggedSentence, cfg: &TransformConfig) -> Vec<String> {
    sentence
        .tags
        .iter()
        .map(|t| {
            if cfg.keep_morphology {
                t.to_string_with(cfg.morph_separator)
            } else {
                t.pos.clone()
            }
        })
        .collect()
}

/// Rejects labels that collide with the reserved binarization symbols.
pub fn check_reserved_labels(tree: &Tree) -> Result<()> {
    let mut bad = None;
    tree.walk(&mut |t| {
        if let Some(label) = t.label() {
            if !t.is_preterminal() && (label.contains(UNARY_JOIN) || label.contains(EMPTY_LABEL)) {
                bad.get_or_insert_with(|| label.to_string());
            }
        }
    });
    match bad {
        Some(label) => Err(Error::MalformedTree(format!("reserved symbol in label {label:?}"))),
        None => Ok(()),
    }
}

/// Right-branching binarization with unary-chain collapse.
///
/// `(S A B C)` becomes `(S A (∅ B C))`; `(S (VP (V x)))` becomes
/// `(S+VP (V x))`. Preterminals are left untouched.
pub fn binarize(tree: &Tree) -> Tree {
    match tree {
        Tree::Leaf(_) => tree.clone(),
        _ if tree.is_preterminal() => tree.clone(),
        Tree::Node { label, children } => {
            let mut label = label.clone();
            let mut children = children;
            while let [only] = children.as_slice() {
                match only {
                    Tree::Node { label: inner, children: grand } if !only.is_preterminal() => {
                        label.push(UNARY_JOIN);
                        label.push_str(inner);
                        children = grand;
                    }
                    _ => break,
                }
            }
            let binarized: Vec<Tree> = children.iter().map(binarize).collect();
            Tree::node(label, right_branch(binarized))
        }
    }
}

fn right_branch(mut children: Vec<Tree>) -> Vec<Tree> {
    if children.len() <= 2 {
        return children;
    }
    let rest = children.split_off(1);
    children.push(Tree::node(EMPTY_LABEL, right_branch(rest)));
    children
}

/// Inverse of [`binarize`]: splices out `∅` nodes and expands `+`-joined
/// labels into unary chains.
pub fn debinarize(tree: &Tree) -> Result<Tree> {
    if tree.label() == Some(EMPTY_LABEL) {
        return Err(Error::MalformedTree("cannot splice an empty-label root".into()));
    }
    let mut out = debinarize_into(tree)?;
    Ok(out.remove(0))
}

fn debinarize_into(tree: &Tree) -> Result<Vec<Tree>> {
    match tree {
        Tree::Leaf(_) => Ok(vec![tree.clone()]),
        _ if tree.is_preterminal() => Ok(vec![tree.clone()]),
        Tree::Node { label, children } => {
            let mut flat = Vec::with_capacity(children.len());
            for c in children {
                flat.extend(debinarize_into(c)?);
            }
            if label == EMPTY_LABEL {
                return Ok(flat);
            }
            let parts: Vec<&str> = label.split(UNARY_JOIN).collect();
            if parts.iter().any(|p| p.is_empty()) {
                return Err(Error::MalformedTree(format!("malformed collapsed label {label:?}")));
            }
            let mut node = Tree::node(parts[parts.len() - 1], flat);
            for p in parts[..parts.len() - 1].iter().rev() {
                node = Tree::node(*p, vec![node]);
            }
            Ok(vec![node])
        }
    }
}

/// Cleans a small target-language evaluation treebank.
///
/// Leading tokens made only of digits and periods are deleted; trees that
/// are malformed or cover fewer than two leaves are dropped as incomplete;
/// trees where more than half of the tokens are in `latin_lexicon`
/// (compared case-insensitively) are dropped. Every modification and drop
/// produces one report line.
pub fn filter_target_treebank(trees: Vec<Tree>, latin_lexicon: &HashSet<String>) -> (Vec<Tree>, Vec<String>) {
    let lexicon: HashSet<String> = latin_lexicon.iter().map(|w| w.to_lowercase()).collect();
    let mut kept = Vec::new();
    let mut report = Vec::new();
    for (i, mut tree) in trees.into_iter().enumerate() {
        if let Err(e) = tree.check_well_formed() {
            report.push(format!("tree {i}: dropped as incomplete (malformed: {e})"));
            continue;
        }
        let mut emptied = false;
        while let Some(first) = tree.leaves().first().map(|s| s.to_string()) {
            if !first.chars().all(|c| c.is_ascii_digit() || c == '.') {
                break;
            }
            report.push(format!("tree {i}: removed leading token {first:?}"));
            match remove_first_leaf(&tree) {
                Some(t) => tree = t,
                None => {
                    emptied = true;
                    break;
                }
            }
        }
        let leaves = if emptied { 0 } else { tree.leaf_count() };
        if leaves < 2 {
            report.push(format!("tree {i}: dropped as incomplete (fewer than 2 leaves)"));
            continue;
        }
        let latin = tree
            .leaves()
            .iter()
            .filter(|w| lexicon.contains(&w.to_lowercase()))
            .count();
        if 2 * latin > leaves {
            report.push(format!("tree {i}: dropped as mostly Latin ({latin}/{leaves} tokens)"));
            continue;
        }
        kept.push(tree);
    }
    (kept, report)
}

/// Deletes the first leaf and any ancestors left without children.
fn remove_first_leaf(tree: &Tree) -> Option<Tree> {
    match tree {
        Tree::Leaf(_) => None,
        Tree::Node { label, children } => {
            let mut children = children.clone();
            match children.first().and_then(remove_first_leaf) {
                Some(first) => children[0] = first,
                None => {
                    children.remove(0);
                }
            }
            (!children.is_empty()).then(|| Tree::node(label.clone(), children))
        }
    }
}
