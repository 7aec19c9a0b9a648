//! Readers and writers for the three on-disk formats.
//!
//! * Bracketed treebanks (`.brackets`): Penn-style s-expressions, one or
//!   more per file. Input trees may span several lines; output is always one
//!   tree per line. Literal parentheses inside labels and tokens are written
//!   as `-LRB-` / `-RRB-`.
//! * Tagged corpora (`.tags`): `token<TAB>TAG.Feat.Feat` per line, a blank
//!   line after each sentence.
//! * Tag-map tables (`.tagmap`): a `[pos]` and a `[features]` section of
//!   `source<TAB>target` lines.

mod bracketed;
mod tagged;
mod tagmap;
mod tree;

pub use bracketed::{
    parse_bracketed, parse_bracketed_bytes, parse_bracketed_with_diagnostics, serialize_tree, write_treebank, Diagnostic,
};
pub use tagged::{read_tagged_corpus, write_tagged_corpus, ExtendedTag, TaggedSentence, DEFAULT_MORPH_SEPARATOR};
pub use tagmap::{read_tag_map, write_tag_map, TagMapTable};
pub use tree::Tree;

use crate::error::{Error, Result};

/// Splits a treebank into a training prefix of `train_count` trees and a
/// development remainder, preserving corpus order.
pub fn split_treebank(trees: Vec<Tree>, train_count: usize) -> Result<(Vec<Tree>, Vec<Tree>)> {
    if train_count > trees.len() {
        return Err(Error::InvalidArgument(format!(
            "train_count {} exceeds treebank size {}",
            train_count,
            trees.len()
        )));
    }
    let mut train = trees;
    let dev = train.split_off(train_count);
    Ok((train, dev))
}
