//! Delexicalized span-based constituency parsing.
//!
//! A parser is trained on a source treebank whose words have been replaced
//! by their part-of-speech and morphology tags, and is then applied to
//! tag sequences of a related target language. Target tags come from a
//! trainable tagger or from externally tagged files and are mapped onto the
//! source tag inventory before parsing.
//!
//! The crate is organised along the data flow:
//!
//! * [`treebank_io`]: bracketed trees, tagged corpora and tag-map tables.
//! * [`transform`]: annotation stripping, delexicalization, binarization and
//!   target treebank filtering.
//! * [`tag_map`]: mapping of target tags onto the source inventory.
//! * [`tagger`]: an averaged-perceptron tagger.
//! * [`model`]: tag embeddings, self-attention encoder and span scorer with
//!   exact gradients.
//! * [`chart`]: CKY decoding, loss-augmented decoding, training and batch
//!   parsing.
//! * [`evalb`]: bracket scoring.
//! * [`pipeline`]: configuration and the end-to-end commands.

pub mod chart;
pub mod error;
pub mod evalb;
pub mod model;
pub mod pipeline;
pub mod tag_map;
pub mod tagger;
pub mod transform;
pub mod treebank_io;

pub use error::{Error, Result};
pub use treebank_io::{ExtendedTag, TagMapTable, TaggedSentence, Tree};
