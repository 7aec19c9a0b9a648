//! The numerical core: factored tag embeddings, a pre-norm self-attention
//! encoder, fencepost span representations and a span label scorer, all in
//! double precision with hand-written backpropagation.

mod checkpoint;
mod network;
mod params;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::ForwardPass;
pub use params::{LayerParams, ModelParams};

use crate::error::{Error, Result};
use crate::transform::EMPTY_LABEL;
use crate::treebank_io::ExtendedTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub ff_dim: usize,
    pub label_hidden_dim: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Embed whole tokens instead of factored tags.
    pub lexicalized: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            model_dim: 128,
            num_layers: 2,
            num_heads: 4,
            head_dim: 32,
            ff_dim: 256,
            label_hidden_dim: 128,
            max_len: 128,
            seed: 1,
            lexicalized: false,
        }
    }

    /// 8 layers, 8 heads of width 64, model width 1024, feedforward 2048.
    pub fn paper() -> Self {
        ModelConfig {
            model_dim: 1024,
            num_layers: 8,
            num_heads: 8,
            head_dim: 64,
            ff_dim: 2048,
            label_hidden_dim: 250,
            max_len: 512,
            seed: 1,
            lexicalized: false,
        }
    }

    pub fn attention_width(&self) -> usize {
        self.num_heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim < 2 || self.model_dim % 2 != 0 {
            return Err(Error::Config(format!("model_dim must be even and >= 2, got {}", self.model_dim)));
        }
        for (name, v) in [
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("ff_dim", self.ff_dim),
            ("label_hidden_dim", self.label_hidden_dim),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

pub const UNK: &str = "<UNK>";

/// String inventory with a reserved unknown entry at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from arbitrary strings; the order is sorted so
    /// that identical inputs always give identical indices.
    pub fn build<'a>(items: impl IntoIterator<Item = &'a str>) -> Self {
        let mut sorted: Vec<String> = items.into_iter().filter(|s| *s != UNK).map(str::to_string).collect();
        sorted.sort();
        sorted.dedup();
        let mut all = vec![UNK.to_string()];
        all.extend(sorted);
        Self::from_items(all).expect("sorted, unique items")
    }

    /// Restores a vocabulary in stored order; the first item must be the
    /// unknown entry.
    pub fn from_items(items: Vec<String>) -> Result<Self> {
        if items.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Checkpoint("vocabulary must start with the unknown entry".into()));
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, s) in items.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary entry {s:?}")));
            }
        }
        Ok(Vocab { items, index })
    }

    pub fn get(&self, s: &str) -> usize {
        self.index.get(s).copied().unwrap_or(0)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Label scores for every span `0 <= i < j <= n`, stored triangularly.
/// Label 0 is the empty label and always scores 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanScores {
    n: usize,
    num_labels: usize,
    data: Vec<f64>,
}

impl SpanScores {
    pub fn zeros(n: usize, num_labels: usize) -> Self {
        SpanScores {
            n,
            num_labels,
            data: vec![0.0; span_count(n) * num_labels],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn get(&self, i: usize, j: usize, label: usize) -> f64 {
        self.data[span_index(self.n, i, j) * self.num_labels + label]
    }

    /// Sets a non-empty label score.
    pub fn set(&mut self, i: usize, j: usize, label: usize, value: f64) {
        assert!(label > 0, "the empty label score is fixed at 0");
        self.data[span_index(self.n, i, j) * self.num_labels + label] = value;
    }
}

/// Number of spans over `n` tokens.
pub fn span_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Row of span `(i, j)` in the triangular layout, ordered by `i` then `j`.
pub fn span_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j <= n);
    i * n - i * i.saturating_sub(1) / 2 + (j - i - 1)
}

/// A trained or freshly initialised parser with its inventories.
#[derive(Debug, Clone, PartialEq)]
pub struct ParserModel {
    pub config: ModelConfig,
    /// Label 0 is the empty label.
    pub labels: Vec<String>,
    pub pos_vocab: Vocab,
    pub feature_vocab: Vocab,
    pub params: ModelParams,
    /// Free-form pipeline settings carried in the checkpoint.
    pub metadata: BTreeMap<String, String>,
}

impl ParserModel {
    /// `labels` must not contain the empty label; it is inserted at index 0
    /// and the rest are sorted.
    pub fn new(config: ModelConfig, labels: Vec<String>, pos_vocab: Vocab, feature_vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut labels: Vec<String> = labels.into_iter().filter(|l| l != EMPTY_LABEL).collect();
        labels.sort();
        labels.dedup();
        if labels.is_empty() {
            return Err(Error::InvalidArgument("label inventory is empty".into()));
        }
        labels.insert(0, EMPTY_LABEL.to_string());
        let params = ModelParams::init(&config, pos_vocab.len(), feature_vocab.len(), labels.len());
        Ok(ParserModel {
            config,
            labels,
            pos_vocab,
            feature_vocab,
            params,
            metadata: BTreeMap::new(),
        })
    }

    pub fn label_index(&self) -> HashMap<&str, usize> {
        self.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
    }

    pub fn check_length(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("empty sentence".into()));
        }
        if n > self.config.max_len {
            return Err(Error::TooLong {
                len: n,
                max: self.config.max_len,
            });
        }
        Ok(())
    }

    /// Row `i` is the part-of-speech row plus the sum of feature rows plus
    /// the position row. Unknown symbols use row 0 of their table.
    pub fn embed_sequence(&self, tags: &[ExtendedTag]) -> Result<ndarray::Array2<f64>> {
        self.check_length(tags.len())?;
        Ok(network::embed(self, &self.input_ids(tags)))
    }

    /// Contextual encoding followed by fencepost construction: `n` input
    /// rows give `n + 1` fenceposts.
    pub fn encode(&self, x: &ndarray::Array2<f64>) -> Result<ndarray::Array2<f64>> {
        network::encode(&self.params, &self.config, x.clone()).map(|(f, _)| f)
    }

    pub fn span_scores(&self, fenceposts: &ndarray::Array2<f64>) -> SpanScores {
        network::span_scores(&self.params, fenceposts, self.labels.len()).0
    }

    /// Embed, encode and score all spans of a sentence.
    pub fn score_sentence(&self, tags: &[ExtendedTag]) -> Result<SpanScores> {
        Ok(ForwardPass::run(self, tags)?.scores)
    }

    pub(crate) fn input_ids(&self, tags: &[ExtendedTag]) -> InputIds {
        InputIds {
            pos: tags.iter().map(|t| self.pos_vocab.get(&t.pos)).collect(),
            features: tags
                .iter()
                .map(|t| t.features.iter().map(|f| self.feature_vocab.get(f)).collect())
                .collect(),
        }
    }
}

pub(crate) struct InputIds {
    pub pos: Vec<usize>,
    pub features: Vec<Vec<usize>>,
}
