//! Binary model checkpoints.
//!
//! All integers and floats are little-endian. A string is a `u32` byte
//! length followed by UTF-8 bytes.
//!
//! ```text
//! magic            8 bytes  "DXPMODEL"
//! version          u32      currently 1
//! metadata         u32 count, then (string key, string value) pairs
//! config           u32 count, then (string name, u64 value) pairs
//! labels           u32 count, then strings; entry 0 is the empty label
//! pos vocabulary   u32 count, then strings; entry 0 is "<UNK>"
//! feature vocab    u32 count, then strings; entry 0 is "<UNK>"
//! tensors          u32 count, then per tensor:
//!                    string name, u32 rank, u64 dims[rank],
//!                    f64 values (row-major), 32-byte SHA-256 of the value bytes
//! ```
//!
//! Tensors appear in the order of [`ModelParams::tensors`]; the reader
//! checks names, shapes and checksums against the stored configuration.

use std::collections::BTreeMap;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelParams, ParserModel, Vocab};
use crate::error::{Error, Result};
use crate::transform::EMPTY_LABEL;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DXPMODEL";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn strings(&mut self, items: &[String]) {
        self.u32(items.len() as u32);
        for s in items {
            self.str(s);
        }
    }
}

fn config_fields(c: &ModelConfig) -> Vec<(&'static str, u64)> {
    vec![
        ("model_dim", c.model_dim as u64),
        ("num_layers", c.num_layers as u64),
        ("num_heads", c.num_heads as u64),
        ("head_dim", c.head_dim as u64),
        ("ff_dim", c.ff_dim as u64),
        ("label_hidden_dim", c.label_hidden_dim as u64),
        ("max_len", c.max_len as u64),
        ("seed", c.seed),
        ("lexicalized", u64::from(c.lexicalized)),
    ]
}

pub fn encode_checkpoint(model: &ParserModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(model.metadata.len() as u32);
    for (k, v) in &model.metadata {
        w.str(k);
        w.str(v);
    }
    let fields = config_fields(&model.config);
    w.u32(fields.len() as u32);
    for (name, v) in fields {
        w.str(name);
        w.u64(v);
    }
    w.strings(&model.labels);
    w.strings(model.pos_vocab.items());
    w.strings(model.feature_vocab.items());
    let tensors = model.params.tensors();
    w.u32(tensors.len() as u32);
    for (name, t) in tensors {
        w.str(&name);
        w.u32(2);
        w.u64(t.nrows() as u64);
        w.u64(t.ncols() as u64);
        let start = w.0.len();
        for v in t.iter() {
            w.0.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&w.0[start..]);
        w.0.extend_from_slice(&digest);
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A count of items that each occupy at least `min_size` bytes.
    fn count(&mut self, min_size: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_size) > self.buf.len() - self.pos {
            return Err(corrupt(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.count(4)?;
        (0..n).map(|_| self.str()).collect()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParserModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(corrupt("not a model checkpoint"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let mut metadata = BTreeMap::new();
    for _ in 0..r.count(8)? {
        let k = r.str()?;
        let v = r.str()?;
        metadata.insert(k, v);
    }
    let mut fields = BTreeMap::new();
    for _ in 0..r.count(12)? {
        let name = r.str()?;
        let value = r.u64()?;
        fields.insert(name, value);
    }
    let field = |name: &str| -> Result<usize> {
        let v = *fields.get(name).ok_or_else(|| corrupt(format!("missing config field {name}")))?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= 1 << 24)
            .ok_or_else(|| corrupt(format!("config field {name} out of range")))
    };
    let config = ModelConfig {
        model_dim: field("model_dim")?,
        num_layers: field("num_layers")?,
        num_heads: field("num_heads")?,
        head_dim: field("head_dim")?,
        ff_dim: field("ff_dim")?,
        label_hidden_dim: field("label_hidden_dim")?,
        max_len: field("max_len")?,
        seed: *fields.get("seed").ok_or_else(|| corrupt("missing config field seed"))?,
        lexicalized: field("lexicalized")? != 0,
    };
    config.validate()?;
    let labels = r.strings()?;
    if labels.len() < 2 || labels[0] != EMPTY_LABEL {
        return Err(corrupt("label inventory must start with the empty label and hold at least one label"));
    }
    let pos_vocab = Vocab::from_items(r.strings()?)?;
    let feature_vocab = Vocab::from_items(r.strings()?)?;

    let expected = expected_shapes(&config, pos_vocab.len(), feature_vocab.len(), labels.len());
    let count = r.count(4)?;
    if count != expected.len() {
        return Err(corrupt(format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape) in &expected {
        let name = r.str()?;
        if &name != want_name {
            return Err(corrupt(format!("expected tensor {want_name}, found {name}")));
        }
        if r.u32()? != 2 {
            return Err(corrupt(format!("tensor {name} must have rank 2")));
        }
        let shape = (r.u64()? as usize, r.u64()? as usize);
        if shape != *want_shape {
            return Err(corrupt(format!("tensor {name} has shape {shape:?}, expected {want_shape:?}")));
        }
        let len = shape.0 * shape.1;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
        let digest = r.take(32)?;
        if Sha256::digest(raw).as_slice() != digest {
            return Err(corrupt(format!("checksum mismatch in tensor {name}")));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint tensor {name}")));
        }
        tensors.push(Array2::from_shape_vec(shape, values).expect("shape checked"));
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes after last tensor"));
    }

    let params = ModelParams::from_tensors(config.num_layers, tensors);
    Ok(ParserModel {
        config,
        labels,
        pos_vocab,
        feature_vocab,
        params,
        metadata,
    })
}

fn expected_shapes(c: &ModelConfig, pos: usize, feats: usize, labels: usize) -> Vec<(String, (usize, usize))> {
    let d = c.model_dim;
    let a = c.attention_width();
    let h = c.label_hidden_dim;
    let mut out = vec![
        ("pos_embedding".to_string(), (pos, d)),
        ("feature_embedding".to_string(), (feats, d)),
        ("position_encoding".to_string(), (c.max_len, d)),
        ("boundary".to_string(), (2, d / 2)),
    ];
    for i in 0..c.num_layers {
        let shapes = [
            ("attn_norm_gain", (1, d)),
            ("attn_norm_bias", (1, d)),
            ("w_query", (d, a)),
            ("w_key", (d, a)),
            ("w_value", (d, a)),
            ("w_out", (a, d)),
            ("ff_norm_gain", (1, d)),
            ("ff_norm_bias", (1, d)),
            ("ff_w1", (d, c.ff_dim)),
            ("ff_b1", (1, c.ff_dim)),
            ("ff_w2", (c.ff_dim, d)),
            ("ff_b2", (1, d)),
        ];
        out.extend(shapes.into_iter().map(|(n, s)| (format!("layer{i}.{n}"), s)));
    }
    out.extend([
        ("label_hidden".to_string(), (d, h)),
        ("label_hidden_bias".to_string(), (1, h)),
        ("label_norm_gain".to_string(), (1, h)),
        ("label_norm_bias".to_string(), (1, h)),
        ("label_output".to_string(), (h, labels - 1)),
        ("label_output_bias".to_string(), (1, labels - 1)),
    ]);
    out
}
