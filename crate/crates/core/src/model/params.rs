use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;

/// Weights of one pre-norm encoder block. Vectors are stored as `1 × m`
/// matrices so that every tensor shares one type.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_norm_gain: Array2<f64>,
    pub attn_norm_bias: Array2<f64>,
    pub w_query: Array2<f64>,
    pub w_key: Array2<f64>,
    pub w_value: Array2<f64>,
    pub w_out: Array2<f64>,
    pub ff_norm_gain: Array2<f64>,
    pub ff_norm_bias: Array2<f64>,
    pub ff_w1: Array2<f64>,
    pub ff_b1: Array2<f64>,
    pub ff_w2: Array2<f64>,
    pub ff_b2: Array2<f64>,
}

/// All trainable tensors. Gradients use the same type.
///
/// The label scorer has one output column per non-empty label; the empty
/// label has no row and scores 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub pos_embedding: Array2<f64>,
    pub feature_embedding: Array2<f64>,
    pub position_encoding: Array2<f64>,
    /// Row 0: forward half left of the first token. Row 1: backward half
    /// right of the last token.
    pub boundary: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub label_hidden: Array2<f64>,
    pub label_hidden_bias: Array2<f64>,
    pub label_norm_gain: Array2<f64>,
    pub label_norm_bias: Array2<f64>,
    pub label_output: Array2<f64>,
    pub label_output_bias: Array2<f64>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || self.rng.random_range(-0.1..0.1))
    }

    /// Gaussian with variance `1 / rows` (the fan-in).
    fn fan_in(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("positive std");
        Array2::from_shape_simple_fn((rows, cols), || normal.sample(&mut self.rng))
    }
}

fn ones(n: usize) -> Array2<f64> {
    Array2::ones((1, n))
}

fn zeros(n: usize) -> Array2<f64> {
    Array2::zeros((1, n))
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, pos_count: usize, feature_count: usize, label_count: usize) -> Self {
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let d = cfg.model_dim;
        let a = cfg.attention_width();
        let pos_embedding = init.uniform(pos_count, d);
        let feature_embedding = init.uniform(feature_count, d);
        let position_encoding = init.uniform(cfg.max_len, d);
        let boundary = init.uniform(2, d / 2);
        let layers = (0..cfg.num_layers)
            .map(|_| LayerParams {
                attn_norm_gain: ones(d),
                attn_norm_bias: zeros(d),
                w_query: init.fan_in(d, a),
                w_key: init.fan_in(d, a),
                w_value: init.fan_in(d, a),
                w_out: init.fan_in(a, d),
                ff_norm_gain: ones(d),
                ff_norm_bias: zeros(d),
                ff_w1: init.fan_in(d, cfg.ff_dim),
                ff_b1: zeros(cfg.ff_dim),
                ff_w2: init.fan_in(cfg.ff_dim, d),
                ff_b2: zeros(d),
            })
            .collect();
        let h = cfg.label_hidden_dim;
        ModelParams {
            pos_embedding,
            feature_embedding,
            position_encoding,
            boundary,
            layers,
            label_hidden: init.fan_in(d, h),
            label_hidden_bias: zeros(h),
            label_norm_gain: ones(h),
            label_norm_bias: zeros(h),
            label_output: init.fan_in(h, label_count - 1),
            label_output_bias: zeros(label_count - 1),
        }
    }

    /// Reassembles parameters from tensors listed in [`tensors`](Self::tensors)
    /// order. Shapes are not checked here.
    pub(crate) fn from_tensors(num_layers: usize, tensors: Vec<Array2<f64>>) -> Self {
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("tensor count checked by caller");
        let pos_embedding = next();
        let feature_embedding = next();
        let position_encoding = next();
        let boundary = next();
        let layers = (0..num_layers)
            .map(|_| LayerParams {
                attn_norm_gain: next(),
                attn_norm_bias: next(),
                w_query: next(),
                w_key: next(),
                w_value: next(),
                w_out: next(),
                ff_norm_gain: next(),
                ff_norm_bias: next(),
                ff_w1: next(),
                ff_b1: next(),
                ff_w2: next(),
                ff_b2: next(),
            })
            .collect();
        ModelParams {
            pos_embedding,
            feature_embedding,
            position_encoding,
            boundary,
            layers,
            label_hidden: next(),
            label_hidden_bias: next(),
            label_norm_gain: next(),
            label_norm_bias: next(),
            label_output: next(),
            label_output_bias: next(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("pos_embedding".to_string(), &self.pos_embedding),
            ("feature_embedding".to_string(), &self.feature_embedding),
            ("position_encoding".to_string(), &self.position_encoding),
            ("boundary".to_string(), &self.boundary),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let named = [
                ("attn_norm_gain", &l.attn_norm_gain),
                ("attn_norm_bias", &l.attn_norm_bias),
                ("w_query", &l.w_query),
                ("w_key", &l.w_key),
                ("w_value", &l.w_value),
                ("w_out", &l.w_out),
                ("ff_norm_gain", &l.ff_norm_gain),
                ("ff_norm_bias", &l.ff_norm_bias),
                ("ff_w1", &l.ff_w1),
                ("ff_b1", &l.ff_b1),
                ("ff_w2", &l.ff_w2),
                ("ff_b2", &l.ff_b2),
            ];
            out.extend(named.into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.extend([
            ("label_hidden".to_string(), &self.label_hidden),
            ("label_hidden_bias".to_string(), &self.label_hidden_bias),
            ("label_norm_gain".to_string(), &self.label_norm_gain),
            ("label_norm_bias".to_string(), &self.label_norm_bias),
            ("label_output".to_string(), &self.label_output),
            ("label_output_bias".to_string(), &self.label_output_bias),
        ]);
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("pos_embedding".to_string(), &mut self.pos_embedding),
            ("feature_embedding".to_string(), &mut self.feature_embedding),
            ("position_encoding".to_string(), &mut self.position_encoding),
            ("boundary".to_string(), &mut self.boundary),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let named = [
                ("attn_norm_gain", &mut l.attn_norm_gain),
                ("attn_norm_bias", &mut l.attn_norm_bias),
                ("w_query", &mut l.w_query),
                ("w_key", &mut l.w_key),
                ("w_value", &mut l.w_value),
                ("w_out", &mut l.w_out),
                ("ff_norm_gain", &mut l.ff_norm_gain),
                ("ff_norm_bias", &mut l.ff_norm_bias),
                ("ff_w1", &mut l.ff_w1),
                ("ff_b1", &mut l.ff_b1),
                ("ff_w2", &mut l.ff_w2),
                ("ff_b2", &mut l.ff_b2),
            ];
            out.extend(named.into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.extend([
            ("label_hidden".to_string(), &mut self.label_hidden),
            ("label_hidden_bias".to_string(), &mut self.label_hidden_bias),
            ("label_norm_gain".to_string(), &mut self.label_norm_gain),
            ("label_norm_bias".to_string(), &mut self.label_norm_bias),
            ("label_output".to_string(), &mut self.label_output),
            ("label_output_bias".to_string(), &mut self.label_output_bias),
        ]);
        out
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}
