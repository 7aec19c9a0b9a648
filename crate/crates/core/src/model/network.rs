use ndarray::{s, Array1, Array2, Axis};

use super::{span_count, InputIds, LayerParams, ModelConfig, ModelParams, ParserModel, SpanScores};
use crate::error::{Error, Result};
use crate::treebank_io::ExtendedTag;

const NORM_EPS: f64 = 1e-5;

struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> (Array2<f64>, NormCache) {
    let width = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / width;
    let centered = x - &mean.insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / width;
    let rstd = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
    let xhat = &centered * &rstd.view().insert_axis(Axis(1));
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array2<f64>,
    d_gain: &mut Array2<f64>,
    d_bias: &mut Array2<f64>,
) -> Array2<f64> {
    *d_gain += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *d_bias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let width = dy.ncols() as f64;
    let dxhat = dy * gain;
    let mean_dxhat = (dxhat.sum_axis(Axis(1)) / width).insert_axis(Axis(1));
    let mean_dxhat_xhat = ((&dxhat * &cache.xhat).sum_axis(Axis(1)) / width).insert_axis(Axis(1));
    (dxhat - &mean_dxhat - &(&cache.xhat * &mean_dxhat_xhat)) * &cache.rstd.view().insert_axis(Axis(1))
}

fn softmax_rows(mut x: Array2<f64>) -> Array2<f64> {
    for mut row in x.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    x
}

fn column_sums(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

struct LayerCache {
    attn_norm: NormCache,
    normed_in: Array2<f64>,
    query: Array2<f64>,
    key: Array2<f64>,
    value: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attended: Array2<f64>,
    ff_norm: NormCache,
    normed_mid: Array2<f64>,
    pre_relu: Array2<f64>,
    hidden: Array2<f64>,
}

fn layer_forward(p: &LayerParams, cfg: &ModelConfig, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
    let n = x.nrows();
    let dh = cfg.head_dim;
    let scale = 1.0 / (dh as f64).sqrt();
    let (normed_in, attn_norm) = layer_norm(&x, &p.attn_norm_gain, &p.attn_norm_bias);
    let query = normed_in.dot(&p.w_query);
    let key = normed_in.dot(&p.w_key);
    let value = normed_in.dot(&p.w_value);
    let mut attended = Array2::zeros((n, cfg.attention_width()));
    let mut probs = Vec::with_capacity(cfg.num_heads);
    for h in 0..cfg.num_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let logits = query.slice(cols).dot(&key.slice(cols).t()) * scale;
        let p_h = softmax_rows(logits);
        attended.slice_mut(cols).assign(&p_h.dot(&value.slice(cols)));
        probs.push(p_h);
    }
    let mid = x + attended.dot(&p.w_out);
    let (normed_mid, ff_norm) = layer_norm(&mid, &p.ff_norm_gain, &p.ff_norm_bias);
    let pre_relu = normed_mid.dot(&p.ff_w1) + &p.ff_b1;
    let hidden = pre_relu.mapv(|v| v.max(0.0));
    let out = mid + hidden.dot(&p.ff_w2) + &p.ff_b2;
    let cache = LayerCache {
        attn_norm,
        normed_in,
        query,
        key,
        value,
        probs,
        attended,
        ff_norm,
        normed_mid,
        pre_relu,
        hidden,
    };
    (out, cache)
}

fn layer_backward(p: &LayerParams, g: &mut LayerParams, cfg: &ModelConfig, c: &LayerCache, d_out: Array2<f64>) -> Array2<f64> {
    let dh = cfg.head_dim;
    let scale = 1.0 / (dh as f64).sqrt();

    g.ff_w2 += &c.hidden.t().dot(&d_out);
    g.ff_b2 += &column_sums(&d_out);
    let mut d_pre = d_out.dot(&p.ff_w2.t());
    d_pre.zip_mut_with(&c.pre_relu, |d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    g.ff_w1 += &c.normed_mid.t().dot(&d_pre);
    g.ff_b1 += &column_sums(&d_pre);
    let d_normed_mid = d_pre.dot(&p.ff_w1.t());
    let d_mid = d_out
        + layer_norm_backward(
            &d_normed_mid,
            &c.ff_norm,
            &p.ff_norm_gain,
            &mut g.ff_norm_gain,
            &mut g.ff_norm_bias,
        );

    g.w_out += &c.attended.t().dot(&d_mid);
    let d_attended = d_mid.dot(&p.w_out.t());
    let mut d_query = Array2::zeros(c.query.raw_dim());
    let mut d_key = Array2::zeros(c.key.raw_dim());
    let mut d_value = Array2::zeros(c.value.raw_dim());
    for (h, p_h) in c.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let d_head = d_attended.slice(cols);
        let d_probs = d_head.dot(&c.value.slice(cols).t());
        d_value.slice_mut(cols).assign(&p_h.t().dot(&d_head));
        let row_dot = (&d_probs * p_h).sum_axis(Axis(1)).insert_axis(Axis(1));
        let d_logits = (d_probs - &row_dot) * p_h * scale;
        d_query.slice_mut(cols).assign(&d_logits.dot(&c.key.slice(cols)));
        d_key.slice_mut(cols).assign(&d_logits.t().dot(&c.query.slice(cols)));
    }
    g.w_query += &c.normed_in.t().dot(&d_query);
    g.w_key += &c.normed_in.t().dot(&d_key);
    g.w_value += &c.normed_in.t().dot(&d_value);
    let d_normed_in = d_query.dot(&p.w_query.t()) + d_key.dot(&p.w_key.t()) + d_value.dot(&p.w_value.t());
    d_mid
        + layer_norm_backward(
            &d_normed_in,
            &c.attn_norm,
            &p.attn_norm_gain,
            &mut g.attn_norm_gain,
            &mut g.attn_norm_bias,
        )
}

pub(super) fn embed(model: &ParserModel, ids: &InputIds) -> Array2<f64> {
    let p = &model.params;
    let n = ids.pos.len();
    let mut x = Array2::zeros((n, model.config.model_dim));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &p.pos_embedding.row(ids.pos[i]);
        for &f in &ids.features[i] {
            row += &p.feature_embedding.row(f);
        }
        row += &p.position_encoding.row(i);
    }
    x
}

fn check_finite(x: &Array2<f64>, what: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what()))
    }
}

/// Fencepost `k` joins the forward half of token `k - 1` and the backward
/// half of token `k`; the missing halves at both ends are learned.
fn fenceposts(h: &Array2<f64>, boundary: &Array2<f64>) -> Array2<f64> {
    let n = h.nrows();
    let half = h.ncols() / 2;
    let mut f = Array2::zeros((n + 1, 2 * half));
    f.slice_mut(s![0, ..half]).assign(&boundary.row(0));
    f.slice_mut(s![1.., ..half]).assign(&h.slice(s![.., ..half]));
    f.slice_mut(s![..n, half..]).assign(&h.slice(s![.., half..]));
    f.slice_mut(s![n, half..]).assign(&boundary.row(1));
    f
}

fn fenceposts_backward(d_f: &Array2<f64>, d_boundary: &mut Array2<f64>) -> Array2<f64> {
    let n = d_f.nrows() - 1;
    let half = d_f.ncols() / 2;
    let mut dh = Array2::zeros((n, 2 * half));
    dh.slice_mut(s![.., ..half]).assign(&d_f.slice(s![1.., ..half]));
    dh.slice_mut(s![.., half..]).assign(&d_f.slice(s![..n, half..]));
    let mut b0 = d_boundary.row_mut(0);
    b0 += &d_f.slice(s![0, ..half]);
    let mut b1 = d_boundary.row_mut(1);
    b1 += &d_f.slice(s![n, half..]);
    dh
}

pub(super) struct EncoderCache {
    layers: Vec<LayerCache>,
}

pub(super) fn encode(params: &ModelParams, cfg: &ModelConfig, x: Array2<f64>) -> Result<(Array2<f64>, EncoderCache)> {
    check_finite(&x, || "encoder input".to_string())?;
    let mut h = x;
    let mut layers = Vec::with_capacity(params.layers.len());
    for (l, p) in params.layers.iter().enumerate() {
        let (out, cache) = layer_forward(p, cfg, h);
        check_finite(&out, || format!("encoder layer {l}"))?;
        h = out;
        layers.push(cache);
    }
    Ok((fenceposts(&h, &params.boundary), EncoderCache { layers }))
}

pub(super) struct SpanCache {
    diffs: Array2<f64>,
    norm: NormCache,
    normed: Array2<f64>,
    hidden: Array2<f64>,
}

pub(super) fn span_scores(params: &ModelParams, f: &Array2<f64>, num_labels: usize) -> (SpanScores, SpanCache) {
    let n = f.nrows() - 1;
    let mut diffs = Array2::zeros((span_count(n), f.ncols()));
    let mut rows = diffs.rows_mut().into_iter();
    for i in 0..n {
        for j in i + 1..=n {
            let mut row = rows.next().expect("span row");
            row.assign(&f.row(j));
            row -= &f.row(i);
        }
    }
    let pre = diffs.dot(&params.label_hidden) + &params.label_hidden_bias;
    let (normed, norm) = layer_norm(&pre, &params.label_norm_gain, &params.label_norm_bias);
    let hidden = normed.mapv(|v| v.max(0.0));
    let out = hidden.dot(&params.label_output) + &params.label_output_bias;
    let mut scores = SpanScores::zeros(n, num_labels);
    for (s, row) in out.rows().into_iter().enumerate() {
        let base = s * num_labels;
        for (l, &v) in row.iter().enumerate() {
            scores.data[base + l + 1] = v;
        }
    }
    (
        scores,
        SpanCache {
            diffs,
            norm,
            normed,
            hidden,
        },
    )
}

fn span_backward(params: &ModelParams, g: &mut ModelParams, c: &SpanCache, d_out: &Array2<f64>, n: usize) -> Array2<f64> {
    g.label_output += &c.hidden.t().dot(d_out);
    g.label_output_bias += &column_sums(d_out);
    let mut d_normed = d_out.dot(&params.label_output.t());
    d_normed.zip_mut_with(&c.normed, |d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    let d_pre = layer_norm_backward(
        &d_normed,
        &c.norm,
        &params.label_norm_gain,
        &mut g.label_norm_gain,
        &mut g.label_norm_bias,
    );
    g.label_hidden += &c.diffs.t().dot(&d_pre);
    g.label_hidden_bias += &column_sums(&d_pre);
    let d_diffs = d_pre.dot(&params.label_hidden.t());
    let mut d_f = Array2::zeros((n + 1, c.diffs.ncols()));
    let mut s = 0;
    for i in 0..n {
        for j in i + 1..=n {
            let row = d_diffs.row(s);
            let mut fj = d_f.row_mut(j);
            fj += &row;
            let mut fi = d_f.row_mut(i);
            fi -= &row;
            s += 1;
        }
    }
    d_f
}

/// A full forward pass over one sentence with everything needed for
/// backpropagation.
pub struct ForwardPass {
    ids: InputIds,
    encoder: EncoderCache,
    spans: SpanCache,
    pub scores: SpanScores,
}

impl ForwardPass {
    pub fn run(model: &ParserModel, tags: &[ExtendedTag]) -> Result<Self> {
        model.check_length(tags.len())?;
        let ids = model.input_ids(tags);
        let x = embed(model, &ids);
        let (f, encoder) = encode(&model.params, &model.config, x)?;
        let (scores, spans) = span_scores(&model.params, &f, model.labels.len());
        Ok(ForwardPass {
            ids,
            encoder,
            spans,
            scores,
        })
    }

    /// Gradients of `sum(coef * score(i, j, label))` over the given entries.
    /// Entries with the empty label are ignored.
    pub fn backward(&self, model: &ParserModel, d_scores: &[(usize, usize, usize, f64)]) -> ModelParams {
        let params = &model.params;
        let cfg = &model.config;
        let n = self.scores.len();
        let mut g = params.zeros_like();
        let mut d_out = Array2::zeros((span_count(n), model.labels.len() - 1));
        for &(i, j, l, coef) in d_scores {
            if l > 0 {
                d_out[[super::span_index(n, i, j), l - 1]] += coef;
            }
        }
        let d_f = span_backward(params, &mut g, &self.spans, &d_out, n);
        let mut dx = fenceposts_backward(&d_f, &mut g.boundary);
        for (l, cache) in self.encoder.layers.iter().enumerate().rev() {
            dx = layer_backward(&params.layers[l], &mut g.layers[l], cfg, cache, dx);
        }
        for (i, row) in dx.rows().into_iter().enumerate() {
            let mut pos = g.pos_embedding.row_mut(self.ids.pos[i]);
            pos += &row;
            for &f in &self.ids.features[i] {
                let mut feat = g.feature_embedding.row_mut(f);
                feat += &row;
            }
            let mut position = g.position_encoding.row_mut(i);
            position += &row;
        }
        g
    }
}
