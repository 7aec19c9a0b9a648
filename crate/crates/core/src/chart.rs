//! Exact CKY decoding over span scores, loss-augmented decoding, the
//! training loop and batch parsing.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalb::{score_corpus, EvalConfig};
use crate::model::{span_index, ModelConfig, ModelParams, ParserModel, SpanScores, Vocab};
use crate::transform::{debinarize, EMPTY_LABEL};
use crate::treebank_io::{ExtendedTag, Tree, DEFAULT_MORPH_SEPARATOR};

/// A labeled span over fenceposts, with the label as an inventory index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChartSpan {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

/// Best scores, labels and split points for every span.
#[derive(Debug, Clone)]
pub struct Chart {
    n: usize,
    best_score: Vec<f64>,
    best_label: Vec<usize>,
    best_split: Vec<usize>,
}

impl Chart {
    pub fn best_score(&self, i: usize, j: usize) -> f64 {
        self.best_score[span_index(self.n, i, j)]
    }

    pub fn best_label(&self, i: usize, j: usize) -> usize {
        self.best_label[span_index(self.n, i, j)]
    }

    /// Split point of a span of length at least 2.
    pub fn best_split(&self, i: usize, j: usize) -> usize {
        self.best_split[span_index(self.n, i, j)]
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    /// Binarized tree; preterminals carry the part of speech and leaves the
    /// serialized tag.
    pub tree: Tree,
    /// Spans with a non-empty label.
    pub spans: Vec<ChartSpan>,
    /// Objective value of the tree: the sum of its span scores, plus the
    /// Hamming cost for loss-augmented decoding.
    pub score: f64,
}

fn check_inputs(scores: &SpanScores, labels: &[String], tags: &[ExtendedTag]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("cannot decode an empty sentence".into()));
    }
    if tags.len() != scores.len() {
        return Err(Error::InvalidArgument(format!(
            "{} tags for a score tensor over {} tokens",
            tags.len(),
            scores.len()
        )));
    }
    if labels.len() != scores.num_labels() || labels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a score tensor with {} label columns",
            labels.len(),
            scores.num_labels()
        )));
    }
    Ok(())
}

fn fill_chart(scores: &SpanScores, bonus: impl Fn(usize, usize, usize) -> f64) -> Chart {
    let n = scores.len();
    let size = crate::model::span_count(n);
    let mut chart = Chart {
        n,
        best_score: vec![0.0; size],
        best_label: vec![0; size],
        best_split: vec![0; size],
    };
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            // The root span must carry a real label.
            let first = if len == n { 1 } else { 0 };
            let mut label = first;
            let mut label_score = scores.get(i, j, first) + bonus(i, j, first);
            for l in first + 1..scores.num_labels() {
                let s = scores.get(i, j, l) + bonus(i, j, l);
                if s > label_score {
                    label = l;
                    label_score = s;
                }
            }
            let mut split = 0;
            let mut split_score = 0.0;
            if len >= 2 {
                split_score = f64::NEG_INFINITY;
                for k in i + 1..j {
                    let s = chart.best_score(i, k) + chart.best_score(k, j);
                    if s > split_score {
                        split = k;
                        split_score = s;
                    }
                }
            }
            let idx = span_index(n, i, j);
            chart.best_score[idx] = label_score + split_score;
            chart.best_label[idx] = label;
            chart.best_split[idx] = split;
        }
    }
    chart
}

fn build(chart: &Chart, labels: &[String], tags: &[ExtendedTag], i: usize, j: usize, spans: &mut Vec<ChartSpan>) -> Tree {
    let label = chart.best_label(i, j);
    let children = if j - i == 1 {
        vec![Tree::preterminal(tags[i].pos.clone(), &tags[i].to_string())]
    } else {
        let k = chart.best_split(i, j);
        vec![build(chart, labels, tags, i, k, spans), build(chart, labels, tags, k, j, spans)]
    };
    if label == 0 {
        if j - i == 1 {
            return children.into_iter().next().expect("one child");
        }
        return Tree::node(EMPTY_LABEL, children);
    }
    spans.push(ChartSpan { start: i, end: j, label });
    Tree::node(labels[label].clone(), children)
}

fn decode_with(
    scores: &SpanScores,
    labels: &[String],
    tags: &[ExtendedTag],
    bonus: impl Fn(usize, usize, usize) -> f64,
) -> Result<(Chart, Tree, Vec<ChartSpan>)> {
    check_inputs(scores, labels, tags)?;
    let chart = fill_chart(scores, bonus);
    let mut spans = Vec::new();
    let tree = build(&chart, labels, tags, 0, scores.len(), &mut spans);
    spans.sort();
    Ok((chart, tree, spans))
}

/// Highest-scoring binarized tree. Ties go to the lowest label index, then
/// to the smallest split point.
pub fn cky_decode(scores: &SpanScores, labels: &[String], tags: &[ExtendedTag]) -> Result<Decoded> {
    let (chart, tree, spans) = decode_with(scores, labels, tags, |_, _, _| 0.0)?;
    Ok(Decoded {
        tree,
        spans,
        score: chart.best_score(0, scores.len()),
    })
}

/// The chart itself, for inspection.
pub fn fill(scores: &SpanScores) -> Chart {
    fill_chart(scores, |_, _, _| 0.0)
}

/// Decoding under `score + Hamming cost`: a non-empty label gains 1 where
/// it is not a gold span and loses 1 where it is, which differs from the
/// symmetric Hamming distance only by the constant number of gold spans.
pub fn loss_augmented_decode(scores: &SpanScores, gold: &[ChartSpan], labels: &[String], tags: &[ExtendedTag]) -> Result<Decoded> {
    let gold_labels: HashMap<(usize, usize), usize> = gold
        .iter()
        .filter(|s| s.label != 0)
        .map(|s| ((s.start, s.end), s.label))
        .collect();
    let bonus = |i: usize, j: usize, l: usize| -> f64 {
        match (l, gold_labels.get(&(i, j))) {
            (0, _) => 0.0,
            (l, Some(&g)) if g == l => -1.0,
            _ => 1.0,
        }
    };
    let (chart, tree, spans) = decode_with(scores, labels, tags, bonus)?;
    Ok(Decoded {
        tree,
        spans,
        score: chart.best_score(0, scores.len()) + gold_labels.len() as f64,
    })
}

/// Sum of span scores; empty-label spans contribute nothing.
pub fn tree_score(scores: &SpanScores, spans: &[ChartSpan]) -> f64 {
    spans
        .iter()
        .filter(|s| s.label != 0)
        .map(|s| scores.get(s.start, s.end, s.label))
        .sum()
}

/// Labeled spans, ignoring empty labels, present in exactly one of the two
/// trees.
pub fn hamming(a: &[ChartSpan], b: &[ChartSpan]) -> usize {
    let a: HashSet<&ChartSpan> = a.iter().filter(|s| s.label != 0).collect();
    let b: HashSet<&ChartSpan> = b.iter().filter(|s| s.label != 0).collect();
    a.symmetric_difference(&b).count()
}

/// Chart spans of a binarized tree: one per internal non-preterminal node,
/// including empty-label nodes (label 0).
pub fn tree_chart_spans(tree: &Tree, label_index: &HashMap<&str, usize>) -> Result<Vec<ChartSpan>> {
    if tree.is_preterminal() {
        return Err(Error::MalformedTree("tree has no constituent above its preterminals".into()));
    }
    let mut spans = Vec::new();
    let mut position = 0;
    collect_chart_spans(tree, label_index, &mut position, &mut spans)?;
    spans.sort();
    Ok(spans)
}

fn collect_chart_spans(
    tree: &Tree,
    label_index: &HashMap<&str, usize>,
    position: &mut usize,
    out: &mut Vec<ChartSpan>,
) -> Result<()> {
    match tree {
        Tree::Leaf(tok) => Err(Error::MalformedTree(format!("leaf {tok:?} outside a preterminal"))),
        Tree::Node { children, .. } if tree.is_preterminal() => {
            if children.len() != 1 {
                return Err(Error::MalformedTree("preterminal with several leaves".into()));
            }
            *position += 1;
            Ok(())
        }
        Tree::Node { label, children } => {
            if children.len() > 2 {
                return Err(Error::MalformedTree(format!("node {label} is not binarized")));
            }
            if children.len() == 1 && !children[0].is_preterminal() {
                return Err(Error::MalformedTree(format!("unary chain below {label} is not collapsed")));
            }
            let start = *position;
            for c in children {
                collect_chart_spans(c, label_index, position, out)?;
            }
            let Some(&idx) = label_index.get(label.as_str()) else {
                return Err(Error::InvalidArgument(format!("label {label} is not in the inventory")));
            };
            out.push(ChartSpan {
                start,
                end: *position,
                label: idx,
            });
            Ok(())
        }
    }
}

impl ParserModel {
    /// Structured hinge loss with its gradient.
    ///
    /// `gold` must be binarized over the same tokens. The loss is
    /// `max(0, score(T) + Δ(T, gold) - score(gold))` for the loss-augmented
    /// argmax `T`, where Δ counts labeled spans present in exactly one tree.
    pub fn loss_and_gradients(&self, tags: &[ExtendedTag], gold: &Tree) -> Result<(f64, ModelParams)> {
        let spans = self.gold_spans(tags, gold)?;
        self.loss_and_gradients_for_spans(tags, &spans)
    }

    /// Loss without gradients.
    pub fn loss(&self, tags: &[ExtendedTag], gold: &Tree) -> Result<f64> {
        let spans = self.gold_spans(tags, gold)?;
        let scores = self.score_sentence(tags)?;
        let pred = loss_augmented_decode(&scores, &spans, &self.labels, tags)?;
        Ok(hinge(&scores, &pred.spans, &spans))
    }

    fn gold_spans(&self, tags: &[ExtendedTag], gold: &Tree) -> Result<Vec<ChartSpan>> {
        if gold.leaf_count() != tags.len() {
            return Err(Error::InvalidArgument(format!(
                "gold tree has {} leaves for {} tags",
                gold.leaf_count(),
                tags.len()
            )));
        }
        tree_chart_spans(gold, &self.label_index())
    }

    pub(crate) fn loss_and_gradients_for_spans(&self, tags: &[ExtendedTag], gold: &[ChartSpan]) -> Result<(f64, ModelParams)> {
        let pass = crate::model::ForwardPass::run(self, tags)?;
        let pred = loss_augmented_decode(&pass.scores, gold, &self.labels, tags)?;
        let loss = hinge(&pass.scores, &pred.spans, gold);
        if loss <= 0.0 {
            return Ok((0.0, self.params.zeros_like()));
        }
        let d_scores: Vec<(usize, usize, usize, f64)> = pred
            .spans
            .iter()
            .map(|s| (s.start, s.end, s.label, 1.0))
            .chain(gold.iter().map(|s| (s.start, s.end, s.label, -1.0)))
            .collect();
        Ok((loss, pass.backward(self, &d_scores)))
    }

    /// Binarized best tree for one tag sequence.
    pub fn parse_binarized(&self, tags: &[ExtendedTag]) -> Result<Decoded> {
        let scores = self.score_sentence(tags)?;
        cky_decode(&scores, &self.labels, tags)
    }

    /// Best tree for one tag sequence, with binarization undone.
    pub fn parse(&self, tags: &[ExtendedTag]) -> Result<Tree> {
        debinarize(&self.parse_binarized(tags)?.tree)
    }
}

fn hinge(scores: &SpanScores, pred: &[ChartSpan], gold: &[ChartSpan]) -> f64 {
    let loss = tree_score(scores, pred) + hamming(pred, gold) as f64 - tree_score(scores, gold);
    loss.max(0.0)
}

/// Parses every sentence; failures are returned per sentence.
pub fn parse_corpus(model: &ParserModel, sentences: &[Vec<ExtendedTag>]) -> Vec<Result<Tree>> {
    sentences.par_iter().map(|tags| model.parse(tags)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adaptive moments with β1 0.9, β2 0.999, ε 1e-8.
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub shuffle: bool,
    /// Dev evaluation and best-checkpoint selection happen every this many
    /// epochs.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 1,
            optimizer: Optimizer::Adam,
            shuffle: true,
            checkpoint_every: 1,
        }
    }

    /// Batch 32, learning rate 5e-5.
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 5e-5,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("epochs, batch_size and checkpoint_every must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive and finite".into()));
        }
        Ok(())
    }
}

struct AdamState {
    first: ModelParams,
    second: ModelParams,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(params: &mut ModelParams, grads: &ModelParams, cfg: &TrainConfig, state: &mut Option<AdamState>) {
    match cfg.optimizer {
        Optimizer::Sgd => {
            for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                p.scaled_add(-cfg.learning_rate, g);
            }
        }
        Optimizer::Adam => {
            let st = state.get_or_insert_with(|| AdamState {
                first: params.zeros_like(),
                second: params.zeros_like(),
                step: 0,
            });
            st.step += 1;
            let c1 = 1.0 - BETA1.powi(st.step);
            let c2 = 1.0 - BETA2.powi(st.step);
            let lr = cfg.learning_rate;
            let tensors = params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(st.first.tensors_mut())
                .zip(st.second.tensors_mut());
            for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
                ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
            }
        }
    }
}

/// A delexicalized (or lexicalized) sentence with its binarized gold tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub inputs: Vec<ExtendedTag>,
    pub gold: Tree,
}

impl TrainingExample {
    /// Reads the model inputs off the leaves: extended tags, or bare words
    /// when `lexicalized`.
    pub fn from_tree(gold: Tree, lexicalized: bool, separator: char) -> Result<Self> {
        let inputs = gold
            .leaves()
            .into_iter()
            .map(|leaf| {
                if lexicalized {
                    Ok(ExtendedTag::word(leaf))
                } else {
                    ExtendedTag::parse_with(leaf, separator)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingExample { inputs, gold })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean hinge loss per training sentence.
    pub train_loss: f64,
    pub dev_f1: Option<f64>,
}

impl EpochRecord {
    /// `epoch<TAB>train_loss<TAB>dev_F1`.
    pub fn log_line(&self) -> String {
        let dev = self.dev_f1.map_or_else(|| "NA".to_string(), |f| format!("{f:.2}"));
        format!("{}\t{:.6}\t{}", self.epoch, self.train_loss, dev)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ParserModel,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Trains on binarized trees whose leaves are serialized tags.
pub fn train(train_trees: &[Tree], dev_trees: &[Tree], mconfig: &ModelConfig, tconfig: &TrainConfig) -> Result<TrainOutcome> {
    let to_examples = |trees: &[Tree]| -> Result<Vec<TrainingExample>> {
        trees
            .iter()
            .map(|t| TrainingExample::from_tree(t.clone(), mconfig.lexicalized, DEFAULT_MORPH_SEPARATOR))
            .collect()
    };
    train_examples(
        &to_examples(train_trees)?,
        &to_examples(dev_trees)?,
        mconfig,
        tconfig,
        &EvalConfig::default(),
        &mut |_| {},
    )
}

/// Builds the inventories from `train`, then runs mini-batch subgradient
/// training. After every `checkpoint_every` epochs the dev set is parsed
/// and the parameters with the best dev F1 are kept; without a dev set the
/// final parameters are returned. Epoch 0 reports the untrained model.
pub fn train_examples(
    train: &[TrainingExample],
    dev: &[TrainingExample],
    mconfig: &ModelConfig,
    tconfig: &TrainConfig,
    eval: &EvalConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    tconfig.validate()?;
    let mut model = init_model(train, mconfig)?;
    let label_index = model.label_index();
    let gold: Vec<Vec<ChartSpan>> = train
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            model.check_length(ex.inputs.len())?;
            tree_chart_spans(&ex.gold, &label_index)
                .map_err(|e| Error::InvalidArgument(format!("training tree {i}: {e}")))
        })
        .collect::<Result<_>>()?;
    drop(label_index);
    let dev_gold: Vec<Tree> = dev.iter().map(|ex| debinarize(&ex.gold)).collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(tconfig.seed);
    let mut adam = None;
    let mut history = Vec::new();

    let initial_loss = train
        .par_iter()
        .zip(&gold)
        .map(|(ex, g)| model.loss_and_gradients_for_spans(&ex.inputs, g).map(|(l, _)| l))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>()
        / train.len() as f64;
    let dev_f1 = dev_score(&model, dev, &dev_gold, eval)?;
    let mut best = (dev_f1.unwrap_or(f64::NEG_INFINITY), 0, model.params.clone());
    let record = EpochRecord {
        epoch: 0,
        train_loss: initial_loss,
        dev_f1,
    };
    on_epoch(&record);
    history.push(record);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=tconfig.epochs {
        if tconfig.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for batch in order.chunks(tconfig.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| model.loss_and_gradients_for_spans(&train[i].inputs, &gold[i]))
                .collect::<Result<Vec<_>>>()?;
            let batch_loss: f64 = results.iter().map(|(l, _)| l).sum();
            total += batch_loss;
            if batch_loss > 0.0 {
                let mut grads = model.params.zeros_like();
                for (_, g) in &results {
                    grads.add_assign(g);
                }
                apply_update(&mut model.params, &grads, tconfig, &mut adam);
                if !model.params.is_finite() {
                    return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
                }
            }
        }
        let evaluate = epoch % tconfig.checkpoint_every == 0 || epoch == tconfig.epochs || total == 0.0;
        let dev_f1 = if evaluate { dev_score(&model, dev, &dev_gold, eval)? } else { None };
        match dev_f1 {
            Some(f1) if f1 > best.0 => best = (f1, epoch, model.params.clone()),
            None if dev.is_empty() => best = (f64::NEG_INFINITY, epoch, model.params.clone()),
            _ => {}
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            dev_f1,
        };
        on_epoch(&record);
        history.push(record);
        // No sentence produced an update, so further epochs change nothing.
        if total == 0.0 {
            break;
        }
    }
    model.params = best.2;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.1,
    })
}

fn init_model(train: &[TrainingExample], mconfig: &ModelConfig) -> Result<ParserModel> {
    let pos_vocab = Vocab::build(train.iter().flat_map(|ex| ex.inputs.iter().map(|t| t.pos.as_str())));
    let feature_vocab = Vocab::build(
        train
            .iter()
            .flat_map(|ex| ex.inputs.iter().flat_map(|t| t.features.iter().map(String::as_str))),
    );
    let mut labels = Vec::new();
    for ex in train {
        ex.gold.walk(&mut |t| {
            if let Some(label) = t.label() {
                if !t.is_preterminal() && label != EMPTY_LABEL {
                    labels.push(label.to_string());
                }
            }
        });
    }
    ParserModel::new(mconfig.clone(), labels, pos_vocab, feature_vocab)
}

fn dev_score(model: &ParserModel, dev: &[TrainingExample], dev_gold: &[Tree], eval: &EvalConfig) -> Result<Option<f64>> {
    if dev.is_empty() {
        return Ok(None);
    }
    let inputs: Vec<Vec<ExtendedTag>> = dev.iter().map(|ex| ex.inputs.clone()).collect();
    let predicted = parse_corpus(model, &inputs);
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (g, p) in dev_gold.iter().zip(predicted) {
        let Ok(p) = p else {
            // Unparseable (over-length) sentences are left out.
            continue;
        };
        // Predicted preterminals take the gold labels so that punctuation is
        // recognised the same way on both sides, also for word inputs.
        let labels: Vec<&str> = g.preterminals().into_iter().map(|(label, _)| label).collect();
        pred.push(relabel_preterminals(&p, &labels));
        gold.push(g.clone());
    }
    Ok(Some(score_corpus(&gold, &pred, eval)?.result.fscore))
}

/// Replaces preterminal labels left to right with `labels`.
pub fn relabel_preterminals(tree: &Tree, labels: &[&str]) -> Tree {
    fn go(t: &Tree, labels: &[&str], next: &mut usize) -> Tree {
        match t {
            Tree::Leaf(_) => t.clone(),
            Tree::Node { label, children } => {
                if t.is_preterminal() {
                    let l = labels.get(*next).map_or(label.as_str(), |l| l);
                    *next += 1;
                    Tree::node(l, children.clone())
                } else {
                    Tree::node(label.clone(), children.iter().map(|c| go(c, labels, next)).collect())
                }
            }
        }
    }
    go(tree, labels, &mut 0)
}
