//! Averaged-perceptron part-of-speech tagger predicting full extended tags
//! with greedy left-to-right decoding.
//!
//! Model files are text: a `#tagger<TAB>1` header, one `#tag<TAB>TAG` line
//! per inventory entry, then `feature<TAB>tag<TAB>weight` lines sorted by
//! feature and tag.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::treebank_io::{ExtendedTag, TaggedSentence};

pub const TAGGER_FORMAT_VERSION: u32 = 1;
const START: &str = "<S>";
const END: &str = "</S>";

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    /// Sorted serialized tags.
    tags: Vec<String>,
    /// Sparse weights per feature, keyed by tag index.
    weights: HashMap<String, Vec<(u32, f64)>>,
    pub version: u32,
}

impl TaggerModel {
    pub fn tag_inventory(&self) -> &[String] {
        &self.tags
    }

    fn predict(&self, features: &[String]) -> usize {
        let mut scores = vec![0.0; self.tags.len()];
        for f in features {
            if let Some(ws) = self.weights.get(f) {
                for &(t, w) in ws {
                    scores[t as usize] += w;
                }
            }
        }
        argmax(&scores)
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn features(tokens: &[String], i: usize, prev_tag: &str) -> Vec<String> {
    let w = tokens[i].as_str();
    let prev = if i == 0 { START } else { tokens[i - 1].as_str() };
    let next = tokens.get(i + 1).map_or(END, String::as_str);
    let chars: Vec<char> = w.chars().collect();
    let mut f = Vec::with_capacity(16);
    f.push("bias".to_string());
    f.push(format!("w={w}"));
    f.push(format!("w-1={prev}"));
    f.push(format!("w+1={next}"));
    f.push(format!("t-1={prev_tag}"));
    for k in 1..=chars.len().min(4) {
        f.push(format!("p{k}={}", chars[..k].iter().collect::<String>()));
        f.push(format!("s{k}={}", chars[chars.len() - k..].iter().collect::<String>()));
    }
    if chars.iter().any(char::is_ascii_digit) {
        f.push("digit".to_string());
    }
    if chars.first().is_some_and(|c| c.is_uppercase()) {
        f.push("cap".to_string());
    }
    f
}

#[derive(Default, Clone, Copy)]
struct Acc {
    weight: f64,
    total: f64,
    stamp: u64,
}

/// Trains for `epochs` passes over `corpus` in seeded random order.
pub fn train_tagger(corpus: &[TaggedSentence], epochs: usize, seed: u64) -> Result<TaggerModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty tagger training corpus".into()));
    }
    if epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be positive".into()));
    }
    let mut tags: Vec<String> = corpus.iter().flat_map(|s| s.tags.iter().map(ToString::to_string)).collect();
    tags.sort();
    tags.dedup();
    let index: HashMap<&str, usize> = tags.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let gold: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.tags.iter().map(|t| index[t.to_string().as_str()]).collect())
        .collect();

    let mut acc: HashMap<String, HashMap<u32, Acc>> = HashMap::new();
    let mut clock: u64 = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut scores = vec![0.0; tags.len()];
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &s in &order {
            let tokens = &corpus[s].tokens;
            let mut prev = START.to_string();
            for i in 0..tokens.len() {
                clock += 1;
                let feats = features(tokens, i, &prev);
                scores.iter_mut().for_each(|x| *x = 0.0);
                for f in &feats {
                    if let Some(ws) = acc.get(f) {
                        for (&t, a) in ws {
                            scores[t as usize] += a.weight;
                        }
                    }
                }
                let guess = argmax(&scores);
                let truth = gold[s][i];
                if guess != truth {
                    for f in &feats {
                        let entry = acc.entry(f.clone()).or_default();
                        for (t, delta) in [(truth, 1.0), (guess, -1.0)] {
                            let a = entry.entry(t as u32).or_default();
                            a.total += (clock - a.stamp) as f64 * a.weight;
                            a.stamp = clock;
                            a.weight += delta;
                        }
                    }
                }
                prev = tags[guess].clone();
            }
        }
    }

    let mut weights = HashMap::new();
    for (f, ws) in acc {
        let mut averaged: Vec<(u32, f64)> = ws
            .into_iter()
            .map(|(t, a)| (t, (a.total + (clock - a.stamp) as f64 * a.weight) / clock as f64))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        if !averaged.is_empty() {
            averaged.sort_by_key(|&(t, _)| t);
            weights.insert(f, averaged);
        }
    }
    Ok(TaggerModel {
        tags,
        weights,
        version: TAGGER_FORMAT_VERSION,
    })
}

/// Greedy decoding; every output tag comes from the model inventory.
pub fn tag_sentence(model: &TaggerModel, tokens: &[String]) -> Result<TaggedSentence> {
    let mut prev = START.to_string();
    let mut out = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() {
        let t = model.predict(&features(tokens, i, &prev));
        prev = model.tags[t].clone();
        out.push(ExtendedTag::parse(&model.tags[t])?);
    }
    TaggedSentence::new(tokens.to_vec(), out)
}

/// Tags sentences in parallel, preserving order.
pub fn tag_corpus(model: &TaggerModel, sentences: &[Vec<String>]) -> Vec<Result<TaggedSentence>> {
    sentences.par_iter().map(|s| tag_sentence(model, s)).collect()
}

/// Fraction of tokens whose full serialized tag matches.
pub fn tagger_accuracy(gold: &[TaggedSentence], pred: &[TaggedSentence]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let (mut total, mut correct) = (0usize, 0usize);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::InvalidArgument(format!(
                "sentence {i}: {} gold tokens but {} predicted",
                g.len(),
                p.len()
            )));
        }
        total += g.len();
        correct += g.tags.iter().zip(&p.tags).filter(|(a, b)| a.to_string() == b.to_string()).count();
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no tokens to compare".into()));
    }
    Ok(correct as f64 / total as f64)
}

pub fn write_tagger_model(model: &TaggerModel) -> String {
    let mut out = format!("#tagger\t{}\n", model.version);
    for t in &model.tags {
        let _ = writeln!(out, "#tag\t{t}");
    }
    let sorted: BTreeMap<&String, &Vec<(u32, f64)>> = model.weights.iter().collect();
    for (f, ws) in sorted {
        let mut ws: Vec<(&str, f64)> = ws.iter().map(|&(t, w)| (model.tags[t as usize].as_str(), w)).collect();
        ws.sort_by(|a, b| a.0.cmp(b.0));
        for (t, w) in ws {
            let _ = writeln!(out, "{f}\t{t}\t{w:?}");
        }
    }
    out
}

pub fn read_tagger_model(text: &str) -> Result<TaggerModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, header)) if header == format!("#tagger\t{TAGGER_FORMAT_VERSION}") => {}
        Some((_, header)) if header.starts_with("#tagger\t") => {
            return Err(Error::format(1, format!("unsupported tagger version in {header:?}")));
        }
        _ => return Err(Error::format(1, "missing #tagger header")),
    }
    let mut tags: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut weights: HashMap<String, Vec<(u32, f64)>> = HashMap::new();
    for (no, line) in lines {
        if let Some(tag) = line.strip_prefix("#tag\t") {
            if !weights.is_empty() {
                return Err(Error::format(no, "tag declaration after weights"));
            }
            ExtendedTag::parse(tag).map_err(|e| Error::format(no, e.to_string()))?;
            if tags.last().is_some_and(|last| last.as_str() >= tag) {
                return Err(Error::format(no, "tags must be unique and sorted"));
            }
            index.insert(tag.to_string(), tags.len() as u32);
            tags.push(tag.to_string());
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [feature, tag, weight] = fields[..] else {
            return Err(Error::format(no, "expected feature, tag and weight separated by tabs"));
        };
        let &t = index.get(tag).ok_or_else(|| Error::format(no, format!("undeclared tag {tag:?}")))?;
        let w: f64 = weight
            .parse()
            .ok()
            .filter(|w: &f64| w.is_finite())
            .ok_or_else(|| Error::format(no, format!("invalid weight {weight:?}")))?;
        let ws = weights.entry(feature.to_string()).or_default();
        if ws.iter().any(|&(u, _)| u == t) {
            return Err(Error::format(no, format!("duplicate weight for {feature:?} and {tag:?}")));
        }
        ws.push((t, w));
    }
    if tags.is_empty() {
        return Err(Error::format(1, "empty tag inventory"));
    }
    for ws in weights.values_mut() {
        ws.sort_by_key(|&(t, _)| t);
    }
    Ok(TaggerModel {
        tags,
        weights,
        version: TAGGER_FORMAT_VERSION,
    })
}
