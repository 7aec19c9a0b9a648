//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dexparse::evalb::EvalConfig;
use dexparse::model::{ModelConfig, ParserModel, SpanScores, Vocab};
use dexparse::transform::EMPTY_LABEL;
use dexparse::{ExtendedTag, Tree};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const TOY_TREEBANK: &str = include_str!("../../data/toy50.brackets");

// ---------------------------------------------------------------- trees

/// Random n-ary tree with words as leaves and labels from `labels`.
pub fn random_tree(rng: &mut impl Rng, max_leaves: usize, labels: &[&str], tags: &[&str], words: &[&str]) -> Tree {
    let n = rng.random_range(1..=max_leaves);
    let root = *labels.choose(rng).unwrap();
    random_node(rng, n, root, labels, tags, words)
}

fn random_node(rng: &mut impl Rng, n: usize, label: &str, labels: &[&str], tags: &[&str], words: &[&str]) -> Tree {
    let mut children = Vec::new();
    let mut left = n;
    while left > 0 {
        let size = if children.is_empty() && left == n && n > 1 {
            rng.random_range(1..n)
        } else {
            rng.random_range(1..=left)
        };
        left -= size;
        if size == 1 && rng.random_bool(0.7) {
            children.push(Tree::preterminal(*tags.choose(rng).unwrap(), words.choose(rng).unwrap()));
        } else {
            let label = *labels.choose(rng).unwrap();
            children.push(random_node(rng, size, label, labels, tags, words));
        }
    }
    Tree::node(label, children)
}

/// Random binarized tree over `tags`, as produced by the binarizer: every
/// internal node has two children or a single preterminal child, and
/// non-root internal nodes may carry the empty label.
pub fn random_binarized(rng: &mut impl Rng, tags: &[ExtendedTag], labels: &[&str]) -> Tree {
    fn go(rng: &mut impl Rng, tags: &[ExtendedTag], labels: &[&str], root: bool) -> Tree {
        let n = tags.len();
        if n == 1 {
            let pt = Tree::preterminal(tags[0].pos.clone(), &tags[0].to_string());
            if root || rng.random_bool(0.3) {
                return Tree::node(*labels.choose(rng).unwrap(), vec![pt]);
            }
            return pt;
        }
        let k = rng.random_range(1..n);
        let children = vec![go(rng, &tags[..k], labels, false), go(rng, &tags[k..], labels, false)];
        let label = if !root && rng.random_bool(0.4) {
            EMPTY_LABEL
        } else {
            labels.choose(rng).unwrap()
        };
        Tree::node(label, children)
    }
    go(rng, tags, labels, true)
}

// ---------------------------------------------------------------- CKY oracle

/// Every binary bracketing of `(i, j)` as a list of spans.
pub fn bracketings(i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
    if j - i == 1 {
        return vec![vec![(i, j)]];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        for left in bracketings(i, k) {
            for right in bracketings(k, j) {
                let mut spans = vec![(i, j)];
                spans.extend(&left);
                spans.extend(&right);
                out.push(spans);
            }
        }
    }
    out
}

/// Best tree score by enumerating bracketings and taking the best label of
/// each span independently.
pub fn brute_force_best(scores: &SpanScores) -> f64 {
    let n = scores.len();
    let l = scores.num_labels();
    bracketings(0, n)
        .into_iter()
        .map(|spans| {
            spans
                .iter()
                .map(|&(i, j)| {
                    let first = if (i, j) == (0, n) { 1 } else { 0 };
                    (first..l).map(|lab| scores.get(i, j, lab)).fold(f64::NEG_INFINITY, f64::max)
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best tree score enumerating every bracketing and every labeling.
pub fn fully_exhaustive_best(scores: &SpanScores) -> f64 {
    let n = scores.len();
    let l = scores.num_labels();
    let mut best = f64::NEG_INFINITY;
    for spans in bracketings(0, n) {
        let m = spans.len();
        let total = l.pow(m as u32);
        for code in 0..total {
            let mut c = code;
            let mut s = 0.0;
            let mut ok = true;
            for &(i, j) in &spans {
                let lab = c % l;
                c /= l;
                if (i, j) == (0, n) && lab == 0 {
                    ok = false;
                    break;
                }
                s += scores.get(i, j, lab);
            }
            if ok && s > best {
                best = s;
            }
        }
    }
    best
}

pub fn random_scores(rng: &mut impl Rng, n: usize, labels: usize) -> SpanScores {
    let mut s = SpanScores::zeros(n, labels);
    for i in 0..n {
        for j in i + 1..=n {
            for l in 1..labels {
                s.set(i, j, l, rng.random_range(-3.0..3.0));
            }
        }
    }
    s
}

// ---------------------------------------------------------------- evalb oracle

/// Counts computed by listing constituents as explicit sets of surviving
/// leaf positions.
pub struct NaiveCounts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
    pub exact: usize,
    pub sentences: usize,
}

fn naive_constituents(tree: &Tree, cfg: &EvalConfig) -> BTreeMap<(usize, usize, String), usize> {
    // Leaf ranks among non-punctuation leaves, in order.
    let mut ranks: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    tree.walk(&mut |t| {
        if t.is_preterminal() {
            if cfg.punctuation_tags.contains(t.label().unwrap()) {
                ranks.push(None);
            } else {
                ranks.push(Some(next));
                next += 1;
            }
        }
    });
    let mut out = BTreeMap::new();
    fn visit(
        t: &Tree,
        root: bool,
        cursor: &mut usize,
        ranks: &[Option<usize>],
        cfg: &EvalConfig,
        out: &mut BTreeMap<(usize, usize, String), usize>,
    ) {
        if t.is_preterminal() {
            *cursor += 1;
            return;
        }
        let first = *cursor;
        for c in t.children() {
            visit(c, false, cursor, ranks, cfg, out);
        }
        let covered: Vec<usize> = ranks[first..*cursor].iter().flatten().copied().collect();
        if covered.is_empty() || (root && cfg.exclude_root) {
            return;
        }
        let raw = t.label().unwrap().to_string();
        let label = cfg.label_equivalences.get(&raw).cloned().unwrap_or(raw);
        if cfg.ignore_labels.contains(&label) {
            return;
        }
        let lo = *covered.iter().min().unwrap();
        let hi = *covered.iter().max().unwrap() + 1;
        *out.entry((lo, hi, label)).or_insert(0) += 1;
    }
    let mut cursor = 0;
    visit(tree, true, &mut cursor, &ranks, cfg, &mut out);
    out
}

pub fn naive_counts(gold: &[Tree], pred: &[Tree], cfg: &EvalConfig) -> NaiveCounts {
    let mut c = NaiveCounts {
        matched: 0,
        gold: 0,
        pred: 0,
        exact: 0,
        sentences: 0,
    };
    for (g, p) in gold.iter().zip(pred) {
        let gs = naive_constituents(g, cfg);
        let ps = naive_constituents(p, cfg);
        c.sentences += 1;
        c.gold += gs.values().sum::<usize>();
        c.pred += ps.values().sum::<usize>();
        c.matched += gs
            .iter()
            .map(|(k, &v)| v.min(ps.get(k).copied().unwrap_or(0)))
            .sum::<usize>();
        c.exact += usize::from(gs == ps);
    }
    c
}

/// `(R, P, F, CM)` in percent from naive counts.
pub fn naive_metrics(c: &NaiveCounts) -> (f64, f64, f64, f64) {
    let pct = |num: usize, den: usize, other: usize| {
        if den == 0 {
            if other == 0 {
                100.0
            } else {
                0.0
            }
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let r = pct(c.matched, c.gold, c.pred);
    let p = pct(c.matched, c.pred, c.gold);
    let f = if r + p == 0.0 { 0.0 } else { 2.0 * r * p / (r + p) };
    let cm = if c.sentences == 0 {
        0.0
    } else {
        100.0 * c.exact as f64 / c.sentences as f64
    };
    (r, p, f, cm)
}

// ---------------------------------------------------------------- gradients

pub fn gradient_test_model(cfg: ModelConfig) -> ParserModel {
    ParserModel::new(
        cfg,
        vec!["S".into(), "NP".into(), "VP".into(), "PP".into()],
        Vocab::build(["ART", "NN", "VVFIN", "APPR", "ADJA"]),
        Vocab::build(["Nom", "Dat", "Sg", "Pl", "Masc"]),
    )
    .unwrap()
}

pub fn random_tags(rng: &mut impl Rng, n: usize) -> Vec<ExtendedTag> {
    let pos = ["ART", "NN", "VVFIN", "APPR", "ADJA", "XY"];
    let feats = ["Nom", "Dat", "Sg", "Pl", "Masc", "Zz"];
    (0..n)
        .map(|_| {
            let k = rng.random_range(0..3);
            let f: Vec<String> = (0..k).map(|_| feats.choose(rng).unwrap().to_string()).collect();
            ExtendedTag::new(*pos.choose(rng).unwrap(), f).unwrap()
        })
        .collect()
}

/// Relative error `|g - fd| / (|fd| + 1e-12)` per tensor, using central
/// differences with step `1e-5`. With `sample = Some(k)`, each tensor is
/// checked on its `k` largest-gradient coordinates plus `k` random ones;
/// otherwise on all coordinates.
pub fn gradient_errors(
    model: &ParserModel,
    tags: &[ExtendedTag],
    gold: &Tree,
    sample: Option<usize>,
    rng: &mut impl Rng,
) -> Vec<(String, f64)> {
    const STEP: f64 = 1e-5;
    let (_, grads) = model.loss_and_gradients(tags, gold).unwrap();
    let mut probe = model.clone();
    let names: Vec<String> = grads.tensors().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (t, name) in names.iter().enumerate() {
        let g = grads.tensors()[t].1.clone();
        let len = g.len();
        let coords: Vec<usize> = match sample {
            None => (0..len).collect(),
            Some(k) => {
                let mut order: Vec<usize> = (0..len).collect();
                order.sort_by(|&a, &b| g.as_slice().unwrap()[b].abs().total_cmp(&g.as_slice().unwrap()[a].abs()));
                let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
                for _ in 0..k {
                    chosen.push(rng.random_range(0..len));
                }
                chosen.sort_unstable();
                chosen.dedup();
                chosen
            }
        };
        let mut diff2 = 0.0;
        let mut fd2 = 0.0;
        for &c in &coords {
            let original = probe.params.tensors_mut()[t].1.as_slice_mut().unwrap()[c];
            probe.params.tensors_mut()[t].1.as_slice_mut().unwrap()[c] = original + STEP;
            let plus = probe.loss(tags, gold).unwrap();
            probe.params.tensors_mut()[t].1.as_slice_mut().unwrap()[c] = original - STEP;
            let minus = probe.loss(tags, gold).unwrap();
            probe.params.tensors_mut()[t].1.as_slice_mut().unwrap()[c] = original;
            let fd = (plus - minus) / (2.0 * STEP);
            let bp = g.as_slice().unwrap()[c];
            diff2 += (bp - fd).powi(2);
            fd2 += fd * fd;
        }
        out.push((name.clone(), diff2.sqrt() / (fd2.sqrt() + 1e-12)));
    }
    out
}

// ---------------------------------------------------------------- ablation data

/// Source-to-target renames: the inverse of the bundled tag map pairs.
const TARGET_RENAMES: [(&str, &[&str]); 5] = [
    ("ART", &["DDART", "DIART"]),
    ("PDAT", &["DDA", "DID"]),
    ("PIAT", &["DIA"]),
    ("NN", &["NA"]),
    ("CARD", &["CARDD"]),
];

fn rename(rng: &mut impl Rng, pos: &str, target: bool) -> String {
    if target {
        if let Some((_, names)) = TARGET_RENAMES.iter().find(|(p, _)| *p == pos) {
            return names.choose(rng).unwrap().to_string();
        }
    }
    pos.to_string()
}

fn synthetic_np(rng: &mut impl Rng, case: &str, edge: &str, target: bool) -> String {
    let num = if rng.random_bool(0.7) { "Sg" } else { "Pl" };
    let mut kids = Vec::new();
    let det = ["ART", "PDAT", "PIAT", "CARD", ""].choose(rng).unwrap().to_string();
    if !det.is_empty() {
        kids.push(format!("({}.{case}.{num} d{})", rename(rng, &det, target), rng.random_range(0..5)));
    }
    if rng.random_bool(0.3) {
        kids.push(format!("(ADJA.Pos.{case}.{num} a{})", rng.random_range(0..5)));
    }
    kids.push(format!("({}.{case}.{num} n{})", rename(rng, "NN", target), rng.random_range(0..9)));
    format!("(NP-{edge} {})", kids.join(" "))
}

/// One sentence of a grammar where a noun phrase after the object attaches
/// inside the preceding noun phrase when genitive and to the clause when
/// dative, so that the tree depends on case features as well as on parts
/// of speech. Target sentences use renamed historical tags.
pub fn synthetic_sentence(rng: &mut impl Rng, target: bool) -> String {
    let mut parts = vec![synthetic_np(rng, "Nom", "SB", target)];
    parts.push(format!("(VVFIN.3.Sg v{})", rng.random_range(0..4)));
    let mut current = synthetic_np(rng, "Acc", "OA", target);
    for _ in 0..rng.random_range(0..3) {
        if rng.random_bool(0.5) {
            let gen = synthetic_np(rng, "Gen", "AG", target);
            current = format!("{} {gen})", &current[..current.len() - 1]);
        } else {
            parts.push(current);
            current = synthetic_np(rng, "Dat", "DA", target);
        }
    }
    parts.push(current);
    if rng.random_bool(0.3) {
        let tag = if target { "VAPS" } else { "ADJD.Pos" };
        parts.push(format!("(AP-MO ({tag} r{}))", rng.random_range(0..3)));
    }
    parts.push("($. .)".to_string());
    format!("(S {})", parts.join(" "))
}

pub fn synthetic_treebank(rng: &mut impl Rng, n: usize, target: bool) -> String {
    (0..n).map(|_| synthetic_sentence(rng, target) + "\n").collect()
}

pub struct AblationScores {
    pub full: f64,
    pub no_morph: f64,
    pub no_mapping: f64,
}

/// Trains with and without morphology on a synthetic source treebank and
/// scores held-out target parses with and without tag mapping.
pub fn run_ablation(dir: &std::path::Path, train_size: usize, test_size: usize, epochs: usize) -> AblationScores {
    use dexparse::pipeline::{run_command, Command, PipelineConfig};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let source = dir.join("source.brackets");
    let target = dir.join("target.brackets");
    std::fs::write(&source, synthetic_treebank(&mut rng, train_size, false)).unwrap();
    std::fs::write(&target, synthetic_treebank(&mut rng, test_size, true)).unwrap();
    let run = |name: &str, keep_morphology: bool, apply_mapping: bool, train: bool| -> f64 {
        let mut cfg = PipelineConfig::default();
        cfg.train.epochs = epochs;
        cfg.mode.keep_morphology = keep_morphology;
        cfg.transform.keep_morphology = keep_morphology;
        cfg.mode.apply_mapping = apply_mapping;
        cfg.mode.use_gold_tags = true;
        let model_name = if keep_morphology { "full" } else { "nomorph" };
        cfg.paths.source_treebank = Some(source.clone());
        cfg.paths.target_treebank = Some(target.clone());
        cfg.paths.checkpoint = Some(dir.join(format!("{model_name}.bin")));
        cfg.paths.output = Some(dir.join(format!("{name}.pred")));
        cfg.paths.predicted = Some(dir.join(format!("{name}.pred")));
        cfg.paths.report = Some(dir.join(format!("{name}.report")));
        if train {
            run_command(Command::Train, &cfg).unwrap();
        }
        run_command(Command::Parse, &cfg).unwrap();
        let out = run_command(Command::Eval, &cfg).unwrap();
        let fields: Vec<f64> = out.stdout[0].split(' ').map(|x| x.parse().unwrap()).collect();
        fields[2]
    };
    AblationScores {
        full: run("full", true, true, true),
        no_morph: run("nomorph", false, true, true),
        no_mapping: run("nomapping", true, false, false),
    }
}
