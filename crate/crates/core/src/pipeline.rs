//! Command implementations behind the `dexparse` binary: configuration
//! layering, the source-training and target-parsing dataflow, and run
//! manifests.
//!
//! A configuration starts from a named preset, then takes the values of a
//! TOML file (relative paths in the file resolve against its directory),
//! then command-line overrides.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chart::{parse_corpus, train_examples, TrainConfig, TrainingExample};
use crate::error::Error;
use crate::evalb::{score_corpus, write_report, EvalConfig};
use crate::model::{decode_checkpoint, encode_checkpoint, ModelConfig};
use crate::tag_map::{default_table, map_sentence, DEFAULT_COMPOSITE_SEPARATOR};
use crate::tagger::{read_tagger_model, tag_corpus, train_tagger, write_tagger_model};
use crate::transform::{
    binarize, check_reserved_labels, delexicalize_sentence, delexicalize_tree, filter_target_treebank,
    strip_annotations, TransformConfig,
};
use crate::treebank_io::{
    parse_bracketed, read_tag_map, read_tagged_corpus, split_treebank, write_tagged_corpus, write_treebank,
    ExtendedTag, TaggedSentence, Tree,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Delexicalized,
    Lexicalized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Delexicalized => "delexicalized",
            Mode::Lexicalized => "lexicalized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub source_treebank: Option<PathBuf>,
    pub dev_treebank: Option<PathBuf>,
    /// Gold target treebank: gold tags for parsing, gold trees for scoring,
    /// input to filtering.
    pub target_treebank: Option<PathBuf>,
    pub tagged_corpus: Option<PathBuf>,
    /// One sentence per line, tokens separated by whitespace.
    pub raw_tokens: Option<PathBuf>,
    pub tag_map: Option<PathBuf>,
    /// One word per line.
    pub latin_lexicon: Option<PathBuf>,
    pub tagger_model: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predicted: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub train_log: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Paths {
    fn entries_mut(&mut self) -> [(&'static str, &mut Option<PathBuf>); 13] {
        [
            ("source_treebank", &mut self.source_treebank),
            ("dev_treebank", &mut self.dev_treebank),
            ("target_treebank", &mut self.target_treebank),
            ("tagged_corpus", &mut self.tagged_corpus),
            ("raw_tokens", &mut self.raw_tokens),
            ("tag_map", &mut self.tag_map),
            ("latin_lexicon", &mut self.latin_lexicon),
            ("tagger_model", &mut self.tagger_model),
            ("checkpoint", &mut self.checkpoint),
            ("predicted", &mut self.predicted),
            ("output", &mut self.output),
            ("train_log", &mut self.train_log),
            ("report", &mut self.report),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    pub mode: Mode,
    /// Parse with the preterminals of the gold target treebank.
    pub use_gold_tags: bool,
    pub apply_mapping: bool,
    /// Overrides `transform.keep_morphology`.
    pub keep_morphology: bool,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig {
            mode: Mode::Delexicalized,
            use_gold_tags: false,
            apply_mapping: true,
            keep_morphology: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Split the source treebank into this many training trees followed by
    /// dev trees, unless a dev treebank is given.
    pub train_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig { epochs: 5, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub paths: Paths,
    pub mode: ModeConfig,
    pub split: SplitConfig,
    pub transform: TransformConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tagger: TaggerConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub mode: Option<Mode>,
    pub use_gold_tags: bool,
    pub no_mapping: bool,
    pub no_morph: bool,
    pub seed: Option<u64>,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Desk => (ModelConfig::desk(), TrainConfig::desk()),
            Preset::Paper => (ModelConfig::paper(), TrainConfig::paper()),
        };
        PipelineConfig {
            preset,
            paths: Paths::default(),
            mode: ModeConfig::default(),
            split: SplitConfig::default(),
            transform: TransformConfig::default(),
            model,
            train,
            tagger: TaggerConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Parses TOML text over a preset. `base_dir` anchors relative paths.
    pub fn from_toml(text: &str, base_dir: Option<&Path>, preset: Option<Preset>) -> crate::Result<Self> {
        let mut file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let preset = match (preset, file.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => v.clone().try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
            (None, None) => Preset::Desk,
        };
        file.insert("preset".into(), toml::Value::try_from(preset).expect("preset serializes"));
        let mut merged = toml::Table::try_from(Self::preset(preset)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, file);
        let mut cfg: PipelineConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(dir) = base_dir {
            for (_, p) in cfg.paths.entries_mut() {
                if let Some(path) = p.as_mut() {
                    if path.is_relative() {
                        *path = dir.join(&*path);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, StageError> {
        let mut cfg = match path {
            Some(p) => {
                let text = read_text(p, Stage::Config)?;
                Self::from_toml(&text, p.parent(), overrides.preset).map_err(|e| StageError::at(Stage::Config, p, e))?
            }
            None => Self::preset(overrides.preset.unwrap_or_default()),
        };
        cfg.apply(overrides);
        cfg.validate().map_err(|e| StageError::new(Stage::Config, e))?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.mode {
            self.mode.mode = m;
        }
        self.mode.use_gold_tags |= o.use_gold_tags;
        if o.no_mapping {
            self.mode.apply_mapping = false;
        }
        if o.no_morph {
            self.mode.keep_morphology = false;
        }
        if let Some(seed) = o.seed {
            self.model.seed = seed;
            self.train.seed = seed;
            self.tagger.seed = seed;
        }
        let mut given = o.paths.clone();
        for ((_, mine), (_, theirs)) in self.paths.entries_mut().into_iter().zip(given.entries_mut()) {
            if theirs.is_some() {
                *mine = theirs.take();
            }
        }
        self.transform.keep_morphology = self.mode.keep_morphology;
        self.model.lexicalized = self.mode.mode == Mode::Lexicalized;
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.transform.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.tagger.epochs == 0 {
            return Err(Error::Config("tagger.epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Transform,
    Tag,
    Map,
    Train,
    Parse,
    Eval,
    Filter,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Transform => "transform",
            Stage::Tag => "tag",
            Stage::Map => "map",
            Stage::Train => "train",
            Stage::Parse => "parse",
            Stage::Eval => "eval",
            Stage::Filter => "filter",
            Stage::Write => "write",
        })
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub context: Option<String>,
    pub error: Error,
}

impl StageError {
    pub fn new(stage: Stage, error: Error) -> Self {
        StageError {
            stage,
            context: None,
            error,
        }
    }

    fn at(stage: Stage, path: &Path, error: Error) -> Self {
        StageError {
            stage,
            context: Some(path.display().to_string()),
            error,
        }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.context {
            Some(c) => write!(f, "stage={}: {}: {}", self.stage, c, self.error),
            None => write!(f, "stage={}: {}", self.stage, self.error),
        }
    }
}

impl std::error::Error for StageError {}

type StageResult<T> = Result<T, StageError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Parse,
    Tag,
    TrainTagger,
    MapTags,
    Delex,
    Eval,
    Filter,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Parse => "parse",
            Command::Tag => "tag",
            Command::TrainTagger => "train-tagger",
            Command::MapTags => "map-tags",
            Command::Delex => "delex",
            Command::Eval => "eval",
            Command::Filter => "filter",
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// Lines for standard output.
    pub stdout: Vec<String>,
    pub written: Vec<PathBuf>,
}

/// Tracks inputs read and outputs written for the manifest.
struct Run<'a> {
    cfg: &'a PipelineConfig,
    inputs: BTreeMap<String, String>,
    outcome: Outcome,
}

impl<'a> Run<'a> {
    fn read(&mut self, path: &Path) -> StageResult<String> {
        let text = read_text(path, Stage::Load)?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(text.as_bytes())));
        Ok(text)
    }

    fn read_bytes(&mut self, path: &Path) -> StageResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|source| io_error(Stage::Load, path, source))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> StageResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| io_error(Stage::Write, dir, source))?;
        }
        fs::write(path, bytes).map_err(|source| io_error(Stage::Write, path, source))?;
        self.outcome.written.push(path.to_path_buf());
        Ok(())
    }

    /// Writes `<primary>.manifest.toml` with the configuration snapshot and
    /// input checksums.
    fn finish(mut self, command: Command, primary: &Path) -> StageResult<Outcome> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            outputs: Vec<String>,
            inputs: &'a BTreeMap<String, String>,
            config: &'a PipelineConfig,
        }
        let manifest = Manifest {
            command: command.name(),
            outputs: self.outcome.written.iter().map(|p| p.display().to_string()).collect(),
            inputs: &self.inputs,
            config: self.cfg,
        };
        let text = toml::to_string(&manifest).map_err(|e| StageError::new(Stage::Write, Error::Config(e.to_string())))?;
        let mut path = primary.as_os_str().to_owned();
        path.push(".manifest.toml");
        self.write(Path::new(&path), text.as_bytes())?;
        Ok(self.outcome)
    }
}

fn io_error(stage: Stage, path: &Path, source: std::io::Error) -> StageError {
    StageError::new(
        stage,
        Error::Io {
            path: path.to_path_buf(),
            source,
        },
    )
}

fn read_text(path: &Path, stage: Stage) -> StageResult<String> {
    let bytes = fs::read(path).map_err(|source| io_error(stage, path, source))?;
    String::from_utf8(bytes).map_err(|e| {
        StageError::at(
            stage,
            path,
            Error::Format {
                line: 0,
                message: format!("invalid UTF-8 at byte {}", e.utf8_error().valid_up_to()),
            },
        )
    })
}

fn require<'p>(path: &'p Option<PathBuf>, name: &str, stage: Stage) -> StageResult<&'p Path> {
    path.as_deref()
        .ok_or_else(|| StageError::new(stage, Error::Config(format!("paths.{name} is not set"))))
}

fn load_treebank(run: &mut Run, path: &Path) -> StageResult<Vec<Tree>> {
    let text = run.read(path)?;
    parse_bracketed(&text).map_err(|e| StageError::at(Stage::Load, path, e))
}

fn load_tagged(run: &mut Run, path: &Path) -> StageResult<Vec<TaggedSentence>> {
    let text = run.read(path)?;
    read_tagged_corpus(&text).map_err(|e| StageError::at(Stage::Load, path, e))
}

pub fn run_command(command: Command, cfg: &PipelineConfig) -> StageResult<Outcome> {
    let mut run = Run {
        cfg,
        inputs: BTreeMap::new(),
        outcome: Outcome::default(),
    };
    let primary = match command {
        Command::Train => cmd_train(&mut run)?,
        Command::Parse => cmd_parse(&mut run)?,
        Command::Tag => cmd_tag(&mut run)?,
        Command::TrainTagger => cmd_train_tagger(&mut run)?,
        Command::MapTags => cmd_map_tags(&mut run)?,
        Command::Delex => cmd_delex(&mut run)?,
        Command::Eval => cmd_eval(&mut run)?,
        Command::Filter => cmd_filter(&mut run)?,
    };
    run.finish(command, &primary)
}

/// Strips, optionally delexicalizes and binarizes source trees. Trees with
/// no constituent above their preterminals are dropped with a warning.
pub fn prepare_source_trees(trees: &[Tree], cfg: &PipelineConfig) -> crate::Result<Vec<Tree>> {
    let mut out = Vec::with_capacity(trees.len());
    for (i, tree) in trees.iter().enumerate() {
        let context = |e: Error| Error::InvalidArgument(format!("tree {i}: {e}"));
        check_reserved_labels(tree).map_err(context)?;
        let stripped = strip_annotations(tree, &cfg.transform).map_err(context)?;
        if stripped.is_preterminal() {
            log::warn!("tree {i}: skipped, no constituent above the preterminal");
            continue;
        }
        let prepared = match cfg.mode.mode {
            Mode::Delexicalized => delexicalize_tree(&stripped, &cfg.transform).map_err(context)?,
            Mode::Lexicalized => stripped,
        };
        out.push(binarize(&prepared));
    }
    Ok(out)
}

fn examples(trees: Vec<Tree>, cfg: &PipelineConfig, what: &str) -> StageResult<Vec<TrainingExample>> {
    let mut out = Vec::with_capacity(trees.len());
    for (i, t) in trees.into_iter().enumerate() {
        if t.leaf_count() > cfg.model.max_len {
            log::warn!("{what} tree {i}: skipped, {} tokens exceed max_len {}", t.leaf_count(), cfg.model.max_len);
            continue;
        }
        let ex = TrainingExample::from_tree(t, cfg.model.lexicalized, cfg.transform.morph_separator)
            .map_err(|e| StageError::new(Stage::Transform, Error::InvalidArgument(format!("{what} tree {i}: {e}"))))?;
        out.push(ex);
    }
    Ok(out)
}

fn cmd_train(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let source = require(&cfg.paths.source_treebank, "source_treebank", Stage::Load)?;
    let checkpoint = require(&cfg.paths.checkpoint, "checkpoint", Stage::Config)?.to_path_buf();
    let trees = load_treebank(run, source)?;
    let dev_trees = match &cfg.paths.dev_treebank {
        Some(p) => Some(load_treebank(run, p)?),
        None => None,
    };
    let (train, dev) = match (dev_trees, cfg.split.train_count) {
        (Some(dev), _) => (trees, dev),
        (None, Some(n)) => split_treebank(trees, n).map_err(|e| StageError::new(Stage::Load, e))?,
        (None, None) => (trees, Vec::new()),
    };
    let prepare = |trees: &[Tree]| prepare_source_trees(trees, cfg).map_err(|e| StageError::new(Stage::Transform, e));
    let train = examples(prepare(&train)?, cfg, "training")?;
    let dev = examples(prepare(&dev)?, cfg, "dev")?;
    log::info!("training on {} trees, {} dev trees", train.len(), dev.len());

    let mut log_text = String::new();
    let outcome = train_examples(&train, &dev, &cfg.model, &cfg.train, &cfg.eval, &mut |r| {
        log::info!("epoch {}", r.log_line());
        log_text.push_str(&r.log_line());
        log_text.push('\n');
    })
    .map_err(|e| StageError::new(Stage::Train, e))?;

    let mut model = outcome.model;
    model.metadata.insert("mode".into(), cfg.mode.mode.to_string());
    model.metadata.insert("keep_morphology".into(), cfg.mode.keep_morphology.to_string());
    model
        .metadata
        .insert("morph_separator".into(), cfg.transform.morph_separator.to_string());
    model.metadata.insert("best_epoch".into(), outcome.best_epoch.to_string());
    run.write(&checkpoint, &encode_checkpoint(&model))?;
    let log_path = cfg.paths.train_log.clone().unwrap_or_else(|| {
        let mut p = checkpoint.as_os_str().to_owned();
        p.push(".log");
        PathBuf::from(p)
    });
    run.write(&log_path, log_text.as_bytes())?;
    run.outcome.stdout.push(format!(
        "trained {} epochs, kept epoch {}",
        outcome.history.len() - 1,
        outcome.best_epoch
    ));
    Ok(checkpoint)
}

/// Target sentences with their tags, in the configured input mode.
fn target_sentences(run: &mut Run) -> StageResult<Vec<TaggedSentence>> {
    let cfg = run.cfg;
    if cfg.mode.use_gold_tags {
        let path = cfg.paths.target_treebank.as_deref().ok_or_else(|| {
            StageError::new(
                Stage::Config,
                Error::Config("use_gold_tags requires paths.target_treebank".into()),
            )
        })?;
        let trees = load_treebank(run, path)?;
        return trees
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let stripped = strip_annotations(t, &cfg.transform)?;
                let (tokens, tags): (Vec<String>, Vec<ExtendedTag>) = stripped
                    .preterminals()
                    .into_iter()
                    .map(|(label, tok)| Ok((tok.to_string(), ExtendedTag::parse_with(label, cfg.transform.morph_separator)?)))
                    .collect::<crate::Result<Vec<_>>>()?
                    .into_iter()
                    .unzip();
                TaggedSentence::new(tokens, tags).map_err(|e| Error::InvalidArgument(format!("tree {i}: {e}")))
            })
            .collect::<crate::Result<Vec<_>>>()
            .map_err(|e| StageError::at(Stage::Transform, path, e));
    }
    if let Some(path) = &cfg.paths.tagged_corpus {
        return load_tagged(run, path);
    }
    let raw = require(&cfg.paths.raw_tokens, "raw_tokens (or tagged_corpus)", Stage::Load)?;
    let tokens = read_raw_tokens(&run.read(raw)?);
    let tagger_path = require(&cfg.paths.tagger_model, "tagger_model", Stage::Load)?;
    let text = run.read(tagger_path)?;
    let tagger = read_tagger_model(&text).map_err(|e| StageError::at(Stage::Load, tagger_path, e))?;
    tag_corpus(&tagger, &tokens)
        .into_iter()
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| StageError::new(Stage::Tag, e))
}

fn read_raw_tokens(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .collect()
}

fn load_tag_map(run: &mut Run) -> StageResult<crate::TagMapTable> {
    match &run.cfg.paths.tag_map {
        Some(path) => {
            let text = run.read(path)?;
            read_tag_map(&text).map_err(|e| StageError::at(Stage::Load, path, e))
        }
        None => Ok(default_table()),
    }
}

fn cmd_parse(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let ckpt_path = require(&cfg.paths.checkpoint, "checkpoint", Stage::Load)?;
    let output = require(&cfg.paths.output, "output", Stage::Config)?.to_path_buf();
    let bytes = run.read_bytes(ckpt_path)?;
    let model = decode_checkpoint(&bytes).map_err(|e| StageError::at(Stage::Load, ckpt_path, e))?;
    let mut sentences = target_sentences(run)?;
    if cfg.mode.apply_mapping {
        let table = load_tag_map(run)?;
        sentences = sentences
            .iter()
            .map(|s| map_sentence(s, &table, DEFAULT_COMPOSITE_SEPARATOR))
            .collect();
    }

    // The checkpoint records how its inputs were built.
    let lexicalized = model.config.lexicalized;
    let mut transform = cfg.transform.clone();
    if let Some(keep) = model.metadata.get("keep_morphology") {
        transform.keep_morphology = keep == "true";
    }
    if lexicalized != cfg.model.lexicalized || transform.keep_morphology != cfg.transform.keep_morphology {
        log::info!("using the input mode recorded in the checkpoint");
    }
    let inputs: Vec<Vec<ExtendedTag>> = sentences
        .iter()
        .map(|s| {
            if lexicalized {
                Ok(s.tokens.iter().map(|t| ExtendedTag::word(t.clone())).collect())
            } else {
                delexicalize_sentence(s, &transform)
                    .iter()
                    .map(|t| ExtendedTag::parse_with(t, transform.morph_separator))
                    .collect()
            }
        })
        .collect::<crate::Result<_>>()
        .map_err(|e| StageError::new(Stage::Transform, e))?;

    let parsed = parse_corpus(&model, &inputs);
    let mut trees = Vec::with_capacity(parsed.len());
    let mut failures = 0;
    for (i, (result, sentence)) in parsed.into_iter().zip(&sentences).enumerate() {
        match result {
            Ok(tree) => trees.push(relexicalize(&tree, sentence)),
            Err(e) => {
                failures += 1;
                log::warn!("stage=parse: sentence {i}: {e}");
            }
        }
    }
    run.write(&output, write_treebank(&trees).as_bytes())?;
    run.outcome.stdout.push(format!(
        "parsed {} of {} sentences, {} failed",
        trees.len(),
        sentences.len(),
        failures
    ));
    Ok(output)
}

/// Puts the part of speech back on preterminals and the original tokens on
/// leaves.
pub fn relexicalize(tree: &Tree, sentence: &TaggedSentence) -> Tree {
    fn go(t: &Tree, s: &TaggedSentence, next: &mut usize) -> Tree {
        match t {
            Tree::Leaf(_) => t.clone(),
            Tree::Node { label, children } => {
                if t.is_preterminal() && *next < s.len() {
                    let i = *next;
                    *next += 1;
                    Tree::preterminal(s.tags[i].pos.clone(), &s.tokens[i])
                } else {
                    Tree::node(label.clone(), children.iter().map(|c| go(c, s, next)).collect())
                }
            }
        }
    }
    go(tree, sentence, &mut 0)
}

fn cmd_tag(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let raw = require(&cfg.paths.raw_tokens, "raw_tokens", Stage::Load)?;
    let output = require(&cfg.paths.output, "output", Stage::Config)?.to_path_buf();
    let tokens = read_raw_tokens(&run.read(raw)?);
    let tagger_path = require(&cfg.paths.tagger_model, "tagger_model", Stage::Load)?;
    let text = run.read(tagger_path)?;
    let tagger = read_tagger_model(&text).map_err(|e| StageError::at(Stage::Load, tagger_path, e))?;
    let tagged = tag_corpus(&tagger, &tokens)
        .into_iter()
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| StageError::new(Stage::Tag, e))?;
    run.write(&output, write_tagged_corpus(&tagged).as_bytes())?;
    run.outcome.stdout.push(format!("tagged {} sentences", tagged.len()));
    Ok(output)
}

fn cmd_train_tagger(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let corpus_path = require(&cfg.paths.tagged_corpus, "tagged_corpus", Stage::Load)?;
    let output = require(&cfg.paths.tagger_model, "tagger_model", Stage::Config)?.to_path_buf();
    let corpus = load_tagged(run, corpus_path)?;
    let model =
        train_tagger(&corpus, cfg.tagger.epochs, cfg.tagger.seed).map_err(|e| StageError::new(Stage::Tag, e))?;
    run.write(&output, write_tagger_model(&model).as_bytes())?;
    run.outcome
        .stdout
        .push(format!("trained tagger with {} tags", model.tag_inventory().len()));
    Ok(output)
}

fn cmd_map_tags(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let corpus_path = require(&cfg.paths.tagged_corpus, "tagged_corpus", Stage::Load)?;
    let output = require(&cfg.paths.output, "output", Stage::Config)?.to_path_buf();
    let corpus = load_tagged(run, corpus_path)?;
    let table = load_tag_map(run)?;
    let mapped: Vec<TaggedSentence> = corpus
        .iter()
        .map(|s| map_sentence(s, &table, DEFAULT_COMPOSITE_SEPARATOR))
        .collect();
    run.write(&output, write_tagged_corpus(&mapped).as_bytes())?;
    run.outcome.stdout.push(format!("mapped {} sentences", mapped.len()));
    Ok(output)
}

/// Delexicalizes a treebank, or a tagged corpus into one line of tags per
/// sentence.
fn cmd_delex(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let output = require(&cfg.paths.output, "output", Stage::Config)?.to_path_buf();
    let tree_path = cfg.paths.source_treebank.as_ref().or(cfg.paths.target_treebank.as_ref());
    let text = if let Some(path) = tree_path {
        let trees = load_treebank(run, path)?;
        let out = trees
            .iter()
            .enumerate()
            .map(|(i, t)| {
                strip_annotations(t, &cfg.transform)
                    .and_then(|s| delexicalize_tree(&s, &cfg.transform))
                    .map_err(|e| Error::InvalidArgument(format!("tree {i}: {e}")))
            })
            .collect::<crate::Result<Vec<_>>>()
            .map_err(|e| StageError::at(Stage::Transform, path, e))?;
        run.outcome.stdout.push(format!("delexicalized {} trees", out.len()));
        write_treebank(&out)
    } else {
        let path = require(&cfg.paths.tagged_corpus, "source_treebank, target_treebank or tagged_corpus", Stage::Load)?;
        let corpus = load_tagged(run, path)?;
        run.outcome.stdout.push(format!("delexicalized {} sentences", corpus.len()));
        corpus
            .iter()
            .map(|s| delexicalize_sentence(s, &cfg.transform).join(" ") + "\n")
            .collect()
    };
    run.write(&output, text.as_bytes())?;
    Ok(output)
}

fn cmd_eval(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let gold_path = require(&cfg.paths.target_treebank, "target_treebank", Stage::Load)?;
    let pred_path = require(&cfg.paths.predicted, "predicted", Stage::Load)?;
    let report_path = require(&cfg.paths.report, "report", Stage::Config)?.to_path_buf();
    let strip = |trees: Vec<Tree>, path: &Path| -> StageResult<Vec<Tree>> {
        trees
            .iter()
            .map(|t| strip_annotations(t, &cfg.transform))
            .collect::<crate::Result<_>>()
            .map_err(|e| StageError::at(Stage::Transform, path, e))
    };
    let gold = load_treebank(run, gold_path)?;
    let gold = strip(gold, gold_path)?;
    let pred = load_treebank(run, pred_path)?;
    let pred = strip(pred, pred_path)?;
    let report = score_corpus(&gold, &pred, &cfg.eval).map_err(|e| StageError::new(Stage::Eval, e))?;
    for (i, msg) in &report.skipped {
        log::warn!("stage=eval: sentence {i}: {msg}");
    }
    run.write(&report_path, write_report(&report).as_bytes())?;
    run.outcome.stdout.push(report.result.summary_line());
    Ok(report_path)
}

fn cmd_filter(run: &mut Run) -> StageResult<PathBuf> {
    let cfg = run.cfg;
    let path = require(&cfg.paths.target_treebank, "target_treebank", Stage::Load)?;
    let output = require(&cfg.paths.output, "output", Stage::Config)?.to_path_buf();
    let trees = load_treebank(run, path)?;
    let lexicon: HashSet<String> = match &cfg.paths.latin_lexicon {
        Some(p) => run.read(p)?.lines().map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect(),
        None => HashSet::new(),
    };
    let total = trees.len();
    let (kept, report) = filter_target_treebank(trees, &lexicon);
    for line in &report {
        log::info!("stage=filter: {line}");
    }
    run.write(&output, write_treebank(&kept).as_bytes())?;
    if let Some(report_path) = &cfg.paths.report {
        let text: String = report.iter().map(|l| format!("{l}\n")).collect();
        run.write(report_path, text.as_bytes())?;
    }
    run.outcome.stdout.push(format!("kept {} of {} trees", kept.len(), total));
    Ok(output)
}
