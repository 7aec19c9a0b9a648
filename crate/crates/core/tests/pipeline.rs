mod common;

use std::fs;
use std::path::Path;

use dexparse::model::decode_checkpoint;
use dexparse::pipeline::{run_command, Command, PipelineConfig, Stage};
use dexparse::treebank_io::{parse_bracketed, read_tagged_corpus};

fn toy(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("toy.brackets");
    fs::write(&p, common::TOY_TREEBANK).unwrap();
    p
}

fn quick(dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.model.model_dim = 16;
    cfg.model.num_heads = 2;
    cfg.model.head_dim = 8;
    cfg.model.ff_dim = 16;
    cfg.model.label_hidden_dim = 16;
    cfg.train.epochs = 3;
    cfg.paths.source_treebank = Some(toy(dir));
    cfg.paths.checkpoint = Some(dir.join("model.bin"));
    cfg
}

#[test]
fn train_writes_checkpoint_log_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path());
    let out = run_command(Command::Train, &cfg).unwrap();
    assert!(out.stdout[0].starts_with("trained"));
    let log = fs::read_to_string(dir.path().join("model.bin.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 4);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0], i.to_string());
    }
    let manifest = fs::read_to_string(dir.path().join("model.bin.manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"train\""));
    assert!(manifest.contains("toy.brackets"));
    let model = decode_checkpoint(&fs::read(dir.path().join("model.bin")).unwrap()).unwrap();
    assert_eq!(model.metadata["mode"], "delexicalized");
    assert!(model.pos_vocab.items().iter().any(|p| p == "ART"));
}

#[test]
fn lexicalized_mode_gives_a_distinct_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path());
    run_command(Command::Train, &cfg).unwrap();
    let mut lex = cfg.clone();
    lex.mode.mode = dexparse::pipeline::Mode::Lexicalized;
    lex.model.lexicalized = true;
    lex.paths.checkpoint = Some(dir.path().join("lex.bin"));
    run_command(Command::Train, &lex).unwrap();
    let a = decode_checkpoint(&fs::read(dir.path().join("model.bin")).unwrap()).unwrap();
    let b = decode_checkpoint(&fs::read(dir.path().join("lex.bin")).unwrap()).unwrap();
    assert_ne!(a.pos_vocab, b.pos_vocab);
    assert!(b.pos_vocab.items().iter().any(|w| w == "Mann"));
    assert!(b.config.lexicalized);

    // Parsing in lexicalized mode restores tokens and scores cleanly.
    lex.mode.use_gold_tags = true;
    lex.paths.target_treebank = lex.paths.source_treebank.clone();
    lex.paths.output = Some(dir.path().join("lex.pred"));
    run_command(Command::Parse, &lex).unwrap();
    let pred = parse_bracketed(&fs::read_to_string(dir.path().join("lex.pred")).unwrap()).unwrap();
    assert_eq!(pred.len(), 50);
}

#[test]
fn missing_treebank_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    cfg.paths.source_treebank = Some(dir.path().join("absent.brackets"));
    let err = run_command(Command::Train, &cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Load);
    assert!(err.to_string().starts_with("stage=load"), "{err}");
    cfg.paths.source_treebank = None;
    assert_eq!(run_command(Command::Train, &cfg).unwrap_err().stage, Stage::Load);
}

#[test]
fn malformed_treebank_names_the_stage_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    let bad = dir.path().join("bad.brackets");
    fs::write(&bad, "(S (NP (ART der)").unwrap();
    cfg.paths.source_treebank = Some(bad);
    let err = run_command(Command::Train, &cfg).unwrap_err().to_string();
    assert!(err.starts_with("stage=load") && err.contains("byte 16"), "{err}");
}

#[test]
fn gold_tag_parse_restores_gold_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    run_command(Command::Train, &cfg).unwrap();
    cfg.mode.use_gold_tags = true;
    cfg.paths.target_treebank = cfg.paths.source_treebank.clone();
    cfg.paths.output = Some(dir.path().join("pred.txt"));
    let out = run_command(Command::Parse, &cfg).unwrap();
    assert_eq!(out.stdout[0], "parsed 50 of 50 sentences, 0 failed");
    let gold = parse_bracketed(common::TOY_TREEBANK).unwrap();
    let pred = parse_bracketed(&fs::read_to_string(dir.path().join("pred.txt")).unwrap()).unwrap();
    for (g, p) in gold.iter().zip(&pred) {
        let gold_tokens: Vec<&str> = g.preterminals().into_iter().filter(|(l, _)| *l != "-NONE-").map(|(_, t)| t).collect();
        assert_eq!(p.leaves(), gold_tokens);
    }

    // Scoring the gold treebank against itself.
    cfg.paths.predicted = cfg.paths.target_treebank.clone();
    cfg.paths.report = Some(dir.path().join("self.report"));
    let out = run_command(Command::Eval, &cfg).unwrap();
    assert_eq!(out.stdout[0], "100.00 100.00 100.00 100.00");
}

#[test]
fn gold_tags_require_a_target_treebank() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    run_command(Command::Train, &cfg).unwrap();
    cfg.mode.use_gold_tags = true;
    cfg.paths.output = Some(dir.path().join("pred.txt"));
    assert_eq!(run_command(Command::Parse, &cfg).unwrap_err().stage, Stage::Config);
}

#[test]
fn mapping_matters_only_outside_the_source_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    run_command(Command::Train, &cfg).unwrap();
    let source_tags = dir.path().join("source.tsv");
    fs::write(&source_tags, "der\tART.Nom.Sg.Masc\nMann\tNN.Nom.Sg.Masc\nlacht\tVVFIN.3.Sg.Pres.Ind\n.\t$.\n").unwrap();
    let target_tags = dir.path().join("target.tsv");
    fs::write(&target_tags, "der\tDDART.Nom.Sg.Masc\nman\tNA.Nom.Sg.Masc\nlachet\tVVFIN.3.Sg.Pres.Ind\n.\t$.\n").unwrap();
    let mut parse = |corpus: &Path, mapping: bool, name: &str| -> String {
        cfg.paths.tagged_corpus = Some(corpus.to_path_buf());
        cfg.mode.apply_mapping = mapping;
        cfg.paths.output = Some(dir.path().join(name));
        run_command(Command::Parse, &cfg).unwrap();
        fs::read_to_string(dir.path().join(name)).unwrap()
    };
    assert_eq!(parse(&source_tags, true, "a"), parse(&source_tags, false, "b"));
    let mapped = parse(&target_tags, true, "c");
    let unmapped = parse(&target_tags, false, "d");
    assert!(mapped.contains("(ART der)") && mapped.contains("(NN man)"), "{mapped}");
    assert!(unmapped.contains("(DDART der)"), "{unmapped}");
}

#[test]
fn over_length_sentences_fail_individually() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    cfg.model.max_len = 20;
    run_command(Command::Train, &cfg).unwrap();
    let corpus = dir.path().join("long.tsv");
    let mut text = String::from("der\tART\nMann\tNN\n\n");
    for _ in 0..25 {
        text.push_str("x\tNN\n");
    }
    text.push_str("\nsie\tPPER\nlacht\tVVFIN\n");
    fs::write(&corpus, text).unwrap();
    cfg.paths.tagged_corpus = Some(corpus);
    cfg.paths.output = Some(dir.path().join("out.txt"));
    let out = run_command(Command::Parse, &cfg).unwrap();
    assert_eq!(out.stdout[0], "parsed 2 of 3 sentences, 1 failed");
    let trees = parse_bracketed(&fs::read_to_string(dir.path().join("out.txt")).unwrap()).unwrap();
    assert_eq!(trees.len(), 2);
}

#[test]
fn eval_rejects_corpus_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path());
    let one = dir.path().join("one.brackets");
    fs::write(&one, common::TOY_TREEBANK.lines().next().unwrap()).unwrap();
    cfg.paths.target_treebank = cfg.paths.source_treebank.clone();
    cfg.paths.predicted = Some(one);
    cfg.paths.report = Some(dir.path().join("r.txt"));
    assert_eq!(run_command(Command::Eval, &cfg).unwrap_err().stage, Stage::Eval);
}

#[test]
fn tagger_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    let corpus = dir.path().join("train.tsv");
    fs::write(&corpus, "diu\tDDART.Nom.Sg.Fem\nvrouwe\tNA.Nom.Sg.Fem\nsprach\tVVFIN.3.Sg\n\nder\tDDART.Nom.Sg.Masc\nkünec\tNA.Nom.Sg.Masc\nsprach\tVVFIN.3.Sg\n").unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, "diu vrouwe sprach\n\nder künec sprach\n").unwrap();
    cfg.paths.tagged_corpus = Some(corpus.clone());
    cfg.paths.tagger_model = Some(dir.path().join("tagger.txt"));
    run_command(Command::TrainTagger, &cfg).unwrap();
    assert!(fs::read_to_string(dir.path().join("tagger.txt")).unwrap().starts_with("#tagger\t1\n"));

    cfg.paths.raw_tokens = Some(raw);
    cfg.paths.output = Some(dir.path().join("tagged.tsv"));
    run_command(Command::Tag, &cfg).unwrap();
    let tagged = read_tagged_corpus(&fs::read_to_string(dir.path().join("tagged.tsv")).unwrap()).unwrap();
    assert_eq!(tagged.len(), 2);
    assert_eq!(tagged[0].tags[1].to_string(), "NA.Nom.Sg.Fem");

    cfg.paths.output = Some(dir.path().join("mapped.tsv"));
    run_command(Command::MapTags, &cfg).unwrap();
    let mapped = fs::read_to_string(dir.path().join("mapped.tsv")).unwrap();
    assert!(mapped.starts_with("diu\tART.Nom.Sg.Fem\nvrouwe\tNN.Nom.Sg.Fem\n"), "{mapped}");

    let map_file = dir.path().join("custom.tagmap");
    fs::write(&map_file, "[pos]\nNA\tNE\n").unwrap();
    cfg.paths.tag_map = Some(map_file);
    run_command(Command::MapTags, &cfg).unwrap();
    let mapped = fs::read_to_string(dir.path().join("mapped.tsv")).unwrap();
    assert!(mapped.starts_with("diu\tDDART.Nom.Sg.Fem\nvrouwe\tNE.Nom.Sg.Fem\n"), "{mapped}");

    cfg.paths.output = Some(dir.path().join("delex.txt"));
    cfg.transform.keep_morphology = false;
    run_command(Command::Delex, &cfg).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("delex.txt")).unwrap(), "DDART NA VVFIN\nDDART NA VVFIN\n");
}

#[test]
fn delex_and_filter_treebanks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.paths.source_treebank = Some(toy(dir.path()));
    cfg.paths.output = Some(dir.path().join("delex.brackets"));
    run_command(Command::Delex, &cfg).unwrap();
    let trees = parse_bracketed(&fs::read_to_string(dir.path().join("delex.brackets")).unwrap()).unwrap();
    assert_eq!(trees.len(), 50);
    assert!(trees[0].leaves()[0].starts_with("ART.Nom"));

    let target = dir.path().join("target.brackets");
    fs::write(
        &target,
        "(S (CARD 12.) (NP (DDART diu) (NA vrouwe)) (VVFIN sprach))\n(S (FM in) (FM nomine) (NA patris))\n(S (NA x))\n",
    )
    .unwrap();
    let lexicon = dir.path().join("latin.txt");
    fs::write(&lexicon, "in\nnomine\n").unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.paths.target_treebank = Some(target);
    cfg.paths.latin_lexicon = Some(lexicon);
    cfg.paths.output = Some(dir.path().join("filtered.brackets"));
    cfg.paths.report = Some(dir.path().join("filter.report"));
    let out = run_command(Command::Filter, &cfg).unwrap();
    assert_eq!(out.stdout[0], "kept 1 of 3 trees");
    assert_eq!(
        fs::read_to_string(dir.path().join("filtered.brackets")).unwrap(),
        "(S (NP (DDART diu) (NA vrouwe)) (VVFIN sprach))\n"
    );
    assert_eq!(fs::read_to_string(dir.path().join("filter.report")).unwrap().lines().count(), 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let outputs: Vec<Vec<Vec<u8>>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = quick(dir.path());
            cfg.paths.checkpoint = Some(dir.path().join("model.bin"));
            run_command(Command::Train, &cfg).unwrap();
            cfg.mode.use_gold_tags = true;
            cfg.paths.target_treebank = cfg.paths.source_treebank.clone();
            cfg.paths.output = Some(dir.path().join("pred.txt"));
            run_command(Command::Parse, &cfg).unwrap();
            cfg.paths.predicted = cfg.paths.output.clone();
            cfg.paths.report = Some(dir.path().join("report.txt"));
            run_command(Command::Eval, &cfg).unwrap();
            ["model.bin", "model.bin.log", "pred.txt", "report.txt"]
                .iter()
                .map(|f| fs::read(dir.path().join(f)).unwrap())
                .collect()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}
