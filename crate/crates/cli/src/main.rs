use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dexparse::pipeline::{run_command, Command, Mode, Overrides, Paths, PipelineConfig, Preset};

#[derive(Parser)]
#[command(name = "dexparse", version, about = "Delexicalized constituency parsing with cross-lingual tag mapping")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Train the parser on a source treebank.
    Train,
    /// Parse target sentences with a trained checkpoint.
    Parse,
    /// Tag raw token files with a trained tagger.
    Tag,
    /// Train the part-of-speech tagger on a tagged corpus.
    TrainTagger,
    /// Map target tags onto the source inventory.
    MapTags,
    /// Delexicalize a treebank or tagged corpus.
    Delex,
    /// Score predicted trees against gold trees.
    Eval,
    /// Clean a target treebank.
    Filter,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Delexicalized,
    Lexicalized,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Parse with gold tags read from the target treebank.
    #[arg(long, global = true)]
    use_gold_tags: bool,
    /// Skip tag mapping.
    #[arg(long, global = true)]
    no_mapping: bool,
    /// Drop morphological features from the inputs.
    #[arg(long, global = true)]
    no_morph: bool,
    /// Seed for model initialisation, training order and the tagger.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    source_treebank: Option<PathBuf>,
    #[arg(long, global = true)]
    dev_treebank: Option<PathBuf>,
    #[arg(long, global = true)]
    target_treebank: Option<PathBuf>,
    #[arg(long, global = true)]
    tagged_corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    raw_tokens: Option<PathBuf>,
    #[arg(long, global = true)]
    tag_map: Option<PathBuf>,
    #[arg(long, global = true)]
    latin_lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    tagger_model: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    predicted: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    train_log: Option<PathBuf>,
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset.map(|p| match p {
                PresetArg::Desk => Preset::Desk,
                PresetArg::Paper => Preset::Paper,
            }),
            mode: self.mode.map(|m| match m {
                ModeArg::Delexicalized => Mode::Delexicalized,
                ModeArg::Lexicalized => Mode::Lexicalized,
            }),
            use_gold_tags: self.use_gold_tags,
            no_mapping: self.no_mapping,
            no_morph: self.no_morph,
            seed: self.seed,
            paths: Paths {
                source_treebank: self.source_treebank.clone(),
                dev_treebank: self.dev_treebank.clone(),
                target_treebank: self.target_treebank.clone(),
                tagged_corpus: self.tagged_corpus.clone(),
                raw_tokens: self.raw_tokens.clone(),
                tag_map: self.tag_map.clone(),
                latin_lexicon: self.latin_lexicon.clone(),
                tagger_model: self.tagger_model.clone(),
                checkpoint: self.checkpoint.clone(),
                predicted: self.predicted.clone(),
                output: self.output.clone(),
                train_log: self.train_log.clone(),
                report: self.report.clone(),
            },
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Train => Command::Train,
        Cmd::Parse => Command::Parse,
        Cmd::Tag => Command::Tag,
        Cmd::TrainTagger => Command::TrainTagger,
        Cmd::MapTags => Command::MapTags,
        Cmd::Delex => Command::Delex,
        Cmd::Eval => Command::Eval,
        Cmd::Filter => Command::Filter,
    };
    let result = PipelineConfig::load(cli.common.config.as_deref(), &cli.common.overrides())
        .and_then(|cfg| run_command(command, &cfg));
    match result {
        Ok(outcome) => {
            for line in outcome.stdout {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
