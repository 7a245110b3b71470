mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxbias::bias::Scheme;
use ctxbias::decode_sim::NoiseConfig;

#[derive(Parser)]
#[command(name = "ctxbias", version, about = "Class-based contextual biasing pipeline")]
struct Cli {
    /// JSON manifest that records every artifact written and is checked on every read.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic desk-assistant train and test corpora.
    GenCorpus(GenCorpusArgs),
    /// Build the vocabulary and a Witten-Bell n-gram LM (ARPA).
    Train(TrainArgs),
    /// Cluster the vocabulary into word classes and write the class map.
    Cluster(ClusterArgs),
    /// Write the per-word bias table, clustering first unless a class map is given.
    BiasTable(BiasTableArgs),
    /// Turn reference transcripts into simulated confusion lattices.
    MakeLattices(MakeLatticesArgs),
    /// Beam-decode lattices with optional contextual biasing.
    Decode(DecodeArgs),
    /// Run an experiment grid described by a TOML file.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    train_sentences: usize,
    #[arg(long, default_value_t = 500)]
    test_utterances: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training text, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long, default_value_t = 100_000)]
    max_vocab: usize,
    #[arg(long)]
    vocab_out: PathBuf,
    #[arg(long)]
    lm_out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BiasTableArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, required_unless_present = "class_map", conflicts_with = "class_map")]
    classes: Option<usize>,
    /// Reuse a class map written by `cluster`.
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Also write the class map used.
    #[arg(long)]
    class_map_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct NoiseArgs {
    /// Confusers per slot.
    #[arg(long, default_value_t = NoiseConfig::default().confusers)]
    confusers: usize,
    /// Acoustic penalty per unit of edit distance.
    #[arg(long, default_value_t = NoiseConfig::default().gamma)]
    gamma: f64,
    /// Rate at which rare reference words lose their own slot.
    #[arg(long, default_value_t = NoiseConfig::default().truth_drop)]
    truth_drop: f64,
    /// Training count at or below which a word counts as rare.
    #[arg(long, default_value_t = NoiseConfig::default().rare_max_count)]
    rare_max_count: u64,
    /// Largest edit distance at which context entries are injected.
    #[arg(long, default_value_t = NoiseConfig::default().d_max)]
    d_max: usize,
    #[arg(long, default_value_t = NoiseConfig::default().seed)]
    seed: u64,
}

impl From<NoiseArgs> for NoiseConfig {
    fn from(a: NoiseArgs) -> Self {
        NoiseConfig {
            confusers: a.confusers,
            gamma: a.gamma,
            truth_drop: a.truth_drop,
            rare_max_count: a.rare_max_count,
            d_max: a.d_max,
            seed: a.seed,
        }
    }
}

#[derive(Args)]
struct MakeLatticesArgs {
    /// Reference transcripts, one per line; blank lines are skipped.
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Expansion,
    Oov,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Expansion => Scheme::Expansion,
            SchemeArg::Oov => Scheme::Oov,
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Bias table; without it only an empty context is accepted.
    #[arg(long)]
    bias: Option<PathBuf>,
    #[arg(long)]
    lattices: PathBuf,
    /// Context phrases, one per line.
    #[arg(long)]
    context: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "expansion")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    #[arg(long, default_value_t = 8)]
    beam: usize,
    /// Acoustic penalty per unit of edit distance for injected context arcs.
    #[arg(long, default_value_t = NoiseConfig::default().gamma)]
    gamma: f64,
    /// Largest edit distance at which context entries are injected.
    #[arg(long, default_value_t = NoiseConfig::default().d_max)]
    d_max: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the report path from the config.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides the grid CSV path from the config.
    #[arg(long)]
    grid: Option<PathBuf>,
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.render().to_string();
            let text: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.starts_with("For more information"))
                .collect();
            let text = one_line(&text.join(" "));
            eprintln!("error[usage]: {}", text.strip_prefix("error: ").unwrap_or(&text));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
