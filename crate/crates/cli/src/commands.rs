use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ctxbias::bias::{build_bias_table, compile_context, BiasConfig, BiasTable, Scheme, Scorer};
use ctxbias::clustering::{brown_cluster, ClusterAssignment};
use ctxbias::corpus::{build_vocab, count_ngrams, sentences, Vocabulary};
use ctxbias::decode_sim::{
    beam_decode, inject_context_arcs, read_lattices, write_lattices, ConfusionLattice, Hypothesis, LatticeBuilder,
    NoiseConfig,
};
use ctxbias::eval::desk::{generate_desk, DeskConfig};
use ctxbias::eval::{grid_csv, run_experiment, Bench, BenchConfig, EvalReport, ExperimentConfig};
use ctxbias::ngram_lm::{read_arpa, train_lm, write_arpa, LmConfig, NgramModel};
use ctxbias::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::Ledger;
use crate::{
    BiasTableArgs, Cli, ClusterArgs, Command, DecodeArgs, EvalArgs, GenCorpusArgs, MakeLatticesArgs, TrainArgs,
};

pub fn run(cli: Cli) -> CliResult<()> {
    let mut ledger = Ledger::open(cli.manifest.as_deref())?;
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(a, &mut ledger)?,
        Command::Train(a) => train(a, &mut ledger)?,
        Command::Cluster(a) => cluster(a, &mut ledger)?,
        Command::BiasTable(a) => bias_table(a, &mut ledger)?,
        Command::MakeLattices(a) => make_lattices(a, &mut ledger)?,
        Command::Decode(a) => decode(a, &mut ledger)?,
        Command::Eval(a) => eval(a, &mut ledger)?,
    }
    ledger.save()
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

fn reader(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

/// Write through a buffer, naming the path on failure.
fn write_file(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> ctxbias::Result<()>) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    fill(&mut out).map_err(|e| CliError::in_file(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn load_vocab(path: &Path, ledger: &Ledger) -> CliResult<Arc<Vocabulary>> {
    ledger.verify("vocab", path, None)?;
    let vocab = Vocabulary::read_tsv(reader(path)?).map_err(|e| CliError::in_file(path, e))?;
    Ok(Arc::new(vocab))
}

/// ARPA model bound to the counted vocabulary it was trained with.
fn load_lm(path: &Path, vocab: Arc<Vocabulary>, ledger: &Ledger) -> CliResult<NgramModel> {
    ledger.verify("lm", path, Some(&vocab.checksum()))?;
    let model = read_arpa(reader(path)?).map_err(|e| CliError::in_file(path, e))?;
    model.with_vocab(vocab).map_err(|e| CliError::in_file(path, e))
}

fn load_bias(path: &Path, vocab: &Vocabulary, ledger: &Ledger) -> CliResult<BiasTable> {
    ledger.verify("bias", path, Some(&vocab.checksum()))?;
    BiasTable::read_tsv(reader(path)?, vocab).map_err(|e| CliError::in_file(path, e))
}

fn load_lattices(path: &Path, vocab: &Vocabulary, ledger: &Ledger) -> CliResult<Vec<ConfusionLattice>> {
    ledger.verify("lattices", path, Some(&vocab.checksum()))?;
    read_lattices(reader(path)?).map_err(|e| CliError::in_file(path, e))
}

fn load_corpus(path: &Path, ledger: &Ledger) -> CliResult<Vec<Vec<String>>> {
    ledger.verify("corpus", path, None)?;
    Ok(sentences(&read_text(path)?))
}

fn gen_corpus(a: GenCorpusArgs, ledger: &mut Ledger) -> CliResult<()> {
    let config = DeskConfig {
        train_sentences: a.train_sentences,
        test_utterances: a.test_utterances,
        seed: a.seed,
        ..Default::default()
    };
    let corpus = generate_desk(&config);
    for (path, text) in [(&a.train_out, corpus.train_text()), (&a.test_out, corpus.test_text())] {
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    let echo = serde_json::to_value(config).expect("config serializes");
    ledger.record("corpus", &a.train_out, None, echo.clone())?;
    ledger.record("test", &a.test_out, None, echo)?;
    println!(
        "{} training sentences, {} test utterances",
        corpus.train.len(),
        corpus.test.len()
    );
    Ok(())
}

fn train(a: TrainArgs, ledger: &mut Ledger) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus, ledger)?;
    let vocab = Arc::new(build_vocab(&corpus, a.max_vocab).map_err(|e| CliError::in_file(&a.corpus, e))?);
    let config = LmConfig { order: a.order };
    let counts = count_ngrams(&corpus, &vocab, a.order)?;
    let model = train_lm(&counts, vocab.clone(), config)?;
    write_file(&a.vocab_out, |w| vocab.write_tsv(w))?;
    write_file(&a.lm_out, |w| write_arpa(&model, w))?;
    let checksum = vocab.checksum();
    let echo = json!({ "corpus": a.corpus, "order": a.order, "max_vocab": a.max_vocab });
    ledger.record("vocab", &a.vocab_out, Some(checksum.clone()), echo.clone())?;
    ledger.record("lm", &a.lm_out, Some(checksum.clone()), echo)?;
    let grams: Vec<String> = model
        .ngram_counts()
        .iter()
        .enumerate()
        .map(|(k, n)| format!("{}={n}", k + 1))
        .collect();
    println!(
        "vocabulary {} words ({checksum}); ngrams {}",
        vocab.len(),
        grams.join(" ")
    );
    Ok(())
}

fn cluster_corpus(corpus: &Path, vocab: &Vocabulary, classes: usize, ledger: &Ledger) -> CliResult<ClusterAssignment> {
    let counts = count_ngrams(&load_corpus(corpus, ledger)?, vocab, 2)?;
    Ok(brown_cluster(&counts, vocab, classes)?)
}

fn cluster(a: ClusterArgs, ledger: &mut Ledger) -> CliResult<()> {
    let vocab = load_vocab(&a.vocab, ledger)?;
    let assignment = cluster_corpus(&a.corpus, &vocab, a.classes, ledger)?;
    write_file(&a.out, |w| assignment.write_tsv(&vocab, w))?;
    ledger.record(
        "classes",
        &a.out,
        Some(vocab.checksum()),
        json!({ "classes": a.classes }),
    )?;
    println!("{} classes over {} words", assignment.num_classes(), vocab.len());
    Ok(())
}

fn bias_table(a: BiasTableArgs, ledger: &mut Ledger) -> CliResult<()> {
    let vocab = load_vocab(&a.vocab, ledger)?;
    let assignment = match (&a.class_map, a.classes) {
        (Some(map), _) => {
            ledger.verify("classes", map, Some(&vocab.checksum()))?;
            let counts = count_ngrams(&load_corpus(&a.corpus, ledger)?, &vocab, 2)?;
            ClusterAssignment::read_tsv(reader(map)?, &vocab, &counts).map_err(|e| CliError::in_file(map, e))?
        }
        (None, Some(k)) => cluster_corpus(&a.corpus, &vocab, k, ledger)?,
        (None, None) => return Err(CliError::Usage("either --classes or --class-map is required".into())),
    };
    // The class LM is never persisted; only the per-word table leaves this command.
    let table = build_bias_table(&assignment);
    let echo = json!({ "classes": assignment.num_classes(), "class_map": a.class_map });
    if let Some(out) = &a.class_map_out {
        write_file(out, |w| assignment.write_tsv(&vocab, w))?;
        ledger.record("classes", out, Some(vocab.checksum()), echo.clone())?;
    }
    write_file(&a.out, |w| table.write_tsv(&vocab, w))?;
    ledger.record("bias", &a.out, Some(vocab.checksum()), echo)?;
    println!(
        "bias table for {} words over {} classes",
        table.len(),
        table.num_classes()
    );
    Ok(())
}

fn make_lattices(a: MakeLatticesArgs, ledger: &mut Ledger) -> CliResult<()> {
    let vocab = load_vocab(&a.vocab, ledger)?;
    ledger.verify("test", &a.refs, None)?;
    let noise = NoiseConfig::from(a.noise);
    let mut builder = LatticeBuilder::new(&vocab, noise)?;
    let mut lattices = Vec::new();
    for (i, line) in read_text(&a.refs)?.lines().enumerate() {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let lattice = builder
            .build(&words)
            .map_err(|e| CliError::in_file(&a.refs, Error::parse(i + 1, e.to_string())))?;
        lattices.push(lattice);
    }
    write_file(&a.out, |w| write_lattices(&lattices, w))?;
    let echo = serde_json::to_value(noise).expect("noise serializes");
    ledger.record("lattices", &a.out, Some(vocab.checksum()), echo)?;
    println!("{} lattices", lattices.len());
    Ok(())
}

fn read_context(path: &Path, ledger: &Ledger) -> CliResult<Vec<String>> {
    ledger.verify("context", path, None)?;
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[derive(Serialize)]
struct DecodedLine<'a> {
    index: usize,
    text: String,
    #[serde(flatten)]
    hypothesis: &'a Hypothesis,
}

fn decode(a: DecodeArgs, ledger: &mut Ledger) -> CliResult<()> {
    let vocab = load_vocab(&a.vocab, ledger)?;
    let model = load_lm(&a.lm, vocab.clone(), ledger)?;
    let lattices = load_lattices(&a.lattices, &vocab, ledger)?;
    let phrases = match &a.context {
        Some(p) => read_context(p, ledger)?,
        None => Vec::new(),
    };
    let scheme = Scheme::from(a.scheme);
    let bias = BiasConfig::new(a.lambda, a.alpha)?;
    let noise = NoiseConfig {
        gamma: a.gamma,
        d_max: a.d_max,
        ..Default::default()
    };
    noise.validate()?;
    if a.beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    let context = compile_context(&phrases, &vocab, scheme);
    let table = match &a.bias {
        Some(p) => Some(load_bias(p, &vocab, ledger)?),
        None if context.is_empty() => None,
        None => return Err(CliError::Usage("a non-empty --context needs --bias".into())),
    };
    let scorer = match &table {
        Some(t) => Scorer::biased(&model, t, &context, bias)?,
        None => Scorer::lm_only(&model),
    };
    write_file(&a.out, |w| {
        for (index, lattice) in lattices.iter().enumerate() {
            let lattice = inject_context_arcs(lattice, &context, &noise);
            let hypothesis = beam_decode(&lattice, &scorer, a.beam);
            let line = DecodedLine {
                index,
                text: hypothesis.tokens.join(" "),
                hypothesis: &hypothesis,
            };
            writeln!(w, "{}", serde_json::to_string(&line).expect("hypothesis serializes"))?;
        }
        Ok(())
    })?;
    let echo = json!({
        "scheme": scheme, "lambda": a.lambda, "alpha": a.alpha, "beam": a.beam,
        "gamma": a.gamma, "d_max": a.d_max, "context": a.context, "context_entries": context.len(),
    });
    ledger.record("hypotheses", &a.out, Some(vocab.checksum()), echo)?;
    println!(
        "decoded {} lattices with {} context entries",
        lattices.len(),
        context.len()
    );
    Ok(())
}

/// Experiment description read by `eval`. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalConfig {
    lm: PathBuf,
    vocab: PathBuf,
    bias: PathBuf,
    lattices: PathBuf,
    report: Option<PathBuf>,
    grid: Option<PathBuf>,
    /// Grid axes; each defaults to the single value in `experiment`.
    #[serde(default)]
    lambdas: Vec<f64>,
    #[serde(default)]
    alphas: Vec<f64>,
    #[serde(default)]
    experiment: ExperimentConfig,
    #[serde(default)]
    bench: BenchConfig,
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    baseline_wer: f64,
    runs: &'a [EvalReport],
}

fn eval(a: EvalArgs, ledger: &mut Ledger) -> CliResult<()> {
    let text = read_text(&a.config)?;
    let config: EvalConfig = toml::from_str(&text).map_err(|source| CliError::ConfigFile {
        path: a.config.clone(),
        source,
    })?;
    let base = a.config.parent().unwrap_or(Path::new(""));
    let resolve = |p: &Path| -> PathBuf { base.join(p) };
    let report_path = a
        .report
        .or(config.report.as_deref().map(resolve))
        .ok_or_else(|| CliError::Usage("no report path: set `report` in the config or pass --report".into()))?;
    let grid_path = a.grid.or(config.grid.as_deref().map(resolve));

    let vocab = load_vocab(&resolve(&config.vocab), ledger)?;
    let model = load_lm(&resolve(&config.lm), vocab.clone(), ledger)?;
    let table = load_bias(&resolve(&config.bias), &vocab, ledger)?;
    let lattices = load_lattices(&resolve(&config.lattices), &vocab, ledger)?;
    let bench = Bench::new(model, lattices, config.bench)?;

    let lambdas = if config.lambdas.is_empty() {
        vec![config.experiment.lambda]
    } else {
        config.lambdas.clone()
    };
    let alphas = if config.alphas.is_empty() {
        vec![config.experiment.alpha]
    } else {
        config.alphas.clone()
    };
    let baseline = run_experiment(
        &bench,
        &table,
        &ExperimentConfig {
            condition: ctxbias::eval::Condition::Baseline,
            ..config.experiment
        },
    )?;
    let mut runs = Vec::new();
    for &lambda in &lambdas {
        for &alpha in &alphas {
            let experiment = ExperimentConfig {
                lambda,
                alpha,
                ..config.experiment
            };
            runs.push(run_experiment(&bench, &table, &experiment)?);
        }
    }
    let output = EvalOutput {
        baseline_wer: baseline.wer,
        runs: &runs,
    };
    let json = serde_json::to_string_pretty(&output).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(|e| Error::io(&report_path, e))?;
    let echo = json!({
        "config": a.config, "experiment": config.experiment, "bench": config.bench,
        "lambdas": lambdas, "alphas": alphas,
    });
    ledger.record("report", &report_path, Some(vocab.checksum()), echo.clone())?;
    if let Some(g) = &grid_path {
        fs::write(g, grid_csv(&runs)).map_err(|e| Error::io(g, e))?;
        ledger.record("grid", g, Some(vocab.checksum()), echo)?;
    }
    println!("baseline WER {:.4}", baseline.wer);
    for r in &runs {
        println!(
            "{} {} lambda={} alpha={} WER {:.4}",
            r.scheme, r.condition, r.lambda, r.alpha, r.wer
        );
    }
    Ok(())
}
