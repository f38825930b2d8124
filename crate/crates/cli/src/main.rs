mod config;
mod failure;

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spanparse::analysis::{
    ablation_csv, context_csv, context_experiment, context_grid, derivative_by_distance, feature_csv,
    lexical_ablation, parent_probe, probe_vocabulary, word_feature_probe, FeatureProbeConfig, ParentProbeConfig,
    CONTEXT_WINDOWS,
};
use spanparse::lexical::LexicalMode;
use spanparse::parser::{self, LogEntry, ParserModel};
use spanparse::tensor::Rng;
use spanparse::treebank::synthetic::generate_synthetic;
use spanparse::treebank::{bracket_f1, read_bracketed, read_tag_file, unescape_word, write_tree, TreebankEntry};

use config::{keys_help, split_overrides, RunConfig};
use failure::CliError;

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "spanparse", version, about = "Span-based constituency parser: training, decoding and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic treebank split into train, dev and test files.
    Gen(GenArgs),
    /// Train a parser; writes config.resolved, model.best, model.final and log.tsv.
    #[command(after_help = keys_help())]
    Train(RunArgs),
    /// Parse tokenized sentences, one per line.
    Parse(ParseArgs),
    /// Labeled-bracket precision, recall and F1 of predicted trees.
    Eval(EvalArgs),
    /// Probe frozen span representations for the parent label.
    ProbeParent(ProbeParentArgs),
    /// Probe frozen character-LSTM word vectors for word features.
    ProbeWordfeat(ProbeWordfeatArgs),
    /// Average derivative norm of the encoder output by input distance.
    Derivatives(DerivativesArgs),
    /// Train every truncated, shuffled and feedforward encoder of the context grid.
    #[command(after_help = keys_help())]
    ContextGrid(ContextGridArgs),
    /// Train one parser per lexical representation.
    #[command(after_help = keys_help())]
    AblateLexical(RunArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Sentences in total, split 5:1:1 into train, dev and test.
    #[arg(long, default_value_t = 700)]
    count: usize,
    /// Seed of the generating grammar.
    #[arg(long, default_value_t = 1)]
    grammar_seed: u64,
    /// Output directory.
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; overrides the `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Models trained at once; overrides the `train.jobs` key.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct ContextGridArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated window sizes.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Tokenized sentences, one per line; standard input when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Tags aligned with the nonblank input lines.
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Written atomically; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Keep every span whose best label scores above zero, without tree constraints.
    #[arg(long)]
    independent: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    predicted: PathBuf,
}

#[derive(Args, Debug)]
struct ProbeParentArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    train_tags: Option<PathBuf>,
    #[arg(long)]
    test_tags: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Run directory for reports; defaults to the model's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeWordfeatArgs {
    #[arg(long)]
    model: PathBuf,
    /// Word types, one per line; types sampled from the synthetic grammar when omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Number of sampled word types.
    #[arg(long, default_value_t = 3000)]
    vocab_size: usize,
    /// Seed of the grammar the types are sampled from.
    #[arg(long, default_value_t = 1)]
    grammar_seed: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DerivativesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    tags: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    max_distance: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}

fn run(args: Vec<String>) -> CliResult<()> {
    let (rest, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(std::iter::once("spanparse".to_string()).chain(rest)) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let _ = e.print();
            return Err(CliError::usage("invalid command line"));
        }
    };
    let takes_overrides = matches!(
        cli.command,
        Command::Train(_) | Command::ContextGrid(_) | Command::AblateLexical(_)
    );
    if !takes_overrides && !overrides.is_empty() {
        return Err(CliError::usage(format!(
            "--{} is a config key; only train, context-grid and ablate-lexical accept config keys",
            overrides[0].0
        )));
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(&a, &overrides),
        Command::Parse(a) => parse(a),
        Command::Eval(a) => eval(a),
        Command::ProbeParent(a) => probe_parent(a),
        Command::ProbeWordfeat(a) => probe_wordfeat(a),
        Command::Derivatives(a) => derivatives(a),
        Command::ContextGrid(a) => grid(a, &overrides),
        Command::AblateLexical(a) => ablate(&a, &overrides),
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_corpus(path: &Path, tags: Option<&Path>) -> CliResult<Vec<TreebankEntry>> {
    let mut corpus = read_bracketed(&read_text(path)?)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if let Some(tag_path) = tags {
        let lines = read_tag_file(&read_text(tag_path)?);
        if lines.len() != corpus.len() {
            return Err(CliError::data(format!(
                "{} has {} tag lines for {} trees",
                tag_path.display(),
                lines.len(),
                corpus.len()
            )));
        }
        for (i, (entry, t)) in corpus.iter_mut().zip(lines).enumerate() {
            if t.len() != entry.words.len() {
                return Err(CliError::data(format!(
                    "{} line {}: {} tags for {} words",
                    tag_path.display(),
                    i + 1,
                    t.len(),
                    entry.words.len()
                )));
            }
            entry.tags = t;
        }
    }
    Ok(corpus)
}

fn load_model(path: &Path) -> CliResult<ParserModel> {
    let model = parser::load(path)?;
    if model.updates == 0 {
        eprintln!("warning: {} has never been trained", path.display());
    }
    Ok(model)
}

fn report_dir(out: Option<PathBuf>, model: &Path) -> PathBuf {
    out.unwrap_or_else(|| match model.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    })
}

fn corpus_text(entries: &[TreebankEntry]) -> (String, String) {
    let mut trees = String::new();
    let mut tags = String::new();
    for e in entries {
        trees += &write_tree(&e.tree, &e.words, Some(&e.tags));
        trees.push('\n');
        tags += &e.tags.join(" ");
        tags.push('\n');
    }
    (trees, tags)
}

fn gen(a: GenArgs) -> CliResult<()> {
    if a.count < 3 {
        return Err(CliError::usage("--count must be at least 3"));
    }
    let corpus = generate_synthetic(a.grammar_seed, a.count, &mut Rng::new(a.seed));
    let n_train = a.count * 5 / 7;
    let n_dev = a.count / 7;
    let splits = [
        ("train", &corpus[..n_train]),
        ("dev", &corpus[n_train..n_train + n_dev]),
        ("test", &corpus[n_train + n_dev..]),
    ];
    for (name, part) in splits {
        let (trees, tags) = corpus_text(part);
        write_atomic(&a.out.join(format!("{name}.trees")), &trees)?;
        write_atomic(&a.out.join(format!("{name}.tags")), &tags)?;
        println!("{name}\t{}\t{}", part.len(), a.out.join(format!("{name}.trees")).display());
    }
    Ok(())
}

fn resolve(a: &RunArgs, overrides: &[(String, String)]) -> CliResult<RunConfig> {
    let mut c = RunConfig::default();
    if let Some(p) = &a.config {
        c.apply_text(&read_text(p)?)?;
    }
    for (k, v) in overrides {
        c.set(k, v)?;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(o) = &a.out {
        c.output = o.clone();
    }
    if let Some(j) = a.jobs {
        c.jobs = j;
    }
    c.parser_config()?;
    Ok(c)
}

fn train_dev(c: &RunConfig) -> CliResult<(Vec<TreebankEntry>, Vec<TreebankEntry>)> {
    let train_path = c.train.as_ref().ok_or_else(|| CliError::usage("data.train is not set"))?;
    let dev_path = c.dev.as_ref().ok_or_else(|| CliError::usage("data.dev is not set"))?;
    Ok((
        read_corpus(train_path, c.train_tags.as_deref())?,
        read_corpus(dev_path, c.dev_tags.as_deref())?,
    ))
}

fn train(a: &RunArgs, overrides: &[(String, String)]) -> CliResult<()> {
    let c = resolve(a, overrides)?;
    let (train_set, dev) = train_dev(&c)?;
    write_atomic(&c.output.join("config.resolved"), &c.resolved())?;
    let mut model = ParserModel::for_corpus(c.parser_config()?, &train_set, &mut Rng::new(c.seed))?;
    eprintln!(
        "training {} on {} sentences ({} parameters)",
        model.config.encoder.variant,
        train_set.len(),
        model.params.num_values()
    );
    eprintln!("{}", LogEntry::HEADER);
    let report = parser::train(&mut model, &train_set, &dev, &c.train_config(), |e| eprintln!("{}", e.tsv()))?;
    let mut log = format!("{}\n", LogEntry::HEADER);
    for e in &report.log {
        log += &e.tsv();
        log.push('\n');
    }
    write_atomic(&c.output.join("log.tsv"), &log)?;
    parser::save(&model, &c.output.join("model.best"))?;
    model.params.restore(&report.final_params)?;
    parser::save(&model, &c.output.join("model.final"))?;
    println!("best dev F1 {:.4} at epoch {:.2}", report.best_f1, report.best_epoch);
    Ok(())
}

fn parse(a: ParseArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let text = match &a.input {
        Some(p) => read_text(p)?,
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
            s
        }
    };
    let mut sentences = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let words: Vec<String> = line.split_whitespace().map(unescape_word).collect();
        if words.is_empty() {
            eprintln!("warning: input line {} is empty; skipped", n + 1);
        } else {
            sentences.push(words);
        }
    }
    let tags = match &a.tags {
        Some(p) => {
            let t = read_tag_file(&read_text(p)?);
            if t.len() != sentences.len() {
                return Err(CliError::data(format!(
                    "{} has {} tag lines for {} sentences",
                    p.display(),
                    t.len(),
                    sentences.len()
                )));
            }
            Some(t)
        }
        None if model.config.lexical.mode.uses_tags() => {
            return Err(CliError::usage(format!(
                "the model uses lexical mode {} and needs --tags",
                model.config.lexical.mode
            )))
        }
        None => None,
    };
    let mut out = String::new();
    for (i, words) in sentences.iter().enumerate() {
        let t = tags.as_ref().map(|t| t[i].as_slice());
        if let Some(t) = t {
            if t.len() != words.len() {
                return Err(CliError::data(format!("sentence {}: {} tags for {} words", i + 1, t.len(), words.len())));
            }
        }
        if a.independent {
            let d = model.parse_independent(words, t)?;
            let valid = spanparse::treebank::check_valid_bracketing(&d.spans, words.len());
            out += &format!("valid={valid}");
            for s in &d.spans {
                out += &format!(" ({},{},{})", s.start, s.end, s.label.as_deref().unwrap_or(""));
            }
        } else {
            let d = model.parse(words, t)?;
            let tree = d.tree.ok_or_else(|| CliError {
                exit: failure::Exit::Internal,
                message: "tree decoding produced no tree".to_string(),
            })?;
            out += &write_tree(&tree, words, t);
        }
        out.push('\n');
    }
    match &a.output {
        Some(p) => write_atomic(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let gold = read_corpus(&a.gold, None)?;
    let predicted = read_corpus(&a.predicted, None)?;
    let gold_trees: Vec<_> = gold.into_iter().map(|e| e.tree).collect();
    let spans: Vec<_> = predicted.iter().map(|e| e.tree.spans()).collect();
    let score = bracket_f1(&gold_trees, &spans)?;
    println!("{}", score.summary());
    Ok(())
}

fn probe_parent(a: ProbeParentArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let train_set = read_corpus(&a.train, a.train_tags.as_deref())?;
    let test = read_corpus(&a.test, a.test_tags.as_deref())?;
    let config = ParentProbeConfig {
        epochs: a.epochs,
        seed: a.seed,
        ..ParentProbeConfig::default()
    };
    let report = parent_probe(&model, &train_set, &test, &config)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let dir = report_dir(a.out, &a.model);
    write_atomic(&dir.join("reports/parent_probe.csv"), &report.csv())?;
    println!(
        "probe accuracy {:.4}\tmajority baseline {:.4}\t({} test constituents)",
        report.accuracy, report.majority_baseline, report.test_examples
    );
    Ok(())
}

fn probe_wordfeat(a: ProbeWordfeatArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let vocab = match &a.vocab {
        Some(p) => read_text(p)?
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect(),
        None => probe_vocabulary(a.grammar_seed, a.vocab_size, &mut Rng::new(a.seed).derive(7)),
    };
    let config = FeatureProbeConfig {
        epochs: a.epochs,
        seed: a.seed,
        ..FeatureProbeConfig::default()
    };
    let results = word_feature_probe(&model, &vocab, &config)?;
    let dir = report_dir(a.out, &a.model);
    write_atomic(&dir.join("reports/word_features.csv"), &feature_csv(&results))?;
    for r in &results {
        println!("{:<24}{:.4}\t(majority {:.4})", r.name, r.accuracy, r.majority);
    }
    Ok(())
}

fn derivatives(a: DerivativesArgs) -> CliResult<()> {
    if a.max_distance == 0 {
        return Err(CliError::usage("--max-distance must be positive"));
    }
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus, a.tags.as_deref())?;
    let buckets = derivative_by_distance(&model, &corpus, a.max_distance, &mut Rng::new(a.seed))?;
    let csv = buckets.csv();
    let dir = report_dir(a.out, &a.model);
    write_atomic(&dir.join("reports/derivatives.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn grid(a: ContextGridArgs, overrides: &[(String, String)]) -> CliResult<()> {
    let c = resolve(&a.run, overrides)?;
    let (train_set, dev) = train_dev(&c)?;
    write_atomic(&c.output.join("config.resolved"), &c.resolved())?;
    let windows = a.windows.unwrap_or_else(|| CONTEXT_WINDOWS.to_vec());
    let variants = context_grid(&windows);
    eprintln!("training {} grid cells on {} worker(s)", variants.len(), c.jobs);
    let results = context_experiment(
        &c.parser_config()?,
        &variants,
        &train_set,
        &dev,
        &c.train_config(),
        c.jobs,
    )?;
    let csv = context_csv(&results);
    write_atomic(&c.output.join("reports/context_grid.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn ablate(a: &RunArgs, overrides: &[(String, String)]) -> CliResult<()> {
    let c = resolve(a, overrides)?;
    let (train_set, dev) = train_dev(&c)?;
    write_atomic(&c.output.join("config.resolved"), &c.resolved())?;
    let results = lexical_ablation(
        &c.parser_config()?,
        &LexicalMode::ALL,
        &train_set,
        &dev,
        &c.train_config(),
        c.jobs,
    )?;
    write_atomic(&c.output.join("reports/lexical_ablation.csv"), &ablation_csv(&results))?;
    println!("{:<16}dev F1", "representation");
    for r in &results {
        println!("{:<16}{:.2}", r.mode.name(), 100.0 * r.f1);
    }
    Ok(())
}
