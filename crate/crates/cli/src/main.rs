use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stackjoint::corpus::{evaluate, load_embeddings, read_conll, write_conll_string, EmbeddingTable, Format, Sentence};
use stackjoint::decoder::parse_corpus;
use stackjoint::oracle::{format_transitions, trace};
use stackjoint::pid::{mark_predicates, train_pid};
use stackjoint::trainer::{instances, train};
use stackjoint::{par, Config, Mode, ModelFile};

/// Joint dependency parser and semantic role labeler.
#[derive(Parser)]
#[command(name = "stackjoint", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// CoNLL shared-task column layout.
    #[arg(long, global = true, default_value = "2009", value_parser = ["2008", "2009"])]
    format: String,
    /// joint, syntax-only, semantics-only or hybrid.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Pretrained word vectors, one word and its values per line.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Model file to write (train, pid-train) or read (parse).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sentence-parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print a transition-by-transition trace to stderr.
    #[arg(long, global = true)]
    trace: bool,
    /// TOML configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a parser and write it to --model.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Parse a CoNLL file with the model in --model.
    Parse {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dump the oracle transition sequence of each gold sentence.
    Oracle {
        #[arg(long)]
        input: PathBuf,
    },
    /// Score predicted against gold annotation.
    Eval { gold: PathBuf, predicted: PathBuf },
    /// Train the predicate identifier and add it to --model.
    PidTrain {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

/// Errors that should exit with the usage status.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn existing(path: &Path) -> Result<&Path> {
    if !path.is_file() {
        return Err(Usage(format!("no such file: {}", path.display())).into());
    }
    Ok(path)
}

fn model_path(common: &Common) -> Result<&Path> {
    match &common.model {
        Some(p) => Ok(p),
        None => Err(Usage("--model is required".into()).into()),
    }
}

fn format(common: &Common) -> Format {
    common.format.parse().expect("restricted by clap")
}

fn read(path: &Path, format: Format) -> Result<Vec<Sentence>> {
    read_conll(existing(path)?, format).with_context(|| format!("reading {}", path.display()))
}

fn config(common: &Common, epochs: Option<usize>) -> Result<Config> {
    let mut config = match &common.config {
        Some(p) => Config::load(existing(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(mode) = common.mode {
        config.train.mode = mode;
    }
    if let Some(seed) = common.seed {
        config.train.seed = seed;
        config.pid.seed = seed;
    }
    if let Some(e) = epochs {
        config.train.epochs = e;
        config.pid.epochs = e;
    }
    Ok(config)
}

/// The model file at `path` if one exists, so that training one section
/// keeps the other.
fn previous(path: &Path) -> Result<ModelFile> {
    if path.is_file() {
        ModelFile::load(path).with_context(|| format!("reading {}", path.display()))
    } else {
        Ok(ModelFile::default())
    }
}

fn log_json<T: serde::Serialize>(record: &T) {
    if let Ok(line) = serde_json::to_string(record) {
        eprintln!("{line}");
    }
}

fn run_train(common: &Common, train_path: &Path, dev: Option<&Path>, epochs: Option<usize>) -> Result<()> {
    let out = model_path(common)?;
    let config = config(common, epochs)?;
    let format = format(common);
    let corpus = read(train_path, format)?;
    let dev = dev.map(|d| read(d, format)).transpose()?;
    let pretrained = match &common.embeddings {
        Some(p) => load_embeddings(existing(p)?, config.train.seed).with_context(|| format!("reading {}", p.display()))?,
        None => EmbeddingTable::empty(),
    };
    let parser = train(&corpus, dev.as_deref(), pretrained, &config.train, &mut |r| log_json(r))?;
    let mut file = previous(out)?;
    file.parser = Some(parser);
    file.save(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn run_pid_train(common: &Common, train_path: &Path, dev: Option<&Path>, epochs: Option<usize>) -> Result<()> {
    let out = model_path(common)?;
    let config = config(common, epochs)?;
    let format = format(common);
    let corpus = read(train_path, format)?;
    let dev = dev.map(|d| read(d, format)).transpose()?;
    let pid = train_pid(&corpus, dev.as_deref(), &config.pid, |r: &_| log_json(r))?;
    let mut file = previous(out)?;
    file.pid = Some(pid);
    file.save(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn print_trace(sentence: &Sentence, mode: Mode, transitions: &[stackjoint::Transition]) -> Result<()> {
    let mut err = io::stderr().lock();
    for row in trace(sentence, mode, transitions)? {
        writeln!(err, "{row}")?;
    }
    writeln!(err)?;
    Ok(())
}

fn run_parse(common: &Common, input: &Path, output: Option<&Path>) -> Result<()> {
    let path = model_path(common)?;
    let file = ModelFile::load(existing(path)?).with_context(|| format!("reading {}", path.display()))?;
    let Some(model) = file.parser else {
        bail!("{} has no parser section; run train first", path.display());
    };
    if let Some(mode) = common.mode {
        if mode != model.mode {
            bail!("model was trained for {} mode, not {mode}", model.mode);
        }
    }
    let format = format(common);
    let mut corpus = read(input, format)?;
    if let Some(pid) = &file.pid {
        corpus = mark_predicates(&corpus, pid);
    }
    let parsed = parse_corpus(&model, &corpus)?;
    if common.trace {
        for (s, p) in corpus.iter().zip(&parsed) {
            print_trace(s, model.mode, &p.transitions)?;
        }
    }
    let sentences: Vec<Sentence> = parsed.into_iter().map(|p| p.sentence).collect();
    let text = write_conll_string(&sentences, format);
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run_oracle(common: &Common, input: &Path) -> Result<()> {
    let mode = common.mode.unwrap_or(Mode::Joint);
    let corpus = read(input, format(common))?;
    let oracle_mode = if mode == Mode::Hybrid { Mode::Joint } else { mode };
    let insts = instances(&corpus, oracle_mode)?;
    let mut out = io::stdout().lock();
    for inst in &insts {
        write!(out, "{}", format_transitions(&inst.transitions))?;
        writeln!(out)?;
        if common.trace {
            print_trace(&inst.sentence, oracle_mode, &inst.transitions)?;
        }
    }
    let exact = insts.iter().filter(|i| i.exact).count();
    eprintln!("sentences={} exact={} inexact={}", insts.len(), exact, insts.len() - exact);
    Ok(())
}

fn run_eval(common: &Common, gold: &Path, predicted: &Path) -> Result<()> {
    let format = format(common);
    let m = evaluate(&read(gold, format)?, &read(predicted, format)?)?;
    let rows = [
        ("las", m.las),
        ("sem_precision", m.sem_precision),
        ("sem_recall", m.sem_recall),
        ("sem_f1", m.sem_f1),
        ("macro_f1", m.macro_f1),
    ];
    let mut out = io::stdout().lock();
    writeln!(out, "{:<15}{:>8}", "metric", "score")?;
    for (k, v) in rows {
        writeln!(out, "{k:<15}{:>8.2}", v * 100.0)?;
    }
    writeln!(out)?;
    for (k, v) in rows {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    par::with_threads(common.threads, || match &cli.command {
        Command::Train { train, dev, epochs } => run_train(common, train, dev.as_deref(), *epochs),
        Command::Parse { input, output } => run_parse(common, input, output.as_deref()),
        Command::Oracle { input } => run_oracle(common, input),
        Command::Eval { gold, predicted } => run_eval(common, gold, predicted),
        Command::PidTrain { train, dev, epochs } => run_pid_train(common, train, dev.as_deref(), *epochs),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
