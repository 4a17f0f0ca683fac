//! `chardense` command line: train, tag, eval, extract-features, bench
//! and experiment subcommands over the core toolkit.

mod bench;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use chardense_core::corpus::{load_embeddings, build_vocab, BioMode, Dataset, TagScheme};
use chardense_core::featurizer::{featurize_word, NgramStats, DEFAULT_MAX_N};
use chardense_core::metrics::{chunk_f1, token_accuracy};
use chardense_core::model::TaggerModel;
use chardense_core::train::{multi_seed, train};
use chardense_core::CoreError;

use config::Settings;

#[derive(Parser)]
#[command(name = "chardense", version, about = "Character-dense sequence labeling toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct CommonFlags {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output layer: softmax or crf
    #[arg(long)]
    head: Option<String>,
    /// Number of pieces each word is split into
    #[arg(long = "pieces-k")]
    pieces_k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "initial-batch")]
    initial_batch: Option<usize>,
    /// Fraction of steps with frozen embeddings
    #[arg(long = "freeze-frac")]
    freeze_frac: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a tagger and write the best-dev checkpoint
    Train {
        /// Directory with train.txt and optional dev.txt / test.txt
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Pretrained embedding text file (word v1 .. vdim)
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Repair BIO violations in training data instead of failing
        #[arg(long)]
        lenient_bio: bool,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Tag a CoNLL file, appending a predicted-tag column
    Tag {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output path; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Score predictions against gold tags (last column of each file)
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Print feature vectors for words, one `word<TAB>v1,v2,...` line each
    ExtractFeatures {
        /// Word to featurize; repeatable
        #[arg(long = "word")]
        words: Vec<String>,
        /// File with one word per line
        #[arg(long)]
        input: Option<PathBuf>,
        /// Emit the sparse character vector instead of the dense layer output
        #[arg(long)]
        sparse: bool,
        /// Checkpoint supplying n-gram stats, alphabet and the dense layer
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "pieces-k", default_value_t = 2)]
        pieces_k: usize,
    },
    /// Measure featurization and training throughput
    Bench {
        /// Corpus directory; a synthetic corpus is used when omitted
        #[arg(long)]
        data: Option<PathBuf>,
        /// Timed epochs after one warmup
        #[arg(long = "timed-epochs", default_value_t = 3)]
        timed_epochs: usize,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Multi-seed training runs with a mean/SD report
    Experiment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[command(flatten)]
        flags: CommonFlags,
    },
}

enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.cmd) {
        let one_line = e.message().replace('\n', " ");
        eprintln!("error: {one_line}");
        std::process::exit(e.code());
    }
}

fn settings_from(flags: &CommonFlags) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = &flags.config {
        s.apply_file(path).map_err(CliError::Usage)?;
    }
    if let Some(v) = flags.seed {
        s.train.seed = v;
    }
    if let Some(v) = &flags.head {
        s.model.head = config::parse_head(v).map_err(CliError::Usage)?;
    }
    if let Some(v) = flags.pieces_k {
        s.model.pieces_k = v;
    }
    if let Some(v) = flags.epochs {
        s.train.epochs = v;
    }
    if let Some(v) = flags.initial_batch {
        s.train.initial_batch = v;
    }
    if let Some(v) = flags.freeze_frac {
        s.train.t_freeze = v;
    }
    if let Some(v) = flags.threads {
        s.threads = v;
    }
    s.model
        .validate()
        .and_then(|()| s.train.validate())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(s)
}

fn load_dataset(dir: &Path, lenient: bool) -> Result<Dataset, CliError> {
    let mode = if lenient { BioMode::Lenient } else { BioMode::Strict };
    Ok(Dataset::load_dir(dir, 0, 1, TagScheme::Bio, mode)?)
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Train {
            data,
            checkpoint,
            embeddings,
            lenient_bio,
            flags,
        } => {
            let settings = settings_from(&flags)?;
            let dataset = load_dataset(&data, lenient_bio)?;
            let pretrained = match embeddings {
                Some(path) => {
                    let vocab = build_vocab(
                        &dataset.train,
                        settings.train.min_count,
                        settings.train.lowercase,
                    );
                    Some(load_embeddings(
                        std::fs::File::open(path)?,
                        &vocab,
                        settings.model.word_dim,
                        settings.train.seed,
                    )?)
                }
                None => None,
            };
            let outcome = train(&dataset, &settings.model, &settings.train, pretrained.as_ref())?;
            std::fs::write(&checkpoint, &outcome.checkpoint)?;
            print!("{}", outcome.log.to_text());
            println!(
                "best epoch {}\tdev {:.4}\tcheckpoint {}",
                outcome.best_epoch,
                outcome.best_dev,
                checkpoint.display()
            );
            Ok(())
        }
        Cmd::Tag {
            checkpoint,
            input,
            output,
            threads,
        } => {
            if threads == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            let model = TaggerModel::from_bytes(&std::fs::read(&checkpoint)?)?;
            let text = std::fs::read_to_string(&input)?;
            let tagged = tag_text(&model, &text, threads)?;
            match output {
                Some(path) => std::fs::write(path, tagged)?,
                None => print!("{tagged}"),
            }
            Ok(())
        }
        Cmd::Eval { gold, pred } => {
            let gold_tags = read_last_column(&gold)?;
            let pred_tags = read_last_column(&pred)?;
            let acc = token_accuracy(&gold_tags, &pred_tags)?;
            let m = chunk_f1(&gold_tags, &pred_tags)?;
            println!("token accuracy\t{acc:.2}");
            println!("overall\t{:.2}\t{:.2}\t{:.2}", m.precision, m.recall, m.f1);
            for (ty, t) in &m.per_type {
                println!("{ty}\t{:.2}\t{:.2}\t{:.2}", t.precision, t.recall, t.f1);
            }
            Ok(())
        }
        Cmd::ExtractFeatures {
            mut words,
            input,
            sparse,
            checkpoint,
            pieces_k,
        } => {
            if let Some(path) = input {
                for line in std::fs::read_to_string(path)?.lines() {
                    let w = line.trim();
                    if !w.is_empty() {
                        words.push(w.to_string());
                    }
                }
            }
            if words.is_empty() {
                return Err(CliError::Usage("no words given; use --word or --input".into()));
            }
            let model = match checkpoint {
                Some(path) => Some(TaggerModel::from_bytes(&std::fs::read(path)?)?),
                None => None,
            };
            let mut out = String::new();
            for word in &words {
                let values = match (&model, sparse) {
                    (Some(m), true) => m.featurizer.features(word).values.clone(),
                    (Some(m), false) => m.char_dense_feature(word),
                    (None, true) => {
                        let alphabet = chardense_core::corpus::Alphabet::ascii_default();
                        featurize_word(word, &NgramStats::empty(DEFAULT_MAX_N), &alphabet, pieces_k)
                            .values
                    }
                    (None, false) => {
                        return Err(CliError::Usage(
                            "dense features need --checkpoint; pass --sparse for raw vectors"
                                .into(),
                        ))
                    }
                };
                let cols: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                out.push_str(word);
                out.push('\t');
                out.push_str(&cols.join(","));
                out.push('\n');
            }
            print!("{out}");
            Ok(())
        }
        Cmd::Bench {
            data,
            timed_epochs,
            flags,
        } => {
            if timed_epochs < 3 {
                return Err(CliError::Usage("--timed-epochs must be at least 3".into()));
            }
            let mut settings = settings_from(&flags)?;
            // keep the default desk-scale footprint unless a config says otherwise
            if flags.config.is_none() {
                settings.model.rnn_size = 32;
                settings.model.char_layer_size = 16;
                settings.model.word_dim = 32;
                settings.model.rnn_depth = 1;
                settings.model.pre_rnn_size = None;
                settings.model.post_rnn_size = None;
            }
            let dataset = match data {
                Some(dir) => load_dataset(&dir, false)?,
                None => {
                    let corpus = chardense_core::synth::generate(settings.train.seed, 120, 0, 20);
                    Dataset::from_raw(corpus.train, vec![], vec![], TagScheme::Bio, BioMode::Strict)?
                }
            };
            let report = bench::run(&dataset, &settings, timed_epochs)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Cmd::Experiment { data, seeds, flags } => {
            let settings = settings_from(&flags)?;
            let dataset = load_dataset(&data, false)?;
            let report = multi_seed(
                seeds,
                &dataset,
                &settings.model,
                &settings.train,
                None,
            )?;
            print!("{}", report.to_text());
            Ok(())
        }
    }
}

/// Tag CoNLL-ish text, appending the predicted tag as a final column.
/// Sentences are split across `threads` workers; output order matches
/// input order.
fn tag_text(model: &TaggerModel, text: &str, threads: usize) -> Result<String, CliError> {
    // group lines into sentences, keeping original lines verbatim
    let mut sentences: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }

    let tokens_of = |sent: &[&str]| -> Result<Vec<String>, CliError> {
        sent.iter()
            .map(|line| {
                line.split_whitespace()
                    .next()
                    .map(str::to_string)
                    .ok_or_else(|| CliError::Data("blank token line".into()))
            })
            .collect()
    };

    let n = sentences.len();
    let workers = threads.min(n.max(1));
    let chunk = n.div_ceil(workers.max(1)).max(1);
    let mut predictions: Vec<Vec<String>> = Vec::with_capacity(n);
    std::thread::scope(|scope| -> Result<(), CliError> {
        let mut handles = Vec::new();
        for slice in sentences.chunks(chunk) {
            handles.push(scope.spawn(move || -> Result<Vec<Vec<String>>, CliError> {
                slice
                    .iter()
                    .map(|sent| {
                        let tokens = tokens_of(sent)?;
                        let surfaces: Vec<&str> = tokens.iter().map(String::as_str).collect();
                        Ok(model
                            .tag(&surfaces)
                            .into_iter()
                            .map(|id| model.labels.name(id).to_string())
                            .collect())
                    })
                    .collect()
            }));
        }
        for h in handles {
            predictions.extend(h.join().expect("tagging worker panicked")?);
        }
        Ok(())
    })?;

    let mut out = String::new();
    for (i, (sent, tags)) in sentences.iter().zip(&predictions).enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (line, tag) in sent.iter().zip(tags) {
            out.push_str(line);
            out.push('\t');
            out.push_str(tag);
            out.push('\n');
        }
    }
    let _ = std::io::stdout().flush();
    Ok(out)
}

/// Last whitespace-separated column of each token line, grouped into
/// sentences.
fn read_last_column(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            continue;
        }
        let last = trimmed
            .split_whitespace()
            .last()
            .expect("non-empty line has a column");
        current.push(last.to_string());
    }
    if !current.is_empty() {
        out.push(current);
    }
    Ok(out)
}
