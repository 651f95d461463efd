//! `bitext` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod manifest;

#[derive(Debug, Parser)]
#[command(name = "bitext", version, about = "Margin-based bitext mining and sentence-encoder distillation")]
pub struct Cli {
    /// Worker threads for search and mining (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for everything random.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report errors on stderr as JSON.
    #[arg(long, global = true)]
    pub json_errors: bool,
    /// Suppress informational output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a monolingual corpus.
    Preprocess(PreprocessArgs),
    /// Exact cosine k-nearest neighbours.
    Index(IndexArgs),
    /// Margin-based retrieval error rate of aligned embeddings.
    Xsim(XsimArgs),
    /// Mine parallel sentence pairs.
    Mine(MineArgs),
    /// Distill a student encoder from a teacher.
    Train(TrainArgs),
    /// Embed a text file with a trained student.
    EmbedToy(EmbedArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Maximum share of punctuation and digits.
    #[arg(long, default_value_t = 0.20)]
    pub max_ratio: f64,
    /// Comma-separated allowed scripts (ISO 15924 codes or names).
    #[arg(long, value_delimiter = ',')]
    pub scripts: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub min_chars: usize,
    #[arg(long)]
    pub no_dedup: bool,
    /// Split input lines into sentences before filtering.
    #[arg(long)]
    pub split: bool,
    /// Write the filter report here instead of stderr.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Embedding inputs: EMB1 files, or raw float32 when `--dim` is given.
#[derive(Debug, Args)]
pub struct EmbInput {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Treat inputs as headerless float32 rows of this width.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub emb: EmbInput,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Sentence ids for the query rows, one per line.
    #[arg(long)]
    pub src_ids: Option<PathBuf>,
    #[arg(long)]
    pub tgt_ids: Option<PathBuf>,
    #[arg(long = "out")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MarginArgs {
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value = "distance")]
    pub margin: bitext_core::MarginFn,
    /// Score raw inner products instead of cosines.
    #[arg(long)]
    pub no_normalize: bool,
    /// Leave the same-index row out of neighbourhoods.
    #[arg(long)]
    pub exclude_self: bool,
}

impl MarginArgs {
    pub fn config(&self) -> bitext_core::MarginConfig {
        bitext_core::MarginConfig {
            k: self.k,
            function: self.margin,
            include_self: !self.exclude_self,
            normalize: !self.no_normalize,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct XsimArgs {
    #[command(flatten)]
    pub emb: EmbInput,
    #[command(flatten)]
    pub margin: MarginArgs,
    /// Write the full JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub emb: EmbInput,
    #[arg(long)]
    pub src_text: PathBuf,
    #[arg(long)]
    pub tgt_text: PathBuf,
    #[command(flatten)]
    pub margin: MarginArgs,
    /// Minimum margin score (default: 1.06 for ratio, 0 otherwise).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "union")]
    pub direction: bitext_core::Direction,
    /// Candidates kept per query.
    #[arg(long, default_value_t = 1)]
    pub candidates: usize,
    #[arg(long = "out")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Tab-separated `student<TAB>teacher` sentence pairs.
    #[arg(long)]
    pub parallel: PathBuf,
    /// Student-language lines for the masked-LM objective.
    #[arg(long)]
    pub mono: Option<PathBuf>,
    /// Teacher-language lines distilled onto themselves.
    #[arg(long)]
    pub anchor: Option<PathBuf>,
    /// `EMB+SENTENCES` (an EMB1 file and its sentences, one per row) or
    /// `synthetic` for a seeded bag-of-words projection teacher.
    #[arg(long)]
    pub teacher: String,
    #[arg(long, default_value_t = 1000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 4)]
    pub ffn_mult: usize,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.0005)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mlm_weight: f64,
    #[arg(long, default_value_t = 0.15)]
    pub mask_prob: f64,
    /// Curriculum step, e.g. 0.1 for 10%, 20%, ..., 100% prefixes.
    #[arg(long)]
    pub curriculum: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Write per-step JSON metrics here instead of stdout.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// L2-normalize the output rows.
    #[arg(long)]
    pub normalize: bool,
}

/// Error raised for bad flag combinations found after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn classify(err: &anyhow::Error) -> (i32, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<bitext_core::Error>() {
            return (2, e.kind());
        }
        if let Some(e) = cause.downcast_ref::<bitext_distill::DistillError>() {
            return match e {
                bitext_distill::DistillError::InvalidConfig(_) => (1, e.kind()),
                _ => (2, e.kind()),
            };
        }
        if cause.downcast_ref::<bitext_core::preprocess::ConfigError>().is_some() {
            return (1, "InvalidConfig");
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return (1, "UsageError");
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (2, "IOFailure");
        }
    }
    (2, "Error")
}

fn report_error(kind: &str, message: &str, json: bool) {
    let mut stderr = std::io::stderr().lock();
    if json {
        let v = serde_json::json!({ "error": kind, "message": message });
        let _ = writeln!(stderr, "{v}");
    } else {
        let _ = writeln!(stderr, "error: {message}");
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json = args.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            if json {
                report_error("UsageError", &e.kind().to_string(), true);
            }
            let _ = e.print();
            return 1;
        }
    };
    if let Some(n) = cli.threads {
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let (code, kind) = classify(&e);
            report_error(kind, &format!("{e:#}"), cli.json_errors);
            code
        }
    }
}
