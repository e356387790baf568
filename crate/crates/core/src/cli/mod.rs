//! Command-line front end: `synth`, `train`, `infer`, `eval` and `grammar`.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure, 3 partial success (some videos could not be decoded).

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::PipelineConfig;

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "setseg", version, about = "Temporal action segmentation from unordered action sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build the grammar, estimate lengths and train the frame model.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// naive | monte-carlo | text | file
        #[arg(long)]
        grammar: Option<String>,
        #[arg(long)]
        grammar_file: Option<PathBuf>,
        /// Text file or directory of `.txt` files for the text grammar.
        #[arg(long)]
        text: Option<PathBuf>,
        /// naive | loss | file
        #[arg(long)]
        length_mean: Option<String>,
        /// poisson | gaussian | box | triangle
        #[arg(long)]
        length_kind: Option<String>,
        #[arg(long)]
        lengths_file: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Decode every video of a corpus with trained models.
    Infer {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// free | given-sets
        #[arg(long)]
        mode: Option<String>,
        /// full | grammar-only | length-only | neither
        #[arg(long)]
        ablation: Option<String>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Corpus directory with `groundtruth/`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Report directory; defaults to `<pred>/eval`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Build or load a grammar and inspect it.
    Grammar {
        /// Training corpus; supplies the class table and, unless --file is given, the data.
        #[arg(long)]
        corpus: PathBuf,
        /// Load this grammar file instead of building one.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long)]
        grammar: Option<String>,
        /// Space-separated class names to test for acceptance.
        #[arg(long)]
        accepts: Option<String>,
        /// Save the grammar here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}

pub fn exit_code(result: &Result<Outcome, Error>) -> i32 {
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Partial) => 3,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}

pub fn run(cli: Cli) -> Result<Outcome, Error> {
    commands::dispatch(cli.command)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = run(cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}
