//! `crs` command-line driver: graph building, character selection, agent
//! refinement, evaluation and DOT export, each persisting JSON artifacts.
//!
//! Exit codes: 0 success, 2 I/O, 3 invalid input, 4 backend, 5 schema.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::execute;
pub use config::PipelineConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "crs",
    version,
    about = "Build, refine and evaluate character relation structures"
)]
pub struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Mock script (JSON) that replaces the default provider.
    #[arg(long, global = true)]
    pub mock_script: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ppr,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderChoice {
    /// The provider bound to the embed step.
    Config,
    /// One-hot exact-match embedder.
    Exact,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract triplets from episode scripts and build the base graph.
    BuildGraph {
        /// Script files (`<drama>_e<n>.txt`) or directories of them.
        #[arg(required = true)]
        scripts: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Select relevant characters from the base graph.
    Select {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long = "main", required = true)]
        main: Vec<String>,
        #[arg(long = "sub")]
        sub: Vec<String>,
        #[arg(long, value_enum, default_value = "ppr")]
        method: Method,
        /// Size of the count selection; defaults to the PPR selection size.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PPR vs. edge-count selection against annotations.
    CompareSelection {
        /// JSON list of cases; replaces the single-drama flags.
        #[arg(long, conflicts_with_all = ["graph", "gt", "main", "sub"])]
        cases: Option<PathBuf>,
        #[arg(long, required_unless_present = "cases")]
        graph: Option<PathBuf>,
        #[arg(long, required_unless_present = "cases")]
        gt: Option<PathBuf>,
        #[arg(long = "main")]
        main: Vec<String>,
        #[arg(long = "sub")]
        sub: Vec<String>,
        #[arg(long, default_value = "drama")]
        name: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the agent chain over a selection, writing one snapshot per stage.
    Refine {
        #[arg(long)]
        selection: PathBuf,
        #[arg(long)]
        treatment: PathBuf,
        /// Up to four episode summaries, in episode order.
        #[arg(long, num_args = 1..)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Score CRS files against annotations.
    Evaluate {
        /// CRS file; repeat together with --gt for several dramas.
        #[arg(long = "crs", required = true)]
        crs: Vec<PathBuf>,
        #[arg(long = "gt", required = true)]
        gt: Vec<PathBuf>,
        /// Row label per pair; defaults to the CRS file's directory name.
        #[arg(long = "name")]
        names: Vec<String>,
        #[arg(long, value_enum, default_value = "config")]
        embedder: EmbedderChoice,
        /// Report not-applicable metrics as 0.0.
        #[arg(long)]
        na_as_zero: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Export a CRS as Graphviz DOT.
    Render {
        crs: PathBuf,
        /// Defaults to the CRS path with a `.dot` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses and runs a command, returning its stdout text. Argument errors
/// (including help requests) become validation errors.
pub fn invoke<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Validation(e.to_string()))?;
    execute(&cli)
}

/// Parses `args`, runs the command and returns the exit code. Output and
/// errors go to stdout/stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::VALIDATION } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
