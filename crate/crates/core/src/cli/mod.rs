//! The `vrag` command line.
//!
//! Every command reads an [`EngineConfig`] (from `--config`, else the file
//! named by `VRAG_CONFIG`, else defaults), applies flag overrides, and
//! writes its outputs under `--out`.

mod commands;
mod ingest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::EngineConfig;
use crate::generation::ContextMode;
use crate::selector::SelectorMode;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "vrag", version, about = "Retrieval-augmented generation over video corpora")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON engine config; falls back to $VRAG_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "vrag-out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub encoder_url: Option<String>,
    #[arg(long, global = true)]
    pub generator_url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Retrieval,
    Generation,
}

impl From<ModeArg> for SelectorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Retrieval => SelectorMode::Retrieval,
            ModeArg::Generation => SelectorMode::Generation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContextArg {
    VideoOnly,
    VideoPlusText,
}

impl From<ContextArg> for ContextMode {
    fn from(m: ContextArg) -> Self {
        match m {
            ContextArg::VideoOnly => ContextMode::VideoOnly,
            ContextArg::VideoPlusText => ContextMode::VideoPlusText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalArg {
    /// Cosine between the mean subset frame and the query.
    Query,
    /// ROUGE-L of the generator's answer from the subset.
    Rouge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupByArg {
    Category,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a manifest and embedding files from media or precomputed embeddings.
    Ingest {
        /// Directory of video files to send to the encoder service.
        #[arg(long, conflicts_with = "precomputed", required_unless_present = "precomputed")]
        media: Option<PathBuf>,
        /// Directory of existing `.vrem` files; no network access.
        #[arg(long)]
        precomputed: Option<PathBuf>,
        /// Transcribe videos that have no subtitle.
        #[arg(long)]
        transcribe: bool,
        #[arg(long, default_value = "corpus")]
        corpus_id: String,
        #[arg(long, default_value_t = 1.0)]
        fps: f64,
    },
    /// Build a retrieval index over the corpus.
    Index {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = SelectionArg::Uniform)]
        selection: SelectionArg,
        /// Retrieval-mode selector; implies adaptive selection.
        #[arg(long)]
        selector: Option<PathBuf>,
        #[arg(long)]
        frames_per_video: Option<usize>,
        /// Index videos without text by their visual representation.
        #[arg(long)]
        allow_missing_text: bool,
    },
    /// Rank videos for each query.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Collect labeled subsets and train a frame selector.
    SelectorTrain {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = SignalArg::Query)]
        signal: SignalArg,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run a trained selector over videos.
    SelectorSelect {
        #[arg(long)]
        selector: PathBuf,
        /// Queries whose ground-truth videos are selected for; required in generation mode.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Restrict to these videos (retrieval mode).
        #[arg(long = "video")]
        videos: Vec<String>,
    },
    /// Assemble contexts from retrieval results and ask the generator.
    Generate {
        #[arg(long)]
        retrieval: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ContextArg>,
        /// Generation-mode selector; without one frames are taken at a uniform stride.
        #[arg(long)]
        selector: Option<PathBuf>,
        #[arg(long)]
        frames_per_video: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Ask the generator for question-answer pairs about each video.
    Synthqa {
        #[arg(long = "video")]
        videos: Vec<String>,
    },
    /// Score answers against references.
    Eval {
        /// Answer files; repeat to compare several runs.
        #[arg(long, required = true)]
        answers: Vec<PathBuf>,
        /// Query file holding the reference answers.
        #[arg(long)]
        queries: PathBuf,
        /// One label per answer file, e.g. `uniform,adaptive`.
        #[arg(long, value_delimiter = ',')]
        compare: Vec<String>,
        #[arg(long, value_enum)]
        group_by: Option<GroupByArg>,
        /// Also score answers with the generator as judge.
        #[arg(long)]
        judge: bool,
    },
    /// Recall@k for each alpha on an even grid over [0, 1].
    SweepAlpha {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        ks: Vec<usize>,
    },
}

/// Config from file, with global flag overrides applied and validated.
pub fn effective_config(g: &GlobalArgs) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::resolve(g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = &g.manifest {
        cfg.manifest_path = Some(m.clone());
    }
    if let Some(u) = &g.encoder_url {
        cfg.endpoints.encoder_url = Some(u.clone());
    }
    if let Some(u) = &g.generator_url {
        cfg.endpoints.generator_url = Some(u.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(Error::InvalidArgument(e.to_string()));
        }
    };
    commands::dispatch(cli)
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
