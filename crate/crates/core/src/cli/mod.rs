//! The `h4d` command line. Logs are `key=value` lines on stdout; every command
//! writes a `run.meta` next to its output.

mod commands;
mod settings;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "h4d", about = "Compositional 4D human model: data, training, fitting and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads for data-parallel stages.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug, Clone)]
pub struct SeqSource {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Write the ground-truth sequence as a result archive (dataset inputs only).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CompleteMode {
    Temporal,
    Spatial,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic train/test corpus with its body model.
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the linear motion model on the training split.
    FitLmm {
        #[arg(long)]
        data: PathBuf,
        /// Target explained-variance fraction.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train stage 1 (encoders) or stage 2 (everything).
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        #[arg(long)]
        data: PathBuf,
        /// Motion basis archive (stage 1).
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Stage-1 checkpoint (stage 2).
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Encode a sequence and decode it.
    Reconstruct {
        #[arg(long)]
        ckpt: PathBuf,
        /// `split:index` of a dataset sequence, or a points archive.
        #[arg(long)]
        seq: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        source: SeqSource,
        #[command(flatten)]
        common: Common,
    },
    /// Shape and clothing of one sequence with the motion of another.
    Retarget {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        identity: String,
        #[arg(long)]
        motion: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        source: SeqSource,
        #[command(flatten)]
        common: Common,
    },
    /// Fit codes to a partial observation and decode the full sequence.
    Complete {
        #[arg(long, value_enum)]
        mode: CompleteMode,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        seq: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        source: SeqSource,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the leading frames and extrapolate the rest.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        seq: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        source: SeqSource,
        #[command(flatten)]
        common: Common,
    },
    /// Compare two result archives.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Metrics file (key=value lines); without it `eval.run.meta` goes to
        /// the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write one mesh entry of a result archive as numbered OBJ files.
    ExportObj {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::GenData { common, .. }
            | Command::FitLmm { common, .. }
            | Command::Train { common, .. }
            | Command::Reconstruct { common, .. }
            | Command::Retarget { common, .. }
            | Command::Complete { common, .. }
            | Command::Predict { common, .. }
            | Command::Eval { common, .. }
            | Command::ExportObj { common, .. } => common,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    let threads = cli.command.common().threads.max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error={e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| commands::dispatch(&cli.command, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error={}", e.to_string().replace('\n', " "));
            match e {
                crate::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}
