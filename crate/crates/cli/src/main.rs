//! `clpc`: pitch-shifting, time-stretching and evaluation from the shell.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(name = "clpc", version, about = "Pitch-shifting and time-stretching of speech")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Sample rate of written audio (processing runs at 16 kHz)
    #[arg(long, global = true, default_value_t = 16000)]
    pub sample_rate: u32,
    /// Skip the 65 Hz high-pass during analysis
    #[arg(long, global = true)]
    pub no_highpass: bool,
    /// Preemphasis coefficient
    #[arg(long, global = true, default_value_t = 0.85)]
    pub preemphasis: f64,
    /// Random seed (defaults to CLPC_SEED, else 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Dsp,
    Neural,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    #[value(name = "clpc-dsp")]
    ClpcDsp,
    #[value(name = "clpc-neural")]
    ClpcNeural,
    Psola,
}

#[derive(Args, Debug, Clone)]
pub struct BackendOpts {
    /// Excitation source
    #[arg(long, value_enum, default_value_t = Backend::Dsp)]
    pub backend: Backend,
    /// Network checkpoint (neural backend)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract pitch, features and an editable control script
    Analyze {
        input: PathBuf,
        /// Binary feature file
        #[arg(long)]
        features: PathBuf,
        /// Pitch contour CSV
        #[arg(long)]
        pitch: Option<PathBuf>,
        /// Pass-through control script CSV
        #[arg(long)]
        script: Option<PathBuf>,
        /// Per-frame LPC CSV
        #[arg(long)]
        lpc: Option<PathBuf>,
    },
    /// Constant-ratio pitch shift
    Shift {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[command(flatten)]
        backend: BackendOpts,
    },
    /// Constant-ratio time stretch
    Stretch {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[command(flatten)]
        backend: BackendOpts,
    },
    /// Resynthesize from an edited control script
    Edit {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        script: PathBuf,
        /// Features written by `analyze` (re-analyzes the input when absent)
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendOpts,
    },
    /// TD-PSOLA baseline
    Psola {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        shift: f64,
        #[arg(long, default_value_t = 1.0)]
        stretch: f64,
        /// Pitch-mark CSV
        #[arg(long)]
        marks: Option<PathBuf>,
    },
    /// Resampling augmentation of every WAV in a directory
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Train the toy excitation network on a directory of WAVs
    TrainToy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Slices per step
        #[arg(long, default_value_t = 1)]
        batch: usize,
        /// State size of the first recurrent unit
        #[arg(long, default_value_t = 128)]
        gru_a: usize,
        /// Code embedding width
        #[arg(long, default_value_t = 128)]
        embedding: usize,
        /// Frame-network convolution channels
        #[arg(long, default_value_t = 128)]
        conv_channels: usize,
        /// Log the loss every N steps
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Constant-ratio shift protocol, pooled over a corpus
    Evaluate {
        #[arg(long, value_enum)]
        system: System,
        #[arg(long, value_delimiter = ',', default_values_t = [0.71, 1.0, 1.41])]
        ratios: Vec<f64>,
        /// Directory of WAVs (the synthetic vowel suite when absent)
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Track two files and compare their pitch
    Compare {
        /// Evaluated file
        a: PathBuf,
        /// Reference file
        b: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
