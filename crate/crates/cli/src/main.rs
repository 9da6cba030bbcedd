//! `biofuse` — preprocessing, peak features, evaluation and model fusion
//! for two-source classification experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numerical
//! failure (non-convergence under --strict). Errors print to stderr with a
//! machine-parsable `E:<code>:` prefix.

mod commands;
mod manifest;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "biofuse", version, about = "Two-source biomarker classification pipeline")]
struct Cli {
    /// Treat trainer non-convergence as a failure (exit 3).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic two-source data (spectra, panel, labels, truth).
    Synth {
        /// Generator config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Run the preprocessing chain over a spectra CSV with TIC-based QC.
    Preprocess {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Pipeline config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Where to write excluded-sample TIC z-scores.
        #[arg(long, value_name = "FILE")]
        qc_report: PathBuf,
    },
    /// Learn a peak model from the mean profile and extract features.
    Peaks {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Where to write the fitted peak model.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Half-width of the feature averaging window (grid points).
        #[arg(long, default_value_t = 5)]
        neighborhood: usize,
    },
    /// Evaluate the pipelines of an experiment config over random splits.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Corrected resampled paired t-test between two evaluation reports.
    Compare {
        #[arg(long, value_name = "FILE")]
        a: PathBuf,
        #[arg(long, value_name = "FILE")]
        b: PathBuf,
        #[arg(long, default_value = "auc")]
        metric: biofuse_core::Metric,
        /// Pipeline id inside a multi-report file.
        #[arg(long)]
        a_id: Option<String>,
        #[arg(long)]
        b_id: Option<String>,
    },
    /// Run the full synthetic experiment grid and emit consolidated reports.
    PaperSuite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Full suite config JSON; overrides below still apply on top.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trees per forest.
        #[arg(long)]
        trees: Option<usize>,
        /// Number of random splits.
        #[arg(long)]
        repeats: Option<usize>,
        /// Spectral grid size.
        #[arg(long)]
        grid_size: Option<usize>,
        /// Total sample count (cases stay at half).
        #[arg(long)]
        samples: Option<usize>,
        /// Number of injected spectral peaks.
        #[arg(long)]
        true_peaks: Option<usize>,
    },
}

fn main() -> ExitCode {
    if let Ok(value) = std::env::var("BIOFUSE_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("E:CONFIG: BIOFUSE_THREADS must be a positive integer, got '{value}'");
                return ExitCode::from(2);
            }
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("E:USAGE: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}{}", error_prefix(&e), e);
            ExitCode::from(exit_code(&e))
        }
    }
}

/// CLI-level failure: either a core error or an escalated numerical one.
pub enum CliError {
    Core(biofuse_core::Error),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Numerical(msg) => f.write_str(msg),
        }
    }
}

impl From<biofuse_core::Error> for CliError {
    fn from(e: biofuse_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn error_prefix(e: &CliError) -> &'static str {
    use biofuse_core::Error as E;
    match e {
        CliError::Numerical(_) => "E:NUM: ",
        CliError::Core(core) => match core {
            E::Io(_) | E::Csv(_) => "E:IO: ",
            E::ConfigInvalid(_) | E::Json(_) | E::KTooLarge { .. } | E::TooFewRepeats { .. } => {
                "E:CONFIG: "
            }
            _ => "E:DATA: ",
        },
    }
}

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Numerical(_) => 3,
        CliError::Core(_) => 2,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, seed, out_dir } => commands::synth(config, seed, out_dir),
        Command::Preprocess { input, config, out, qc_report } => {
            commands::preprocess(input, config, out, qc_report)
        }
        Command::Peaks { input, labels, out, model, neighborhood } => {
            commands::peaks(input, labels, out, model, neighborhood)
        }
        Command::Evaluate { config, out } => commands::evaluate(config, out, cli.strict),
        Command::Compare { a, b, metric, a_id, b_id } => {
            commands::compare(a, b, metric, a_id, b_id)
        }
        Command::PaperSuite {
            seed,
            out_dir,
            config,
            trees,
            repeats,
            grid_size,
            samples,
            true_peaks,
        } => commands::paper_suite(commands::SuiteArgs {
            seed,
            out_dir,
            config,
            trees,
            repeats,
            grid_size,
            samples,
            true_peaks,
            strict: cli.strict,
        }),
    }
}
