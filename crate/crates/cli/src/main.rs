//! `dpsel`: detector selection under photometric degradations.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error, 3
//! external-detector failure.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{load_config_file, parse_external, parse_name_list, parse_number_list, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "dpsel",
    version,
    about = "Detector selection under photometric degradations"
)]
struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: FlagOverrides,
    #[command(subcommand)]
    command: Command,
}

/// One flag per config key, named exactly like the key.
#[derive(Args, Debug)]
struct FlagOverrides {
    /// Directory of `*.pgm` scene images.
    #[arg(long = "corpus_dir", global = true, value_name = "PATH")]
    corpus_dir: Option<PathBuf>,
    /// Directory receiving all pipeline artifacts.
    #[arg(long = "work_dir", global = true, value_name = "PATH")]
    work_dir: Option<PathBuf>,
    /// Light reduction percentages, comma separated.
    #[arg(long = "light_ladder", global = true, value_name = "LIST")]
    light_ladder: Option<String>,
    /// Blur sigmas, comma separated.
    #[arg(long = "blur_ladder", global = true, value_name = "LIST")]
    blur_ladder: Option<String>,
    /// JPEG quality factors, comma separated.
    #[arg(long = "jpeg_ladder", global = true, value_name = "LIST")]
    jpeg_ladder: Option<String>,
    /// L2 regularization strength.
    #[arg(long = "lambda", global = true, value_name = "NUM")]
    lambda: Option<f64>,
    /// Training epochs.
    #[arg(long = "epochs", global = true, value_name = "N")]
    epochs: Option<usize>,
    /// Seed of the scene split and the trainer shuffle.
    #[arg(long = "seed", global = true, value_name = "N")]
    seed: Option<u64>,
    /// Fraction of scenes in the training split, in (0, 1).
    #[arg(long = "train_fraction", global = true, value_name = "NUM")]
    train_fraction: Option<f64>,
    /// Keypoint matching tolerance in pixels.
    #[arg(long = "eps", global = true, value_name = "NUM")]
    eps: Option<f64>,
    /// Built-in detector names, comma separated (harris, dog).
    #[arg(long = "detectors", global = true, value_name = "LIST")]
    detectors: Option<String>,
    /// External detector as `<name> <command template>`; repeatable.
    #[arg(long = "external", global = true, value_name = "SPEC")]
    external: Vec<String>,
    /// External detector timeout in seconds.
    #[arg(long = "timeout_secs", global = true, value_name = "NUM")]
    timeout_secs: Option<f64>,
    /// External failures excluded per table entry before aborting.
    #[arg(long = "failure_tolerance", global = true, value_name = "N")]
    failure_tolerance: Option<usize>,
    /// Characterization worker cap; 0 means one per core.
    #[arg(long = "workers", global = true, value_name = "N")]
    workers: Option<usize>,
    /// Divide the target quality score by the reference score.
    #[arg(long = "normalized_fj", global = true, value_name = "BOOL")]
    normalized_fj: Option<bool>,
    /// Length of the uniform re-blur kernel; odd, >= 3.
    #[arg(long = "blur_kernel_len", global = true, value_name = "N")]
    blur_kernel_len: Option<usize>,
}

impl FlagOverrides {
    fn into_overrides(self) -> Result<Overrides, RunError> {
        let usage = RunError::Usage;
        let list = |flag: &str, s: Option<String>| -> Result<Option<Vec<f64>>, RunError> {
            s.map(|s| parse_number_list(&s).map_err(|m| usage(format!("--{flag}: {m}"))))
                .transpose()
        };
        if let Some(f) = self.train_fraction {
            if !(0.0 < f && f < 1.0) {
                return Err(usage(format!("--train_fraction: fraction {f} outside (0, 1)")));
            }
        }
        let mut externals = Vec::new();
        for spec in self.external {
            externals.push(parse_external(&spec).map_err(|m| usage(format!("--external: {m}")))?);
        }
        Ok(Overrides {
            corpus_dir: self.corpus_dir,
            work_dir: self.work_dir,
            light_ladder: list("light_ladder", self.light_ladder)?,
            blur_ladder: list("blur_ladder", self.blur_ladder)?,
            jpeg_ladder: list("jpeg_ladder", self.jpeg_ladder)?,
            lambda: self.lambda,
            epochs: self.epochs,
            seed: self.seed,
            train_fraction: self.train_fraction,
            eps: self.eps,
            detectors: self.detectors.map(|s| parse_name_list(&s)),
            externals,
            timeout_secs: self.timeout_secs,
            failure_tolerance: self.failure_tolerance,
            workers: self.workers,
            normalized_fj: self.normalized_fj,
            blur_kernel_len: self.blur_kernel_len,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degrade every corpus scene over the ladders and write the dataset manifest.
    Generate,
    /// Extract features, split scenes, and train the type and amount models.
    Train,
    /// Measure per-condition detector repeatability and build the selection table.
    Characterize,
    /// Pick the detector for one reference/target image pair.
    Select {
        reference: PathBuf,
        target: PathBuf,
        /// Append per-stage wall-clock milliseconds.
        #[arg(long)]
        timing: bool,
    },
    /// Replay the test split and write the per-condition repeatability gap curve.
    Evaluate {
        /// Look up rules under the true condition instead of the predicted one.
        #[arg(long)]
        oracle: bool,
    },
}

enum RunError {
    Usage(String),
    Pipeline(dpsel_core::Error),
}

impl From<dpsel_core::Error> for RunError {
    fn from(e: dpsel_core::Error) -> Self {
        RunError::Pipeline(e)
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply(load_config_file(path)?);
    }
    cfg.apply(cli.overrides.into_overrides()?);
    match cli.command {
        Command::Generate => pipeline::cmd_generate(&cfg)?,
        Command::Train => pipeline::cmd_train(&cfg)?,
        Command::Characterize => pipeline::cmd_characterize(&cfg)?,
        Command::Select {
            reference,
            target,
            timing,
        } => pipeline::cmd_select(&cfg, &reference, &target, timing)?,
        Command::Evaluate { oracle } => pipeline::cmd_evaluate(&cfg, oracle)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(RunError::Pipeline(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_external() { 3 } else { 2 })
        }
    }
}
