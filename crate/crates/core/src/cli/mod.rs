//! Command-line front end: `validate`, `run`, `sweep` and `denoise`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 divergence,
//! 4 I/O failure, 1 anything else. Every command finishes its computation
//! before touching the output directory, so a rejected configuration leaves
//! nothing behind.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::steady_state_msd;
use crate::experiment::{
    denoise_speech, run_ensemble, sweep_leakage, sweep_step_size, ExperimentError,
};
use crate::signal::{encode_wav, SignalError};
use config::{parse_config, ConfigError, ConfigFile, SourceKindName};
use output::{AlgorithmSummary, Manifest};

#[derive(Debug, Parser)]
#[command(
    name = "leaky-dlms",
    version,
    about = "Diffusion leaky LMS experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[run] base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a configuration and print it with all defaults filled in.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Ensemble learning curves for every configured algorithm.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Steady-state MSD across a grid of step sizes or leakage values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter a delay-line input and record one node's waveforms.
    Denoise {
        #[command(flatten)]
        common: Common,
        /// One-based node index.
        #[arg(long)]
        node: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Mu,
    Gamma,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(e) if e.is_io() => 4,
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Experiment(e) => match e {
                ExperimentError::Invalid(_)
                | ExperimentError::HorizonTooLong { .. }
                | ExperimentError::NodeOutOfRange { .. }
                | ExperimentError::UnknownAlgorithm(_)
                | ExperimentError::NotDelayLine => 2,
                ExperimentError::Diverged { .. } => 3,
                ExperimentError::Signal(SignalError::Io { .. }) => 4,
                _ => 1,
            },
        }
    }
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
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(common: &Common) -> Result<(ConfigFile, PathBuf), CliError> {
    let mut cfg = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.base_seed = seed;
    }
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok((cfg, base))
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Validate { common } => {
            let (cfg, base) = load(common)?;
            cfg.to_experiment(&base)?;
            print!("{}", cfg.resolved().to_text());
            Ok(())
        }
        Command::Run { common, out } => run(common, out),
        Command::Sweep {
            common,
            param,
            grid,
            out,
        } => sweep(common, *param, grid, out),
        Command::Denoise { common, node, out } => denoise(common, *node, out),
    }
}

/// Files to write, as `(name, contents)`.
type Outputs = Vec<(String, Vec<u8>)>;

fn write_outputs(dir: &Path, files: &Outputs, mut manifest: Manifest) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io(&path))?;
        manifest.outputs.push(name.clone());
    }
    let path = dir.join("manifest.toml");
    fs::write(&path, manifest.to_text()).map_err(io(&path))
}

fn run(common: &Common, out: &Path) -> Result<(), CliError> {
    let (cfg, base) = load(common)?;
    let (experiment, _) = cfg.to_experiment(&base)?;
    let result = run_ensemble(&experiment)?;

    let mut files = Outputs::new();
    let mut manifest = Manifest::new("run", &cfg.resolved());
    let mut curves = Vec::new();
    let mut failed = Vec::new();
    for outcome in &result.outcomes {
        match &outcome.trace {
            Ok(trace) => {
                files.push((
                    format!("msd_{}.csv", outcome.label),
                    output::learning_curve_csv(trace).into_bytes(),
                ));
                let steady = steady_state_msd(trace, experiment.steady_window)
                    .map_err(ExperimentError::from)?;
                println!(
                    "{}: steady-state MSD {:.2} dB ({} of {} trials divergent)",
                    outcome.label, steady, trace.divergent_trials, trace.trials
                );
                manifest.algorithms.push(AlgorithmSummary {
                    label: outcome.label.clone(),
                    trials: trace.trials,
                    divergent_trials: trace.divergent_trials,
                    steady_state_db: Some(steady),
                });
                curves.push((outcome.label.clone(), Some(trace)));
            }
            Err(e) => {
                println!("{}: {e}", outcome.label);
                manifest.algorithms.push(AlgorithmSummary {
                    label: outcome.label.clone(),
                    trials: e.trials,
                    divergent_trials: e.trials,
                    steady_state_db: None,
                });
                curves.push((outcome.label.clone(), None));
                failed.push(e.to_string());
            }
        }
    }
    files.push((
        "msd_comparison.csv".into(),
        output::comparison_csv(experiment.horizon, &curves).into_bytes(),
    ));
    write_outputs(out, &files, manifest)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Divergence(failed.join("; ")))
    }
}

fn sweep(common: &Common, param: SweepParam, grid: &[f64], out: &Path) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("--grid needs at least one value".into()));
    }
    let valid = |x: &f64| match param {
        SweepParam::Mu => *x > 0.0 && x.is_finite(),
        SweepParam::Gamma => *x >= 0.0 && x.is_finite(),
    };
    if let Some(bad) = grid.iter().find(|x| !valid(x)) {
        return Err(CliError::Usage(format!(
            "--grid value {bad} is not a valid {}",
            param.name()
        )));
    }
    let (cfg, base) = load(common)?;
    let (experiment, _) = cfg.to_experiment(&base)?;
    let points = match param {
        SweepParam::Mu => sweep_step_size(&experiment, grid)?,
        SweepParam::Gamma => sweep_leakage(&experiment, grid)?,
    };

    let files: Outputs = experiment
        .algorithms
        .iter()
        .map(|a| {
            (
                format!("sweep_{}_{}.csv", param.name(), a.label),
                output::sweep_csv(&points, &a.label).into_bytes(),
            )
        })
        .collect();
    let mut manifest = Manifest::new("sweep", &cfg.resolved());
    manifest.param = Some(param.name().into());
    manifest.grid = Some(grid.to_vec());
    write_outputs(out, &files, manifest)
}

fn denoise(common: &Common, node: usize, out: &Path) -> Result<(), CliError> {
    let (cfg, base) = load(common)?;
    if cfg.signal.source != SourceKindName::DelayLine {
        return Err(ConfigError::Invalid {
            key: "source".into(),
            message: "denoise needs source = \"delay_line\"".into(),
        }
        .into());
    }
    let (experiment, sample_rate) = cfg.to_experiment(&base)?;
    let result = denoise_speech(&experiment, node)?;
    if let Some(bad) = result.filtered.iter().position(|x| !x.is_finite()) {
        return Err(CliError::Divergence(format!(
            "filter output became non-finite at sample {bad}"
        )));
    }
    let from = cfg.run.steady_window.min(result.len().saturating_sub(1));
    println!(
        "node {node}: input SNR {:.2} dB, output SNR {:.2} dB (from sample {from})",
        result.input_snr_db(from),
        result.output_snr_db(from)
    );

    let stem = format!("denoise_node{node}");
    let mut files: Outputs = vec![(
        format!("{stem}.csv"),
        output::denoise_csv(&result).into_bytes(),
    )];
    if let Some(rate) = sample_rate {
        for (suffix, values) in [
            ("noisy", &result.noisy),
            ("filtered", &result.filtered),
            ("residual", &result.residual),
        ] {
            files.push((format!("{stem}_{suffix}.wav"), encode_wav(values, rate)));
        }
    }
    let mut manifest = Manifest::new("denoise", &cfg.resolved());
    manifest.node = Some(node);
    write_outputs(out, &files, manifest)
}
