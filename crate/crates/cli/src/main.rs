//! `gridad`: simulate grid traces, run the detection pipeline, and build,
//! train and evaluate anomaly classifiers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgGroup, Parser, Subcommand};
use gridad_ml::MlError;

use commands::{DetectionOverrides, SimulateSource, TrainOptions};
use config::UsageError;

#[derive(Debug, Parser)]
#[command(name = "gridad", version, about = "Grid anomaly simulation, detection and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate labeled measurement traces (CSV + JSON sidecar per trace).
    #[command(group(ArgGroup::new("source").required(true).args(["scenario", "grid", "catalog"])))]
    Simulate {
        /// One scheduled scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Scenario grid: buses × shed fractions and states × offsets, per topology.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Randomized scenario catalog.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Replay traces through WLS, the χ²/LNR tests, the EKF and the ADI test.
    Detect {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Detection config JSON (thresholds, WLS and EKF parameters).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        chi2_probability: Option<f64>,
        #[arg(long)]
        lnr_tau: Option<f64>,
        /// Output directory for `<trace>.report.csv`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Turn flagged steps into a labeled, split feature dataset.
    BuildDataset {
        /// Trace files from `simulate`, added to any listed in the config.
        traces: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// classify, identify-slc or identify-fdia; overrides the config.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        seed: u64,
        /// Dataset CSV path; the schema goes to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank features by mRMR on the dataset's train split.
    SelectFeatures {
        dataset: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the train split and score the test split.
    Train {
        dataset: PathBuf,
        /// rf, gbt, lr or knn.
        #[arg(long)]
        model: String,
        #[arg(long)]
        seed: u64,
        /// Feature selection JSON from `select-features`.
        #[arg(long)]
        selection: Option<PathBuf>,
        /// Model parameter JSON; defaults per model kind otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Random-search trials with 3-fold stratified CV.
        #[arg(long)]
        tune_budget: Option<usize>,
        /// Model file path.
        #[arg(long)]
        out: PathBuf,
        /// Metrics JSON path; defaults to `<model>.metrics.json`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Score saved models on a dataset's test split.
    Evaluate {
        dataset: PathBuf,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Score every sample instead of the test split.
        #[arg(long)]
        all: bool,
        /// Output directory for `<model>.metrics.json`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sweep the ADI threshold over clean and anomalous traces.
    CalibrateGamma {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Sweep CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            grid,
            catalog,
            seed,
            out,
        } => {
            let source = match (&scenario, &grid, &catalog) {
                (Some(p), _, _) => SimulateSource::Scenario(p),
                (_, Some(p), _) => SimulateSource::Grid(p),
                (_, _, Some(p)) => SimulateSource::Catalog(p),
                _ => unreachable!("clap requires one source"),
            };
            commands::simulate(source, seed, &out)
        }
        Command::Detect {
            traces,
            config,
            gamma,
            chi2_probability,
            lnr_tau,
            out,
        } => {
            let overrides = DetectionOverrides {
                gamma,
                chi2_probability,
                lnr_tau,
            };
            commands::detect(&traces, config.as_deref(), overrides, &out)
        }
        Command::BuildDataset {
            traces,
            config,
            task,
            seed,
            out,
        } => {
            let task = task.as_deref().map(commands::parse_task).transpose()?;
            commands::build(config.as_deref(), &traces, task, seed, &out)
        }
        Command::SelectFeatures { dataset, k, out } => commands::select_features(&dataset, k, &out),
        Command::Train {
            dataset,
            model,
            seed,
            selection,
            params,
            tune_budget,
            out,
            metrics,
        } => commands::train(TrainOptions {
            dataset: &dataset,
            kind: commands::parse_model(&model)?,
            seed,
            selection: selection.as_deref(),
            params: params.as_deref(),
            tune_budget,
            out: &out,
            metrics: metrics.as_deref(),
        }),
        Command::Evaluate {
            dataset,
            models,
            all,
            out,
        } => commands::evaluate(&dataset, &models, all, &out),
        Command::CalibrateGamma { config, seed, out } => commands::calibrate_gamma(config.as_deref(), seed, &out),
    }
}

/// 1 usage, 2 data, 3 numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<gridad::Error>() {
            return match e.root() {
                gridad::Error::Numerical(_)
                | gridad::Error::PowerFlowDivergence { .. }
                | gridad::Error::WlsNonConvergence { .. }
                | gridad::Error::IdentificationImpossible => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<MlError>() {
            return match e {
                MlError::Training(_) => 3,
                MlError::InvalidParams(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
