use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcp_harness::config::{Experiment, ExperimentConfig};
use fcp_harness::report::FileRecord;
use fcp_harness::{run_experiment, stages, Result};

/// Split conformal prediction experiments on PDE surrogates.
#[derive(Parser)]
#[command(name = "fcp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/calibration/test datasets (FCPD).
    Generate(Common),
    /// Fit the surrogate on the training dataset.
    Fit(Common),
    /// Calibrate the conformal radius on the calibration dataset.
    Calibrate(Common),
    /// Evaluate coverage on the test dataset.
    Evaluate(Common),
    /// Run the Navier–Stokes ensemble forecast experiment.
    Forecast(Common),
    /// Calibrate across resolutions and fit the radius transport.
    Sweep(Common),
    /// Run the configured experiment end to end and write its tables.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment name (overrides run.experiment).
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Output root (default: $FCP_OUT_DIR or ./fcp_out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set data.n_train=100`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self, forced: Option<Experiment>) -> Result<ExperimentConfig> {
        let mut o = Vec::new();
        if let Some(e) = forced {
            o.push(format!("run.experiment=\"{e}\""));
        }
        if let Some(e) = &self.experiment {
            o.push(format!("run.experiment=\"{e}\""));
        }
        o.extend(self.overrides.iter().cloned());
        if let Some(s) = self.seed {
            o.push(format!("run.seed=\"{s}\""));
        }
        if let Some(a) = self.alpha {
            o.push(format!("run.alpha={a:?}"));
        }
        if let Some(p) = &self.out {
            o.push(format!("run.out={:?}", p.display().to_string()));
        }
        ExperimentConfig::load(self.config.as_deref(), &o)
    }
}

fn print_files(cfg: &ExperimentConfig, files: &[FileRecord]) {
    let dir = cfg.run_dir();
    for f in files {
        println!("{}  {}", f.sha256, dir.join(&f.name).display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, stage): (&Common, &str) = match &cli.command {
        Command::Generate(c) => (c, "generate"),
        Command::Fit(c) => (c, "fit"),
        Command::Calibrate(c) => (c, "calibrate"),
        Command::Evaluate(c) => (c, "evaluate"),
        Command::Forecast(c) => (c, "forecast"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Report(c) => (c, "report"),
    };
    let forced = match stage {
        "forecast" => Some(Experiment::NsForecast),
        _ => None,
    };
    let cfg = common.load(forced)?;
    let files = match stage {
        "generate" => stages::generate(&cfg)?,
        "fit" => stages::fit(&cfg)?,
        "calibrate" => stages::calibrate(&cfg)?,
        "evaluate" => stages::evaluate(&cfg)?,
        "sweep" => stages::sweep(&cfg)?,
        _ => run_experiment(&cfg)?.files,
    };
    print_files(&cfg, &files);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
