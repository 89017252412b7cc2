//! Experiment drivers.
//!
//! Each driver has a `compute` function returning typed results (used by the
//! acceptance suite) and a conversion to CSV tables. [`run_experiment`] runs
//! the configured driver and writes tables, datasets, models and a manifest
//! under `<out>/<experiment>/`.

pub mod ablation;
pub mod darcy;
pub mod forecast;
pub mod poisson;
pub mod superres;

use std::path::PathBuf;

use fcp_core::conformal::{nonconformity_scores_with, ScoreNorm};
use fcp_core::surrogate::{fit_spectral_operator_with, SpectralOperator};
use fcp_core::{Field, Grid};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::data::Pairs;
use crate::error::{Result, StageExt};
use crate::report::{FileRecord, RunWriter, Table};

/// Files written by one run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub tables: Vec<Table>,
    pub files: Vec<FileRecord>,
}

/// Fits the configured spectral surrogate.
pub fn fit_operator(cfg: &ExperimentConfig, train: &[(Field, Field)]) -> Result<SpectralOperator> {
    fit_spectral_operator_with(train, cfg.surrogate.basis, cfg.surrogate.modes, cfg.surrogate.ridge)
        .stage("fit surrogate")
}

/// `(prediction, truth)` for every `(input, truth)` pair, predicting on the truth's grid.
pub fn predict_pairs(op: &SpectralOperator, pairs: &[(Field, Field)]) -> Result<Vec<(Field, Field)>> {
    pairs
        .par_iter()
        .map(|(x, y)| Ok((op.predict(x, y.grid())?, y.clone())))
        .collect::<fcp_core::Result<_>>()
        .stage("predict")
}

/// Scores of `(prediction, truth)` pairs under `norm`.
pub fn scores(pairs: &[(Field, Field)], norm: ScoreNorm) -> Result<Vec<f64>> {
    nonconformity_scores_with(pairs, norm).stage("score")
}

/// Written output of a driver before it hits the disk.
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub datasets: Vec<(String, Grid, Pairs)>,
    pub models: Vec<(String, crate::model::Model)>,
}

/// Runs the configured experiment and writes its outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let art = match cfg.experiment {
        Experiment::DarcyMc => darcy::run(cfg)?,
        Experiment::PoissonQuantile => poisson::run(cfg)?,
        Experiment::NsForecast => forecast::run(cfg)?,
        Experiment::GridAblation => ablation::run_grid(cfg)?,
        Experiment::VolumeAblation => ablation::run_volume(cfg)?,
        Experiment::Superres => superres::run(cfg)?,
    };
    let dir = cfg.run_dir();
    let mut w = RunWriter::create(&dir)?;
    for t in &art.tables {
        w.table(t)?;
    }
    for (name, grid, samples) in &art.datasets {
        w.dataset(name, grid, samples)?;
    }
    for (name, m) in &art.models {
        w.model(name, m)?;
    }
    let files = w.finish(cfg, "manifest.toml")?;
    Ok(RunReport {
        dir,
        tables: art.tables,
        files,
    })
}
