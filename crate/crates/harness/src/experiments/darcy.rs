//! Monte Carlo ensemble bounds for 1D Darcy flow.
//!
//! A perturbation ensemble of the spectral surrogate gives a mean prediction
//! (scored and calibrated) and pointwise envelopes. The uncalibrated
//! envelope uses every member; the calibrated one keeps members within `τ`
//! of the ensemble mean.

use fcp_core::conformal::{calibrate, functional_coverage, points_inside, ScoreNorm};
use fcp_core::forecast::ensemble_mean;
use fcp_core::intervals::{mc_envelope, Conditioning, Envelope};
use fcp_core::rng::derive_seed;
use fcp_core::surrogate::{ensemble_predict, SpectralOperator};
use fcp_core::Field;
use rayon::prelude::*;

use super::{fit_operator, scores, Artifacts};
use crate::config::{ExperimentConfig, Problem};
use crate::data::{problem_grid, static_splits, tags};
use crate::error::{Result, StageExt};
use crate::model::Model;
use crate::report::{num, Table};

#[derive(Clone, Debug)]
pub struct DarcyResult {
    pub tau: f64,
    pub functional: f64,
    pub pointwise_uncalibrated: f64,
    pub pointwise_calibrated: f64,
    /// Mean number of members kept by the calibrated envelope.
    pub mean_kept: f64,
}

impl DarcyResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new("darcy_mc", &["group", "technique", "scalar", "functional", "pointwise"]);
        t.push(vec![
            "uncalibrated".into(),
            "perturbation_ensemble".into(),
            String::new(),
            String::new(),
            num(self.pointwise_uncalibrated),
        ]);
        t.push(vec![
            "calibrated".into(),
            "perturbation_ensemble".into(),
            num(self.tau),
            num(self.functional),
            num(self.pointwise_calibrated),
        ]);
        t
    }
}

/// Ensemble members and their mean for every input.
fn ensembles(
    cfg: &ExperimentConfig,
    op: &SpectralOperator,
    pairs: &[(Field, Field)],
    first_index: u64,
) -> Result<Vec<Vec<Field>>> {
    let seed = derive_seed(cfg.seed, tags::ENSEMBLE);
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            ensemble_predict(
                op,
                x,
                y.grid(),
                cfg.ensemble.members,
                cfg.ensemble.noise_scale,
                derive_seed(seed, first_index + i as u64),
            )
        })
        .collect::<fcp_core::Result<_>>()
        .stage("ensemble prediction")
}

fn pointwise(envelopes: &[Envelope], truth: &[(Field, Field)]) -> Result<f64> {
    let mut inside = 0;
    let mut total = 0;
    for (e, (_, y)) in envelopes.iter().zip(truth) {
        inside += points_inside(&e.lower, &e.upper, y).stage("pointwise coverage")?;
        total += y.len();
    }
    Ok(inside as f64 / total as f64)
}

pub fn compute(cfg: &ExperimentConfig) -> Result<(DarcyResult, Artifacts)> {
    let grid = problem_grid(Problem::Darcy, cfg.data.geometry, cfg.data.resolution)?;
    let splits = static_splits(cfg, cfg.seed, &grid)?;
    let op = fit_operator(cfg, &splits.train)?;

    let n_train = cfg.data.n_train as u64;
    let cal_members = ensembles(cfg, &op, &splits.cal, n_train)?;
    let cal_pairs: Vec<(Field, Field)> = cal_members
        .iter()
        .zip(&splits.cal)
        .map(|(m, (_, y))| Ok((ensemble_mean(m)?, y.clone())))
        .collect::<fcp_core::Result<_>>()
        .stage("ensemble mean")?;
    let cal = calibrate(&scores(&cal_pairs, ScoreNorm::Weighted)?, cfg.alpha).stage("calibrate")?;
    let tau = cal.tau();

    let test_members = ensembles(cfg, &op, &splits.test, n_train + cfg.data.n_cal as u64)?;
    let test_pairs: Vec<(Field, Field)> = test_members
        .iter()
        .zip(&splits.test)
        .map(|(m, (_, y))| Ok((ensemble_mean(m)?, y.clone())))
        .collect::<fcp_core::Result<_>>()
        .stage("ensemble mean")?;
    let functional = functional_coverage(&scores(&test_pairs, ScoreNorm::Weighted)?, tau);

    let conditioning = if cfg.ensemble.conditioned {
        Conditioning::MeanDistance
    } else {
        Conditioning::None
    };
    let all: Vec<Envelope> = test_members
        .par_iter()
        .map(|m| mc_envelope(m, tau, &Conditioning::None))
        .collect::<fcp_core::Result<_>>()
        .stage("envelope")?;
    let kept: Vec<Envelope> = test_members
        .par_iter()
        .map(|m| mc_envelope(m, tau, &conditioning))
        .collect::<fcp_core::Result<_>>()
        .stage("conditioned envelope")?;
    let mean_kept = kept.iter().map(|e| e.kept_count() as f64).sum::<f64>() / kept.len() as f64;

    let result = DarcyResult {
        tau,
        functional,
        pointwise_uncalibrated: pointwise(&all, &splits.test)?,
        pointwise_calibrated: pointwise(&kept, &splits.test)?,
        mean_kept,
    };
    let art = Artifacts {
        tables: vec![result.table()],
        datasets: vec![
            ("train".into(), grid.clone(), splits.train),
            ("cal".into(), grid.clone(), splits.cal),
            ("test".into(), grid, splits.test),
        ],
        models: vec![("model".into(), Model::Operator(op))],
    };
    Ok((result, art))
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<Artifacts> {
    Ok(compute(cfg)?.1)
}
