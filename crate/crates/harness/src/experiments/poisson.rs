//! Quantile-triplet bounds for 2D Poisson, plus coverage over independent
//! calibration/test redraws.

use fcp_core::conformal::{calibrate, coverage, ScoreNorm};
use fcp_core::intervals::adjust_quantile_bounds;
use fcp_core::rng::derive_seed;
use fcp_core::surrogate::{fit_quantile_triplet, QuantileOptions, SpectralOperator, TripletPredictor};
use fcp_core::{Field, Grid};
use rayon::prelude::*;

use super::{predict_pairs, scores, Artifacts};
use crate::config::{ExperimentConfig, Problem};
use crate::data::{input_spec, poisson_pairs, problem_grid, static_splits, tags};
use crate::error::{Result, StageExt};
use crate::model::Model;
use crate::report::{mean, num, Table};

pub fn quantile_options(cfg: &ExperimentConfig) -> QuantileOptions {
    QuantileOptions {
        q_lo: cfg.surrogate.q_lo,
        q_hi: cfg.surrogate.q_hi,
        steps: cfg.surrogate.quantile_steps,
        step_size: cfg.surrogate.step_size,
        ridge: cfg.surrogate.ridge,
        basis: cfg.surrogate.basis,
        ..QuantileOptions::default()
    }
}

/// Calibrated radius and test coverage of one calibration/test draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resample {
    pub tau: f64,
    pub functional: f64,
}

/// Redraws `n_cal` + `n_test` samples `resamples` times and records the
/// coverage of `op` at the radius calibrated on each draw.
pub fn coverage_resamples(cfg: &ExperimentConfig, op: &SpectralOperator, grid: &Grid) -> Result<Vec<Resample>> {
    let base = derive_seed(cfg.seed, tags::RESAMPLE);
    let (n_cal, n_test) = (cfg.data.n_cal as u64, cfg.data.n_test as u64);
    (0..cfg.evaluation.resamples as u64)
        .map(|r| {
            let spec = input_spec(cfg, derive_seed(base, r));
            let cal = predict_pairs(op, &poisson_pairs(cfg, &spec, grid, 0..n_cal)?)?;
            let test = predict_pairs(op, &poisson_pairs(cfg, &spec, grid, n_cal..n_cal + n_test)?)?;
            let tau = calibrate(&scores(&cal, ScoreNorm::Weighted)?, cfg.alpha)
                .stage("calibrate")?
                .tau();
            let functional = coverage(&test, tau, cfg.alpha, None).stage("coverage")?.functional;
            Ok(Resample { tau, functional })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PoissonResult {
    pub tau: f64,
    pub functional: f64,
    pub pointwise_pinball: f64,
    pub pointwise_adjusted: f64,
    pub resamples: Vec<Resample>,
}

impl PoissonResult {
    pub fn mean_resample_coverage(&self) -> f64 {
        mean(&self.resamples.iter().map(|r| r.functional).collect::<Vec<_>>())
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "poisson_quantile",
            &["group", "method", "scalar", "functional", "pointwise"],
        );
        t.push(vec![
            "uncalibrated".into(),
            "pinball_only".into(),
            String::new(),
            String::new(),
            num(self.pointwise_pinball),
        ]);
        t.push(vec![
            "calibrated".into(),
            "adjusted_bounds".into(),
            num(self.tau),
            num(self.functional),
            num(self.pointwise_adjusted),
        ]);
        let mut r = Table::new("poisson_resamples", &["resample", "tau", "functional"]);
        for (i, s) in self.resamples.iter().enumerate() {
            r.push(vec![i.to_string(), num(s.tau), num(s.functional)]);
        }
        let taus: Vec<f64> = self.resamples.iter().map(|s| s.tau).collect();
        r.push(vec![
            "mean".into(),
            num(mean(&taus)),
            num(self.mean_resample_coverage()),
        ]);
        vec![t, r]
    }
}

fn bounds_coverage(triplet: &TripletPredictor, test: &[(Field, Field)], tau: Option<f64>) -> Result<f64> {
    let counts: Vec<(usize, usize)> = test
        .par_iter()
        .map(|(x, y)| {
            let (lo, mid, hi) = triplet.predict(x, y.grid())?;
            let (lo, hi) = match tau {
                Some(t) => adjust_quantile_bounds(&lo, &mid, &hi, t)?,
                None => (lo, hi),
            };
            Ok((fcp_core::conformal::points_inside(&lo, &hi, y)?, y.len()))
        })
        .collect::<fcp_core::Result<_>>()
        .stage("quantile bounds")?;
    let (inside, total) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(inside as f64 / total as f64)
}

pub fn compute(cfg: &ExperimentConfig) -> Result<(PoissonResult, Artifacts)> {
    let grid = problem_grid(Problem::Poisson, cfg.data.geometry, cfg.data.resolution)?;
    let splits = static_splits(cfg, cfg.seed, &grid)?;
    let triplet = fit_quantile_triplet(&splits.train, cfg.surrogate.modes, &quantile_options(cfg))
        .stage("fit quantile triplet")?;

    let cal = predict_pairs(&triplet.mid, &splits.cal)?;
    let tau = calibrate(&scores(&cal, ScoreNorm::Weighted)?, cfg.alpha)
        .stage("calibrate")?
        .tau();
    let test = predict_pairs(&triplet.mid, &splits.test)?;
    let functional = coverage(&test, tau, cfg.alpha, None).stage("coverage")?.functional;

    let result = PoissonResult {
        tau,
        functional,
        pointwise_pinball: bounds_coverage(&triplet, &splits.test, None)?,
        pointwise_adjusted: bounds_coverage(&triplet, &splits.test, Some(tau))?,
        resamples: coverage_resamples(cfg, &triplet.mid, &grid)?,
    };
    let art = Artifacts {
        tables: result.tables(),
        datasets: vec![
            ("train".into(), grid.clone(), splits.train),
            ("cal".into(), grid.clone(), splits.cal),
            ("test".into(), grid, splits.test),
        ],
        models: vec![("model".into(), Model::Triplet(triplet))],
    };
    Ok((result, art))
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<Artifacts> {
    Ok(compute(cfg)?.1)
}
