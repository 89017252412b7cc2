//! Grid-geometry ablations on the Poisson pipeline.
//!
//! The same continuous inputs are rendered on each geometry, solved there,
//! and a surrogate is fit per geometry. Radii are calibrated with both the
//! unweighted relative norm and the quadrature-weighted norm.

use fcp_core::conformal::{calibrate, functional_coverage, log_volume_score, ScoreNorm};
use fcp_core::GridKind;

use super::{fit_operator, predict_pairs, scores, Artifacts};
use crate::config::{ExperimentConfig, Problem};
use crate::data::{problem_grid, static_splits};
use crate::error::{Result, StageExt};
use crate::report::{coefficient_of_variation, num, sample_std, Table};

/// Per-norm outcome on one geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOutcome {
    pub tau: f64,
    pub coverage: f64,
    /// Negative log-volume of the prediction set at radius `tau`.
    pub volume_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryRun {
    pub geometry: GridKind,
    pub relative: NormOutcome,
    pub weighted: NormOutcome,
}

pub fn geometry_runs(cfg: &ExperimentConfig) -> Result<Vec<GeometryRun>> {
    cfg.evaluation
        .geometries
        .iter()
        .map(|&kind| {
            let grid = problem_grid(Problem::Poisson, kind, cfg.data.resolution)?;
            let splits = static_splits(cfg, cfg.seed, &grid)?;
            let op = fit_operator(cfg, &splits.train)?;
            let cal = predict_pairs(&op, &splits.cal)?;
            let test = predict_pairs(&op, &splits.test)?;
            let d = grid.len();
            let outcome = |norm: ScoreNorm, weights: &[f64]| -> Result<NormOutcome> {
                let tau = calibrate(&scores(&cal, norm)?, cfg.alpha).stage("calibrate")?.tau();
                Ok(NormOutcome {
                    tau,
                    coverage: functional_coverage(&scores(&test, norm)?, tau),
                    volume_score: log_volume_score(weights, tau, d).stage("volume score")?,
                })
            };
            Ok(GeometryRun {
                geometry: kind,
                relative: outcome(ScoreNorm::Unweighted, &vec![1.0; d])?,
                weighted: outcome(ScoreNorm::Weighted, grid.weights())?,
            })
        })
        .collect()
}

/// Radii per geometry with their spread summary.
pub fn grid_table(runs: &[GeometryRun]) -> Table {
    let mut t = Table::new("grid_ablation", &["grid", "relative_tau", "weighted_tau"]);
    for r in runs {
        t.push(vec![r.geometry.to_string(), num(r.relative.tau), num(r.weighted.tau)]);
    }
    let rel: Vec<f64> = runs.iter().map(|r| r.relative.tau).collect();
    let w: Vec<f64> = runs.iter().map(|r| r.weighted.tau).collect();
    t.push(vec!["std".into(), num(sample_std(&rel)), num(sample_std(&w))]);
    t.push(vec![
        "cv".into(),
        num(coefficient_of_variation(&rel)),
        num(coefficient_of_variation(&w)),
    ]);
    t
}

pub fn volume_table(runs: &[GeometryRun]) -> Table {
    let mut t = Table::new("volume_ablation", &["grid", "norm", "tau", "volume_score", "coverage"]);
    for r in runs {
        for (name, o) in [("relative", r.relative), ("weighted", r.weighted)] {
            t.push(vec![
                r.geometry.to_string(),
                name.into(),
                num(o.tau),
                num(o.volume_score),
                num(o.coverage),
            ]);
        }
    }
    t
}

pub(crate) fn run_grid(cfg: &ExperimentConfig) -> Result<Artifacts> {
    Ok(Artifacts {
        tables: vec![grid_table(&geometry_runs(cfg)?)],
        datasets: Vec::new(),
        models: Vec::new(),
    })
}

pub(crate) fn run_volume(cfg: &ExperimentConfig) -> Result<Artifacts> {
    Ok(Artifacts {
        tables: vec![volume_table(&geometry_runs(cfg)?)],
        datasets: Vec::new(),
        models: Vec::new(),
    })
}
