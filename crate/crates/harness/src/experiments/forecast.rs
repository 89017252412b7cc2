//! Autoregressive ensemble forecasting of 2D Navier–Stokes vorticity.
//!
//! A one-step spectral surrogate `ω_t ↦ ω_{t+1}` is fit on training
//! transitions. Member `j` of the ensemble rolls out with its own perturbed
//! copy of the surrogate. The radius is calibrated on one-step ensemble-mean
//! predictions from calibration trajectories.

use fcp_core::conformal::{calibrate, ScoreNorm};
use fcp_core::forecast::{ensemble_mean, rollout_diagnostics, EnsembleStepper, StepDiagnostics};
use fcp_core::rng::derive_seed;
use fcp_core::surrogate::{perturbed_operator, SpectralOperator};
use fcp_core::{Field, Grid};
use rayon::prelude::*;

use super::{fit_operator, scores, Artifacts};
use crate::config::ExperimentConfig;
use crate::data::{input_spec, ns_trajectories, split_ranges, tags, transitions};
use crate::error::{Result, StageExt};
use crate::model::Model;
use crate::report::{mean, num, Table};

/// Ensemble of perturbed one-step operators.
pub struct PerturbedStepper {
    members: Vec<SpectralOperator>,
    grid: Grid,
}

impl PerturbedStepper {
    pub fn new(op: &SpectralOperator, grid: &Grid, members: usize, noise_scale: f64, seed: u64) -> Self {
        PerturbedStepper {
            members: (0..members as u64)
                .map(|j| perturbed_operator(op, noise_scale, seed, j))
                .collect(),
            grid: grid.clone(),
        }
    }

    /// One-step predictions of every member from `state`.
    pub fn one_step(&self, state: &Field) -> fcp_core::Result<Vec<Field>> {
        self.members.iter().map(|m| m.predict(state, &self.grid)).collect()
    }
}

impl EnsembleStepper for PerturbedStepper {
    fn members(&self) -> usize {
        self.members.len()
    }

    fn advance(&self, member: usize, _step: usize, state: &Field) -> fcp_core::Result<Field> {
        self.members[member].predict(state, &self.grid)
    }
}

#[derive(Clone, Debug)]
pub struct ForecastResult {
    pub tau: f64,
    pub n_cal: usize,
    /// Diagnostics per test trajectory, one entry per step.
    pub trajectories: Vec<Vec<StepDiagnostics>>,
}

impl ForecastResult {
    /// Metric averaged over test trajectories, per step.
    pub fn average(&self, metric: impl Fn(&StepDiagnostics) -> f64) -> Vec<f64> {
        let steps = self.trajectories.first().map_or(0, Vec::len);
        (0..steps)
            .map(|t| mean(&self.trajectories.iter().map(|d| metric(&d[t])).collect::<Vec<_>>()))
            .collect()
    }

    pub fn tables(&self, cfg: &ExperimentConfig) -> Vec<Table> {
        let steps = self.trajectories.first().map_or(0, Vec::len);
        let mut header = vec!["metric".to_string()];
        header.extend((1..=steps).map(|t| format!("t{t}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = Table::new("ns_forecast", &header_refs);
        let md = self.average(|d| d.mean_distance);
        let mut within = vec!["within_tau".to_string()];
        within.extend(md.iter().map(|&m| if m <= self.tau { "yes" } else { "no" }.to_string()));
        t.push(within);
        let rows: [(&str, Vec<f64>); 5] = [
            ("mean_distance", md.clone()),
            ("ensemble_spread", self.average(|d| d.spread)),
            ("ia", self.average(|d| d.ia)),
            ("ces", self.average(|d| d.ces)),
            ("crps", self.average(|d| d.crps)),
        ];
        for (name, vals) in rows {
            let mut row = vec![name.to_string()];
            row.extend(vals.iter().map(|&v| num(v)));
            t.push(row);
        }

        let mut s = Table::new(
            "ns_forecast_steps",
            &[
                "trajectory",
                "t",
                "mean_distance",
                "spread",
                "ces",
                "ia",
                "crps",
                "within_tau",
            ],
        );
        for (i, traj) in self.trajectories.iter().enumerate() {
            for d in traj {
                s.push(vec![
                    i.to_string(),
                    d.t.to_string(),
                    num(d.mean_distance),
                    num(d.spread),
                    num(d.ces),
                    num(d.ia),
                    num(d.crps),
                    d.within_tau.to_string(),
                ]);
            }
        }

        let mut m = Table::new(
            "ns_forecast_summary",
            &["alpha", "tau", "n_cal", "members", "noise_scale", "first_violation"],
        );
        let first = md
            .iter()
            .position(|&v| v > self.tau)
            .map_or("none".to_string(), |i| (i + 1).to_string());
        m.push(vec![
            num(cfg.alpha),
            num(self.tau),
            self.n_cal.to_string(),
            cfg.ensemble.members.to_string(),
            num(cfg.ensemble.noise_scale),
            first,
        ]);
        vec![t, s, m]
    }
}

pub fn compute(cfg: &ExperimentConfig) -> Result<(ForecastResult, Artifacts)> {
    let spec = input_spec(cfg, cfg.seed);
    let [a, b, c] = split_ranges(cfg);
    let train = ns_trajectories(cfg, &spec, a)?;
    let cal = ns_trajectories(cfg, &spec, b)?;
    let test = ns_trajectories(cfg, &spec, c)?;
    let grid = train[0][0].grid().clone();

    let train_pairs = transitions(&train);
    let op = fit_operator(cfg, &train_pairs)?;
    let stepper = PerturbedStepper::new(
        &op,
        &grid,
        cfg.ensemble.members,
        cfg.ensemble.noise_scale,
        derive_seed(cfg.seed, tags::ENSEMBLE),
    );

    let cal_pairs = transitions(&cal);
    let one_step: Vec<(Field, Field)> = cal_pairs
        .par_iter()
        .map(|(x, y)| Ok((ensemble_mean(&stepper.one_step(x)?)?, y.clone())))
        .collect::<fcp_core::Result<_>>()
        .stage("one-step calibration")?;
    let calib = calibrate(&scores(&one_step, ScoreNorm::Weighted)?, cfg.alpha).stage("calibrate")?;
    let tau = calib.tau();

    let steps = cfg.solver.steps;
    let trajectories = test
        .iter()
        .map(|traj| {
            rollout_diagnostics(&traj[0], &stepper, steps, tau, &traj[1..])
                .map(|r| r.steps)
                .stage("forecast rollout")
        })
        .collect::<Result<_>>()?;
    let result = ForecastResult {
        tau,
        n_cal: calib.n(),
        trajectories,
    };
    let art = Artifacts {
        tables: result.tables(cfg),
        datasets: vec![
            ("train".into(), grid.clone(), train_pairs),
            ("cal".into(), grid.clone(), cal_pairs),
            ("test".into(), grid, transitions(&test)),
        ],
        models: vec![("model".into(), Model::Operator(op))],
    };
    Ok((result, art))
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<Artifacts> {
    Ok(compute(cfg)?.1)
}
