//! Diagnostics for autoregressive ensemble forecasts.
//!
//! At each step `t` with members `û^(j)_t`, mean `ū_t` and truth `u_t`:
//!
//! - mean distance `‖ū_t − u_t‖_w / ‖ū_t‖_w`,
//! - ensemble spread `ES_t = (1/n) Σ_j ‖û^(j)_t − ū_t‖_w / ‖ū_t‖_w`,
//! - conformal ensemble score `CES_t = mean distance + ES_t`,
//! - internal agreement `IA_t`: fraction of members within `τ` of `ū_t`,
//! - CRPS from the ensemble energy form, averaged with quadrature weights.

use rayon::prelude::*;

use crate::error::{invalid, FcpError, Result};
use crate::grid::{ensure_same_grid, weighted_distance, weighted_norm, Field};

/// Pointwise mean of the members.
pub fn ensemble_mean(members: &[Field]) -> Result<Field> {
    let first = members
        .first()
        .ok_or_else(|| FcpError::InvalidArgument("no ensemble members".into()))?;
    let mut acc = vec![0.0; first.len()];
    for m in members {
        ensure_same_grid(first, m)?;
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    let n = members.len() as f64;
    Field::new(first.grid().clone(), acc.into_iter().map(|a| a / n).collect())
}

/// Metrics of one forecast step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub t: usize,
    pub mean_distance: f64,
    pub spread: f64,
    pub ces: f64,
    pub ia: f64,
    pub crps: f64,
    pub within_tau: bool,
}

/// `(1/n) Σ_k |x_k − y| − (1/(2n²)) Σ_k Σ_l |x_k − x_l|` for one point.
/// `sorted` must be ascending.
fn crps_point(sorted: &[f64], y: f64) -> f64 {
    let n = sorted.len() as f64;
    let skill: f64 = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    // Σ_k Σ_l |x_k − x_l| = 2 Σ_i (2i − n − 1) x_(i) with 1-based ranks
    let pair: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum::<f64>()
        * 2.0;
    skill - pair / (2.0 * n * n)
}

/// Quadrature-weighted mean of the pointwise ensemble CRPS.
pub fn crps_ensemble(members: &[Field], truth: &Field) -> Result<f64> {
    let first = members
        .first()
        .ok_or_else(|| FcpError::InvalidArgument("no ensemble members".into()))?;
    for m in members {
        ensure_same_grid(m, truth)?;
    }
    let weights = first.grid().weights();
    let mut column = vec![0.0; members.len()];
    let mut total = 0.0;
    for (i, (&w, &y)) in weights.iter().zip(truth.values()).enumerate() {
        for (c, m) in column.iter_mut().zip(members) {
            *c = m.values()[i];
        }
        column.sort_by(f64::total_cmp);
        total += w * crps_point(&column, y);
    }
    Ok(total.max(0.0))
}

/// Diagnostics of step `t` for `members` against `truth` at radius `tau`.
pub fn step_diagnostics(members: &[Field], truth: &Field, tau: f64, t: usize) -> Result<StepDiagnostics> {
    if tau.is_nan() || tau < 0.0 {
        return invalid(format!("tau must be nonnegative, got {tau}"));
    }
    let mean = ensemble_mean(members)?;
    ensure_same_grid(&mean, truth)?;
    let norm = weighted_norm(&mean);
    if norm == 0.0 {
        return Err(FcpError::DegenerateDenominator {
            context: format!("ensemble mean at step {t}"),
        });
    }
    let mean_distance = weighted_distance(&mean, truth)? / norm;
    let d: Vec<f64> = members
        .iter()
        .map(|m| Ok(weighted_distance(m, &mean)? / norm))
        .collect::<Result<_>>()?;
    let n = members.len() as f64;
    let spread = d.iter().sum::<f64>() / n;
    let ia = d.iter().filter(|&&x| x <= tau).count() as f64 / n;
    Ok(StepDiagnostics {
        t,
        mean_distance,
        spread,
        ces: mean_distance + spread,
        ia,
        crps: crps_ensemble(members, truth)?,
        within_tau: mean_distance <= tau,
    })
}

/// An autoregressive ensemble model.
pub trait EnsembleStepper: Sync {
    /// Number of members.
    fn members(&self) -> usize;

    /// State of member `member` before the first step.
    fn initialize(&self, _member: usize, initial: &Field) -> Result<Field> {
        Ok(initial.clone())
    }

    /// Advances member `member` from its state after step `step − 1` to step `step`.
    fn advance(&self, member: usize, step: usize, state: &Field) -> Result<Field>;
}

/// Per-step diagnostics of a rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutReport {
    pub steps: Vec<StepDiagnostics>,
    /// First step whose mean distance exceeds `τ`.
    pub first_violation: Option<usize>,
}

fn with_step(e: FcpError, step: usize, member: usize) -> FcpError {
    match e {
        FcpError::Numeric(msg) => FcpError::Numeric(format!("forecast step {step}, member {member}: {msg}")),
        other => other,
    }
}

/// Rolls the ensemble forward `steps` times from `initial` and scores step
/// `t` against `truth[t − 1]`.
pub fn rollout_diagnostics(
    initial: &Field,
    stepper: &dyn EnsembleStepper,
    steps: usize,
    tau: f64,
    truth: &[Field],
) -> Result<RolloutReport> {
    if truth.len() < steps {
        return invalid(format!(
            "truth trajectory has {} states, {steps} steps requested",
            truth.len()
        ));
    }
    let n = stepper.members();
    if n == 0 {
        return invalid("stepper has no members");
    }
    let mut states: Vec<Field> = (0..n)
        .into_par_iter()
        .map(|j| stepper.initialize(j, initial).map_err(|e| with_step(e, 0, j)))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        states = states
            .par_iter()
            .enumerate()
            .map(|(j, s)| stepper.advance(j, t, s).map_err(|e| with_step(e, t, j)))
            .collect::<Result<_>>()?;
        out.push(step_diagnostics(&states, &truth[t - 1], tau, t)?);
    }
    let first_violation = out.iter().find(|d| !d.within_tau).map(|d| d.t);
    Ok(RolloutReport {
        steps: out,
        first_violation,
    })
}
