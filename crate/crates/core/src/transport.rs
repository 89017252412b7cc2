//! Moving a conformal radius across resolutions.
//!
//! A sweep calibrates the same surrogate on datasets at several resolutions
//! `R` (cells per axis). [`fit_log_linear`] fits `log τ(R) = s·R + b` by
//! ordinary least squares and [`extrapolate_tau`] evaluates the fit at a new
//! resolution. [`decompose_radius`] splits a radius into a measured
//! discretization term, a `1/√n` calibration term and whatever is left.

use rayon::prelude::*;

use crate::conformal::{calibrate, nonconformity_scores};
use crate::error::{invalid, FcpError, Result};
use crate::grid::{relative_weighted_error, resample, Field, Grid};
use crate::surrogate::SpectralOperator;

/// A model that maps an input field to a prediction on a target grid.
pub trait Surrogate: Sync {
    /// Fails with an invalid-argument error if `grid` cannot be used.
    fn check_grid(&self, grid: &Grid) -> Result<()>;
    fn predict(&self, input: &Field, target: &Grid) -> Result<Field>;
}

impl Surrogate for SpectralOperator {
    fn check_grid(&self, grid: &Grid) -> Result<()> {
        SpectralOperator::check_grid(self, grid)
    }

    fn predict(&self, input: &Field, target: &Grid) -> Result<Field> {
        SpectralOperator::predict(self, input, target)
    }
}

/// Calibration pairs `(input, truth)` at one resolution.
#[derive(Clone, Debug)]
pub struct ResolutionData {
    pub resolution: usize,
    pub pairs: Vec<(Field, Field)>,
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub resolution: usize,
    pub tau: f64,
    pub n_cal: usize,
    pub conservative: bool,
}

fn check_resolution(grid: &Grid, resolution: usize) -> Result<()> {
    if !grid.is_uniform() || grid.shape().iter().any(|&n| n != resolution) {
        return invalid(format!(
            "dataset labeled R={resolution} is on a {:?} {} grid",
            grid.shape(),
            grid.kind()
        ));
    }
    Ok(())
}

/// Calibrates `model` at every resolution. Predictions are made on each
/// truth's grid and scored with the weighted relative norm.
pub fn resolution_sweep(model: &dyn Surrogate, datasets: &[ResolutionData], alpha: f64) -> Result<Vec<SweepPoint>> {
    if datasets.len() < 2 {
        return invalid(format!("a sweep needs at least 2 resolutions, got {}", datasets.len()));
    }
    for d in datasets {
        if d.pairs.is_empty() {
            return invalid(format!("no calibration pairs at R={}", d.resolution));
        }
        for (x, y) in &d.pairs {
            check_resolution(x.grid(), d.resolution)?;
            check_resolution(y.grid(), d.resolution)?;
            model.check_grid(y.grid())?;
            model.check_grid(x.grid())?;
        }
    }
    datasets
        .par_iter()
        .map(|d| {
            let scored: Vec<(Field, Field)> = d
                .pairs
                .iter()
                .map(|(x, y)| Ok((model.predict(x, y.grid())?, y.clone())))
                .collect::<Result<_>>()?;
            let cal = calibrate(&nonconformity_scores(&scored)?, alpha)?;
            Ok(SweepPoint {
                resolution: d.resolution,
                tau: cal.tau(),
                n_cal: cal.n(),
                conservative: cal.conservative(),
            })
        })
        .collect()
}

/// Least-squares fit of `log τ = s·R + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportFit {
    pub slope: f64,
    pub intercept: f64,
    pub resolutions: Vec<usize>,
    pub taus: Vec<f64>,
    /// Root mean square of the log-residuals.
    pub residual_rms: f64,
}

impl TransportFit {
    /// `exp(s·R + b)`.
    pub fn tau_at(&self, resolution: usize) -> f64 {
        (self.slope * resolution as f64 + self.intercept).exp()
    }

    /// Log-residual RMS of arbitrary coefficients on the fitted points.
    pub fn rms_for(&self, slope: f64, intercept: f64) -> f64 {
        let ss: f64 = self
            .resolutions
            .iter()
            .zip(&self.taus)
            .map(|(&r, &t)| (t.ln() - slope * r as f64 - intercept).powi(2))
            .sum();
        (ss / self.taus.len() as f64).sqrt()
    }
}

/// Ordinary least squares on `(R, log τ)`.
pub fn fit_log_linear(points: &[(usize, f64)]) -> Result<TransportFit> {
    if points.len() < 2 {
        return invalid(format!("need at least 2 points, got {}", points.len()));
    }
    if let Some((r, t)) = points.iter().find(|(_, t)| !(*t > 0.0) || !t.is_finite()) {
        return invalid(format!("tau must be positive and finite, got {t} at R={r}"));
    }
    let n = points.len() as f64;
    let xm = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(r, t) in points {
        let dx = r as f64 - xm;
        sxx += dx * dx;
        sxy += dx * (t.ln() - ym);
    }
    if sxx == 0.0 {
        return Err(FcpError::Rank("all resolutions are identical".into()));
    }
    let slope = sxy / sxx;
    let mut fit = TransportFit {
        slope,
        intercept: ym - slope * xm,
        resolutions: points.iter().map(|p| p.0).collect(),
        taus: points.iter().map(|p| p.1).collect(),
        residual_rms: 0.0,
    };
    fit.residual_rms = fit.rms_for(fit.slope, fit.intercept);
    Ok(fit)
}

/// Transported radius at one resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolation {
    pub tau: f64,
    /// `R` exceeds the largest fitted resolution.
    pub extrapolated: bool,
}

pub fn extrapolate_tau(fit: &TransportFit, resolution: usize) -> Extrapolation {
    let max = fit.resolutions.iter().copied().max().unwrap_or(0);
    Extrapolation {
        tau: fit.tau_at(resolution),
        extrapolated: resolution > max,
    }
}

/// Heuristic split `τ ≈ ε_disc + ε_cal + ε_misspec`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusDecomposition {
    pub eps_disc: f64,
    pub eps_cal: f64,
    /// Remainder, reported as is (can be negative).
    pub eps_misspec: f64,
}

/// Decomposes `tau` for `grid` using a finer `reference` field.
///
/// `ε_disc` restricts the reference to `grid`, interpolates it back to the
/// reference grid and measures the relative weighted distance.
pub fn decompose_radius(tau: f64, reference: &Field, grid: &Grid, n_cal: usize) -> Result<RadiusDecomposition> {
    let fine = reference.grid();
    if fine.dim() != grid.dim() {
        return invalid(format!(
            "reference is {}-D but the grid is {}-D",
            fine.dim(),
            grid.dim()
        ));
    }
    if fine.shape().iter().zip(grid.shape()).any(|(f, c)| f <= c) {
        return invalid(format!(
            "reference {:?} must be strictly finer than grid {:?}",
            fine.shape(),
            grid.shape()
        ));
    }
    if n_cal == 0 {
        return invalid("n_cal must be positive");
    }
    let restricted = resample(reference, grid)?;
    let back = resample(&restricted, fine)?;
    let eps_disc = relative_weighted_error(reference, &back)?;
    let eps_cal = 1.0 / (n_cal as f64).sqrt();
    Ok(RadiusDecomposition {
        eps_disc,
        eps_cal,
        eps_misspec: tau - eps_disc - eps_cal,
    })
}
