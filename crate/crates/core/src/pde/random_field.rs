//! Random inputs built from finite Fourier series.
//!
//! Samples are continuous functions on the unit box (a [`FourierSeries`]), so
//! the same draw can be discretized on any grid. Each sample index selects its
//! own PRNG stream, making draws independent of generation order.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::grid::{discretize, Field, Grid};
use crate::rng::stream_rng;

/// Parameters of a random Fourier field.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomFieldSpec {
    /// Highest wavenumber per axis (lattice samplers) or number of modes
    /// drawn (forcing sampler).
    pub n_modes: usize,
    /// Mode `m` has standard deviation `amplitude · (1 + |m|²)^(−decay)`.
    pub amplitude_decay: f64,
    /// Overall scale of the coefficients.
    pub amplitude: f64,
    /// Optional pointwise clipping of the final values.
    pub clip: Option<(f64, f64)>,
    pub seed: u64,
}

impl RandomFieldSpec {
    pub fn new(n_modes: usize, amplitude_decay: f64, amplitude: f64, seed: u64) -> Self {
        RandomFieldSpec {
            n_modes,
            amplitude_decay,
            amplitude,
            clip: None,
            seed,
        }
    }

    pub fn with_clip(mut self, lo: f64, hi: f64) -> Self {
        self.clip = Some((lo, hi));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return invalid("n_modes must be at least 1");
        }
        if !self.amplitude_decay.is_finite() || !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return invalid("amplitude and decay must be finite, amplitude nonnegative");
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo < hi) {
                return invalid(format!("clip range ({lo}, {hi}) is empty"));
            }
        }
        Ok(())
    }

    fn mode_std(&self, wavevector: &[i32]) -> f64 {
        let m2: f64 = wavevector.iter().map(|&m| (m as f64).powi(2)).sum();
        self.amplitude * (1.0 + m2).powf(-self.amplitude_decay)
    }
}

/// One term `a cos(2π m·x) + b sin(2π m·x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMode {
    pub wavevector: Vec<i32>,
    pub cos: f64,
    pub sin: f64,
}

/// `offset + Σ_m [a_m cos(2π m·x) + b_m sin(2π m·x)]` on `[0,1]^D`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSeries {
    pub dim: usize,
    pub offset: f64,
    pub modes: Vec<FourierMode>,
}

impl FourierSeries {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let two_pi = std::f64::consts::TAU;
        self.offset
            + self
                .modes
                .iter()
                .map(|m| {
                    let phase: f64 = two_pi * m.wavevector.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>();
                    m.cos * phase.cos() + m.sin * phase.sin()
                })
                .sum::<f64>()
    }

    pub fn discretize(&self, grid: &Grid) -> Result<Field> {
        if grid.dim() != self.dim {
            return invalid(format!(
                "{}-D series cannot be sampled on a {}-D grid",
                self.dim,
                grid.dim()
            ));
        }
        discretize(|x| self.evaluate(x), grid)
    }

    /// Continuous `∫ (series − offset)²` over the box.
    pub fn fluctuation_energy(&self) -> f64 {
        self.modes.iter().map(|m| 0.5 * (m.cos * m.cos + m.sin * m.sin)).sum()
    }
}

/// Nonzero wavevectors with `max |m_i| ≤ n` in a half-space, so `m` and `−m`
/// never both appear.
fn half_lattice(dim: usize, n: usize) -> Vec<Vec<i32>> {
    let n = n as i32;
    let side = 2 * n + 1;
    let total = (side as usize).pow(dim as u32);
    let mut out = Vec::new();
    for flat in 0..total {
        let mut rem = flat;
        let mut m = vec![0i32; dim];
        for axis in (0..dim).rev() {
            m[axis] = (rem % side as usize) as i32 - n;
            rem /= side as usize;
        }
        if let Some(first) = m.iter().find(|&&v| v != 0) {
            if *first > 0 {
                out.push(m);
            }
        }
    }
    out
}

fn draw_modes(spec: &RandomFieldSpec, wavevectors: Vec<Vec<i32>>, rng: &mut impl Rng) -> Vec<FourierMode> {
    wavevectors
        .into_iter()
        .map(|m| {
            let s = spec.mode_std(&m);
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            FourierMode {
                wavevector: m,
                cos: s * a,
                sin: s * b,
            }
        })
        .collect()
}

/// Zero-mean Gaussian random field on `[0,1]^dim` with all lattice modes up
/// to `n_modes` per axis.
pub fn grf_series(spec: &RandomFieldSpec, dim: usize, index: u64) -> Result<FourierSeries> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, index);
    let modes = draw_modes(spec, half_lattice(dim, spec.n_modes), &mut rng);
    Ok(FourierSeries {
        dim,
        offset: 0.0,
        modes,
    })
}

/// Largest wavenumber per axis the forcing sampler draws from.
pub const FORCING_MAX_WAVENUMBER: usize = 4;

/// Zero-mean forcing made of `n_modes` distinct random wavevectors with
/// `max |m_i| ≤ FORCING_MAX_WAVENUMBER`.
pub fn forcing_series(spec: &RandomFieldSpec, dim: usize, index: u64) -> Result<FourierSeries> {
    spec.validate()?;
    let lattice = half_lattice(dim, FORCING_MAX_WAVENUMBER);
    if spec.n_modes > lattice.len() {
        return invalid(format!(
            "cannot draw {} distinct forcing modes from {} candidates",
            spec.n_modes,
            lattice.len()
        ));
    }
    let mut rng = stream_rng(spec.seed, index);
    let mut chosen: Vec<usize> = sample_indices(&mut rng, lattice.len(), spec.n_modes).into_vec();
    chosen.sort_unstable();
    let picked = chosen.into_iter().map(|i| lattice[i].clone()).collect();
    let modes = draw_modes(spec, picked, &mut rng);
    Ok(FourierSeries {
        dim,
        offset: 0.0,
        modes,
    })
}

/// Center of the default permeability range in log space.
pub fn permeability_log_center(lo: f64, hi: f64) -> f64 {
    0.5 * (lo.ln() + hi.ln())
}

/// Default permeability bounds.
pub const PERMEABILITY_RANGE: (f64, f64) = (0.01, 10.0);

/// Log-permeability series: a 1D lattice series shifted to the center of the
/// clip range in log space.
pub fn log_permeability_series(spec: &RandomFieldSpec, index: u64) -> Result<FourierSeries> {
    let (lo, hi) = spec.clip.unwrap_or(PERMEABILITY_RANGE);
    let mut s = grf_series(spec, 1, index)?;
    s.offset = permeability_log_center(lo, hi);
    Ok(s)
}

/// Random permeability `k = clip(exp(g(x)), lo, hi)` where `g` is a random
/// Fourier series centered on the log-midpoint of the clip range (default
/// `[0.01, 10]`).
pub fn sample_permeability_1d(spec: &RandomFieldSpec, grid: &Grid, index: u64) -> Result<Field> {
    if grid.dim() != 1 {
        return invalid("permeability samples live on 1D grids");
    }
    let (lo, hi) = spec.clip.unwrap_or(PERMEABILITY_RANGE);
    let log_k = log_permeability_series(spec, index)?.discretize(grid)?;
    Ok(log_k.map(|v| v.exp().clamp(lo, hi)))
}

fn apply_clip(spec: &RandomFieldSpec, field: Field) -> Field {
    match spec.clip {
        Some((lo, hi)) => field.map(|v| v.clamp(lo, hi)),
        None => field,
    }
}

/// Gaussian random field sample on a 2D grid.
pub fn sample_grf_2d(spec: &RandomFieldSpec, grid: &Grid, index: u64) -> Result<Field> {
    Ok(apply_clip(spec, grf_series(spec, 2, index)?.discretize(grid)?))
}

/// Random forcing sample on a 2D grid.
pub fn sample_forcing_2d(spec: &RandomFieldSpec, grid: &Grid, index: u64) -> Result<Field> {
    Ok(apply_clip(spec, forcing_series(spec, 2, index)?.discretize(grid)?))
}
