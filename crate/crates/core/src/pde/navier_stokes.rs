//! 2D incompressible Navier–Stokes in vorticity form on the periodic unit
//! square: `∂_t ω + u·∇ω = νΔω + f`.
//!
//! Pseudo-spectral discretization: the stream function solves `Δψ = ω` in
//! Fourier space, `u = (−∂_y ψ, ∂_x ψ)`, the advection term is formed in
//! physical space with 2/3-rule dealiasing, and diffusion is integrated
//! exactly through an integrating factor. Time stepping is the
//! integrating-factor form of Heun's method (second order).

use rustfft::num_complex::Complex64;

use super::fft::Fft2;
use crate::error::{invalid, FcpError, Result};
use crate::grid::{Field, Grid};

/// Body force added to the vorticity equation.
#[derive(Clone, Debug, PartialEq)]
pub enum Forcing {
    None,
    /// `amplitude · sin(2π (m_x x + m_y y))`.
    Sinusoid {
        amplitude: f64,
        wavevector: [i32; 2],
    },
    /// Values at the solver's cell centers, row-major.
    Values(Vec<f64>),
}

impl Forcing {
    fn evaluate(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            Forcing::None => Ok(vec![0.0; grid.len()]),
            Forcing::Sinusoid { amplitude, wavevector } => {
                let [mx, my] = *wavevector;
                Ok((0..grid.len())
                    .map(|j| {
                        let x = grid.center(j);
                        amplitude * (std::f64::consts::TAU * (mx as f64 * x[0] + my as f64 * x[1])).sin()
                    })
                    .collect())
            }
            Forcing::Values(v) => {
                if v.len() != grid.len() {
                    return invalid(format!("forcing has {} values, grid has {} cells", v.len(), grid.len()));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Solver configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct NsConfig {
    /// Cells per side; must be a power of two.
    pub grid_size: usize,
    pub viscosity: f64,
    pub forcing: Forcing,
    /// Upper bound on the time step; the actual step also honors `cfl`.
    pub dt: f64,
    /// Advective Courant number used to pick the step.
    pub cfl: f64,
    pub horizon: f64,
    /// Number of stored states, including the initial one.
    pub snapshots: usize,
    pub dealias: bool,
}

impl Default for NsConfig {
    fn default() -> Self {
        NsConfig {
            grid_size: 64,
            viscosity: 1e-3,
            forcing: Forcing::Sinusoid {
                amplitude: 0.1,
                wavevector: [1, 1],
            },
            dt: 0.05,
            cfl: 0.5,
            horizon: 50.0,
            snapshots: 200,
            dealias: true,
        }
    }
}

impl NsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 4 || !self.grid_size.is_power_of_two() {
            return invalid(format!("grid size must be a power of two ≥ 4, got {}", self.grid_size));
        }
        if !(self.viscosity > 0.0) {
            return invalid("viscosity must be positive");
        }
        if !(self.dt > 0.0) || !(self.cfl > 0.0) {
            return invalid("dt and cfl must be positive");
        }
        if self.snapshots == 0 {
            return invalid("at least one snapshot is required");
        }
        if !(self.horizon >= 0.0) {
            return invalid("horizon must be nonnegative");
        }
        Ok(())
    }
}

/// Precomputed spectral operators for one configuration. Immutable and
/// shareable across threads.
pub struct NsSolver {
    cfg: NsConfig,
    grid: Grid,
    fft: Fft2,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    mask: Vec<f64>,
    forcing_hat: Vec<Complex64>,
}

fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl NsSolver {
    pub fn new(cfg: NsConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.grid_size;
        let grid = Grid::uniform(&[n, n])?;
        let two_pi = std::f64::consts::TAU;
        let cutoff = n as f64 / 3.0;
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut mask = vec![1.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (mx, my) = (wavenumber(i, n), wavenumber(j, n));
                let r = i * n + j;
                k2[r] = two_pi * two_pi * (mx * mx + my * my) as f64;
                // The Nyquist derivative is not representable for real fields.
                kx[r] = if 2 * i == n { 0.0 } else { two_pi * mx as f64 };
                ky[r] = if 2 * j == n { 0.0 } else { two_pi * my as f64 };
                if cfg.dealias && ((mx.abs() as f64) > cutoff || (my.abs() as f64) > cutoff) {
                    mask[r] = 0.0;
                }
            }
        }
        let fft = Fft2::new(n);
        let mut forcing_hat: Vec<Complex64> = cfg
            .forcing
            .evaluate(&grid)?
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        fft.forward(&mut forcing_hat);
        Ok(NsSolver {
            cfg,
            grid,
            fft,
            kx,
            ky,
            k2,
            mask,
            forcing_hat,
        })
    }

    pub fn config(&self) -> &NsConfig {
        &self.cfg
    }

    /// The uniform periodic grid the solver samples on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn to_spectral(&self, omega: &Field) -> Result<Vec<Complex64>> {
        if !omega.grid().same_as(&self.grid) {
            return invalid(format!(
                "vorticity must live on the solver's {}x{} uniform grid",
                self.cfg.grid_size, self.cfg.grid_size
            ));
        }
        let mut w: Vec<Complex64> = omega.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut w);
        Ok(w)
    }

    fn to_physical(&self, mut w: Vec<Complex64>) -> Result<Field> {
        self.fft.inverse(&mut w);
        Field::new(self.grid.clone(), w.into_iter().map(|c| c.re).collect())
    }

    /// Velocity components in physical space.
    fn velocity(&self, w: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut u = vec![Complex64::default(); w.len()];
        let mut v = vec![Complex64::default(); w.len()];
        for r in 0..w.len() {
            if self.k2[r] == 0.0 {
                continue;
            }
            let psi = -w[r] / self.k2[r];
            u[r] = Complex64::new(0.0, -self.ky[r]) * psi;
            v[r] = Complex64::new(0.0, self.kx[r]) * psi;
        }
        self.fft.inverse(&mut u);
        self.fft.inverse(&mut v);
        (u, v)
    }

    /// Spectral right-hand side `−(u·∇ω)^ + f̂` without the diffusion term.
    fn nonlinear(&self, w: &[Complex64]) -> Vec<Complex64> {
        let wd: Vec<Complex64> = w.iter().zip(&self.mask).map(|(a, m)| a * m).collect();
        let (u, v) = self.velocity(&wd);
        let mut wx: Vec<Complex64> = (0..w.len()).map(|r| Complex64::new(0.0, self.kx[r]) * wd[r]).collect();
        let mut wy: Vec<Complex64> = (0..w.len()).map(|r| Complex64::new(0.0, self.ky[r]) * wd[r]).collect();
        self.fft.inverse(&mut wx);
        self.fft.inverse(&mut wy);
        let mut adv: Vec<Complex64> = (0..w.len())
            .map(|r| Complex64::new(u[r].re * wx[r].re + v[r].re * wy[r].re, 0.0))
            .collect();
        self.fft.forward(&mut adv);
        let mut out: Vec<Complex64> = (0..w.len())
            .map(|r| -adv[r] * self.mask[r] + self.forcing_hat[r])
            .collect();
        // The advection term is a divergence, so its mean vanishes exactly.
        out[0] = self.forcing_hat[0];
        out
    }

    fn stable_dt(&self, w: &[Complex64]) -> f64 {
        let (u, v) = self.velocity(w);
        let vmax = u
            .iter()
            .zip(&v)
            .map(|(a, b)| a.re.abs() + b.re.abs())
            .fold(0.0, f64::max);
        let h = 1.0 / self.cfg.grid_size as f64;
        if vmax > 0.0 {
            (self.cfg.cfl * h / vmax).min(self.cfg.dt)
        } else {
            self.cfg.dt
        }
    }

    fn step(&self, w: &[Complex64], dt: f64) -> Vec<Complex64> {
        let nu = self.cfg.viscosity;
        let e: Vec<f64> = self.k2.iter().map(|k| (-nu * k * dt).exp()).collect();
        let n0 = self.nonlinear(w);
        let a: Vec<Complex64> = (0..w.len()).map(|r| e[r] * (w[r] + dt * n0[r])).collect();
        let n1 = self.nonlinear(&a);
        (0..w.len())
            .map(|r| e[r] * w[r] + 0.5 * dt * (e[r] * n0[r] + n1[r]))
            .collect()
    }

    /// Integrates spectral state `w` for `duration`, counting steps from
    /// `first_step` for error reports.
    fn integrate(&self, mut w: Vec<Complex64>, duration: f64, first_step: &mut usize) -> Result<Vec<Complex64>> {
        if duration <= 0.0 {
            return Ok(w);
        }
        let dt_max = self.stable_dt(&w);
        let substeps = (duration / dt_max).ceil().max(1.0) as usize;
        let dt = duration / substeps as f64;
        for _ in 0..substeps {
            w = self.step(&w, dt);
            *first_step += 1;
            if w.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(FcpError::Numeric(format!(
                    "vorticity became non-finite at step {}",
                    *first_step
                )));
            }
        }
        Ok(w)
    }

    /// Advances one state by `duration`.
    pub fn advance(&self, omega: &Field, duration: f64) -> Result<Field> {
        let w = self.to_spectral(omega)?;
        let mut step = 0;
        let w = self.integrate(w, duration, &mut step)?;
        self.to_physical(w)
    }

    /// Equally spaced snapshots on `[0, horizon]`, including the initial state.
    pub fn rollout(&self, omega0: &Field) -> Result<Vec<Field>> {
        let mut w = self.to_spectral(omega0)?;
        let mut out = Vec::with_capacity(self.cfg.snapshots);
        out.push(omega0.clone());
        if self.cfg.snapshots == 1 {
            return Ok(out);
        }
        let interval = self.cfg.horizon / (self.cfg.snapshots - 1) as f64;
        let mut step = 0;
        for _ in 1..self.cfg.snapshots {
            w = self.integrate(w, interval, &mut step)?;
            out.push(self.to_physical(w.clone())?);
        }
        Ok(out)
    }

    /// Kinetic energy `½ ∫ |u|²`.
    pub fn kinetic_energy(&self, omega: &Field) -> Result<f64> {
        let w = self.to_spectral(omega)?;
        let (u, v) = self.velocity(&w);
        let n2 = w.len() as f64;
        Ok(0.5 * u.iter().zip(&v).map(|(a, b)| a.re * a.re + b.re * b.re).sum::<f64>() / n2)
    }
}

/// Enstrophy `½ ∫ ω²` on a uniform grid.
pub fn enstrophy(omega: &Field) -> f64 {
    0.5 * omega
        .grid()
        .weights()
        .iter()
        .zip(omega.values())
        .map(|(w, v)| w * v * v)
        .sum::<f64>()
}

/// Convenience wrapper building a solver and returning its snapshots.
pub fn ns_rollout(omega0: &Field, cfg: NsConfig) -> Result<Vec<Field>> {
    NsSolver::new(cfg)?.rollout(omega0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{discretize, weighted_norm};
    use crate::pde::random_field::{sample_grf_2d, RandomFieldSpec};
    use std::f64::consts::{PI, TAU};

    fn taylor_green(n: usize) -> Field {
        discretize(
            |x| (TAU * x[0]).sin() * (TAU * x[1]).sin(),
            &Grid::uniform(&[n, n]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn taylor_green_decay() {
        let nu = 0.01;
        let cfg = NsConfig {
            viscosity: nu,
            forcing: Forcing::None,
            horizon: 2.0,
            snapshots: 5,
            ..NsConfig::default()
        };
        let w0 = taylor_green(64);
        let snaps = ns_rollout(&w0, cfg).unwrap();
        let n0 = weighted_norm(&w0);
        for (i, s) in snaps.iter().enumerate() {
            let t = 0.5 * i as f64;
            let expected = (-8.0 * PI * PI * nu * t).exp();
            let ratio = weighted_norm(s) / n0;
            assert!((ratio / expected - 1.0).abs() < 1e-6, "t={t}: {ratio} vs {expected}");
        }
    }

    fn random_initial(n: usize, seed: u64) -> Field {
        let spec = RandomFieldSpec::new(4, 1.5, 3.0, seed);
        sample_grf_2d(&spec, &Grid::uniform(&[n, n]).unwrap(), 0).unwrap()
    }

    #[test]
    fn unforced_flow_dissipates() {
        let cfg = NsConfig {
            grid_size: 32,
            viscosity: 5e-3,
            forcing: Forcing::None,
            horizon: 4.0,
            snapshots: 9,
            ..NsConfig::default()
        };
        let solver = NsSolver::new(cfg).unwrap();
        let w0 = random_initial(32, 1);
        let snaps = solver.rollout(&w0).unwrap();
        let mean0: f64 = w0.values().iter().sum::<f64>() / w0.len() as f64;
        let mut prev_e = f64::INFINITY;
        let mut prev_z = f64::INFINITY;
        for s in &snaps {
            let e = solver.kinetic_energy(s).unwrap();
            let z = enstrophy(s);
            assert!(e <= prev_e * (1.0 + 1e-12));
            assert!(z <= prev_z * (1.0 + 1e-12));
            prev_e = e;
            prev_z = z;
            let mean: f64 = s.values().iter().sum::<f64>() / s.len() as f64;
            assert!((mean - mean0).abs() < 1e-10);
        }
    }

    #[test]
    fn rollouts_are_bitwise_reproducible() {
        let cfg = NsConfig {
            grid_size: 32,
            horizon: 1.0,
            snapshots: 3,
            ..NsConfig::default()
        };
        let w0 = random_initial(32, 2);
        let a = ns_rollout(&w0, cfg.clone()).unwrap();
        let b = ns_rollout(&w0, cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a[0], w0);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = NsConfig {
            grid_size: 48,
            ..NsConfig::default()
        };
        assert!(NsSolver::new(bad).is_err());
        let solver = NsSolver::new(NsConfig {
            grid_size: 16,
            ..NsConfig::default()
        })
        .unwrap();
        assert!(solver.advance(&taylor_green(32), 0.1).is_err());
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let cfg = NsConfig {
            grid_size: 16,
            viscosity: 1e-6,
            forcing: Forcing::None,
            dt: 10.0,
            cfl: 1e6,
            horizon: 1e4,
            snapshots: 2,
            dealias: false,
        };
        let w0 = random_initial(16, 3).scaled(100.0);
        let err = ns_rollout(&w0, cfg).unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
    }
}
