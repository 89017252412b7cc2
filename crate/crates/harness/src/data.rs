//! Dataset generation for the three reference problems.
//!
//! Sample `i` of every split draws its random input from PRNG stream `i`, with
//! train, calibration and test occupying consecutive index ranges. Inputs are
//! continuous Fourier series, so the same sample can be rendered on any grid.

use std::ops::Range;

use fcp_core::pde::random_field::grf_series;
use fcp_core::pde::{
    sample_permeability_1d, solve_darcy_1d, Forcing, NsConfig, NsSolver, PoissonSolver, RandomFieldSpec,
};
use fcp_core::rng::derive_seed;
use fcp_core::{Field, Grid, GridKind};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Problem};
use crate::error::{Result, StageExt};

/// Seed tags for independent random purposes.
pub mod tags {
    pub const INPUT: u64 = 1;
    pub const ENSEMBLE: u64 = 2;
    pub const RESAMPLE: u64 = 3;
}

pub type Pairs = Vec<(Field, Field)>;

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Pairs,
    pub cal: Pairs,
    pub test: Pairs,
}

/// Index ranges of the train, calibration and test splits.
pub fn split_ranges(cfg: &ExperimentConfig) -> [Range<u64>; 3] {
    let a = cfg.data.n_train as u64;
    let b = a + cfg.data.n_cal as u64;
    let c = b + cfg.data.n_test as u64;
    [0..a, a..b, b..c]
}

/// Random input specification for `cfg` under `seed`.
pub fn input_spec(cfg: &ExperimentConfig, seed: u64) -> RandomFieldSpec {
    RandomFieldSpec::new(
        cfg.data.n_modes,
        cfg.data.decay,
        cfg.data.amplitude,
        derive_seed(seed, tags::INPUT),
    )
}

/// Grid of the given geometry with `resolution` cells per axis.
pub fn problem_grid(problem: Problem, kind: GridKind, resolution: usize) -> Result<Grid> {
    let dim = if problem == Problem::Darcy { 1 } else { 2 };
    Grid::new(kind, &vec![resolution; dim]).stage("build grid")
}

/// `(permeability, pressure)` pairs.
pub fn darcy_pairs(spec: &RandomFieldSpec, grid: &Grid, indices: Range<u64>) -> Result<Pairs> {
    indices
        .into_par_iter()
        .map(|i| {
            let k = sample_permeability_1d(spec, grid, i)?;
            let u = solve_darcy_1d(&k)?;
            Ok((k, u))
        })
        .collect::<fcp_core::Result<_>>()
        .stage("generate darcy data")
}

/// `(forcing, solution)` pairs for `Δu = f`, `u = 0` on the boundary.
pub fn poisson_pairs(
    cfg: &ExperimentConfig,
    spec: &RandomFieldSpec,
    grid: &Grid,
    indices: Range<u64>,
) -> Result<Pairs> {
    let solver = PoissonSolver::new(grid).stage("poisson setup")?;
    let jacobi = cfg.solver.poisson_method == "jacobi";
    let tol = cfg.solver.jacobi_tol;
    indices
        .into_par_iter()
        .map(|i| {
            let f = grf_series(spec, 2, i)?.discretize(grid)?;
            let u = if jacobi {
                solver.solve_jacobi(&f, tol, 1_000_000)?.0
            } else {
                solver.solve(&f)?
            };
            Ok((f, u))
        })
        .collect::<fcp_core::Result<_>>()
        .stage("generate poisson data")
}

/// Navier–Stokes solver settings for the forecast experiment.
pub fn ns_config(cfg: &ExperimentConfig) -> NsConfig {
    NsConfig {
        grid_size: cfg.data.resolution,
        viscosity: cfg.solver.viscosity,
        forcing: Forcing::Sinusoid {
            amplitude: cfg.solver.forcing_amplitude,
            wavevector: [1, 1],
        },
        dt: cfg.solver.dt,
        cfl: cfg.solver.cfl,
        horizon: cfg.solver.steps as f64 * cfg.solver.step_interval,
        snapshots: cfg.solver.steps + 1,
        dealias: true,
    }
}

/// Vorticity trajectories (`steps + 1` states each) from random initial fields.
pub fn ns_trajectories(cfg: &ExperimentConfig, spec: &RandomFieldSpec, indices: Range<u64>) -> Result<Vec<Vec<Field>>> {
    let solver = NsSolver::new(ns_config(cfg)).stage("navier-stokes setup")?;
    let grid = solver.grid().clone();
    indices
        .into_par_iter()
        .map(|i| {
            let w0 = grf_series(spec, 2, i)?.discretize(&grid)?;
            solver.rollout(&w0)
        })
        .collect::<fcp_core::Result<_>>()
        .stage("generate navier-stokes data")
}

/// Consecutive-state pairs `(ω_t, ω_{t+1})` of every trajectory.
pub fn transitions(trajectories: &[Vec<Field>]) -> Pairs {
    trajectories
        .iter()
        .flat_map(|t| t.windows(2).map(|w| (w[0].clone(), w[1].clone())))
        .collect()
}

/// Train/calibration/test pairs for a static problem (Darcy or Poisson) on `grid`.
pub fn static_splits(cfg: &ExperimentConfig, seed: u64, grid: &Grid) -> Result<Splits> {
    let spec = input_spec(cfg, seed);
    let [a, b, c] = split_ranges(cfg);
    let gen = |r: Range<u64>| match cfg.experiment.problem() {
        Problem::Darcy => darcy_pairs(&spec, grid, r),
        _ => poisson_pairs(cfg, &spec, grid, r),
    };
    Ok(Splits {
        train: gen(a)?,
        cal: gen(b)?,
        test: gen(c)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn splits_are_disjoint_and_reproducible() {
        let mut cfg = ExperimentConfig::defaults(Experiment::PoissonQuantile);
        cfg.data.n_train = 3;
        cfg.data.n_cal = 2;
        cfg.data.n_test = 2;
        cfg.data.resolution = 8;
        let g = problem_grid(Problem::Poisson, GridKind::Uniform, 8).unwrap();
        let a = static_splits(&cfg, 1, &g).unwrap();
        let b = static_splits(&cfg, 1, &g).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_ne!(a.train[0].0, a.cal[0].0);
        assert_eq!((a.train.len(), a.cal.len(), a.test.len()), (3, 2, 2));
    }

    #[test]
    fn transitions_pair_neighbors() {
        let g = Grid::uniform(&[2]).unwrap();
        let t: Vec<Field> = (0..4).map(|i| Field::constant(&g, i as f64)).collect();
        let p = transitions(&[t.clone(), t]);
        assert_eq!(p.len(), 6);
        assert_eq!(p[2].0.values()[0], 2.0);
        assert_eq!(p[2].1.values()[0], 3.0);
    }
}
