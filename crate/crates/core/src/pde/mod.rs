//! Reference PDE solvers and random input generators.
//!
//! - [`darcy`]: 1D steady Darcy flow `−(k u′)′ = 0`, `u(0)=0`, `u(1)=1`.
//! - [`poisson`]: 2D Poisson `Δu = f` with homogeneous Dirichlet data on any
//!   tensor-product grid.
//! - [`navier_stokes`]: 2D periodic vorticity equation, pseudo-spectral.
//! - [`random_field`]: seeded random Fourier series used as inputs.

pub mod darcy;
mod fft;
pub mod navier_stokes;
pub mod poisson;
pub mod random_field;

pub use darcy::{darcy_face_potentials, solve_darcy_1d};
pub use navier_stokes::{enstrophy, ns_rollout, Forcing, NsConfig, NsSolver};
pub use poisson::{solve_poisson_2d, PoissonMethod, PoissonSolver};
pub use random_field::{sample_forcing_2d, sample_grf_2d, sample_permeability_1d, FourierSeries, RandomFieldSpec};
