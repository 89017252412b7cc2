//! Resolution-flexible surrogate operators.
//!
//! - [`spectral`]: a linear map between truncated spectral coefficients, fit
//!   by ridge regression and evaluable on any grid.
//! - [`ensemble`]: stochastic members from coefficient perturbations.
//! - [`triplet`]: lower/middle/upper quantile heads trained with the pinball
//!   loss.

pub mod ensemble;
pub mod spectral;
pub mod triplet;

pub use ensemble::{ensemble_predict, perturbed_operator};
pub use spectral::{fit_spectral_operator, fit_spectral_operator_with, mean_relative_error, Basis, SpectralOperator};
pub use triplet::{
    fit_quantile_head, fit_quantile_triplet, pinball_loss, pinball_subgradient, HeadFit, PinballObjective,
    QuantileOptions, TripletPredictor,
};
