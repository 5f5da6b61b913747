//! Stratified Cox relational event models with and without Gaussian
//! sender/receiver frailties.

pub mod data;
pub mod fit;
pub mod laplace;
pub mod likelihood;
pub mod nelder_mead;
pub mod newton;

pub use data::{build_model_data, DyadCovariates, EventRecord, ModelData, RiskPolicy};
pub use fit::{fit_fixed, fit_frailty, FitResult, FixedOptions, FrailtyOptions};
pub use laplace::{laplace_at, laplace_marginal, LaplaceEval};
pub use likelihood::{
    lpl, lppl, lppl_value, penalty, Derivatives, Parameters, PartialLikelihood, VarianceSpec,
};
pub use newton::{inner_newton, maximize, NewtonOptions, NewtonOutcome, Objective};
