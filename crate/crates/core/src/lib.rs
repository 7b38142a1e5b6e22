//! Gaussian-mixture inverse perception contracts for perception-aware
//! navigation: the contract type, fitting losses and optimizer, a planar
//! simulation world, a barrier-constrained MPC planner, metrics and an
//! experiment harness.

pub mod contract;
pub mod error;
pub mod fitter;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod planner;
pub mod seeding;
pub mod selftest;
pub mod simworld;
mod timing;

pub use contract::{
    chi2_quantile_2d, contract_contains, ellipse_from_component, mahalanobis_sq, ConfidenceEllipse,
    GaussianComponent, MixtureContract, Point2, SpdMat2,
};
pub use error::{GmIpcError, Result};
