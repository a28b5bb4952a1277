//! Varying-coefficient linear discriminant analysis.
//!
//! The discriminant direction is allowed to change smoothly with an exposure
//! variable `u` in `[0, 1]`. Class means and the direction are expanded in a
//! clamped B-spline basis; the direction coefficients come from a least-squares
//! system, solved in closed form when the basis is small and with a group-lasso
//! proximal gradient method when features outnumber samples.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod classify;
pub mod cli;
pub mod dataset;
pub mod design;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod meanfit;
pub mod select;
pub mod simulate;
pub mod solver;

pub use bspline::SplineBasis;
pub use classify::{ClassifierModel, FitConfig, FitReport, Regime, StaticLda};
pub use dataset::{Dataset, Observations};
pub use design::DesignSystem;
pub use error::{Result, VcldaError};
pub use experiment::{run_benchmark, BenchmarkResults, ExperimentSpec, Method, Tuning};
pub use meanfit::{MeanModel, PriorMode};
pub use select::{cross_validate, fit_with_cv, CvPlan, CvResult};
pub use simulate::{generate, CovarianceKind, Direction, ScenarioConfig, ScenarioOracle};
pub use solver::{ista_solve, GammaCoefficients, IstaOptions, IstaReport};
