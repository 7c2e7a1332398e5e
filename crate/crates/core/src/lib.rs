//! Exact finite-sample bias corrections for regression-adjusted estimators of
//! the average treatment effect in completely randomized experiments.
//!
//! The crate covers the observed-data model ([`design`]), the difference in
//! means and the non-interacted and interacted regression estimators together
//! with unbiased estimates of their bias ([`estimators`]), robust variance and
//! intervals ([`variance`]), an exhaustive randomization engine
//! ([`randomization`]) and the simulation populations used to study them
//! ([`dgp`]).
//!
//! ```
//! use debias::design::{Covariates, ExperimentData};
//! use debias::estimators::{point_estimates, EstimatorOptions};
//!
//! let z = Covariates::from_columns(&[vec![0.3, 1.1, -0.7, 2.0, 0.0, -1.4, 0.9, 0.5]]).unwrap();
//! let y = vec![1.0, 2.5, 0.2, 3.1, 0.8, -0.4, 1.9, 1.1];
//! let t = vec![true, false, true, false, true, false, true, false];
//! let data = ExperimentData::new(y, t, &z).unwrap();
//! let est = point_estimates(&data, EstimatorOptions::default()).unwrap();
//! assert!((est.debiased_ni - (est.ols_ni - est.bias_ni.total)).abs() < 1e-15);
//! ```

pub mod design;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod randomization;
pub mod report;
pub mod special;
pub mod variance;
pub mod verify;

pub use design::{Assignment, Covariates, ExperimentData, PotentialOutcomeTable};
pub use error::{Error, Result};
pub use estimators::{BiasConstants, EstimatorOptions, PointEstimates};
pub use randomization::{AssignmentSpace, DistributionSummary, EngineConfig, EstimatorKind};
pub use report::EstimateReport;
