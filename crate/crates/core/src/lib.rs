//! Robust estimation of the number of common factors in large panels.
//!
//! The covariance-based eigenvalue criteria (ER, GR, TCR) lose their footing
//! once the data are heavy-tailed. Replacing the sample covariance by the
//! sample multivariate Kendall's tau matrix, an average of unit-trace
//! spatial-sign projectors that exists for every elliptical law, gives the
//! MKER and MKTCR criteria, which stay consistent without moment
//! conditions.
//!
//! Module map:
//!
//! - [`panel`]: `T × N` panels, CSV ingestion, imputation, double demeaning
//! - [`elliptical`]: seeded Gaussian / Student-t / generic elliptical samplers
//! - [`kendall`]: the sample Kendall's tau matrix and population oracles
//! - [`spectrum`]: eigenvalues and the regularized spectrum
//! - [`estimators`]: MKER, MKTCR, ER, GR, TCR
//! - [`montecarlo`]: simulation design, replication runner, report tables
//! - [`rolling`]: rolling-window estimation over a real panel
//! - [`selfcheck`]: fast invariant suite

// `!(x > 0.0)` guards are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elliptical;
pub mod error;
pub mod estimators;
pub mod kendall;
pub mod montecarlo;
pub mod panel;
pub mod rolling;
pub mod selfcheck;
pub mod spectrum;

pub use elliptical::{EllipticalSpec, Family, RngStream, ScatterFactor};
pub use error::{Error, Result};
pub use estimators::{estimate, Demean, EstimationResult, EstimatorConfig, Method};
pub use kendall::{sample_kendall_tau, sample_kendall_tau_parallel, KendallTauMatrix};
pub use montecarlo::{build_scenario, generate_panel, run_scenario, MonteCarloReport, ScenarioSpec};
pub use panel::{double_demean, impute_column_mean, ingest_csv, DataPanel};
pub use rolling::{rolling_estimate, RollingResult};
pub use spectrum::{build_spectrum, eigenvalues_sym, EigenSpectrum};
