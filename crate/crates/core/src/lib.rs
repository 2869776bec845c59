//! Multivariate stochastic dominance testing with entropic center-outward quantiles.
//!
//! The crate is organised bottom-up:
//!
//! - [`ballgrid`]: the deterministic grid on the unit ball that discretizes the spherical
//!   uniform law.
//! - [`transport`]: exact and entropic discrete optimal transport (Hungarian / LP oracle,
//!   log-stabilized Sinkhorn) and the barycentric map.
//! - [`quantile`]: the empirical entropic center-outward quantile map of a sample.
//! - [`contribution`]: first-order (contour averaged) and second-order (region integrated)
//!   contribution curves, plus analytic oracles for isotropic normals.
//! - [`sdtest`]: the two-sample dominance tests with multinomial bootstrap, contact-set
//!   estimation and critical values, and a grid-CDF baseline test.
//! - [`transforms`]: monotone componentwise maps, symmetrization and background mixing.
//! - [`simulate`]: samplers and Monte Carlo experiment drivers.
//! - [`timeseries`]: VAR(p) least squares, AIC order selection and residual splitting.
//! - [`io`]: CSV reading and writing of samples, curves and maps.
//!
//! A minimal end-to-end run:
//!
//! ```
//! use msd::sdtest::{run_test, TestConfig};
//! use msd::simulate::{sample, DistributionSpec};
//!
//! let x = sample(&DistributionSpec::standard_normal(2), 150, 1).unwrap();
//! let y = sample(&DistributionSpec::standard_normal(2), 150, 2).unwrap();
//! let config = TestConfig { bootstrap: 20, ..TestConfig::default() };
//! let result = run_test(&x, &y, &config).unwrap();
//! assert!((0.0..=1.0).contains(&result.p_value));
//! ```

pub mod ballgrid;
pub mod contribution;
pub mod io;
pub mod quantile;
pub mod rng;
pub mod sdtest;
pub mod simulate;
pub mod timeseries;
pub mod transforms;
pub mod transport;

pub mod parallel;

mod linalg;

#[cfg(doctest)]
mod book;

pub use ballgrid::BallGrid;
pub use contribution::{ContributionCurve, CurveKind, RhoFn};
pub use quantile::{QuantileMap, Sample};
pub use sdtest::{TestConfig, TestResult};
pub use transport::{DiscreteMeasure, DualPotentials, SinkhornReport, TransportPlan};

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("infeasible transport problem: {0}")]
    Infeasible(String),

    #[error("problem size {size} exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("sinkhorn did not converge: {iterations} iterations, marginal error {error:e}")]
    NotConverged { iterations: usize, error: f64 },

    #[error("every evaluation level has an empty band")]
    EmptyCurve,

    #[error("curves are not comparable: {0}")]
    IncompatibleCurves(String),

    #[error("empty contact set: the test is infeasible")]
    EmptyContactSet,

    #[error("only {survived} of {requested} bootstrap replications converged")]
    BootstrapFailures { survived: usize, requested: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
