//! Intensity regression for spatial point processes.
//!
//! Fits log-linear (or linear) models for the intensity function of a
//! planar point process by composite likelihood (CL), weighted composite
//! likelihood (WCL), or the optimal first-order estimating function
//! ("quasi-likelihood", QL). The QL weight solves a Fredholm integral
//! equation driven by the pair correlation function; it is discretized
//! by the Nystrom method and solved through a tapered sparse Cholesky
//! factorization, which also yields the sandwich covariance of the
//! estimates.
//!
//! The crate is organized as:
//!
//! * [`model`] — windows, point patterns, covariate rasters, intensity
//!   models, quadrature schemes;
//! * [`paircorr`] — Thomas/Matern/Cauchy pair correlation families,
//!   K-functions, taper distances;
//! * [`fredholm`] — the discretized integral equation and its solvers;
//! * [`estimate`] — the three estimators, two-step clustering fits,
//!   sandwich covariances, backward selection;
//! * [`simulate`] — Gaussian random fields, Thomas/Poisson generators,
//!   and the Monte Carlo efficiency study;
//! * [`io`] — the pattern CSV and raster file formats.
//!
//! The accompanying book (`book/` in the repository; `mdbook build book`)
//! walks through the concepts; its code blocks compile and run as
//! documentation tests of this crate.

pub mod error;
pub mod estimate;
pub mod fredholm;
pub mod io;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod paircorr;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{Estimator, FitConfig, FitResult};
pub use model::{
    CovariateField, IntensityModel, Link, Point, PointPattern, QuadratureScheme, Window,
};
pub use paircorr::{MaternNu, PairCorrelationModel};

// Run every code block in the book as a documentation test, so the book
// stays in sync with the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }
    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(GettingStarted, "../../../book/src/getting-started.md");
    chapter!(IntensityModels, "../../../book/src/intensity-models.md");
    chapter!(PairCorrelation, "../../../book/src/pair-correlation.md");
    chapter!(Fredholm, "../../../book/src/fredholm.md");
    chapter!(Estimators, "../../../book/src/estimators.md");
    chapter!(Simulation, "../../../book/src/simulation.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
