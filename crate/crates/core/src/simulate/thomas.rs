//! Inhomogeneous Thomas cluster and Poisson point process generators.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::model::{IntensityModel, Point, PointPattern, Window};

/// Target process: Thomas clustering around Poisson parents, thinned to
/// the intensity surface of `model`.
#[derive(Clone, Debug)]
pub struct ThomasSpec {
    /// Parent intensity (clusters per unit area).
    pub kappa: f64,
    /// Gaussian dispersal standard deviation per axis.
    pub omega: f64,
    /// Desired intensity function `lambda(u; beta)`.
    pub model: IntensityModel,
}

/// Supremum of the (piecewise constant) intensity over the covariate
/// grid cells. Exact when all covariates share one grid.
fn lambda_sup(model: &IntensityModel, window: Window) -> Result<f64> {
    let nx = model.covariates().iter().map(|c| c.nx()).max().unwrap_or(1);
    let ny = model.covariates().iter().map(|c| c.ny()).max().unwrap_or(1);
    let hx = window.width() / nx as f64;
    let hy = window.height() / ny as f64;
    let mut sup: f64 = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let x = window.xmin + (ix as f64 + 0.5) * hx;
            let y = window.ymin + (iy as f64 + 0.5) * hy;
            sup = sup.max(model.intensity(x, y)?);
        }
    }
    if !sup.is_finite() || sup <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "intensity supremum over the grid is {sup}"
        )));
    }
    Ok(sup)
}

/// Simulate the inhomogeneous Thomas process by thinning.
///
/// Construction: parents are homogeneous Poisson(`kappa`) on the window
/// dilated by `4 omega` per side; each parent gets a
/// Poisson(`lambda_sup / kappa`) number of offspring displaced by a
/// centered bivariate normal with per-axis standard deviation `omega`;
/// offspring inside the window are kept independently with probability
/// `lambda(u) / lambda_sup`. The result has intensity `lambda(u)` and the
/// Thomas pair correlation with parameters `(kappa, omega)`; offspring of
/// parents beyond the dilation are lost at an `exp(-8)`-scale rate.
pub fn simulate_thomas<R: Rng>(
    spec: &ThomasSpec,
    window: Window,
    rng: &mut R,
) -> Result<PointPattern> {
    if !(spec.kappa > 0.0) || !spec.kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "parent intensity must be positive (got {})",
            spec.kappa
        )));
    }
    if !(spec.omega > 0.0) || !spec.omega.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dispersal must be positive (got {})",
            spec.omega
        )));
    }
    let sup = lambda_sup(&spec.model, window)?;

    let dilated = window.dilate(4.0 * spec.omega)?;
    let n_parents = Poisson::new(spec.kappa * dilated.area())
        .map_err(|e| Error::InvalidArgument(format!("parent count: {e}")))?
        .sample(rng) as usize;
    let offspring_mean = sup / spec.kappa;
    let n_offspring = Poisson::new(offspring_mean)
        .map_err(|e| Error::InvalidArgument(format!("offspring count: {e}")))?;
    let displace = Normal::new(0.0, spec.omega).expect("positive omega");

    let mut points = Vec::new();
    for _ in 0..n_parents {
        let px = rng.random_range(dilated.xmin..dilated.xmax);
        let py = rng.random_range(dilated.ymin..dilated.ymax);
        let k = n_offspring.sample(rng) as usize;
        for _ in 0..k {
            let x = px + displace.sample(rng);
            let y = py + displace.sample(rng);
            if !window.contains(x, y) {
                continue;
            }
            let lam = spec.model.intensity(x, y)?;
            let keep: f64 = rng.random_range(0.0..1.0);
            if keep < lam / sup {
                points.push(Point::new(x, y));
            }
        }
    }
    PointPattern::new(points, window)
}

/// Simulate an inhomogeneous Poisson process with the model's intensity
/// by thinning a dominating homogeneous process.
pub fn simulate_poisson<R: Rng>(
    model: &IntensityModel,
    window: Window,
    rng: &mut R,
) -> Result<PointPattern> {
    let sup = lambda_sup(model, window)?;
    let n = Poisson::new(sup * window.area())
        .map_err(|e| Error::InvalidArgument(format!("count: {e}")))?
        .sample(rng) as usize;
    let mut points = Vec::new();
    for _ in 0..n {
        let x = rng.random_range(window.xmin..window.xmax);
        let y = rng.random_range(window.ymin..window.ymax);
        let lam = model.intensity(x, y)?;
        let keep: f64 = rng.random_range(0.0..1.0);
        if keep < lam / sup {
            points.push(Point::new(x, y));
        }
    }
    PointPattern::new(points, window)
}
