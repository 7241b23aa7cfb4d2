//! Two-step preliminary estimation of the clustering parameters: an
//! inhomogeneous K-function estimate with translation edge correction,
//! matched against the parametric K by quarter-power minimum contrast.

use crate::error::{Error, Result};
use crate::model::{IntensityModel, PointPattern};
use crate::optim::nelder_mead;
use crate::paircorr::{MaternNu, PairCorrelationModel};

/// Clustering family selected for the two-step estimation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PcfFamily {
    Thomas,
    Matern(MaternNu),
    Cauchy,
}

impl PcfFamily {
    fn build(&self, log_psi: &[f64]) -> PairCorrelationModel {
        match *self {
            PcfFamily::Thomas => PairCorrelationModel::Thomas {
                kappa: log_psi[0].exp(),
                omega: log_psi[1].exp(),
            },
            PcfFamily::Matern(nu) => PairCorrelationModel::Matern {
                sigma2: log_psi[0].exp(),
                alpha: log_psi[1].exp(),
                nu,
            },
            PcfFamily::Cauchy => PairCorrelationModel::Cauchy {
                sigma2: log_psi[0].exp(),
                alpha: log_psi[1].exp(),
            },
        }
    }
}

/// The default contrast grid: 100 equispaced distances up to a quarter of
/// the short window side.
pub fn default_t_grid(window: crate::model::Window) -> Vec<f64> {
    let t_max = window.min_side() / 4.0;
    (1..=100).map(|i| t_max * i as f64 / 100.0).collect()
}

/// Inhomogeneous K-function estimate with translation edge correction:
///
/// ```text
/// K(t) = (1/|W|) sum_{u != v, |u-v| <= t} 1 / [lambda(u) lambda(v) e(u, v)],
/// e(u, v) = |W intersect W_{u-v}| / |W|.
/// ```
///
/// Intensities are evaluated under `model` (typically at the preliminary
/// CL coefficients).
pub fn empirical_k_inhom(
    pattern: &PointPattern,
    model: &IntensityModel,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    let w = pattern.window();
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty K-function grid".into()));
    }
    if t_grid.windows(2).any(|p| p[1] < p[0]) || t_grid[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "K-function grid must be non-negative and non-decreasing".into(),
        ));
    }
    let t_max = *t_grid.last().unwrap();
    if t_max > w.min_side() / 4.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "maximal K distance {t_max} exceeds a quarter of the short window side {}",
            w.min_side() / 4.0
        )));
    }

    let pts = pattern.points();
    let mut inv_lambda = Vec::with_capacity(pts.len());
    for u in pts {
        let lam = model.intensity(u.x, u.y)?;
        if !(lam > 0.0) {
            return Err(Error::NonPositiveIntensity {
                x: u.x,
                y: u.y,
                predictor: lam,
            });
        }
        inv_lambda.push(1.0 / lam);
    }

    // Contributions of unordered pairs within reach, sorted by distance.
    let (a, b) = (w.width(), w.height());
    let mut contribs: Vec<(f64, f64)> = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let dx = (pts[i].x - pts[j].x).abs();
            let dy = (pts[i].y - pts[j].y).abs();
            let d = dx.hypot(dy);
            if d <= t_max {
                // |W intersect W_h| = (a - |dx|)(b - |dy|); both ordered
                // pairs contribute identically.
                let shared = (a - dx) * (b - dy);
                contribs.push((d, 2.0 * inv_lambda[i] * inv_lambda[j] / shared));
            }
        }
    }
    contribs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let mut out = Vec::with_capacity(t_grid.len());
    let mut acc = 0.0;
    let mut idx = 0;
    for &t in t_grid {
        while idx < contribs.len() && contribs[idx].0 <= t {
            acc += contribs[idx].1;
            idx += 1;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Minimum-contrast estimation of the clustering parameters given
/// preliminary intensity coefficients:
///
/// ```text
/// psi = argmin sum_t [ Khat(t)^{1/4} - K(t; psi)^{1/4} ]^2
/// ```
///
/// searched by Nelder-Mead over log-parameters. Starting points: Thomas
/// at `(N/|W|/2, t_max/20)`, Matern and Cauchy at `(1, t_max/20)` for
/// `(sigma2, alpha)`. Convergence when the log-space simplex diameter
/// falls below 1e-6.
pub fn fit_two_step_psi(
    pattern: &PointPattern,
    model_tilde: &IntensityModel,
    family: PcfFamily,
    t_grid: &[f64],
) -> Result<PairCorrelationModel> {
    if pattern.len() < 2 {
        return Err(Error::InvalidArgument(
            "minimum contrast needs at least two points".into(),
        ));
    }
    let k_hat = empirical_k_inhom(pattern, model_tilde, t_grid)?;
    fit_psi_to_k(&k_hat, t_grid, family, pattern)
}

/// Contrast fit against an already-computed empirical K.
pub fn fit_psi_to_k(
    k_hat: &[f64],
    t_grid: &[f64],
    family: PcfFamily,
    pattern: &PointPattern,
) -> Result<PairCorrelationModel> {
    if k_hat.len() != t_grid.len() {
        return Err(Error::InvalidArgument(
            "empirical K and grid lengths differ".into(),
        ));
    }
    let t_max = *t_grid.last().unwrap();
    let start = match family {
        PcfFamily::Thomas => {
            let intensity = pattern.len() as f64 / pattern.window().area();
            [(intensity / 2.0).max(1e-6).ln(), (t_max / 20.0).ln()]
        }
        PcfFamily::Matern(_) | PcfFamily::Cauchy => [0.0, (t_max / 20.0).ln()],
    };

    let quarters: Vec<f64> = k_hat.iter().map(|k| k.max(0.0).powf(0.25)).collect();
    let objective = |log_psi: &[f64]| -> f64 {
        let pcf = family.build(log_psi);
        if pcf.validate().is_err() {
            return f64::INFINITY;
        }
        match pcf.k_function_grid(t_grid) {
            Ok(ks) => ks
                .iter()
                .zip(&quarters)
                .map(|(k, q)| {
                    let d = k.powf(0.25) - q;
                    d * d
                })
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };

    let res = nelder_mead(objective, &start, &[0.5, 0.5], 1e-6, 2000)?;
    let fitted = family.build(&res.x);
    fitted.validate()?;
    Ok(fitted)
}
