//! Intensity estimators: composite likelihood (CL), weighted composite
//! likelihood (WCL) and quasi-likelihood (QL), with sandwich covariance
//! estimates and Wald-based backward model selection.
//!
//! CL solves the Poisson score
//! `sum_{u in X} lambda'/lambda (u) - int_W lambda'`. WCL downweights the
//! score by `w(u) = [1 + lambda(u) A]^{-1}` with
//! `A = K(d_taper) - pi d_taper^2`. QL solves the estimating equation
//! built from the Fredholm weight `phi`, implemented in the cell-count
//! form `sum_i phi(u_i) (Y_i - mu_i)` with working covariance
//! `V = V_mu^{1/2} (I + G) V_mu^{1/2}` whose correlation factor `G` is
//! frozen at preliminary estimates and factored once per fit.

mod select;
mod twostep;

pub use select::{backward_select, EliminationStep};
pub use twostep::{default_t_grid, empirical_k_inhom, fit_two_step_psi, PcfFamily};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fredholm::{factor_tapered, DiscretizedKernel, TaperedFactor};
use crate::model::{IntensityModel, Link, PointPattern, QuadratureScheme};
use crate::paircorr::PairCorrelationModel;

/// Which estimating equation to solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Cl,
    Wcl,
    Ql,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl" => Ok(Estimator::Cl),
            "wcl" => Ok(Estimator::Wcl),
            "ql" => Ok(Estimator::Ql),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimator `{other}` (expected cl, wcl or ql)"
            ))),
        }
    }
}

/// Fitting controls shared by all estimators.
#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Fisher scoring iteration cap.
    pub max_iter: usize,
    /// Stop when the sup-norm coefficient step falls below this.
    pub step_tol: f64,
    /// Taper fraction `eps` defining the taper distance of the working
    /// covariance (QL) and the integration range constant (WCL).
    pub taper_eps: f64,
    pub estimator: Estimator,
    /// Starting coefficients. For QL this vector, when given, is also the
    /// preliminary estimate frozen inside the correlation factor `G`; when
    /// absent a CL prefit provides it.
    pub init: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 50,
            step_tol: 1e-8,
            taper_eps: 0.01,
            estimator: Estimator::Ql,
            init: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.step_tol > 0.0) {
            return Err(Error::InvalidArgument("step_tol must be positive".into()));
        }
        if !(self.taper_eps > 0.0 && self.taper_eps < 1.0) {
            return Err(Error::InvalidArgument(
                "taper_eps must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Taper bookkeeping of a QL fit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TaperStats {
    pub d_taper: f64,
    /// Stored fraction of the m x m working correlation entries.
    pub retained_fraction: f64,
}

/// A completed fit.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    /// Sandwich covariance of `beta_hat`.
    pub cov_hat: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm of the estimating function at the returned coefficients.
    pub score_norm: f64,
    pub estimator: Estimator,
    /// Clustering model used by WCL/QL (`None` for CL).
    pub psi_used: Option<PairCorrelationModel>,
    pub taper_stats: Option<TaperStats>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta_hat.len())
            .map(|j| self.cov_hat[(j, j)].max(0.0).sqrt())
            .collect()
    }

    /// JSON with the stable field set:
    /// `beta_hat, se, cov, iterations, converged, estimator, psi, d_taper,
    /// warnings`.
    pub fn to_json(&self) -> serde_json::Value {
        let p = self.beta_hat.len();
        let cov: Vec<Vec<f64>> = (0..p)
            .map(|i| (0..p).map(|j| self.cov_hat[(i, j)]).collect())
            .collect();
        json!({
            "beta_hat": self.beta_hat,
            "se": self.standard_errors(),
            "cov": cov,
            "iterations": self.iterations,
            "converged": self.converged,
            "estimator": self.estimator,
            "psi": self.psi_used,
            "d_taper": self.taper_stats.map(|t| t.d_taper),
            "warnings": self.warnings,
        })
    }
}

/// Covariates, intensities and gradients evaluated on the quadrature
/// nodes for the current coefficients.
struct NodeState {
    /// m x p covariate rows.
    z: DMatrix<f64>,
    lambda: Vec<f64>,
}

fn node_covariates(model: &IntensityModel, quad: &QuadratureScheme) -> DMatrix<f64> {
    let m = quad.len();
    let p = model.p();
    let mut z = DMatrix::zeros(m, p);
    for (i, u) in quad.nodes().iter().enumerate() {
        for (j, c) in model.covariates().iter().enumerate() {
            z[(i, j)] = c.value_at(u.x, u.y);
        }
    }
    z
}

fn event_covariates(model: &IntensityModel, pattern: &PointPattern) -> DMatrix<f64> {
    let n = pattern.len();
    let p = model.p();
    let mut z = DMatrix::zeros(n, p);
    for (i, u) in pattern.points().iter().enumerate() {
        for (j, c) in model.covariates().iter().enumerate() {
            z[(i, j)] = c.value_at(u.x, u.y);
        }
    }
    z
}

/// Intensity at precomputed covariate rows; identity-link positivity is a
/// domain error carrying the node location.
fn lambda_at_rows(
    z: &DMatrix<f64>,
    beta: &[f64],
    link: Link,
    locations: &[crate::model::Point],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(z.nrows());
    for i in 0..z.nrows() {
        let eta: f64 = (0..beta.len()).map(|j| z[(i, j)] * beta[j]).sum();
        let lam = match link {
            Link::Log => eta.exp(),
            Link::Identity => {
                if !(eta > 0.0) {
                    return Err(Error::NonPositiveIntensity {
                        x: locations[i].x,
                        y: locations[i].y,
                        predictor: eta,
                    });
                }
                eta
            }
        };
        out.push(lam);
    }
    Ok(out)
}

/// Default start: intercept matched to the mean count, slopes zero.
fn default_init(pattern: &PointPattern, model: &IntensityModel) -> Vec<f64> {
    let mut beta = vec![0.0; model.p()];
    let mean = pattern.len() as f64 / pattern.window().area();
    beta[0] = match model.link() {
        Link::Log => mean.max(f64::MIN_POSITIVE).ln(),
        Link::Identity => mean.max(f64::MIN_POSITIVE),
    };
    beta
}

fn check_enough_points(pattern: &PointPattern, model: &IntensityModel) -> Result<()> {
    if pattern.len() < model.p() {
        return Err(Error::InvalidArgument(format!(
            "{} observed points cannot identify {} coefficients",
            pattern.len(),
            model.p()
        )));
    }
    Ok(())
}

fn check_windows(
    pattern: &PointPattern,
    model: &IntensityModel,
    quad: &QuadratureScheme,
) -> Result<()> {
    if pattern.window() != quad.window() || model.window() != quad.window() {
        return Err(Error::InvalidArgument(
            "pattern, model and quadrature must share one window".into(),
        ));
    }
    Ok(())
}

/// Composite likelihood: Fisher scoring on the Poisson score. The data
/// term uses exact event locations; the integral term uses the quadrature
/// scheme.
pub fn fit_cl(
    pattern: &PointPattern,
    model: &IntensityModel,
    quad: &QuadratureScheme,
    config: &FitConfig,
) -> Result<FitResult> {
    fit_weighted_score(pattern, model, quad, config, None, Estimator::Cl)
}

/// Weighted composite likelihood with the constant window-averaged
/// neighbourhood term `A = K(d_taper; psi) - pi d_taper^2`.
pub fn fit_wcl(
    pattern: &PointPattern,
    model: &IntensityModel,
    pcf: &PairCorrelationModel,
    quad: &QuadratureScheme,
    config: &FitConfig,
) -> Result<FitResult> {
    fit_weighted_score(pattern, model, quad, config, Some(*pcf), Estimator::Wcl)
}

/// The neighbourhood constant `A` entering the WCL weight.
fn wcl_neighbourhood_constant(pcf: &PairCorrelationModel, taper_eps: f64) -> Result<f64> {
    if pcf.is_poisson() {
        return Ok(0.0);
    }
    let d = pcf.taper_distance(taper_eps)?;
    Ok(pcf.k_function(d)? - std::f64::consts::PI * d * d)
}

fn fit_weighted_score(
    pattern: &PointPattern,
    model: &IntensityModel,
    quad: &QuadratureScheme,
    config: &FitConfig,
    pcf: Option<PairCorrelationModel>,
    estimator: Estimator,
) -> Result<FitResult> {
    config.validate()?;
    check_windows(pattern, model, quad)?;
    check_enough_points(pattern, model)?;
    let p = model.p();
    let link = model.link();

    let a_const = match (&pcf, estimator) {
        (Some(g), Estimator::Wcl) => wcl_neighbourhood_constant(g, config.taper_eps)?,
        _ => 0.0,
    };

    let z_nodes = node_covariates(model, quad);
    let z_events = event_covariates(model, pattern);
    let weights = quad.weights();

    let mut beta = config
        .init
        .clone()
        .unwrap_or_else(|| default_init(pattern, model));
    if beta.len() != p {
        return Err(Error::InvalidArgument(format!(
            "init has {} coefficients, model has {p}",
            beta.len()
        )));
    }

    let score_and_sensitivity = |beta: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let lam_nodes = lambda_at_rows(&z_nodes, beta, link, quad.nodes())?;
        let lam_events = lambda_at_rows(&z_events, beta, link, pattern.points())?;
        let mut score = DVector::zeros(p);
        let mut sens = DMatrix::zeros(p, p);
        // Data term: sum over events of w(u) lambda'(u)/lambda(u).
        for e in 0..pattern.len() {
            let w = 1.0 / (1.0 + lam_events[e] * a_const);
            // lambda'/lambda = z for log link, z/lambda for identity.
            let scale = match link {
                Link::Log => w,
                Link::Identity => w / lam_events[e],
            };
            for j in 0..p {
                score[j] += scale * z_events[(e, j)];
            }
        }
        // Integral term and sensitivity on the quadrature nodes.
        for i in 0..quad.len() {
            let w = 1.0 / (1.0 + lam_nodes[i] * a_const);
            let (grad_scale, info_scale) = match link {
                // lambda' = lambda z; lambda' lambda'^T / lambda = lambda z z^T.
                Link::Log => (w * lam_nodes[i], w * lam_nodes[i]),
                // lambda' = z; lambda' lambda'^T / lambda = z z^T / lambda.
                Link::Identity => (w, w / lam_nodes[i]),
            };
            let wi = weights[i];
            for j in 0..p {
                score[j] -= grad_scale * z_nodes[(i, j)] * wi;
                for k in j..p {
                    let v = info_scale * z_nodes[(i, j)] * z_nodes[(i, k)] * wi;
                    sens[(j, k)] += v;
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                sens[(j, k)] = sens[(k, j)];
            }
        }
        Ok((score, sens))
    };

    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..config.max_iter {
        let (score, sens) = score_and_sensitivity(&beta)?;
        let delta = sens.clone().cholesky().map(|c| c.solve(&score)).ok_or_else(|| {
            Error::Numeric(format!(
                "singular sensitivity matrix at iteration {}",
                iter + 1
            ))
        })?;
        for j in 0..p {
            beta[j] += delta[j];
        }
        iterations = iter + 1;
        if delta.amax() <= config.step_tol {
            converged = true;
            break;
        }
    }

    let (final_score, _) = score_and_sensitivity(&beta)?;
    let fitted = model.with_beta(beta.clone())?;
    let f_nodes = weight_rows(&fitted, quad, a_const)?;
    let cov_hat = sandwich_covariance(&fitted, pcf.as_ref(), quad, &f_nodes)?;

    Ok(FitResult {
        beta_hat: beta,
        cov_hat,
        iterations,
        converged,
        score_norm: final_score.amax(),
        estimator,
        psi_used: pcf,
        taper_stats: None,
        warnings: Vec::new(),
    })
}

/// Rows `f(u_i) = w(u_i) lambda'(u_i)/lambda(u_i)` of the (weighted)
/// Poisson score on the nodes.
fn weight_rows(
    model: &IntensityModel,
    quad: &QuadratureScheme,
    a_const: f64,
) -> Result<DMatrix<f64>> {
    let m = quad.len();
    let p = model.p();
    let mut f = DMatrix::zeros(m, p);
    for (i, u) in quad.nodes().iter().enumerate() {
        let lam = model.intensity(u.x, u.y)?;
        let grad = model.intensity_gradient(u.x, u.y)?;
        let w = 1.0 / (1.0 + lam * a_const);
        for j in 0..p {
            f[(i, j)] = w * grad[j] / lam;
        }
    }
    Ok(f)
}

/// Quasi-likelihood fit.
///
/// The correlation factor `G` is assembled once from the preliminary
/// coefficients (from `config.init`, else an internal CL prefit) and the
/// given clustering model, tapered at `taper_distance(pcf, taper_eps)`,
/// and Cholesky-factored once. Iterations then update only the diagonal
/// scaling `V_mu^{1/2}` and the cell-count quasi-score.
pub fn fit_ql(
    pattern: &PointPattern,
    model: &IntensityModel,
    pcf: &PairCorrelationModel,
    quad: &QuadratureScheme,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    check_windows(pattern, model, quad)?;
    check_enough_points(pattern, model)?;
    let counts = quad.cell_counts(pattern).ok_or_else(|| {
        Error::InvalidArgument(
            "quasi-likelihood needs a grid quadrature scheme (cell partition)".into(),
        )
    })?;
    pcf.validate()?;
    let p = model.p();
    let m = quad.len();
    let link = model.link();

    let mut warnings = Vec::new();
    let multi = counts.iter().filter(|&&y| y >= 2.0).count();
    if multi > 0 {
        warnings.push(format!(
            "{} of {} cells hold two or more points ({:.2}%); counts are used as-is",
            multi,
            m,
            100.0 * multi as f64 / m as f64
        ));
    }

    // Preliminary coefficients for the frozen G.
    let beta_tilde = match &config.init {
        Some(b) => {
            if b.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "init has {} coefficients, model has {p}",
                    b.len()
                )));
            }
            b.clone()
        }
        None => {
            let mut cl_config = config.clone();
            cl_config.estimator = Estimator::Cl;
            cl_config.init = None;
            fit_cl(pattern, model, quad, &cl_config)?.beta_hat
        }
    };

    // Frozen, tapered, factored once.
    let taper = if pcf.is_poisson() {
        None
    } else {
        let d = pcf.taper_distance(config.taper_eps)?;
        let model_tilde = model.with_beta(beta_tilde.clone())?;
        let kernel = DiscretizedKernel::build(&model_tilde, pcf, quad, Some(d))?;
        let stats = kernel.sparsity_stats();
        let factor = factor_tapered(&kernel)?;
        Some((
            factor,
            TaperStats {
                d_taper: d,
                retained_fraction: stats.fill_ratio,
            },
        ))
    };

    let z_nodes = node_covariates(model, quad);
    let weights = quad.weights();
    let y = DVector::from_vec(counts);

    let mut beta = config
        .init
        .clone()
        .unwrap_or_else(|| default_init(pattern, model));

    // One iteration of the generalized least squares update; returns the
    // score as well so the final score norm comes for free.
    let iterate = |beta: &[f64]| -> Result<(DVector<f64>, DVector<f64>)> {
        let lam = lambda_at_rows(&z_nodes, beta, link, quad.nodes())?;
        let mut sqrt_mu = Vec::with_capacity(m);
        let mut w_scaled = DMatrix::zeros(m, p); // V_mu^{-1/2} D
        let mut r_scaled = DVector::zeros(m); // V_mu^{-1/2} (Y - mu)
        for i in 0..m {
            let mu_i = lam[i] * weights[i];
            let s = mu_i.sqrt();
            sqrt_mu.push(s);
            let grad_scale = match link {
                Link::Log => lam[i],
                Link::Identity => 1.0,
            };
            for j in 0..p {
                // D_ij = lambda'_j(u_i) w_i.
                w_scaled[(i, j)] = grad_scale * z_nodes[(i, j)] * weights[i] / s;
            }
            r_scaled[i] = (y[i] - mu_i) / s;
        }

        // X = (I + G)^{-1} [W | r] in the symmetric scaling.
        let mut stacked = DMatrix::zeros(m, p + 1);
        stacked.view_mut((0, 0), (m, p)).copy_from(&w_scaled);
        stacked.view_mut((0, p), (m, 1)).copy_from(&r_scaled);
        let solved = match &taper {
            Some((factor, _)) => factor.solve_symmetric(&stacked),
            None => stacked,
        };
        let xw = solved.view((0, 0), (m, p));
        let xr = solved.view((0, p), (m, 1));

        let sens = w_scaled.transpose() * xw; // D^T V^{-1} D
        let score = (w_scaled.transpose() * xr).column(0).into_owned();
        let delta = sens
            .clone()
            .cholesky()
            .map(|c| c.solve(&score))
            .ok_or_else(|| Error::Numeric("singular quasi-likelihood sensitivity".into()))?;
        Ok((delta, score))
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm = f64::NAN;
    for _ in 0..config.max_iter {
        let (delta, score) = iterate(&beta)?;
        for j in 0..p {
            beta[j] += delta[j];
        }
        iterations += 1;
        score_norm = score.amax();
        if delta.amax() <= config.step_tol {
            converged = true;
            break;
        }
    }

    let fitted = model.with_beta(beta.clone())?;
    let internals = FitInternals {
        model: &fitted,
        pcf: Some(pcf),
        quad,
        estimator: Estimator::Ql,
        taper_eps: config.taper_eps,
    };
    let cov_hat = godambe_covariance(&internals)?;

    Ok(FitResult {
        beta_hat: beta,
        cov_hat,
        iterations,
        converged,
        score_norm,
        estimator: Estimator::Ql,
        psi_used: Some(*pcf),
        taper_stats: taper.map(|(_, s)| s),
        warnings,
    })
}

/// Dispatch on `config.estimator`. WCL and QL require a clustering model;
/// CL ignores it.
pub fn fit(
    pattern: &PointPattern,
    model: &IntensityModel,
    pcf: Option<&PairCorrelationModel>,
    quad: &QuadratureScheme,
    config: &FitConfig,
) -> Result<FitResult> {
    match config.estimator {
        Estimator::Cl => fit_cl(pattern, model, quad, config),
        Estimator::Wcl | Estimator::Ql => {
            let pcf = pcf.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "estimator {:?} needs a pair correlation model",
                    config.estimator
                ))
            })?;
            if config.estimator == Estimator::Wcl {
                fit_wcl(pattern, model, pcf, quad, config)
            } else {
                fit_ql(pattern, model, pcf, quad, config)
            }
        }
    }
}

/// Everything the sandwich covariance needs to know about a fit:
/// the fitted model, the clustering model (if any), the quadrature, the
/// estimator whose weight function defines the estimating equation, and
/// the taper fraction.
pub struct FitInternals<'a> {
    pub model: &'a IntensityModel,
    pub pcf: Option<&'a PairCorrelationModel>,
    pub quad: &'a QuadratureScheme,
    pub estimator: Estimator,
    pub taper_eps: f64,
}

/// Sandwich (Godambe) covariance of the estimator.
///
/// For CL/WCL this is `S_f^{-1} Var(e_f) S_f^{-1}` with the weight rows
/// `f` of the estimator and the variance evaluated under the fitted
/// clustering model. For QL it is the tapered form
/// `S_t^{-1} D^T V_t^{-1} V V_t^{-1} D S_t^{-1}` with
/// `S_t = D^T V_t^{-1} D`; the dense `V` enters only through
/// matrix-vector products and is never inverted.
pub fn godambe_covariance(fi: &FitInternals<'_>) -> Result<DMatrix<f64>> {
    match fi.estimator {
        Estimator::Cl | Estimator::Wcl => {
            let a_const = match (fi.estimator, fi.pcf) {
                (Estimator::Wcl, Some(pcf)) => wcl_neighbourhood_constant(pcf, fi.taper_eps)?,
                _ => 0.0,
            };
            let f = weight_rows(fi.model, fi.quad, a_const)?;
            sandwich_covariance(fi.model, fi.pcf, fi.quad, &f)
        }
        Estimator::Ql => ql_taper_covariance(fi),
    }
}

/// `S_f^{-1} Sigma_f S_f^{-1}` for a first-order estimating function with
/// node weight rows `f`.
fn sandwich_covariance(
    model: &IntensityModel,
    pcf: Option<&PairCorrelationModel>,
    quad: &QuadratureScheme,
    f_nodes: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = quad.len();
    let p = model.p();
    let weights = quad.weights();

    // Sensitivity S = sum_i f_i^T lambda'(u_i) w_i and the scaled rows
    // T = V_mu^{1/2} f for the variance.
    let mut sens = DMatrix::<f64>::zeros(p, p);
    let mut t = DMatrix::<f64>::zeros(m, p);
    let mut sqrt_mu = Vec::with_capacity(m);
    for (i, u) in quad.nodes().iter().enumerate() {
        let lam = model.intensity(u.x, u.y)?;
        let grad = model.intensity_gradient(u.x, u.y)?;
        let mu = lam * weights[i];
        let s = mu.sqrt();
        sqrt_mu.push(s);
        for j in 0..p {
            for k in 0..p {
                sens[(j, k)] += f_nodes[(i, j)] * grad[k] * weights[i];
            }
            t[(i, j)] = s * f_nodes[(i, j)];
        }
    }

    // Sigma = T^T (I + G) T with G_ij = sqrt(mu_i mu_j) c(|u_i - u_j|).
    let sigma = quadform_identity_plus_g(&t, &sqrt_mu, pcf, quad);

    let lu = sens.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular sensitivity matrix in covariance".into()))?;
    let cov = &inv * sigma * inv.transpose();
    Ok(symmetrize(cov))
}

/// Tapered QL covariance, Eq.-of-sandwich form with the working taper.
fn ql_taper_covariance(fi: &FitInternals<'_>) -> Result<DMatrix<f64>> {
    let pcf = fi.pcf.ok_or_else(|| {
        Error::InvalidArgument("quasi-likelihood covariance needs a clustering model".into())
    })?;
    let quad = fi.quad;
    let model = fi.model;
    let m = quad.len();
    let p = model.p();
    let weights = quad.weights();

    // W = V_mu^{-1/2} D and the scaling at the fitted coefficients.
    let mut w_scaled = DMatrix::zeros(m, p);
    let mut sqrt_mu = Vec::with_capacity(m);
    for (i, u) in quad.nodes().iter().enumerate() {
        let lam = model.intensity(u.x, u.y)?;
        let grad = model.intensity_gradient(u.x, u.y)?;
        let mu = lam * weights[i];
        let s = mu.sqrt();
        sqrt_mu.push(s);
        for j in 0..p {
            w_scaled[(i, j)] = grad[j] * weights[i] / s;
        }
    }

    let x = if pcf.is_poisson() {
        w_scaled.clone()
    } else {
        let d = pcf.taper_distance(fi.taper_eps)?;
        let kernel = DiscretizedKernel::build(model, pcf, quad, Some(d))?;
        let factor: TaperedFactor = factor_tapered(&kernel)?;
        factor.solve_symmetric(&w_scaled)
    };

    // S_taper = W^T X; middle = X^T (I + G_dense) X.
    let s_taper = w_scaled.transpose() * &x;
    let middle = quadform_identity_plus_g(&x, &sqrt_mu, Some(pcf), quad);

    let inv = s_taper
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numeric("singular tapered sensitivity matrix".into()))?;
    let cov = &inv * middle * &inv;
    Ok(symmetrize(cov))
}

/// `X^T (I + G) X` with the dense `G_ij = sqrt(mu_i mu_j) c(|u_i - u_j|)`
/// applied through on-the-fly matrix-vector products.
fn quadform_identity_plus_g(
    x: &DMatrix<f64>,
    sqrt_mu: &[f64],
    pcf: Option<&PairCorrelationModel>,
    quad: &QuadratureScheme,
) -> DMatrix<f64> {
    let m = x.nrows();
    let p = x.ncols();
    let mut out = x.transpose() * x;
    if let Some(pcf) = pcf {
        if !pcf.is_poisson() {
            let nodes = quad.nodes();
            let mut gx = DMatrix::zeros(m, p);
            for i in 0..m {
                let ui = nodes[i];
                // Symmetric pair loop: accumulate both (i, j) and (j, i).
                for j in (i + 1)..m {
                    let c = pcf.excess(ui.dist(&nodes[j]));
                    if c == 0.0 {
                        continue;
                    }
                    let gij = sqrt_mu[i] * sqrt_mu[j] * c;
                    for k in 0..p {
                        gx[(i, k)] += gij * x[(j, k)];
                        gx[(j, k)] += gij * x[(i, k)];
                    }
                }
                let gii = sqrt_mu[i] * sqrt_mu[i] * pcf.excess(0.0);
                for k in 0..p {
                    gx[(i, k)] += gii * x[(i, k)];
                }
            }
            out += x.transpose() * gx;
        }
    }
    symmetrize(out)
}

fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}
