//! Nystrom discretization and solution of the Fredholm integral equation
//! of the second kind
//!
//! ```text
//! phi(u) + int_W t(u, v) phi(v) dv = lambda'(u) / lambda(u),
//! t(u, v) = lambda(v) [g(u - v) - 1],
//! ```
//!
//! whose solution is the optimal weight function of the first-order
//! estimating equation. On quadrature nodes the equation becomes the
//! `m x m` linear system `(I + T_h) phi = rhs` with
//! `(T_h)_{li} = t(u_l, u_i) w_i`.
//!
//! Two solution routes are provided. The raw dense route factors
//! `I + T_h` by LU and serves as the oracle. The primary route rescales to
//! the symmetric system `I + G`, `G_ij = sqrt(mu_i mu_j) [g(u_i - u_j) - 1]`
//! with `mu_i = lambda(u_i) w_i`, zeroes entries beyond a taper distance,
//! and factors the sparse symmetric matrix by Cholesky. A truncated
//! Neumann series is available when the operator norm is small.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{IntensityModel, Point, QuadratureScheme};
use crate::paircorr::PairCorrelationModel;

/// Hard cap for the dense symmetric eigensolve diagnostic.
const EIGEN_M_CAP: usize = 4096;

/// How the node values of `phi` were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    /// Direct factorization (dense LU or tapered sparse Cholesky).
    Direct,
    /// Truncated Neumann series.
    Neumann,
}

/// Node values of the solved weight function, one row per quadrature node.
#[derive(Clone, Debug)]
pub struct PhiSolution {
    /// `m x p`; row `l` holds `phi(u_l)`.
    pub values: DMatrix<f64>,
    /// Sup-norm residual of the discrete system that was solved.
    pub residual_norm: f64,
    pub method: SolveMethod,
}

enum ExcessEntries {
    Dense(DMatrix<f64>),
    /// Row-compressed entries of `g - 1` within the taper distance.
    Tapered {
        d_taper: f64,
        rows: Vec<Vec<(u32, f64)>>,
    },
}

/// The kernel `t(u_l, u_i) = lambda(u_i) [g(u_l - u_i) - 1]` discretized on
/// a quadrature scheme, either densely or in taper-sparse form.
pub struct DiscretizedKernel {
    quad: QuadratureScheme,
    pcf: PairCorrelationModel,
    lambda: Vec<f64>,
    entries: ExcessEntries,
}

/// Sparsity diagnostics of a kernel, serializable as a single JSON line.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SparsityStats {
    pub m: usize,
    pub stored_entries: usize,
    pub fill_ratio: f64,
    pub d_taper: Option<f64>,
}

impl DiscretizedKernel {
    /// Evaluate the kernel on the nodes of `quad`. With `taper = Some(d)`
    /// all entries at node distance beyond `d` are exactly zero and only
    /// the retained entries are stored.
    pub fn build(
        model: &IntensityModel,
        pcf: &PairCorrelationModel,
        quad: &QuadratureScheme,
        taper: Option<f64>,
    ) -> Result<Self> {
        pcf.validate()?;
        if let Some(d) = taper {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "taper distance must be positive (got {d})"
                )));
            }
        }
        let m = quad.len();
        let mut lambda = Vec::with_capacity(m);
        for u in quad.nodes() {
            let l = model.intensity(u.x, u.y)?;
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::NonPositiveIntensity {
                    x: u.x,
                    y: u.y,
                    predictor: l,
                });
            }
            lambda.push(l);
        }

        let nodes = quad.nodes();
        let entries = match taper {
            None => {
                let mut c = DMatrix::zeros(m, m);
                for l in 0..m {
                    for i in l..m {
                        let v = pcf.excess(nodes[l].dist(&nodes[i]));
                        c[(l, i)] = v;
                        c[(i, l)] = v;
                    }
                }
                ExcessEntries::Dense(c)
            }
            Some(d) => ExcessEntries::Tapered {
                d_taper: d,
                rows: tapered_rows(nodes, pcf, d),
            },
        };

        Ok(DiscretizedKernel {
            quad: quad.clone(),
            pcf: *pcf,
            lambda,
            entries,
        })
    }

    pub fn quad(&self) -> &QuadratureScheme {
        &self.quad
    }

    pub fn pcf(&self) -> &PairCorrelationModel {
        &self.pcf
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.quad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad.is_empty()
    }

    pub fn is_tapered(&self) -> bool {
        matches!(self.entries, ExcessEntries::Tapered { .. })
    }

    /// `mu_i = lambda(u_i) w_i`.
    fn mu(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .zip(self.quad.weights())
            .map(|(l, w)| l * w)
            .collect()
    }

    /// Kernel entry `t(u_l, u_i)`.
    pub fn t_entry(&self, l: usize, i: usize) -> f64 {
        match &self.entries {
            ExcessEntries::Dense(c) => self.lambda[i] * c[(l, i)],
            ExcessEntries::Tapered { rows, .. } => rows[l]
                .binary_search_by_key(&(i as u32), |&(j, _)| j)
                .map(|k| self.lambda[i] * rows[l][k].1)
                .unwrap_or(0.0),
        }
    }

    pub fn stored_entries(&self) -> usize {
        match &self.entries {
            ExcessEntries::Dense(_) => self.len() * self.len(),
            ExcessEntries::Tapered { rows, .. } => rows.iter().map(|r| r.len()).sum(),
        }
    }

    pub fn sparsity_stats(&self) -> SparsityStats {
        let m = self.len();
        let stored = self.stored_entries();
        SparsityStats {
            m,
            stored_entries: stored,
            fill_ratio: stored as f64 / (m * m) as f64,
            d_taper: match &self.entries {
                ExcessEntries::Dense(_) => None,
                ExcessEntries::Tapered { d_taper, .. } => Some(*d_taper),
            },
        }
    }

    /// One JSON line of sparsity diagnostics.
    pub fn sparsity_stats_json(&self) -> String {
        serde_json::to_string(&self.sparsity_stats()).expect("stats serialize")
    }

    /// `y = (T_h) x` column-wise for an `m x p` matrix `x`.
    pub fn apply_t(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.len();
        let p = x.ncols();
        let mu = self.mu();
        let mut y = DMatrix::zeros(m, p);
        match &self.entries {
            ExcessEntries::Dense(c) => {
                for l in 0..m {
                    for i in 0..m {
                        let t = c[(l, i)] * mu[i];
                        if t != 0.0 {
                            for j in 0..p {
                                y[(l, j)] += t * x[(i, j)];
                            }
                        }
                    }
                }
            }
            ExcessEntries::Tapered { rows, .. } => {
                for (l, row) in rows.iter().enumerate() {
                    for &(i, cv) in row {
                        let t = cv * mu[i as usize];
                        for j in 0..p {
                            y[(l, j)] += t * x[(i as usize, j)];
                        }
                    }
                }
            }
        }
        y
    }

    /// `max_l sum_i |t(u_l, u_i)| w_i`: the discrete row-sum bound on the
    /// operator norm governing Neumann convergence.
    pub fn rowsum_bound(&self) -> f64 {
        let m = self.len();
        let mu = self.mu();
        let mut worst: f64 = 0.0;
        match &self.entries {
            ExcessEntries::Dense(c) => {
                for l in 0..m {
                    let s: f64 = (0..m).map(|i| (c[(l, i)] * mu[i]).abs()).sum();
                    worst = worst.max(s);
                }
            }
            ExcessEntries::Tapered { rows, .. } => {
                for row in rows {
                    let s: f64 = row.iter().map(|&(i, cv)| (cv * mu[i as usize]).abs()).sum();
                    worst = worst.max(s);
                }
            }
        }
        worst
    }

    /// Sup-norm residual `||phi + T_h phi - rhs||_inf` of this kernel's
    /// discrete system.
    pub fn residual(&self, phi: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
        let t_phi = self.apply_t(phi);
        (phi + t_phi - rhs).amax()
    }

    /// Off-node evaluation of the solved weight function: the Nystrom
    /// interpolant `phi(u) = rhs(u) - sum_i t(u, u_i) phi(u_i) w_i`.
    pub fn interpolate_phi(
        &self,
        model: &IntensityModel,
        phi: &PhiSolution,
        u: Point,
    ) -> Result<Vec<f64>> {
        let lam = model.intensity(u.x, u.y)?;
        let grad = model.intensity_gradient(u.x, u.y)?;
        let p = grad.len();
        let mut out: Vec<f64> = grad.iter().map(|g| g / lam).collect();
        let weights = self.quad.weights();
        let nodes = self.quad.nodes();
        for i in 0..self.len() {
            let c = self.pcf.excess(u.dist(&nodes[i]));
            let t = self.lambda[i] * c;
            if t != 0.0 {
                for j in 0..p {
                    out[j] -= t * phi.values[(i, j)] * weights[i];
                }
            }
        }
        Ok(out)
    }
}

fn tapered_rows(
    nodes: &[Point],
    pcf: &PairCorrelationModel,
    d_taper: f64,
) -> Vec<Vec<(u32, f64)>> {
    // Bucket nodes on a coarse grid of cell size d_taper so neighbor
    // candidates come from a 3x3 block of buckets.
    let m = nodes.len();
    let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
    for u in nodes {
        xmin = xmin.min(u.x);
        ymin = ymin.min(u.y);
    }
    let inv = 1.0 / d_taper;
    let key = |u: &Point| -> (i64, i64) {
        (((u.x - xmin) * inv) as i64, ((u.y - ymin) * inv) as i64)
    };
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<u32>> =
        std::collections::HashMap::new();
    for (i, u) in nodes.iter().enumerate() {
        buckets.entry(key(u)).or_default().push(i as u32);
    }

    let mut rows = vec![Vec::new(); m];
    for (l, u) in nodes.iter().enumerate() {
        let (bx, by) = key(u);
        let mut row = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(cands) = buckets.get(&(bx + dx, by + dy)) {
                    for &i in cands {
                        let d = u.dist(&nodes[i as usize]);
                        if d <= d_taper {
                            row.push((i, pcf.excess(d)));
                        }
                    }
                }
            }
        }
        row.sort_unstable_by_key(|&(i, _)| i);
        rows[l] = row;
    }
    rows
}

/// Solve the discrete Nystrom system for every right-hand side column.
///
/// Dense kernels factor `I + T_h` by LU. Tapered kernels use the
/// symmetric-scaled route: factor `I + G` by sparse Cholesky and recover
/// `phi = V_mu^{-1/2} (I + G)^{-1} V_mu^{1/2} rhs`. A single diagonal
/// jitter of `1e-10 tr(I + G)/m` is attempted if the tapered factorization
/// hits a non-positive pivot; a second failure is an error.
pub fn nystrom_solve(kernel: &DiscretizedKernel, rhs: &DMatrix<f64>) -> Result<PhiSolution> {
    check_rhs(kernel, rhs)?;
    let values = match &kernel.entries {
        ExcessEntries::Dense(_) => solve_dense_lu(kernel, rhs)?,
        ExcessEntries::Tapered { .. } => {
            let factor = factor_tapered(kernel)?;
            solve_with_factor(kernel, &factor, rhs)
        }
    };
    let residual_norm = kernel.residual(&values, rhs);
    Ok(PhiSolution {
        values,
        residual_norm,
        method: SolveMethod::Direct,
    })
}

/// Solve the dense system through the symmetric scaling `I + G` with a
/// dense Cholesky factorization. Used to check route equivalence against
/// the raw LU solve.
pub fn nystrom_solve_symmetrized(
    kernel: &DiscretizedKernel,
    rhs: &DMatrix<f64>,
) -> Result<PhiSolution> {
    check_rhs(kernel, rhs)?;
    let c = match &kernel.entries {
        ExcessEntries::Dense(c) => c,
        ExcessEntries::Tapered { .. } => {
            return Err(Error::InvalidArgument(
                "symmetrized dense solve expects a dense kernel".into(),
            ))
        }
    };
    let m = kernel.len();
    let mu = kernel.mu();
    let s: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    let mut a = DMatrix::zeros(m, m);
    for l in 0..m {
        for i in 0..m {
            a[(l, i)] = s[l] * s[i] * c[(l, i)];
        }
        a[(l, l)] += 1.0;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numeric("dense Cholesky of I + G failed".into()))?;
    let mut b = rhs.clone();
    for l in 0..m {
        for j in 0..rhs.ncols() {
            b[(l, j)] *= s[l];
        }
    }
    let mut x = chol.solve(&b);
    for l in 0..m {
        for j in 0..rhs.ncols() {
            x[(l, j)] /= s[l];
        }
    }
    let residual_norm = kernel.residual(&x, rhs);
    Ok(PhiSolution {
        values: x,
        residual_norm,
        method: SolveMethod::Direct,
    })
}

fn check_rhs(kernel: &DiscretizedKernel, rhs: &DMatrix<f64>) -> Result<()> {
    if rhs.nrows() != kernel.len() || rhs.ncols() == 0 {
        return Err(Error::InvalidArgument(format!(
            "right-hand side is {} x {}, kernel has m = {}",
            rhs.nrows(),
            rhs.ncols(),
            kernel.len()
        )));
    }
    Ok(())
}

fn solve_dense_lu(kernel: &DiscretizedKernel, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = match &kernel.entries {
        ExcessEntries::Dense(c) => c,
        _ => unreachable!(),
    };
    let m = kernel.len();
    let mu = kernel.mu();
    let mut a = DMatrix::zeros(m, m);
    for l in 0..m {
        for i in 0..m {
            a[(l, i)] = c[(l, i)] * mu[i];
        }
        a[(l, l)] += 1.0;
    }
    a.lu()
        .solve(rhs)
        .ok_or_else(|| Error::Numeric("I + T_h is singular".into()))
}

/// Cached sparse Cholesky factor of the tapered `I + G`, reusable across
/// right-hand sides.
pub struct TaperedFactor {
    chol: CscCholesky<f64>,
    sqrt_mu: Vec<f64>,
}

/// Assemble and factor the tapered `I + G` once.
pub fn factor_tapered(kernel: &DiscretizedKernel) -> Result<TaperedFactor> {
    let rows = match &kernel.entries {
        ExcessEntries::Tapered { rows, .. } => rows,
        ExcessEntries::Dense(_) => {
            return Err(Error::InvalidArgument(
                "tapered factorization expects a tapered kernel".into(),
            ))
        }
    };
    let m = kernel.len();
    let mu = kernel.mu();
    let s: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();

    let build = |jitter: f64| -> CscMatrix<f64> {
        let mut coo = CooMatrix::new(m, m);
        let mut trace = 0.0;
        for (l, row) in rows.iter().enumerate() {
            for &(i, cv) in row {
                let i = i as usize;
                let mut v = s[l] * s[i] * cv;
                if i == l {
                    v += 1.0;
                    trace += v;
                }
                coo.push(l, i, v);
            }
        }
        let _ = trace;
        if jitter > 0.0 {
            for l in 0..m {
                coo.push(l, l, jitter);
            }
        }
        CscMatrix::from(&coo)
    };

    match CscCholesky::factor(&build(0.0)) {
        Ok(chol) => Ok(TaperedFactor { chol, sqrt_mu: s }),
        Err(_) => {
            // Diagonal of I + G, for the jitter scale and the diagnostics.
            let mut trace = 0.0;
            let mut min_diag = f64::INFINITY;
            for (l, row) in rows.iter().enumerate() {
                let diag = 1.0
                    + row
                        .iter()
                        .find(|&&(i, _)| i as usize == l)
                        .map(|&(_, cv)| s[l] * s[l] * cv)
                        .unwrap_or(0.0);
                trace += diag;
                min_diag = min_diag.min(diag);
            }
            let jitter = 1e-10 * trace / m as f64;
            match CscCholesky::factor(&build(jitter)) {
                Ok(chol) => Ok(TaperedFactor { chol, sqrt_mu: s }),
                Err(_) => Err(Error::Numeric(format!(
                    "tapered I + G is not positive definite even after one diagonal \
                     jitter of {jitter:.3e} (smallest diagonal entry {min_diag:.6e}); \
                     shrink the taper distance or fall back to the dense solve"
                ))),
            }
        }
    }
}

/// Solve `phi = V_mu^{-1/2} (I + G_taper)^{-1} V_mu^{1/2} rhs` with a
/// previously computed factor.
pub fn solve_with_factor(
    kernel: &DiscretizedKernel,
    factor: &TaperedFactor,
    rhs: &DMatrix<f64>,
) -> DMatrix<f64> {
    let _ = kernel;
    let m = rhs.nrows();
    let p = rhs.ncols();
    let mut b = rhs.clone();
    for l in 0..m {
        for j in 0..p {
            b[(l, j)] *= factor.sqrt_mu[l];
        }
    }
    let mut x = factor.chol.solve(&b);
    for l in 0..m {
        for j in 0..p {
            x[(l, j)] /= factor.sqrt_mu[l];
        }
    }
    x
}

impl TaperedFactor {
    /// Solve `(I + G_taper) x = b` directly in the symmetric scaling.
    pub fn solve_symmetric(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn sqrt_mu(&self) -> &[f64] {
        &self.sqrt_mu
    }
}

/// Truncated Neumann series `phi = sum_k (-T_h)^k rhs`.
///
/// Refuses to run when the discrete row-sum bound is at or above one,
/// unless `force` is set; `k_max = 0` is the deliberate one-term
/// truncation (the composite-likelihood direction) and always succeeds.
pub fn neumann_solve(
    kernel: &DiscretizedKernel,
    rhs: &DMatrix<f64>,
    k_max: usize,
    tol: f64,
    force: bool,
) -> Result<PhiSolution> {
    check_rhs(kernel, rhs)?;
    if k_max > 0 && !force {
        let bound = kernel.rowsum_bound();
        if bound >= 1.0 {
            return Err(Error::Numeric(format!(
                "Neumann series not guaranteed to converge: discrete row-sum bound {bound:.6} >= 1 \
                 (pass force to run anyway)"
            )));
        }
    }
    let mut sum = rhs.clone();
    let mut term = rhs.clone();
    let mut converged = k_max == 0;
    let mut last_inc = 0.0;
    for _ in 1..=k_max {
        term = -kernel.apply_t(&term);
        sum += &term;
        last_inc = term.amax();
        if last_inc < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Neumann series did not converge in {k_max} terms; last increment {last_inc:.3e} \
             vs tolerance {tol:.3e}"
        )));
    }
    let residual_norm = kernel.residual(&sum, rhs);
    Ok(PhiSolution {
        values: sum,
        residual_norm,
        method: SolveMethod::Neumann,
    })
}

/// Smallest eigenvalue of the symmetrized matrix `G` (optionally tapered).
///
/// For pair correlations with non-negative definite `g - 1` (all Cox
/// families here) the untapered value is non-negative up to roundoff.
/// Dense eigensolve; `m` is capped, subsample the quadrature for larger
/// diagnostics.
pub fn min_eigen_symmetrized(
    model: &IntensityModel,
    pcf: &PairCorrelationModel,
    quad: &QuadratureScheme,
    taper: Option<f64>,
) -> Result<f64> {
    let m = quad.len();
    if m > EIGEN_M_CAP {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue diagnostic capped at m = {EIGEN_M_CAP} (got {m}); subsample the grid"
        )));
    }
    let kernel = DiscretizedKernel::build(model, pcf, quad, taper)?;
    let mu = kernel.mu();
    let s: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    let mut g = DMatrix::zeros(m, m);
    match &kernel.entries {
        ExcessEntries::Dense(c) => {
            for l in 0..m {
                for i in 0..m {
                    g[(l, i)] = s[l] * s[i] * c[(l, i)];
                }
            }
        }
        ExcessEntries::Tapered { rows, .. } => {
            for (l, row) in rows.iter().enumerate() {
                for &(i, cv) in row {
                    g[(l, i as usize)] = s[l] * s[i as usize] * cv;
                }
            }
        }
    }
    let eig = SymmetricEigen::new(g);
    Ok(eig.eigenvalues.min())
}

/// Convenience: the right-hand side `lambda'(u_l)/lambda(u_l)` on the
/// quadrature nodes.
pub fn score_rhs(model: &IntensityModel, quad: &QuadratureScheme) -> Result<DMatrix<f64>> {
    let m = quad.len();
    let p = model.p();
    let mut rhs = DMatrix::zeros(m, p);
    for (l, u) in quad.nodes().iter().enumerate() {
        let lam = model.intensity(u.x, u.y)?;
        let grad = model.intensity_gradient(u.x, u.y)?;
        for j in 0..p {
            rhs[(l, j)] = grad[j] / lam;
        }
    }
    Ok(rhs)
}

/// `phi` evaluated as a dense vector stack `V^{-1} D` is recovered here for
/// comparison tests; see the estimation module for the fitting use.
pub fn dense_identity_check(m: usize) -> DVector<f64> {
    DVector::from_element(m, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CovariateField, Link, Window};
    use approx::assert_relative_eq;

    fn const_model(window: Window, lambda: f64) -> IntensityModel {
        IntensityModel::new(
            Link::Log,
            vec![lambda.ln()],
            vec![CovariateField::constant(window, 1.0)],
        )
        .unwrap()
    }

    /// Two-covariate log-linear model over a rough field, p = 2.
    fn bumpy_model(window: Window) -> IntensityModel {
        let vals: Vec<f64> = (0..100)
            .map(|i| ((i as f64) * 0.7).sin() * 0.5)
            .collect();
        IntensityModel::new(
            Link::Log,
            vec![5.5, 0.8],
            vec![
                CovariateField::constant(window, 1.0),
                CovariateField::new(10, 10, window, vals).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn poisson_kernel_is_zero_and_solve_is_identity() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 5, 5).unwrap();
        let model = const_model(w, 400.0);
        let kernel =
            DiscretizedKernel::build(&model, &PairCorrelationModel::Poisson, &quad, None).unwrap();
        for l in 0..kernel.len() {
            for i in 0..kernel.len() {
                assert_eq!(kernel.t_entry(l, i), 0.0);
            }
        }
        let rhs = score_rhs(&model, &quad).unwrap();
        let phi = nystrom_solve(&kernel, &rhs).unwrap();
        assert_eq!(phi.values, rhs);
        assert_eq!(phi.residual_norm, 0.0);
    }

    #[test]
    fn thomas_kernel_diagonal_value() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 50, 50).unwrap();
        let model = const_model(w, 400.0);
        let pcf = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        let kernel = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
        // lambda (g(0) - 1) = 400 / (4 pi 0.0004 * 100)
        let expected = 400.0 * pcf.excess_at_zero();
        assert_relative_eq!(kernel.t_entry(7, 7), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, 795.78, max_relative = 1e-5);
    }

    #[test]
    fn taper_zeroes_far_entries_and_matches_dense_nearby() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 20, 20).unwrap();
        let model = const_model(w, 400.0);
        let pcf = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        let d = pcf.taper_distance(0.01).unwrap();
        let dense = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
        let tapered = DiscretizedKernel::build(&model, &pcf, &quad, Some(d)).unwrap();

        let nodes = quad.nodes();
        let mut checked_far = false;
        let mut checked_near = false;
        for l in 0..quad.len() {
            for i in 0..quad.len() {
                let dist = nodes[l].dist(&nodes[i]);
                if dist > d {
                    assert_eq!(tapered.t_entry(l, i), 0.0);
                    checked_far = true;
                } else {
                    assert_eq!(tapered.t_entry(l, i), dense.t_entry(l, i));
                    assert_relative_eq!(
                        dense.t_entry(l, i),
                        400.0 * (pcf.eval(dist) - 1.0),
                        max_relative = 1e-12
                    );
                    checked_near = true;
                }
            }
        }
        assert!(checked_far && checked_near);
        assert!(tapered.stored_entries() < quad.len() * quad.len());

        let stats = tapered.sparsity_stats();
        assert_eq!(stats.m, 400);
        assert!(stats.fill_ratio < 1.0);
        assert!(tapered.sparsity_stats_json().contains("\"m\":400"));
    }

    #[test]
    fn nystrom_matches_dense_lu_oracle_on_toy_grid() {
        // Independent oracle: assemble I + T_h by hand and LU-solve.
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 5, 5).unwrap();
        let model = bumpy_model(w);
        let pcf = PairCorrelationModel::thomas(150.0, 0.05).unwrap();
        let kernel = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
        let rhs = score_rhs(&model, &quad).unwrap();
        let phi = nystrom_solve(&kernel, &rhs).unwrap();

        let m = quad.len();
        let mut a = DMatrix::zeros(m, m);
        for l in 0..m {
            for i in 0..m {
                a[(l, i)] = kernel.t_entry(l, i) * quad.weights()[i];
            }
            a[(l, l)] += 1.0;
        }
        let oracle = a.lu().solve(&rhs).unwrap();
        assert!((oracle - &phi.values).amax() < 1e-10);
        assert!(phi.residual_norm <= 1e-10 * rhs.amax());
    }

    #[test]
    fn symmetric_route_equals_raw_route() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 12, 12).unwrap();
        let model = bumpy_model(w);
        let pcf = PairCorrelationModel::thomas(150.0, 0.04).unwrap();
        let kernel = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
        let rhs = score_rhs(&model, &quad).unwrap();
        let raw = nystrom_solve(&kernel, &rhs).unwrap();
        let symm = nystrom_solve_symmetrized(&kernel, &rhs).unwrap();
        assert!((raw.values.clone() - symm.values).amax() < 1e-9);
    }

    #[test]
    fn tapered_sparse_solve_approaches_dense_as_taper_grows() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 20, 20).unwrap();
        let model = const_model(w, 400.0);
        let pcf = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        let rhs = score_rhs(&model, &quad).unwrap();

        let dense = nystrom_solve(
            &DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap(),
            &rhs,
        )
        .unwrap();

        let d = pcf.taper_distance(0.002).unwrap();
        let tapered = nystrom_solve(
            &DiscretizedKernel::build(&model, &pcf, &quad, Some(d)).unwrap(),
            &rhs,
        )
        .unwrap();
        let rel = (dense.values.clone() - &tapered.values).amax() / dense.values.amax();
        assert!(rel < 0.005, "taper-vs-dense sup discrepancy {rel}");

        // The tapered solve satisfies its own (tapered) system tightly.
        assert!(tapered.residual_norm <= 1e-10 * rhs.amax());
    }

    #[test]
    fn neumann_agrees_with_direct_when_contractive() {
        let w = Window::unit();
        // Grid resolving the cluster scale, so the discrete row-sum bound
        // sits near the continuum value lambda/kappa = 0.8.
        let quad = QuadratureScheme::grid(w, 20, 20).unwrap();
        let model = const_model(w, 400.0);
        let pcf = PairCorrelationModel::thomas(500.0, 0.1).unwrap();
        let kernel = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
        assert!(kernel.rowsum_bound() < 0.9);
        let rhs = score_rhs(&model, &quad).unwrap();

        let direct = nystrom_solve(&kernel, &rhs).unwrap();
        let neumann = neumann_solve(&kernel, &rhs, 500, 1e-10, false).unwrap();
        assert_eq!(neumann.method, SolveMethod::Neumann);
        assert!((direct.values.clone() - neumann.values).amax() < 1e-8);
    }

    #[test]
    fn neumann_truncation_and_refusal() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 8, 8).unwrap();
        let model = const_model(w, 400.0);

        // k_max = 0 reproduces the Poisson score direction exactly.
        let pcf = PairCorrelationModel::thomas(500.0, 0.02).unwrap();
        let kernel = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
        let rhs = score_rhs(&model, &quad).unwrap();
        let trunc = neumann_solve(&kernel, &rhs, 0, 1e-10, false).unwrap();
        assert_eq!(trunc.values, rhs);

        // Zero kernel: any k_max returns rhs.
        let zero =
            DiscretizedKernel::build(&model, &PairCorrelationModel::Poisson, &quad, None).unwrap();
        let z = neumann_solve(&zero, &rhs, 7, 1e-10, false).unwrap();
        assert_eq!(z.values, rhs);

        // kappa = 100, lambda = 400: bound approx 4, refused without force.
        let bad = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        let kernel_bad = DiscretizedKernel::build(&model, &bad, &quad, None).unwrap();
        assert!(kernel_bad.rowsum_bound() > 1.0);
        assert!(matches!(
            neumann_solve(&kernel_bad, &rhs, 50, 1e-10, false),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn min_eigen_nonnegative_for_cox_families() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 20, 20).unwrap();
        let model = const_model(w, 400.0);
        let families = [
            PairCorrelationModel::thomas(100.0, 0.02).unwrap(),
            PairCorrelationModel::matern(1.0, 0.05, crate::paircorr::MaternNu::Half).unwrap(),
            PairCorrelationModel::cauchy(1.0, 0.05).unwrap(),
        ];
        for pcf in families {
            let e = min_eigen_symmetrized(&model, &pcf, &quad, None).unwrap();
            assert!(e >= -1e-8, "family {pcf:?} min eigenvalue {e}");
        }

        assert_eq!(
            min_eigen_symmetrized(&model, &PairCorrelationModel::Poisson, &quad, None).unwrap(),
            0.0
        );
    }

    #[test]
    fn min_eigen_tapered_stays_near_psd() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 20, 20).unwrap();
        let model = const_model(w, 400.0);
        let pcf = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        let d = pcf.taper_distance(0.01).unwrap();
        let min_e = min_eigen_symmetrized(&model, &pcf, &quad, Some(d)).unwrap();

        // Largest eigenvalue for the scale reference.
        let kernel = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
        let mu = kernel.mu();
        let m = quad.len();
        let mut g = DMatrix::zeros(m, m);
        for l in 0..m {
            for i in 0..m {
                g[(l, i)] = (mu[l] * mu[i]).sqrt()
                    * pcf.excess(quad.nodes()[l].dist(&quad.nodes()[i]));
            }
        }
        let max_e = SymmetricEigen::new(g).eigenvalues.max();
        assert!(min_e >= -1e-3 * max_e, "min {min_e}, max {max_e}");
    }

    #[test]
    fn eigen_diagnostic_rejects_oversize_grids() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 65, 65).unwrap();
        let model = const_model(w, 400.0);
        let pcf = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        assert!(matches!(
            min_eigen_symmetrized(&model, &pcf, &quad, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn grid_refinement_shrinks_interpolation_gap() {
        // Nystrom convergence: the interpolated phi on successive grid
        // refinements approaches a limit, so each doubling shrinks the gap
        // at shared probe points.
        let w = Window::unit();
        let model = const_model(w, 300.0);
        let pcf = PairCorrelationModel::thomas(150.0, 0.05).unwrap();

        let probes: Vec<Point> = (0..7)
            .flat_map(|i| (0..7).map(move |j| Point::new(0.07 + 0.13 * i as f64, 0.06 + 0.13 * j as f64)))
            .collect();

        let interp = |n: usize| -> Vec<Vec<f64>> {
            let quad = QuadratureScheme::grid(w, n, n).unwrap();
            let kernel = DiscretizedKernel::build(&model, &pcf, &quad, None).unwrap();
            let rhs = score_rhs(&model, &quad).unwrap();
            let phi = nystrom_solve(&kernel, &rhs).unwrap();
            probes
                .iter()
                .map(|&u| kernel.interpolate_phi(&model, &phi, u).unwrap())
                .collect()
        };

        let g1 = interp(10);
        let g2 = interp(20);
        let g3 = interp(40);
        let sup_gap = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max)
        };
        let gap_coarse = sup_gap(&g1, &g2);
        let gap_fine = sup_gap(&g2, &g3);
        assert!(
            gap_coarse > gap_fine,
            "refinement gaps {gap_coarse} vs {gap_fine}"
        );
    }
}
