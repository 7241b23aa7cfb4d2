//! Monte Carlo comparison of the CL, WCL and QL estimators: for each
//! clustering cell, replicate patterns are simulated from an
//! inhomogeneous Thomas process over a fresh Gaussian covariate draw, all
//! three estimators are fitted through the full two-step pipeline, and
//! the per-cell efficiency of WCL/QL is reported as the percent reduction
//! in summed squared error relative to CL.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{
    default_t_grid, fit_cl, fit_ql, fit_two_step_psi, fit_wcl, Estimator, FitConfig, PcfFamily,
};
use crate::model::{CovariateField, IntensityModel, Link, PointPattern, QuadratureScheme, Window};
use crate::simulate::field::{GaussianFieldSampler, GaussianFieldSpec};
use crate::simulate::replicate_rng;
use crate::simulate::thomas::{simulate_thomas, ThomasSpec};

/// Study layout: the cross product of clustering cells and inhomogeneity
/// levels, each replicated `n_reps` times.
#[derive(Clone, Debug, Serialize)]
pub struct StudyConfig {
    /// `(kappa, omega)` clustering parameters per cell.
    pub cells: Vec<(f64, f64)>,
    /// Inhomogeneity levels `beta1`.
    pub beta1: Vec<f64>,
    pub window: Window,
    /// Expected number of points; the intercept is calibrated per
    /// covariate draw to hit it exactly.
    pub target_count: f64,
    pub n_reps: usize,
    pub field_grid: (usize, usize),
    pub quad_grid: (usize, usize),
    pub taper_eps: f64,
    pub field_scale: f64,
    pub field_variance: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            cells: vec![(100.0, 0.02), (200.0, 0.04)],
            beta1: vec![1.0],
            window: Window::unit(),
            target_count: 400.0,
            n_reps: 500,
            field_grid: (50, 50),
            quad_grid: (50, 50),
            taper_eps: 0.01,
            field_scale: 0.1,
            field_variance: 1.0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.beta1.is_empty() {
            return Err(Error::InvalidArgument(
                "study needs at least one cell and one beta1 level".into(),
            ));
        }
        if self.n_reps == 0 {
            return Err(Error::InvalidArgument("n_reps must be positive".into()));
        }
        if !(self.target_count > 0.0) {
            return Err(Error::InvalidArgument(
                "target_count must be positive".into(),
            ));
        }
        for &(k, o) in &self.cells {
            if !(k > 0.0 && o > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "invalid clustering cell ({k}, {o})"
                )));
            }
        }
        Ok(())
    }
}

/// One successful replicate.
#[derive(Clone, Debug)]
pub struct RepRecord {
    pub beta_true: [f64; 2],
    pub beta_cl: Vec<f64>,
    pub beta_wcl: Vec<f64>,
    pub beta_ql: Vec<f64>,
    /// QL standard error of `beta1` from the tapered sandwich.
    pub se_ql_beta1: f64,
    pub sq_err_cl: f64,
    pub sq_err_wcl: f64,
    pub sq_err_ql: f64,
    /// Whether the QL 95% Wald interval covered the true `beta1`.
    pub ql_covers_beta1: bool,
}

/// Aggregated result of one `(kappa, omega, beta1)` cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub kappa: f64,
    pub omega: f64,
    pub beta1: f64,
    pub n_reps: usize,
    pub n_failed: usize,
    /// Summed squared errors over successful replicates.
    pub mse_cl: f64,
    pub mse_wcl: f64,
    pub mse_ql: f64,
    pub red_wcl_pct: f64,
    pub red_ql_pct: f64,
    /// Empirical 95% Wald coverage of `beta1` under QL.
    pub ql_coverage: f64,
    /// False when more than 5% of replicates failed.
    pub valid: bool,
    pub reps: Vec<RepRecord>,
}

/// Full study output; `to_csv` emits the stable per-cell table.
#[derive(Clone, Debug)]
pub struct StudyTable {
    pub window: Window,
    pub cells: Vec<CellResult>,
}

impl StudyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kappa,omega,beta1,window,n_reps,n_failed,mse_cl,mse_wcl,mse_ql,red_wcl_pct,red_ql_pct\n",
        );
        let wname = format!("{}x{}", self.window.width(), self.window.height());
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.3},{:.3}\n",
                c.kappa,
                c.omega,
                c.beta1,
                wname,
                c.n_reps,
                c.n_failed,
                c.mse_cl,
                c.mse_wcl,
                c.mse_ql,
                c.red_wcl_pct,
                c.red_ql_pct
            ));
        }
        out
    }

    /// One human-readable line per cell.
    pub fn summary_lines(&self) -> Vec<String> {
        self.cells
            .iter()
            .map(|c| {
                format!(
                    "cell (kappa={}, omega={}, beta1={}): QL reduction {:.1}%, WCL reduction {:.1}%, \
                     QL coverage {:.1}%, {}/{} replicates ok{}",
                    c.kappa,
                    c.omega,
                    c.beta1,
                    c.red_ql_pct,
                    c.red_wcl_pct,
                    100.0 * c.ql_coverage,
                    c.n_reps - c.n_failed,
                    c.n_reps,
                    if c.valid { "" } else { " [INVALID: >5% failures]" }
                )
            })
            .collect()
    }

    pub fn any_invalid(&self) -> bool {
        self.cells.iter().any(|c| !c.valid)
    }
}

/// Shared per-study state: the field sampler (factored once), the
/// quadrature scheme and the contrast grid.
pub struct StudyContext {
    config: StudyConfig,
    sampler: GaussianFieldSampler,
    quad: QuadratureScheme,
    field_quad: QuadratureScheme,
    t_grid: Vec<f64>,
}

impl StudyContext {
    pub fn new(config: StudyConfig) -> Result<Self> {
        config.validate()?;
        let spec = GaussianFieldSpec {
            scale: config.field_scale,
            variance: config.field_variance,
            ..GaussianFieldSpec::exponential(config.window, config.field_grid.0, config.field_grid.1)
        };
        let sampler = GaussianFieldSampler::new(spec)?;
        let quad = QuadratureScheme::grid(config.window, config.quad_grid.0, config.quad_grid.1)?;
        let field_quad =
            QuadratureScheme::grid(config.window, config.field_grid.0, config.field_grid.1)?;
        let t_grid = default_t_grid(config.window);
        Ok(StudyContext {
            config,
            sampler,
            quad,
            field_quad,
            t_grid,
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn quad(&self) -> &QuadratureScheme {
        &self.quad
    }

    /// Draw the covariate, calibrate the intercept to the target count
    /// conditionally on the draw, and simulate the pattern. Returns the
    /// true model (with the calibrated `beta0`) and the pattern.
    pub fn simulate_replicate<R: rand::Rng + rand::RngExt>(
        &self,
        kappa: f64,
        omega: f64,
        beta1: f64,
        rng: &mut R,
    ) -> Result<(IntensityModel, PointPattern)> {
        let w = self.config.window;
        let z = self.sampler.sample(rng);
        let fields = vec![CovariateField::constant(w, 1.0), z];

        // beta0 = log(target) - log(int exp(beta1 Z)): exact on the field
        // grid since the covariate is piecewise constant there.
        let probe = IntensityModel::new(Link::Log, vec![0.0, beta1], fields.clone())?;
        let mass = probe.expected_count(&self.field_quad)?;
        let beta0 = (self.config.target_count / mass).ln();
        let model_true = IntensityModel::new(Link::Log, vec![beta0, beta1], fields)?;

        let achieved = model_true.expected_count(&self.field_quad)?;
        if (achieved - self.config.target_count).abs() > 1e-3 * self.config.target_count {
            return Err(Error::Numeric(format!(
                "intercept calibration missed the target count: {achieved} vs {}",
                self.config.target_count
            )));
        }

        let pattern = simulate_thomas(
            &ThomasSpec {
                kappa,
                omega,
                model: model_true.clone(),
            },
            w,
            rng,
        )?;
        Ok((model_true, pattern))
    }

    /// The full per-replicate pipeline: simulate, fit CL, fit the
    /// clustering parameters by minimum contrast, fit WCL and QL.
    pub fn run_replicate<R: rand::Rng + rand::RngExt>(
        &self,
        kappa: f64,
        omega: f64,
        beta1: f64,
        rng: &mut R,
    ) -> Result<RepRecord> {
        let (model_true, pattern) = self.simulate_replicate(kappa, omega, beta1, rng)?;
        let beta_star = [model_true.beta()[0], model_true.beta()[1]];
        let model0 = model_true.with_beta(vec![0.0, 0.0])?;

        let mut config = FitConfig {
            taper_eps: self.config.taper_eps,
            estimator: Estimator::Cl,
            ..FitConfig::default()
        };
        let cl = fit_cl(&pattern, &model0, &self.quad, &config)?;
        if !cl.converged {
            return Err(Error::Numeric("CL fit did not converge".into()));
        }

        let model_tilde = model0.with_beta(cl.beta_hat.clone())?;
        let psi = fit_two_step_psi(&pattern, &model_tilde, PcfFamily::Thomas, &self.t_grid)?;

        config.init = Some(cl.beta_hat.clone());
        config.estimator = Estimator::Wcl;
        let wcl = fit_wcl(&pattern, &model0, &psi, &self.quad, &config)?;
        if !wcl.converged {
            return Err(Error::Numeric("WCL fit did not converge".into()));
        }
        config.estimator = Estimator::Ql;
        let ql = fit_ql(&pattern, &model0, &psi, &self.quad, &config)?;
        if !ql.converged {
            return Err(Error::Numeric("QL fit did not converge".into()));
        }

        let sq = |beta: &[f64]| -> f64 {
            (beta[0] - beta_star[0]).powi(2) + (beta[1] - beta_star[1]).powi(2)
        };
        let se1 = ql.standard_errors()[1];
        Ok(RepRecord {
            beta_true: beta_star,
            sq_err_cl: sq(&cl.beta_hat),
            sq_err_wcl: sq(&wcl.beta_hat),
            sq_err_ql: sq(&ql.beta_hat),
            ql_covers_beta1: (ql.beta_hat[1] - beta_star[1]).abs() <= 1.96 * se1,
            se_ql_beta1: se1,
            beta_cl: cl.beta_hat,
            beta_wcl: wcl.beta_hat,
            beta_ql: ql.beta_hat,
        })
    }
}

/// Run the study. Replicates execute in parallel; each derives its own
/// generator from `(seed, cell index, replicate index)`, so the output is
/// deterministic for a given config and seed.
pub fn run_mse_study(config: &StudyConfig, seed: u64) -> Result<StudyTable> {
    let ctx = StudyContext::new(config.clone())?;
    let mut layout = Vec::new();
    for &(kappa, omega) in &config.cells {
        for &b1 in &config.beta1 {
            layout.push((kappa, omega, b1));
        }
    }

    let mut cells = Vec::with_capacity(layout.len());
    for (cell_idx, &(kappa, omega, b1)) in layout.iter().enumerate() {
        let outcomes: Vec<Result<RepRecord>> = (0..config.n_reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replicate_rng(seed, cell_idx as u64, rep as u64);
                ctx.run_replicate(kappa, omega, b1, &mut rng)
            })
            .collect();

        let mut reps = Vec::new();
        let mut n_failed = 0;
        for r in outcomes {
            match r {
                Ok(rec) => reps.push(rec),
                Err(_) => n_failed += 1,
            }
        }
        let mse = |f: fn(&RepRecord) -> f64| -> f64 { reps.iter().map(f).sum() };
        let mse_cl = mse(|r| r.sq_err_cl);
        let mse_wcl = mse(|r| r.sq_err_wcl);
        let mse_ql = mse(|r| r.sq_err_ql);
        let coverage = if reps.is_empty() {
            f64::NAN
        } else {
            reps.iter().filter(|r| r.ql_covers_beta1).count() as f64 / reps.len() as f64
        };
        let reduction = |m: f64| {
            if mse_cl > 0.0 {
                100.0 * (1.0 - m / mse_cl)
            } else {
                f64::NAN
            }
        };
        cells.push(CellResult {
            kappa,
            omega,
            beta1: b1,
            n_reps: config.n_reps,
            n_failed,
            mse_cl,
            mse_wcl,
            mse_ql,
            red_wcl_pct: reduction(mse_wcl),
            red_ql_pct: reduction(mse_ql),
            ql_coverage: coverage,
            valid: (n_failed as f64) <= 0.05 * config.n_reps as f64,
            reps,
        });
    }
    Ok(StudyTable {
        window: config.window,
        cells,
    })
}
