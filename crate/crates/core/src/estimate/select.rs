//! Backward model selection by Wald tests on the sandwich covariance.

use super::{fit_cl, fit_ql, fit_wcl, Estimator, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::estimate::twostep::{default_t_grid, fit_two_step_psi, PcfFamily};
use crate::model::{IntensityModel, PointPattern, QuadratureScheme};

/// One elimination round.
#[derive(Clone, Debug)]
pub struct EliminationStep {
    /// Index of the dropped covariate in the ORIGINAL model.
    pub dropped: usize,
    /// Its two-sided Wald p-value at the time of dropping.
    pub p_value: f64,
}

/// Two-sided normal p-value of `estimate / se`.
fn wald_p(estimate: f64, se: f64) -> f64 {
    if !(se > 0.0) {
        return 0.0; // infinitely precise: never dropped
    }
    puruspe::erfc((estimate / se).abs() / std::f64::consts::SQRT_2)
}

fn fit_with_two_step(
    pattern: &PointPattern,
    model: &IntensityModel,
    family: Option<PcfFamily>,
    quad: &QuadratureScheme,
    config: &FitConfig,
) -> Result<FitResult> {
    match config.estimator {
        Estimator::Cl => fit_cl(pattern, model, quad, config),
        Estimator::Wcl | Estimator::Ql => {
            let family = family.ok_or_else(|| {
                Error::InvalidArgument(
                    "wcl/ql selection needs a clustering family for the two-step fit".into(),
                )
            })?;
            let mut cl_config = config.clone();
            cl_config.estimator = Estimator::Cl;
            cl_config.init = None;
            let prelim = fit_cl(pattern, model, quad, &cl_config)?;
            let model_tilde = model.with_beta(prelim.beta_hat.clone())?;
            let t_grid = default_t_grid(pattern.window());
            let psi = fit_two_step_psi(pattern, &model_tilde, family, &t_grid)?;
            let mut est_config = config.clone();
            est_config.init = Some(prelim.beta_hat);
            match config.estimator {
                Estimator::Wcl => fit_wcl(pattern, model, &psi, quad, &est_config),
                _ => fit_ql(pattern, model, &psi, quad, &est_config),
            }
        }
    }
}

/// Repeatedly drop the least significant non-intercept covariate (largest
/// two-sided Wald p-value above `alpha`), refitting the coefficients and
/// the clustering parameters after every drop. The intercept (index 0) is
/// never dropped; ties break toward the later-indexed covariate.
///
/// Returns the final fitted model, its fit, and the elimination trace.
pub fn backward_select(
    pattern: &PointPattern,
    model_full: &IntensityModel,
    family: Option<PcfFamily>,
    quad: &QuadratureScheme,
    config: &FitConfig,
    alpha: f64,
) -> Result<(IntensityModel, FitResult, Vec<EliminationStep>)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level must lie in (0, 1) (got {alpha})"
        )));
    }

    // Original indices of the covariates still in play.
    let mut active: Vec<usize> = (0..model_full.p()).collect();
    let mut trace = Vec::new();
    let mut model = model_full.clone();

    loop {
        let fit = fit_with_two_step(pattern, &model, family, quad, config).map_err(|e| {
            Error::Numeric(format!(
                "selection fit failed with {} covariates ({} dropped so far): {e}",
                active.len(),
                trace.len()
            ))
        })?;

        if model.p() == 1 {
            return Ok((model, fit, trace));
        }

        let se = fit.standard_errors();
        // Largest p-value among non-intercept terms; ties to the later index.
        let mut worst: Option<(usize, f64)> = None;
        for j in 1..model.p() {
            let p = wald_p(fit.beta_hat[j], se[j]);
            if worst.map(|(_, wp)| p >= wp).unwrap_or(true) {
                worst = Some((j, p));
            }
        }
        let (j_drop, p_drop) = worst.expect("p >= 2 so a candidate exists");
        if p_drop <= alpha {
            return Ok((model, fit, trace));
        }

        trace.push(EliminationStep {
            dropped: active[j_drop],
            p_value: p_drop,
        });
        active.remove(j_drop);

        let fields: Vec<_> = active
            .iter()
            .map(|&orig| model_full.covariates()[orig].clone())
            .collect();
        let beta = vec![0.0; fields.len()];
        model = IntensityModel::new(model_full.link(), beta, fields)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CovariateField, Link, Point, Window};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn poisson_pattern(w: Window, lambda: f64, rng: &mut ChaCha8Rng) -> PointPattern {
        let n = rand_distr::Poisson::new(lambda * w.area())
            .unwrap()
            .sample(rng) as usize;
        let pts: Vec<Point> = (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(w.xmin..w.xmax),
                    rng.random_range(w.ymin..w.ymax),
                )
            })
            .collect();
        PointPattern::new(pts, w).unwrap()
    }

    fn noise_field(w: Window, rng: &mut ChaCha8Rng) -> CovariateField {
        let vals: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        CovariateField::new(20, 20, w, vals).unwrap()
    }

    #[test]
    fn intercept_only_model_returns_unchanged() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 15, 15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let pattern = poisson_pattern(w, 150.0, &mut rng);
        let model = IntensityModel::new(
            Link::Log,
            vec![0.0],
            vec![CovariateField::constant(w, 1.0)],
        )
        .unwrap();
        let config = FitConfig {
            estimator: Estimator::Cl,
            ..FitConfig::default()
        };
        let (final_model, _, trace) =
            backward_select(&pattern, &model, None, &quad, &config, 0.05).unwrap();
        assert_eq!(final_model.p(), 1);
        assert!(trace.is_empty());
    }

    #[test]
    fn pure_noise_covariates_are_mostly_dropped() {
        // Null-model property at a reduced replicate count: with two noise
        // covariates at the 5% level, the final model should be
        // intercept-only in roughly (1 - alpha)^2 of replicates.
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 20, 20).unwrap();
        let config = FitConfig {
            estimator: Estimator::Cl,
            ..FitConfig::default()
        };
        let reps = 100;
        let mut intercept_only = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..reps {
            let model = IntensityModel::new(
                Link::Log,
                vec![0.0; 3],
                vec![
                    CovariateField::constant(w, 1.0),
                    noise_field(w, &mut rng),
                    noise_field(w, &mut rng),
                ],
            )
            .unwrap();
            let pattern = poisson_pattern(w, 300.0, &mut rng);
            let (final_model, _, _) =
                backward_select(&pattern, &model, None, &quad, &config, 0.05).unwrap();
            if final_model.p() == 1 {
                intercept_only += 1;
            }
        }
        // (1 - 0.05)^2 = 0.9025; allow generous Monte Carlo slack
        // (3 sigma of a binomial proportion at n = 100 is about 0.09).
        let frac = intercept_only as f64 / reps as f64;
        assert!(frac > 0.81, "intercept-only fraction {frac}");
    }

    #[test]
    fn strong_covariate_is_retained() {
        let w = Window::unit();
        let quad = QuadratureScheme::grid(w, 20, 20).unwrap();
        let config = FitConfig {
            estimator: Estimator::Cl,
            ..FitConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut retained = 0;
        let reps = 20;
        for _ in 0..reps {
            let strong = noise_field(w, &mut rng);
            let noise = noise_field(w, &mut rng);
            // Inhomogeneous Poisson with log-intensity 5 + 1.0 * strong by
            // thinning from the dominating homogeneous rate.
            let model_true = IntensityModel::new(
                Link::Log,
                vec![5.0, 1.0],
                vec![CovariateField::constant(w, 1.0), strong.clone()],
            )
            .unwrap();
            let lam_max = (5.0f64 + 1.0).exp();
            let n = rand_distr::Poisson::new(lam_max).unwrap().sample(&mut rng) as usize;
            let mut pts = Vec::new();
            for _ in 0..n {
                let u = Point::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                let lam = model_true.intensity(u.x, u.y).unwrap();
                if rng.random_range(0.0..1.0) < lam / lam_max {
                    pts.push(u);
                }
            }
            let pattern = PointPattern::new(pts, w).unwrap();

            let model_fit = IntensityModel::new(
                Link::Log,
                vec![0.0; 3],
                vec![CovariateField::constant(w, 1.0), strong, noise],
            )
            .unwrap();
            let (final_model, _, trace) =
                backward_select(&pattern, &model_fit, None, &quad, &config, 0.05).unwrap();
            // The strong covariate has original index 1.
            if final_model.p() >= 2 && !trace.iter().any(|s| s.dropped == 1) {
                retained += 1;
            }
        }
        assert!(retained >= 19, "strong covariate retained {retained}/{reps}");
    }
}
