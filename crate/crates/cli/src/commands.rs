//! Subcommand implementations. Outputs are written to a temporary file in
//! the destination directory and renamed into place, so failures never
//! leave partial files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use ppql::estimate::{
    backward_select, fit, godambe_covariance, FitConfig, FitInternals, FitResult,
};
use ppql::estimate::{default_t_grid, fit_cl, fit_two_step_psi, Estimator, PcfFamily};
use ppql::io::{read_pattern_csv, read_raster, write_pattern_csv, write_raster};
use ppql::model::{CovariateField, IntensityModel, Link, QuadratureScheme, Window};
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{
    run_mse_study, simulate_thomas, GaussianFieldSampler, GaussianFieldSpec, StudyConfig,
    ThomasSpec,
};

use crate::config::{
    self, parse_family, window_from_bounds, FitFileConfig, SimulateFileConfig, StudyFileConfig,
};

/// Exit with this to signal numerical non-convergence (code 2).
pub struct NonConvergence;

fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub struct FitArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub estimator: Option<String>,
    pub pcf: Option<String>,
    pub grid: Option<String>,
    pub taper_eps: Option<f64>,
}

pub fn cmd_fit(args: &FitArgs) -> Result<Option<NonConvergence>> {
    let cfg: FitFileConfig = config::load(&args.config)?;

    // Flag overrides win over file values.
    let estimator: Estimator = args
        .estimator
        .as_deref()
        .unwrap_or(&cfg.estimator)
        .parse()?;
    let grid = match &args.grid {
        Some(g) => config::parse_grid(g)?,
        None => cfg.grid,
    };
    let taper_eps = args.taper_eps.unwrap_or(cfg.taper_eps);

    // Resolve and read every input before any compute starts.
    let pattern_path = config::resolve(&args.config, &cfg.pattern);
    let raster_paths: Vec<PathBuf> = cfg
        .rasters
        .iter()
        .map(|r| config::resolve(&args.config, r))
        .collect();
    for p in std::iter::once(&pattern_path).chain(raster_paths.iter()) {
        if !p.exists() {
            bail!("input file {} does not exist", p.display());
        }
    }
    let rasters: Vec<CovariateField> = raster_paths
        .iter()
        .map(|p| Ok(read_raster(p)?))
        .collect::<Result<_>>()?;

    // The window comes from the rasters and must be consistent; an
    // explicit config window must match and covers the raster-free case.
    let mut window: Option<Window> = match cfg.window {
        Some(b) => Some(window_from_bounds(b)?),
        None => None,
    };
    for (p, r) in raster_paths.iter().zip(&rasters) {
        match window {
            None => window = Some(r.window()),
            Some(w) if w == r.window() => {}
            Some(w) => bail!(
                "raster {} window {:?} does not match {:?}",
                p.display(),
                r.window(),
                w
            ),
        }
    }
    let window = window.ok_or_else(|| anyhow!("no window: give `window` or at least one raster"))?;

    let link = match cfg.link.as_str() {
        "log" => Link::Log,
        "identity" => Link::Identity,
        other => bail!("unknown link `{other}`"),
    };

    let mut fields = Vec::new();
    if cfg.intercept {
        fields.push(CovariateField::constant(window, 1.0));
    }
    fields.extend(rasters);
    if fields.is_empty() {
        bail!("model has no covariates: enable the intercept or give rasters");
    }

    let pattern = read_pattern_csv(&pattern_path, window)?;
    let p = fields.len();
    let model = IntensityModel::new(link, vec![0.0; p], fields)?;
    let quad = QuadratureScheme::grid(window, grid[0], grid[1])?;

    let fit_config = FitConfig {
        max_iter: cfg.max_iter,
        step_tol: cfg.step_tol,
        taper_eps,
        estimator,
        init: cfg.init.clone(),
    };

    // Clustering model: explicit psi from the config, or a two-step fit
    // for the named family; the --pcf flag picks the two-step family.
    let family: Option<PcfFamily> = match (&args.pcf, &cfg.pcf, &cfg.pcf_family) {
        (Some(name), _, _) => parse_family(name)?,
        (None, Some(_), _) => None,
        (None, None, Some(name)) => parse_family(name)?,
        (None, None, None) => None,
    };
    let explicit_pcf: Option<PairCorrelationModel> = if args.pcf.is_some() {
        None // flag requests a two-step (or poisson) fit
    } else {
        cfg.pcf
    };
    if let Some(pcf) = &explicit_pcf {
        pcf.validate()?;
    }

    ensure_out_dir(&args.out)?;

    let t_fit = Instant::now();
    let (final_model, result, trace) = if cfg.backward_select {
        let (m, r, t) = backward_select(&pattern, &model, family, &quad, &fit_config, cfg.alpha)?;
        (m, r, t)
    } else {
        let pcf: Option<PairCorrelationModel> = match (explicit_pcf, family, estimator) {
            (_, _, Estimator::Cl) => None,
            (Some(g), _, _) => Some(g),
            (None, Some(fam), _) => {
                let mut cl_cfg = fit_config.clone();
                cl_cfg.estimator = Estimator::Cl;
                cl_cfg.init = None;
                let prelim = fit_cl(&pattern, &model, &quad, &cl_cfg)?;
                let model_tilde = model.with_beta(prelim.beta_hat)?;
                Some(fit_two_step_psi(
                    &pattern,
                    &model_tilde,
                    fam,
                    &default_t_grid(window),
                )?)
            }
            (None, None, _) => Some(PairCorrelationModel::Poisson),
        };
        let r = fit(&pattern, &model, pcf.as_ref(), &quad, &fit_config)?;
        let m = model.with_beta(r.beta_hat.clone())?;
        (m, r, Vec::new())
    };
    let fit_with_se_seconds = t_fit.elapsed().as_secs_f64();

    // The sandwich covariance is recomputed standalone to split the
    // timing into fit-only and covariance parts.
    let t_cov = Instant::now();
    let _ = godambe_covariance(&FitInternals {
        model: &final_model,
        pcf: result.psi_used.as_ref(),
        quad: &quad,
        estimator: result.estimator,
        taper_eps,
    })?;
    let cov_seconds = t_cov.elapsed().as_secs_f64();
    let fit_seconds = (fit_with_se_seconds - cov_seconds).max(0.0);

    let mut json = result.to_json();
    json["timing"] = serde_json::json!({
        "fit_seconds": fit_seconds,
        "covariance_seconds": cov_seconds,
        "total_seconds": fit_with_se_seconds,
    });
    if !trace.is_empty() {
        json["eliminated"] = serde_json::json!(trace
            .iter()
            .map(|s| serde_json::json!({"covariate": s.dropped, "p_value": s.p_value}))
            .collect::<Vec<_>>());
    }
    atomic_write(
        &args.out.join("fit.json"),
        &serde_json::to_string_pretty(&json)?,
    )?;
    atomic_write(&args.out.join("fit.txt"), &human_table(&result, &trace))?;
    println!("{}", human_table(&result, &trace));

    Ok(if result.converged {
        None
    } else {
        Some(NonConvergence)
    })
}

fn human_table(result: &FitResult, trace: &[ppql::estimate::EliminationStep]) -> String {
    let se = result.standard_errors();
    let mut out = format!(
        "estimator: {:?}   converged: {} ({} iterations)\n",
        result.estimator, result.converged, result.iterations
    );
    out.push_str("coef        estimate          se\n");
    for (j, (b, s)) in result.beta_hat.iter().zip(&se).enumerate() {
        out.push_str(&format!("beta{j:<6} {b:>12.6} {s:>12.6}\n"));
    }
    if let Some(psi) = &result.psi_used {
        out.push_str(&format!("pcf: {psi:?}\n"));
    }
    if let Some(t) = &result.taper_stats {
        out.push_str(&format!(
            "taper distance: {:.6} (retained fraction {:.4})\n",
            t.d_taper, t.retained_fraction
        ));
    }
    for s in trace {
        out.push_str(&format!(
            "dropped covariate {} (p = {:.4})\n",
            s.dropped, s.p_value
        ));
    }
    for w in &result.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg: SimulateFileConfig = config::load(&args.config)?;
    let window = window_from_bounds(cfg.window)?;
    if !(cfg.kappa > 0.0 && cfg.omega > 0.0) {
        bail!(
            "kappa and omega must be positive (got {} and {})",
            cfg.kappa,
            cfg.omega
        );
    }

    let spec = GaussianFieldSpec {
        scale: cfg.field.scale,
        variance: cfg.field.variance,
        ..GaussianFieldSpec::exponential(window, cfg.field.grid[0], cfg.field.grid[1])
    };
    let sampler = GaussianFieldSampler::new(spec)?;
    let mut rng = ppql::simulate::replicate_rng_pub(args.seed, 0, 0);
    let field = sampler.sample(&mut rng);

    // Coefficients: explicit, or intercept calibrated to the target count
    // given the drawn field.
    let beta = match (&cfg.beta, cfg.target_count) {
        (Some(b), None) => {
            if b.len() != 2 {
                bail!("beta must have two entries [beta0, beta1]");
            }
            b.clone()
        }
        (None, Some(target)) => {
            if !(target > 0.0) {
                bail!("target_count must be positive");
            }
            let probe = IntensityModel::new(
                Link::Log,
                vec![0.0, cfg.beta1],
                vec![CovariateField::constant(window, 1.0), field.clone()],
            )?;
            let quad = QuadratureScheme::grid(window, cfg.field.grid[0], cfg.field.grid[1])?;
            let mass = probe.expected_count(&quad)?;
            vec![(target / mass).ln(), cfg.beta1]
        }
        (Some(_), Some(_)) => bail!("give either beta or target_count, not both"),
        (None, None) => bail!("give beta or target_count"),
    };

    let model = IntensityModel::new(
        Link::Log,
        beta,
        vec![CovariateField::constant(window, 1.0), field.clone()],
    )?;
    let pattern = simulate_thomas(
        &ThomasSpec {
            kappa: cfg.kappa,
            omega: cfg.omega,
            model,
        },
        window,
        &mut rng,
    )?;

    ensure_out_dir(&args.out)?;
    let pattern_path = args.out.join(&cfg.pattern_out);
    let raster_path = args.out.join(&cfg.raster_out);
    // Same atomic discipline as the text outputs.
    let tmp = pattern_path.with_extension("tmp");
    write_pattern_csv(&pattern, &tmp)?;
    fs::rename(&tmp, &pattern_path)?;
    let tmp = raster_path.with_extension("tmp");
    write_raster(&field, &tmp)?;
    fs::rename(&tmp, &raster_path)?;

    println!(
        "simulated {} points into {} (field raster {})",
        pattern.len(),
        pattern_path.display(),
        raster_path.display()
    );
    Ok(())
}

pub struct StudyArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
}

pub fn cmd_study(args: &StudyArgs) -> Result<Option<NonConvergence>> {
    let cfg: StudyFileConfig = match &args.config {
        Some(p) => config::load(p)?,
        None => serde_json::from_str("{}").expect("defaults"),
    };
    let study = StudyConfig {
        cells: cfg.cells,
        beta1: cfg.beta1,
        window: window_from_bounds(cfg.window)?,
        target_count: cfg.target_count,
        n_reps: cfg.n_reps,
        field_grid: (cfg.field_grid[0], cfg.field_grid[1]),
        quad_grid: (cfg.quad_grid[0], cfg.quad_grid[1]),
        taper_eps: cfg.taper_eps,
        field_scale: cfg.field_scale,
        field_variance: cfg.field_variance,
    };

    ensure_out_dir(&args.out)?;
    let table = run_mse_study(&study, args.seed)?;
    atomic_write(&args.out.join(&cfg.csv_out), &table.to_csv())?;
    for line in table.summary_lines() {
        println!("{line}");
    }
    Ok(if table.any_invalid() {
        Some(NonConvergence)
    } else {
        None
    })
}
