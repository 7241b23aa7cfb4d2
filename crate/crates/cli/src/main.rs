//! Command-line driver: simulate clustered point patterns, fit intensity
//! models by CL/WCL/QL, and run the Monte Carlo efficiency study.
//!
//! Exit codes: 0 success, 1 input or system error, 2 numerical
//! non-convergence (or an invalid study cell).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ppql",
    about = "Intensity regression for spatial point processes (CL, WCL, QL)",
    version
)]
struct Cli {
    /// Cap the worker thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Gaussian covariate field and an inhomogeneous Thomas
    /// pattern; writes a pattern CSV and a field raster.
    Simulate(SimulateCli),
    /// Fit an intensity model to a pattern CSV and covariate rasters.
    Fit(FitCli),
    /// Run the Monte Carlo MSE study and write the per-cell CSV table.
    Study(StudyCli),
}

#[derive(Args)]
struct SimulateCli {
    /// JSON config keys: kappa, omega (required); beta [b0,b1] or
    /// target_count (+ beta1, default 1.0); window [xmin,xmax,ymin,ymax]
    /// (required); field {scale (default 0.1), variance (default 1.0),
    /// grid (default [50,50])}; pattern_out (default pattern.csv);
    /// raster_out (default field.txt).
    #[arg(long)]
    config: PathBuf,
    /// RNG seed; identical seeds give identical files.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitCli {
    /// JSON config keys: pattern (required); rasters (default []);
    /// window [xmin,xmax,ymin,ymax] (default: from rasters); intercept
    /// (default true); link (default log); estimator (default ql);
    /// pcf {family, ...params} or pcf_family (default: poisson working
    /// model); grid (default [50,50]); taper_eps (default 0.01);
    /// max_iter (default 50); step_tol (default 1e-8); init (default:
    /// moment-matched intercept); backward_select (default false);
    /// alpha (default 0.05).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for fit.json and fit.txt.
    #[arg(long)]
    out: PathBuf,
    /// Estimating equation: cl, wcl or ql (overrides the config).
    #[arg(long)]
    estimator: Option<String>,
    /// Clustering family for the two-step fit: thomas, matern025,
    /// matern05, matern1, cauchy or poisson (overrides the config).
    #[arg(long)]
    pcf: Option<String>,
    /// Quadrature grid NXxNY, e.g. 100x50 (overrides the config).
    #[arg(long)]
    grid: Option<String>,
    /// Taper fraction in (0, 1) (overrides the config).
    #[arg(long)]
    taper_eps: Option<f64>,
}

#[derive(Args)]
struct StudyCli {
    /// JSON config keys: cells (default [[100,0.02],[200,0.04]]); beta1
    /// (default [1.0]); window (default [0,1,0,1]); target_count
    /// (default 400); n_reps (default 500); field_grid and quad_grid
    /// (default [50,50]); taper_eps (default 0.01); field_scale
    /// (default 0.1); field_variance (default 1.0); csv_out (default
    /// study.csv).
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; identical seeds give identical tables.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the CSV table.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let outcome = match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(&commands::SimulateArgs {
            config: args.config.clone(),
            out: args.out.clone(),
            seed: args.seed,
        })
        .map(|_| None),
        Command::Fit(args) => commands::cmd_fit(&commands::FitArgs {
            config: args.config.clone(),
            out: args.out.clone(),
            estimator: args.estimator.clone(),
            pcf: args.pcf.clone(),
            grid: args.grid.clone(),
            taper_eps: args.taper_eps,
        }),
        Command::Study(args) => commands::cmd_study(&commands::StudyArgs {
            config: args.config.clone(),
            out: args.out.clone(),
            seed: args.seed,
        }),
    };

    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(commands::NonConvergence)) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
