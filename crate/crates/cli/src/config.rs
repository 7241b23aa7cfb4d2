//! JSON run configurations. Unknown keys are hard errors; command-line
//! flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ppql::estimate::PcfFamily;
use ppql::paircorr::{MaternNu, PairCorrelationModel};
use ppql::Window;

pub fn window_from_bounds(b: [f64; 4]) -> Result<Window> {
    Ok(Window::new(b[0], b[1], b[2], b[3])?)
}

/// Named clustering family as accepted by `--pcf`.
pub fn parse_family(name: &str) -> Result<Option<PcfFamily>> {
    Ok(match name {
        "thomas" => Some(PcfFamily::Thomas),
        "matern025" => Some(PcfFamily::Matern(MaternNu::Quarter)),
        "matern05" => Some(PcfFamily::Matern(MaternNu::Half)),
        "matern1" => Some(PcfFamily::Matern(MaternNu::One)),
        "cauchy" => Some(PcfFamily::Cauchy),
        "poisson" => None,
        other => bail!("unknown pcf family `{other}` (expected thomas, matern025, matern05, matern1, cauchy or poisson)"),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFileConfig {
    /// Point pattern CSV path, relative to the config file.
    pub pattern: PathBuf,
    /// Covariate raster paths, in model order (the intercept is prepended
    /// unless disabled).
    #[serde(default)]
    pub rasters: Vec<PathBuf>,
    /// `[xmin, xmax, ymin, ymax]`; required when no rasters carry one.
    pub window: Option<[f64; 4]>,
    /// Prepend a constant-1 intercept field (default true).
    #[serde(default = "default_true")]
    pub intercept: bool,
    /// `log` (default) or `identity`.
    #[serde(default = "default_link")]
    pub link: String,
    #[serde(default = "default_estimator")]
    pub estimator: String,
    /// Explicit clustering model, e.g.
    /// `{"family": "thomas", "kappa": 100.0, "omega": 0.02}`.
    pub pcf: Option<PairCorrelationModel>,
    /// Family fitted by the two-step route when `pcf` is absent.
    pub pcf_family: Option<String>,
    /// Quadrature grid `[nx, ny]`.
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    #[serde(default = "default_taper_eps")]
    pub taper_eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    pub init: Option<Vec<f64>>,
    /// Run backward selection at `alpha` before reporting.
    #[serde(default)]
    pub backward_select: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFileConfig {
    pub kappa: f64,
    pub omega: f64,
    /// Explicit coefficients `[beta0, beta1]`, or use `target_count`.
    pub beta: Option<Vec<f64>>,
    /// Calibrate the intercept so the expected count hits this target.
    pub target_count: Option<f64>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    pub window: [f64; 4],
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default = "default_pattern_name")]
    pub pattern_out: String,
    #[serde(default = "default_raster_name")]
    pub raster_out: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_variance")]
    pub variance: f64,
    #[serde(default = "default_field_grid")]
    pub grid: [usize; 2],
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            scale: 0.1,
            variance: 1.0,
            grid: [50, 50],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFileConfig {
    #[serde(default = "default_cells")]
    pub cells: Vec<(f64, f64)>,
    #[serde(default = "default_beta1s")]
    pub beta1: Vec<f64>,
    #[serde(default = "default_unit_window")]
    pub window: [f64; 4],
    #[serde(default = "default_target")]
    pub target_count: f64,
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    #[serde(default = "default_field_grid")]
    pub field_grid: [usize; 2],
    #[serde(default = "default_field_grid")]
    pub quad_grid: [usize; 2],
    #[serde(default = "default_taper_eps")]
    pub taper_eps: f64,
    #[serde(default = "default_scale")]
    pub field_scale: f64,
    #[serde(default = "default_variance")]
    pub field_variance: f64,
    #[serde(default = "default_csv_name")]
    pub csv_out: String,
}

fn default_true() -> bool {
    true
}
fn default_link() -> String {
    "log".into()
}
fn default_estimator() -> String {
    "ql".into()
}
fn default_grid() -> [usize; 2] {
    [50, 50]
}
fn default_taper_eps() -> f64 {
    0.01
}
fn default_max_iter() -> usize {
    50
}
fn default_step_tol() -> f64 {
    1e-8
}
fn default_alpha() -> f64 {
    0.05
}
fn default_beta1() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    0.1
}
fn default_variance() -> f64 {
    1.0
}
fn default_field_grid() -> [usize; 2] {
    [50, 50]
}
fn default_pattern_name() -> String {
    "pattern.csv".into()
}
fn default_raster_name() -> String {
    "field.txt".into()
}
fn default_csv_name() -> String {
    "study.csv".into()
}
fn default_cells() -> Vec<(f64, f64)> {
    vec![(100.0, 0.02), (200.0, 0.04)]
}
fn default_beta1s() -> Vec<f64> {
    vec![1.0]
}
fn default_unit_window() -> [f64; 4] {
    [0.0, 1.0, 0.0, 1.0]
}
fn default_target() -> f64 {
    400.0
}
fn default_n_reps() -> usize {
    500
}

/// Parse a JSON config file with unknown-key rejection.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let value: T = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    Ok(value)
}

/// Resolve a path relative to the config file's directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Parse `NXxNY`.
pub fn parse_grid(s: &str) -> Result<[usize; 2]> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 2 {
        bail!("grid must look like 100x50 (got `{s}`)");
    }
    let nx = parts[0].parse().context("grid nx")?;
    let ny = parts[1].parse().context("grid ny")?;
    Ok([nx, ny])
}
