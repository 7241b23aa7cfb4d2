//! Domain types for intensity regression on planar point patterns:
//! observation windows, point patterns, gridded covariate fields,
//! intensity models and Riemann quadrature schemes.
//!
//! All types are immutable after construction and safe to share across
//! threads; the operations on them are pure functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Euclidean distance to another point.
    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// A rectangular observation window `[xmin, xmax] x [ymin, ymax]`.
///
/// Deserialized windows are not revalidated; callers parsing external
/// configs should re-check with [`Window::new`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Window {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        if ![xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "window bounds must be finite".into(),
            ));
        }
        if xmax <= xmin || ymax <= ymin {
            return Err(Error::InvalidArgument(format!(
                "degenerate window [{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )));
        }
        Ok(Window {
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    /// The unit square `[0,1]^2`.
    pub fn unit() -> Self {
        Window {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Shortest side length.
    pub fn min_side(&self) -> f64 {
        self.width().min(self.height())
    }

    /// Closed-rectangle membership test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    /// Window grown by `margin` on every side.
    pub fn dilate(&self, margin: f64) -> Result<Self> {
        Window::new(
            self.xmin - margin,
            self.xmax + margin,
            self.ymin - margin,
            self.ymax + margin,
        )
    }
}

/// A finite set of event locations observed inside a window.
///
/// Coincident points are permitted; coordinates must be finite and inside
/// the window.
#[derive(Clone, Debug)]
pub struct PointPattern {
    points: Vec<Point>,
    window: Window,
}

impl PointPattern {
    pub fn new(points: Vec<Point>, window: Window) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "point {i} has non-finite coordinates"
                )));
            }
            if !window.contains(p.x, p.y) {
                return Err(Error::InvalidArgument(format!(
                    "point {i} at ({}, {}) lies outside the window",
                    p.x, p.y
                )));
            }
        }
        Ok(PointPattern { points, window })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A covariate observed on a regular grid over a window, looked up by
/// nearest cell (piecewise constant interpolation).
///
/// Values are stored row-major: the row index runs over y from `ymin`
/// upward, the column index over x from `xmin` rightward.
#[derive(Clone, Debug)]
pub struct CovariateField {
    nx: usize,
    ny: usize,
    window: Window,
    values: Vec<f64>,
}

impl CovariateField {
    pub fn new(nx: usize, ny: usize, window: Window, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(
                "covariate grid dimensions must be positive".into(),
            ));
        }
        if values.len() != nx * ny {
            return Err(Error::InvalidArgument(format!(
                "covariate grid {nx} x {ny} needs {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "covariate value {i} is not finite"
            )));
        }
        Ok(CovariateField {
            nx,
            ny,
            window,
            values,
        })
    }

    /// A 1x1 field holding a single constant; used for intercepts.
    pub fn constant(window: Window, value: f64) -> Self {
        CovariateField {
            nx: 1,
            ny: 1,
            window,
            values: vec![value],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Center of cell `(ix, iy)`.
    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        let hx = self.window.width() / self.nx as f64;
        let hy = self.window.height() / self.ny as f64;
        Point::new(
            self.window.xmin + (ix as f64 + 0.5) * hx,
            self.window.ymin + (iy as f64 + 0.5) * hy,
        )
    }

    /// Nearest-cell lookup. Coordinates outside the window clamp to the
    /// boundary cells, so the lookup is total.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let hx = self.window.width() / self.nx as f64;
        let hy = self.window.height() / self.ny as f64;
        let ix = (((x - self.window.xmin) / hx).floor() as isize).clamp(0, self.nx as isize - 1);
        let iy = (((y - self.window.ymin) / hy).floor() as isize).clamp(0, self.ny as isize - 1);
        self.values[iy as usize * self.nx + ix as usize]
    }
}

/// Link function relating the linear predictor `z(u) . beta` to the
/// intensity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    /// `lambda = exp(z . beta)`, positive everywhere.
    Log,
    /// `lambda = z . beta`, which the caller must keep positive.
    Identity,
}

/// A parametric intensity model `lambda(u; beta)` over a stack of covariate
/// fields. The first covariate is typically the constant-1 field so that
/// `beta[0]` acts as an intercept.
#[derive(Clone, Debug)]
pub struct IntensityModel {
    link: Link,
    beta: Vec<f64>,
    covariates: Vec<CovariateField>,
}

impl IntensityModel {
    pub fn new(link: Link, beta: Vec<f64>, covariates: Vec<CovariateField>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument(
                "intensity model needs at least one coefficient".into(),
            ));
        }
        if beta.len() != covariates.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients but {} covariate fields",
                beta.len(),
                covariates.len()
            )));
        }
        let w = covariates[0].window();
        if covariates.iter().any(|c| c.window() != w) {
            return Err(Error::InvalidArgument(
                "covariate fields must share one window".into(),
            ));
        }
        Ok(IntensityModel {
            link,
            beta,
            covariates,
        })
    }

    /// Log-linear model over the given fields with all coefficients zero.
    pub fn log_linear(covariates: Vec<CovariateField>) -> Result<Self> {
        let p = covariates.len();
        IntensityModel::new(Link::Log, vec![0.0; p], covariates)
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn covariates(&self) -> &[CovariateField] {
        &self.covariates
    }

    pub fn window(&self) -> Window {
        self.covariates[0].window()
    }

    /// Same covariates and link with new coefficients.
    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self> {
        IntensityModel::new(self.link, beta, self.covariates.clone())
    }

    /// The covariate vector `z(u)`.
    pub fn covariate_row(&self, x: f64, y: f64) -> Vec<f64> {
        self.covariates.iter().map(|c| c.value_at(x, y)).collect()
    }

    pub fn linear_predictor(&self, x: f64, y: f64) -> f64 {
        self.covariates
            .iter()
            .zip(&self.beta)
            .map(|(c, b)| c.value_at(x, y) * b)
            .sum()
    }

    /// `lambda(u; beta)` per the link. For the identity link a non-positive
    /// linear predictor is a domain error carrying the location and the
    /// offending predictor value.
    pub fn intensity(&self, x: f64, y: f64) -> Result<f64> {
        let eta = self.linear_predictor(x, y);
        match self.link {
            Link::Log => Ok(eta.exp()),
            Link::Identity => {
                if eta > 0.0 {
                    Ok(eta)
                } else {
                    Err(Error::NonPositiveIntensity {
                        x,
                        y,
                        predictor: eta,
                    })
                }
            }
        }
    }

    /// Gradient of the intensity with respect to the coefficients:
    /// `lambda(u) z(u)` for the log link and `z(u)` for the identity link.
    pub fn intensity_gradient(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        let z = self.covariate_row(x, y);
        match self.link {
            Link::Log => {
                let lam = self.intensity(x, y)?;
                Ok(z.into_iter().map(|zj| lam * zj).collect())
            }
            Link::Identity => {
                // Positivity check only; the gradient itself is z(u).
                self.intensity(x, y)?;
                Ok(z)
            }
        }
    }

    /// Quadrature approximation of the expected count `int_W lambda`.
    pub fn expected_count(&self, quad: &QuadratureScheme) -> Result<f64> {
        if quad.window() != self.window() {
            return Err(Error::InvalidArgument(
                "quadrature window does not match the model window".into(),
            ));
        }
        let mut total = 0.0;
        for (u, w) in quad.nodes().iter().zip(quad.weights()) {
            total += self.intensity(u.x, u.y)? * w;
        }
        Ok(total)
    }
}

/// Quadrature nodes and weights partitioning a window. Weights are areas
/// and must sum to the window area.
#[derive(Clone, Debug)]
pub struct QuadratureScheme {
    nodes: Vec<Point>,
    weights: Vec<f64>,
    window: Window,
    grid: Option<(usize, usize)>,
}

impl QuadratureScheme {
    /// Riemann rule on an `nx x ny` grid of equal cells: nodes at cell
    /// centers, every weight equal to `|W| / (nx ny)`.
    pub fn grid(window: Window, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(
                "quadrature grid dimensions must be positive".into(),
            ));
        }
        let hx = window.width() / nx as f64;
        let hy = window.height() / ny as f64;
        let w = window.area() / (nx * ny) as f64;
        let mut nodes = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                nodes.push(Point::new(
                    window.xmin + (ix as f64 + 0.5) * hx,
                    window.ymin + (iy as f64 + 0.5) * hy,
                ));
            }
        }
        Ok(QuadratureScheme {
            weights: vec![w; nodes.len()],
            nodes,
            window,
            grid: Some((nx, ny)),
        })
    }

    /// General scheme from explicit nodes and weights.
    pub fn from_parts(nodes: Vec<Point>, weights: Vec<f64>, window: Window) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "nodes and weights must be non-empty and of equal length".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "quadrature weights must be positive and finite".into(),
            ));
        }
        if nodes.iter().any(|u| !window.contains(u.x, u.y)) {
            return Err(Error::InvalidArgument(
                "quadrature node outside the window".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - window.area()).abs() > 1e-12 * window.area() {
            return Err(Error::InvalidArgument(format!(
                "quadrature weights sum to {total}, window area is {}",
                window.area()
            )));
        }
        Ok(QuadratureScheme {
            nodes,
            weights,
            window,
            grid: None,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grid dimensions when this scheme partitions the window into equal
    /// cells; `None` for general schemes.
    pub fn grid_dims(&self) -> Option<(usize, usize)> {
        self.grid
    }

    /// Index of the grid cell containing `(x, y)`; boundary points go to
    /// the nearest cell. `None` for non-grid schemes.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        let (nx, ny) = self.grid?;
        let hx = self.window.width() / nx as f64;
        let hy = self.window.height() / ny as f64;
        let ix = (((x - self.window.xmin) / hx).floor() as isize).clamp(0, nx as isize - 1);
        let iy = (((y - self.window.ymin) / hy).floor() as isize).clamp(0, ny as isize - 1);
        Some(iy as usize * nx + ix as usize)
    }

    /// Per-cell event counts for a pattern on the same window. `None` for
    /// non-grid schemes.
    pub fn cell_counts(&self, pattern: &PointPattern) -> Option<Vec<f64>> {
        self.grid?;
        let mut counts = vec![0.0; self.len()];
        for p in pattern.points() {
            let i = self.cell_index(p.x, p.y)?;
            counts[i] += 1.0;
        }
        Some(counts)
    }
}
