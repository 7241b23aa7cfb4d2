//! Zero-mean Gaussian random fields on grid cell centers.
//!
//! Small grids factor the covariance matrix densely; larger grids use
//! circulant embedding on the doubled torus with FFT sampling.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{CovariateField, Window};
use crate::simulate::replicate_rng;

/// Largest grid handled by the dense Cholesky route.
const DENSE_CAP: usize = 64 * 64;
/// Reject circulant embeddings with eigenvalues below this.
const EMBED_TOL: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldCovariance {
    /// `c(h) = variance * exp(-|h| / scale)`.
    Exponential,
}

#[derive(Clone, Debug)]
pub struct GaussianFieldSpec {
    pub cov: FieldCovariance,
    pub scale: f64,
    pub variance: f64,
    pub nx: usize,
    pub ny: usize,
    pub window: Window,
}

impl GaussianFieldSpec {
    /// The paper-default exponential field: scale 0.1, unit variance.
    pub fn exponential(window: Window, nx: usize, ny: usize) -> Self {
        GaussianFieldSpec {
            cov: FieldCovariance::Exponential,
            scale: 0.1,
            variance: 1.0,
            nx,
            ny,
            window,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.variance > 0.0) {
            return Err(Error::InvalidArgument(
                "field scale and variance must be positive".into(),
            ));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument(
                "field grid dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    fn cov_at(&self, dx: f64, dy: f64) -> f64 {
        match self.cov {
            FieldCovariance::Exponential => self.variance * (-dx.hypot(dy) / self.scale).exp(),
        }
    }
}

enum Method {
    /// Lower Cholesky factor of the dense grid covariance.
    Dense(DMatrix<f64>),
    /// Square roots of the torus eigenvalues, scaled for the inverse
    /// transform, on the doubled `mt x nt` torus.
    Circulant {
        mt: usize,
        nt: usize,
        sqrt_eig: Vec<f64>,
    },
}

/// A reusable sampler: the factorization is done once, each draw is a
/// matrix-vector product or an FFT.
pub struct GaussianFieldSampler {
    spec: GaussianFieldSpec,
    method: Method,
}

impl GaussianFieldSampler {
    pub fn new(spec: GaussianFieldSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.nx * spec.ny;
        let method = if m <= DENSE_CAP {
            Method::Dense(dense_factor(&spec)?)
        } else {
            circulant_factor(&spec)?
        };
        Ok(GaussianFieldSampler { spec, method })
    }

    pub fn spec(&self) -> &GaussianFieldSpec {
        &self.spec
    }

    /// One zero-mean draw at the grid cell centers.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> CovariateField {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let values = match &self.method {
            Method::Dense(l) => {
                let m = nx * ny;
                let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                // values = L z, exploiting the lower-triangular structure.
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += l[(i, j)] * z[j];
                    }
                    out[i] = acc;
                }
                out
            }
            Method::Circulant { mt, nt, sqrt_eig } => {
                let (mt, nt) = (*mt, *nt);
                let mut spectrum: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(re * s, im * s)
                    })
                    .collect();
                fft2_in_place(&mut spectrum, mt, nt, false);
                let mut out = vec![0.0; nx * ny];
                for iy in 0..ny {
                    for ix in 0..nx {
                        out[iy * nx + ix] = spectrum[iy * mt + ix].re;
                    }
                }
                out
            }
        };
        CovariateField::new(nx, ny, self.spec.window, values).expect("finite field values")
    }
}

fn dense_factor(spec: &GaussianFieldSpec) -> Result<DMatrix<f64>> {
    let (nx, ny) = (spec.nx, spec.ny);
    let m = nx * ny;
    let hx = spec.window.width() / nx as f64;
    let hy = spec.window.height() / ny as f64;
    let mut c = DMatrix::zeros(m, m);
    for a in 0..m {
        let (ax, ay) = ((a % nx) as f64, (a / nx) as f64);
        for b in a..m {
            let (bx, by) = ((b % nx) as f64, (b / nx) as f64);
            let v = spec.cov_at((ax - bx) * hx, (ay - by) * hy);
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    let chol = c.cholesky().ok_or_else(|| {
        Error::Numeric("grid covariance matrix is not positive definite".into())
    })?;
    Ok(chol.l())
}

fn circulant_factor(spec: &GaussianFieldSpec) -> Result<Method> {
    let (nx, ny) = (spec.nx, spec.ny);
    let (mt, nt) = (2 * nx, 2 * ny);
    let hx = spec.window.width() / nx as f64;
    let hy = spec.window.height() / ny as f64;

    // Base circulant block: covariance at torus wrap-around distances.
    let mut base: Vec<Complex<f64>> = Vec::with_capacity(mt * nt);
    for l in 0..nt {
        let wy = l.min(nt - l) as f64 * hy;
        for k in 0..mt {
            let wx = k.min(mt - k) as f64 * hx;
            base.push(Complex::new(spec.cov_at(wx, wy), 0.0));
        }
    }
    fft2_in_place(&mut base, mt, nt, true);

    let total = (mt * nt) as f64;
    let mut sqrt_eig = Vec::with_capacity(mt * nt);
    let mut min_eig = f64::INFINITY;
    for v in &base {
        let eig = v.re;
        min_eig = min_eig.min(eig);
        if eig < EMBED_TOL {
            return Err(Error::Numeric(format!(
                "circulant embedding is not non-negative definite (eigenvalue {eig:.3e}); \
                 the grid exceeds the dense fallback cap of {DENSE_CAP} cells"
            )));
        }
        // Variance per mode under the unnormalized inverse FFT. The real
        // part of the complex draw carries half the mode variance, which
        // the complex standard normal (variance 2) restores exactly.
        sqrt_eig.push((eig.max(0.0) / total).sqrt());
    }
    Ok(Method::Circulant { mt, nt, sqrt_eig })
}

/// Unnormalized 2-D FFT on row-major data (`rows` of length `ncol`).
fn fft2_in_place(data: &mut [Complex<f64>], ncol: usize, nrow: usize, forward: bool) {
    let mut planner = FftPlanner::new();
    let fft_row = if forward {
        planner.plan_fft_forward(ncol)
    } else {
        planner.plan_fft_inverse(ncol)
    };
    for r in 0..nrow {
        fft_row.process(&mut data[r * ncol..(r + 1) * ncol]);
    }
    let fft_col = if forward {
        planner.plan_fft_forward(nrow)
    } else {
        planner.plan_fft_inverse(nrow)
    };
    let mut col = vec![Complex::new(0.0, 0.0); nrow];
    for c in 0..ncol {
        for r in 0..nrow {
            col[r] = data[r * ncol + c];
        }
        fft_col.process(&mut col);
        for r in 0..nrow {
            data[r * ncol + c] = col[r];
        }
    }
}

/// One deterministic draw: builds a sampler and samples once. Reuse a
/// [`GaussianFieldSampler`] when many draws share a spec.
pub fn simulate_gaussian_field(spec: &GaussianFieldSpec, seed: u64) -> Result<CovariateField> {
    let sampler = GaussianFieldSampler::new(spec.clone())?;
    let mut rng = replicate_rng(seed, 0, 0);
    Ok(sampler.sample(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn same_seed_same_field() {
        let spec = GaussianFieldSpec::exponential(Window::unit(), 20, 20);
        let a = simulate_gaussian_field(&spec, 42).unwrap();
        let b = simulate_gaussian_field(&spec, 42).unwrap();
        assert_eq!(a.values(), b.values());
        let c = simulate_gaussian_field(&spec, 43).unwrap();
        assert!(a.values() != c.values());
    }

    #[test]
    fn dense_draws_match_moments() {
        let spec = GaussianFieldSpec::exponential(Window::unit(), 10, 10);
        let sampler = GaussianFieldSampler::new(spec).unwrap();
        let mut rng = replicate_rng(7, 0, 0);
        let reps = 1000;
        let m = 100;
        let mut sum = vec![0.0; m];
        let mut sumsq = vec![0.0; m];
        // Two cells at distance 0.1 (one cell apart horizontally).
        let (ia, ib) = (45, 46);
        let mut cross = 0.0;
        for _ in 0..reps {
            let f = sampler.sample(&mut rng);
            for (i, &v) in f.values().iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
            cross += f.values()[ia] * f.values()[ib];
        }
        // Per-cell variance within [0.9, 1.1] at probe cells, and the
        // across-cell average much tighter.
        let mut avg_var = 0.0;
        for i in 0..m {
            let mean = sum[i] / reps as f64;
            avg_var += (sumsq[i] / reps as f64 - mean * mean) / m as f64;
        }
        assert!((0.95..=1.05).contains(&avg_var), "average variance {avg_var}");
        for &i in &[0usize, 33, 55, 99] {
            let mean = sum[i] / reps as f64;
            let var = sumsq[i] / reps as f64 - mean * mean;
            assert!((0.9..=1.1).contains(&var), "cell {i} variance {var}");
        }
        // Correlation at distance 0.1 near exp(-1).
        let mean_a = sum[ia] / reps as f64;
        let mean_b = sum[ib] / reps as f64;
        let var_a = sumsq[ia] / reps as f64 - mean_a * mean_a;
        let var_b = sumsq[ib] / reps as f64 - mean_b * mean_b;
        let corr = (cross / reps as f64 - mean_a * mean_b) / (var_a * var_b).sqrt();
        assert!(
            (corr - (-1.0f64).exp()).abs() < 0.03,
            "correlation {corr} vs {}",
            (-1.0f64).exp()
        );
    }

    #[test]
    fn circulant_route_matches_exponential_covariance() {
        // 70 x 70 exceeds the dense cap and exercises the FFT path.
        let spec = GaussianFieldSpec::exponential(Window::unit(), 70, 70);
        let sampler = GaussianFieldSampler::new(spec).unwrap();
        assert!(matches!(sampler.method, Method::Circulant { .. }));
        let mut rng = replicate_rng(11, 0, 0);
        let reps = 600;
        // Probe variance at a few cells and correlation at one-cell lag.
        let probes = [0usize, 70 * 35 + 35, 70 * 69 + 69];
        let (ia, ib) = (70 * 35 + 30, 70 * 35 + 37); // 7 cells apart: 0.1
        let mut sum = [0.0; 3];
        let mut sumsq = [0.0; 3];
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..reps {
            let f = sampler.sample(&mut rng);
            for (k, &i) in probes.iter().enumerate() {
                sum[k] += f.values()[i];
                sumsq[k] += f.values()[i] * f.values()[i];
            }
            let (a, b) = (f.values()[ia], f.values()[ib]);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
        for k in 0..3 {
            let mean = sum[k] / reps as f64;
            let var = sumsq[k] / reps as f64 - mean * mean;
            assert!((0.85..=1.15).contains(&var), "probe {k} variance {var}");
        }
        let n = reps as f64;
        let corr = (sab / n - sa / n * sb / n)
            / ((saa / n - (sa / n).powi(2)) * (sbb / n - (sb / n).powi(2))).sqrt();
        assert_relative_eq!(corr, (-1.0f64).exp(), epsilon = 0.05);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = GaussianFieldSpec::exponential(Window::unit(), 10, 10);
        spec.scale = 0.0;
        assert!(GaussianFieldSampler::new(spec).is_err());
    }
}
