//! Parametric pair correlation function families of normal variance
//! mixture type, their K-functions, tail-based taper distances, and the
//! excess integral used by the Neumann-series condition.
//!
//! Every family here satisfies `g(r) >= 1` with `g(r) -> 1` as `r -> inf`,
//! and depends on the pair separation only through its length. A
//! distinguished `Poisson` pseudo-family (`g == 1`) lets estimators
//! degrade exactly to the uncorrelated case.

use std::f64::consts::PI;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, bisect};

/// Radial integrals run out to the radius where the excess has decayed to
/// this fraction of its value at zero.
const RADIAL_CUTOFF_RATIO: f64 = 1e-12;
/// Relative tolerance for the adaptive radial quadrature.
const RADIAL_REL_TOL: f64 = 1e-8;

/// Matern shape parameter, restricted to the three values the families
/// here are used with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaternNu {
    Quarter,
    Half,
    One,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Quarter => 0.25,
            MaternNu::Half => 0.5,
            MaternNu::One => 1.0,
        }
    }

    pub fn from_value(nu: f64) -> Result<Self> {
        if nu == 0.25 {
            Ok(MaternNu::Quarter)
        } else if nu == 0.5 {
            Ok(MaternNu::Half)
        } else if nu == 1.0 {
            Ok(MaternNu::One)
        } else {
            Err(Error::InvalidArgument(format!(
                "matern shape must be one of 0.25, 0.5, 1.0 (got {nu})"
            )))
        }
    }
}

impl Serialize for MaternNu {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for MaternNu {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        MaternNu::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// A translation-invariant pair correlation function `g(r) = 1 + c(r)`.
///
/// The excess `c` is, per family,
///
/// * Thomas: `exp(-r^2 / (4 omega^2)) / (4 pi omega^2 kappa)`,
/// * Matern: `sigma2 (r/alpha)^nu K_nu(r/alpha) / (2^(nu-1) Gamma(nu))`,
/// * Cauchy: `sigma2 [1 + (r/alpha)^2]^(-3/2)`,
/// * Poisson: identically zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum PairCorrelationModel {
    Poisson,
    Thomas { kappa: f64, omega: f64 },
    Matern { sigma2: f64, alpha: f64, nu: MaternNu },
    Cauchy { sigma2: f64, alpha: f64 },
}

impl PairCorrelationModel {
    pub fn thomas(kappa: f64, omega: f64) -> Result<Self> {
        let m = PairCorrelationModel::Thomas { kappa, omega };
        m.validate()?;
        Ok(m)
    }

    pub fn matern(sigma2: f64, alpha: f64, nu: MaternNu) -> Result<Self> {
        let m = PairCorrelationModel::Matern { sigma2, alpha, nu };
        m.validate()?;
        Ok(m)
    }

    pub fn cauchy(sigma2: f64, alpha: f64) -> Result<Self> {
        let m = PairCorrelationModel::Cauchy { sigma2, alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PairCorrelationModel::Poisson => true,
            PairCorrelationModel::Thomas { kappa, omega } => {
                kappa > 0.0 && omega > 0.0 && kappa.is_finite() && omega.is_finite()
            }
            PairCorrelationModel::Matern { sigma2, alpha, .. }
            | PairCorrelationModel::Cauchy { sigma2, alpha } => {
                sigma2 > 0.0 && alpha > 0.0 && sigma2.is_finite() && alpha.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "pair correlation parameters must be positive: {self:?}"
            )))
        }
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self, PairCorrelationModel::Poisson)
    }

    /// The excess `c(r) = g(r) - 1` at separation `r >= 0`.
    pub fn excess(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        match *self {
            PairCorrelationModel::Poisson => 0.0,
            PairCorrelationModel::Thomas { kappa, omega } => {
                (-r * r / (4.0 * omega * omega)).exp() / (4.0 * PI * omega * omega * kappa)
            }
            PairCorrelationModel::Matern { sigma2, alpha, nu } => {
                let x = r / alpha;
                // x^nu K_nu(x) -> 2^(nu-1) Gamma(nu) as x -> 0.
                if x < 1e-150 {
                    return sigma2;
                }
                let nuv = nu.value();
                let (_, k) = puruspe::Inu_Knu(nuv, x);
                sigma2 * x.powf(nuv) * k / ((2.0f64).powf(nuv - 1.0) * puruspe::gamma(nuv))
            }
            PairCorrelationModel::Cauchy { sigma2, alpha } => {
                let x = r / alpha;
                sigma2 * (1.0 + x * x).powf(-1.5)
            }
        }
    }

    /// `g(r)`.
    pub fn eval(&self, r: f64) -> f64 {
        1.0 + self.excess(r)
    }

    /// `c(0)`: the maximal excess.
    pub fn excess_at_zero(&self) -> f64 {
        match *self {
            PairCorrelationModel::Poisson => 0.0,
            PairCorrelationModel::Thomas { kappa, omega } => {
                1.0 / (4.0 * PI * omega * omega * kappa)
            }
            PairCorrelationModel::Matern { sigma2, .. }
            | PairCorrelationModel::Cauchy { sigma2, .. } => sigma2,
        }
    }

    /// A natural length scale of the family, used to seed bracketing
    /// searches.
    fn length_scale(&self) -> f64 {
        match *self {
            PairCorrelationModel::Poisson => 1.0,
            PairCorrelationModel::Thomas { omega, .. } => omega,
            PairCorrelationModel::Matern { alpha, .. }
            | PairCorrelationModel::Cauchy { alpha, .. } => alpha,
        }
    }

    /// Radius beyond which `c(r)/c(0)` stays below `ratio`.
    fn cutoff_radius(&self, ratio: f64) -> f64 {
        let c0 = self.excess_at_zero();
        if c0 == 0.0 {
            return 0.0;
        }
        let mut r = self.length_scale();
        while self.excess(r) / c0 >= ratio {
            r *= 2.0;
        }
        r
    }

    /// `int_{R^2} |g(r) - 1| dr`. Closed form `1/kappa` for Thomas;
    /// adaptive radial quadrature `2 pi int_0^inf c(s) s ds` otherwise.
    pub fn excess_integral(&self) -> Result<f64> {
        self.validate()?;
        match *self {
            PairCorrelationModel::Poisson => Ok(0.0),
            PairCorrelationModel::Thomas { kappa, .. } => Ok(1.0 / kappa),
            _ => {
                let upper = self.cutoff_radius(RADIAL_CUTOFF_RATIO);
                let f = |s: f64| self.excess(s) * s;
                Ok(2.0 * PI * adaptive_simpson(&f, 0.0, upper, RADIAL_REL_TOL)?)
            }
        }
    }

    /// `sup lambda * int |g - 1|`; the Neumann series for the Fredholm
    /// solution is guaranteed to converge when this is below one.
    pub fn neumann_condition_bound(&self, lambda_sup: f64) -> Result<f64> {
        if !(lambda_sup > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda_sup must be positive (got {lambda_sup})"
            )));
        }
        Ok(lambda_sup * self.excess_integral()?)
    }

    /// Ripley K-function `K(t) = pi t^2 + 2 pi int_0^t c(s) s ds`.
    ///
    /// Thomas uses the closed form
    /// `pi t^2 + (1 - exp(-t^2/(4 omega^2))) / kappa`; the other families
    /// integrate numerically.
    pub fn k_function(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "K-function argument must be non-negative (got {t})"
            )));
        }
        self.validate()?;
        let poisson_part = PI * t * t;
        match *self {
            PairCorrelationModel::Poisson => Ok(poisson_part),
            PairCorrelationModel::Thomas { kappa, omega } => {
                Ok(poisson_part + (1.0 - (-t * t / (4.0 * omega * omega)).exp()) / kappa)
            }
            _ => {
                let f = |s: f64| self.excess(s) * s;
                Ok(poisson_part + 2.0 * PI * adaptive_simpson(&f, 0.0, t, RADIAL_REL_TOL)?)
            }
        }
    }

    /// K-function on an increasing grid, integrating each segment once.
    pub fn k_function_grid(&self, t_grid: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let mut out = Vec::with_capacity(t_grid.len());
        match *self {
            PairCorrelationModel::Poisson | PairCorrelationModel::Thomas { .. } => {
                for &t in t_grid {
                    out.push(self.k_function(t)?);
                }
            }
            _ => {
                let f = |s: f64| self.excess(s) * s;
                let mut acc = 0.0;
                let mut prev = 0.0;
                for &t in t_grid {
                    if t < prev {
                        return Err(Error::InvalidArgument(
                            "K-function grid must be non-decreasing".into(),
                        ));
                    }
                    acc += adaptive_simpson(&f, prev, t, RADIAL_REL_TOL)?;
                    prev = t;
                    out.push(PI * t * t + 2.0 * PI * acc);
                }
            }
        }
        Ok(out)
    }

    /// The distance `d` at which the excess has decayed to the fraction
    /// `eps` of its value at zero: `c(d)/c(0) = eps`. Found by bisection
    /// to 1e-10 after bracketing by doubling.
    pub fn taper_distance(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "taper fraction must lie in (0, 1) (got {eps})"
            )));
        }
        let c0 = self.excess_at_zero();
        if c0 <= 0.0 {
            return Err(Error::InvalidArgument(
                "taper distance undefined for a flat pair correlation (poisson)".into(),
            ));
        }
        let mut hi = self.length_scale();
        let mut lo = 0.0;
        while self.excess(hi) / c0 >= eps {
            lo = hi;
            hi *= 2.0;
        }
        let f = |d: f64| self.excess(d) / c0 - eps;
        bisect(&f, lo, hi, 1e-10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn families() -> Vec<PairCorrelationModel> {
        vec![
            PairCorrelationModel::thomas(100.0, 0.02).unwrap(),
            PairCorrelationModel::matern(1.0, 0.1, MaternNu::Quarter).unwrap(),
            PairCorrelationModel::matern(2.0, 0.05, MaternNu::Half).unwrap(),
            PairCorrelationModel::matern(0.5, 0.2, MaternNu::One).unwrap(),
            PairCorrelationModel::cauchy(1.0, 0.1).unwrap(),
        ]
    }

    #[test]
    fn thomas_eval_at_zero() {
        let m = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        assert_relative_eq!(
            m.eval(0.0),
            1.0 + 1.0 / (4.0 * PI * 0.0004 * 100.0),
            max_relative = 1e-14
        );
        assert_relative_eq!(m.eval(0.0), 2.98944, max_relative = 1e-5);
    }

    #[test]
    fn matern_half_is_exponential() {
        let m = PairCorrelationModel::matern(1.0, 1.0, MaternNu::Half).unwrap();
        assert_relative_eq!(m.eval(1.0), 1.0 + (-1.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(m.eval(1.0), 1.36788, max_relative = 1e-5);

        // sigma2 exp(-r/alpha), pointwise, over a wide range of r.
        let m2 = PairCorrelationModel::matern(1.7, 0.3, MaternNu::Half).unwrap();
        for i in 0..200 {
            let r = 1e-6 + i as f64 * 0.01;
            assert_relative_eq!(
                m2.excess(r),
                1.7 * (-r / 0.3).exp(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn tails_decay_to_poisson() {
        for m in families() {
            let d = m.taper_distance(1e-4).unwrap();
            assert!((m.eval(10.0 * d) - 1.0).abs() < 1e-6, "{m:?}");
        }
    }

    #[test]
    fn excess_integral_values() {
        let t1 = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        assert_relative_eq!(t1.excess_integral().unwrap(), 0.01, max_relative = 1e-14);
        let t2 = PairCorrelationModel::thomas(200.0, 0.04).unwrap();
        assert_relative_eq!(t2.excess_integral().unwrap(), 0.005, max_relative = 1e-14);

        // Cauchy closed form 2 pi sigma2 alpha^2; the numeric route
        // truncates where c/c(0) < 1e-12, which for the cubic tail leaves
        // an O(1e-4) relative remainder.
        let c = PairCorrelationModel::cauchy(1.0, 1.0).unwrap();
        assert_relative_eq!(c.excess_integral().unwrap(), 2.0 * PI, max_relative = 2e-4);

        // Matern: 4 pi nu sigma2 alpha^2 analytically.
        for (s2, a, nu, nuv) in [
            (1.0, 0.1, MaternNu::Quarter, 0.25),
            (2.0, 0.05, MaternNu::Half, 0.5),
            (0.5, 0.2, MaternNu::One, 1.0),
        ] {
            let m = PairCorrelationModel::matern(s2, a, nu).unwrap();
            assert_relative_eq!(
                m.excess_integral().unwrap(),
                4.0 * PI * nuv * s2 * a * a,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn neumann_bound_values() {
        let t = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        assert_relative_eq!(t.neumann_condition_bound(400.0).unwrap(), 4.0);
        let t5 = PairCorrelationModel::thomas(500.0, 0.01).unwrap();
        assert_relative_eq!(t5.neumann_condition_bound(400.0).unwrap(), 0.8);
        assert_relative_eq!(
            PairCorrelationModel::Poisson
                .neumann_condition_bound(400.0)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn k_function_values() {
        for m in families() {
            assert_eq!(m.k_function(0.0).unwrap(), 0.0);
        }
        let t = 0.37;
        assert_relative_eq!(
            PairCorrelationModel::Poisson.k_function(t).unwrap(),
            PI * t * t
        );

        let th = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        let expected = PI * 0.04 + (1.0 - (-25.0f64).exp()) / 100.0;
        assert_relative_eq!(th.k_function(0.2).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(th.k_function(0.2).unwrap(), 0.135664, max_relative = 1e-5);
    }

    #[test]
    fn thomas_closed_form_k_matches_numeric_quadrature() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let kappa = rng.random_range(20.0..500.0);
            let omega = rng.random_range(0.005..0.1);
            let t = rng.random_range(0.01..0.5);
            let m = PairCorrelationModel::thomas(kappa, omega).unwrap();
            let f = |s: f64| m.excess(s) * s;
            let numeric = PI * t * t + 2.0 * PI * adaptive_simpson(&f, 0.0, t, 1e-10).unwrap();
            assert_relative_eq!(m.k_function(t).unwrap(), numeric, max_relative = 1e-8);
        }
    }

    #[test]
    fn k_grid_matches_pointwise_k() {
        let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.01).collect();
        for m in families() {
            let ks = m.k_function_grid(&grid).unwrap();
            for (i, &t) in grid.iter().enumerate() {
                assert_relative_eq!(ks[i], m.k_function(t).unwrap(), max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn k_excess_converges_to_excess_integral() {
        for m in families() {
            let excess = m.excess_integral().unwrap();
            // Heavy (cubic) tails converge slowly; everything else is at
            // 1e-4 by 20 effective ranges.
            let (eps_range, tol) = match m {
                PairCorrelationModel::Cauchy { .. } => (1e-6, 1e-3),
                _ => (1e-4, 1e-4),
            };
            let t_stop = 20.0 * m.taper_distance(eps_range).unwrap();
            let k = m.k_function(t_stop).unwrap();
            assert_relative_eq!(k - PI * t_stop * t_stop, excess, max_relative = tol);

            // K(t) - pi t^2 is non-decreasing, up to quadrature error.
            let slack = 1e-7 * excess;
            let mut prev = 0.0;
            for i in 1..=30 {
                let t = t_stop * i as f64 / 30.0;
                let v = m.k_function(t).unwrap() - PI * t * t;
                assert!(v >= prev - slack);
                prev = v;
            }
        }
    }

    #[test]
    fn taper_distance_thomas_analytic() {
        let m = PairCorrelationModel::thomas(123.0, 0.02).unwrap();
        let d = m.taper_distance(0.01).unwrap();
        // Gaussian tail inverts to 2 omega sqrt(ln(1/eps)).
        let analytic = 2.0 * 0.02 * (1.0f64 / 0.01).ln().sqrt();
        assert_relative_eq!(d, analytic, epsilon = 1e-9);
        assert_relative_eq!(d, 0.0858, max_relative = 1e-3);
    }

    #[test]
    fn taper_distance_matern_and_monotonicity() {
        // For nu = 1/2 the excess ratio is exactly exp(-d/alpha).
        let m = PairCorrelationModel::matern(2.2, 15.5, MaternNu::Half).unwrap();
        let d = m.taper_distance(0.01).unwrap();
        assert_relative_eq!(d, 15.5 * (100.0f64).ln(), epsilon = 1e-8);
        assert!((d - 71.3).abs() < 0.1);
        assert!(m.taper_distance(0.01).unwrap() > m.taper_distance(0.05).unwrap());

        for m in families() {
            let mut prev = f64::INFINITY;
            for k in 0..8 {
                let eps = 10f64.powf(-4.0 + 0.5 * k as f64); // log-spaced in (0, 1)
                let d = m.taper_distance(eps).unwrap();
                assert!(d < prev, "taper distance must decrease in eps");
                prev = d;
            }
            // eps -> 1 sends the distance to zero (the quadratic-at-zero
            // families scale like sqrt(1 - eps)).
            assert!(m.taper_distance(0.999999).unwrap() < 1e-2 * m.length_scale());
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(PairCorrelationModel::thomas(0.0, 0.02).is_err());
        assert!(PairCorrelationModel::thomas(100.0, -1.0).is_err());
        assert!(PairCorrelationModel::cauchy(-1.0, 1.0).is_err());
        assert!(MaternNu::from_value(0.3).is_err());
        let m = PairCorrelationModel::thomas(100.0, 0.02).unwrap();
        assert!(m.taper_distance(0.0).is_err());
        assert!(m.taper_distance(1.0).is_err());
        assert!(PairCorrelationModel::Poisson.taper_distance(0.01).is_err());
    }

    #[test]
    fn pcf_config_serde() {
        let m: PairCorrelationModel =
            serde_json::from_str(r#"{"family":"thomas","kappa":100.0,"omega":0.02}"#).unwrap();
        assert_eq!(m, PairCorrelationModel::thomas(100.0, 0.02).unwrap());
        let m2: PairCorrelationModel =
            serde_json::from_str(r#"{"family":"matern","sigma2":1.0,"alpha":0.1,"nu":0.25}"#)
                .unwrap();
        assert_eq!(
            m2,
            PairCorrelationModel::matern(1.0, 0.1, MaternNu::Quarter).unwrap()
        );
        assert!(serde_json::from_str::<PairCorrelationModel>(
            r#"{"family":"matern","sigma2":1.0,"alpha":0.1,"nu":0.33}"#
        )
        .is_err());
        assert!(serde_json::from_str::<PairCorrelationModel>(
            r#"{"family":"thomas","kappa":100.0,"omega":0.02,"extra":1}"#
        )
        .is_err());
        let p: PairCorrelationModel = serde_json::from_str(r#"{"family":"poisson"}"#).unwrap();
        assert!(p.is_poisson());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn g_at_least_one_and_nonincreasing(
                kappa in 10.0..1000.0f64,
                omega in 0.005..0.2f64,
                sigma2 in 0.05..5.0f64,
                alpha in 0.01..2.0f64,
                r in 0.0..2.0f64,
            ) {
                let models = [
                    PairCorrelationModel::thomas(kappa, omega).unwrap(),
                    PairCorrelationModel::matern(sigma2, alpha, MaternNu::Quarter).unwrap(),
                    PairCorrelationModel::matern(sigma2, alpha, MaternNu::Half).unwrap(),
                    PairCorrelationModel::matern(sigma2, alpha, MaternNu::One).unwrap(),
                    PairCorrelationModel::cauchy(sigma2, alpha).unwrap(),
                ];
                for m in models {
                    let g = m.eval(r);
                    prop_assert!(g >= 1.0);
                    prop_assert!(g <= 1.0 + m.excess_at_zero() * (1.0 + 1e-12));
                    // Non-increasing on a short ladder from r.
                    let g2 = m.eval(r + 0.05);
                    prop_assert!(g2 <= g + 1e-12);
                    prop_assert!(m.excess_integral().unwrap().is_finite());
                }
            }
        }
    }
}
