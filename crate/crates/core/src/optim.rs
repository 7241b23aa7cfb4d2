//! Derivative-free minimization by the Nelder-Mead simplex method, used
//! for the minimum-contrast estimation of clustering parameters.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimize `f` from `x0`, with an initial simplex displaced by `step`
/// along each coordinate. Converges when the simplex diameter (sup-norm
/// over vertex pairs) falls below `tol`; exceeding `max_iter` is an error
/// that reports the best point reached.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NelderMeadResult> {
    let n = x0.len();
    if n == 0 || step.len() != n {
        return Err(Error::InvalidArgument(
            "nelder-mead needs a non-empty start and matching step sizes".into(),
        ));
    }
    // Standard coefficients: reflection, expansion, contraction, shrink.
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for j in 0..n {
        let mut v = x0.to_vec();
        v[j] += step[j];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let diameter = |s: &[Vec<f64>]| -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let gap = s[i]
                    .iter()
                    .zip(&s[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                d = d.max(gap);
            }
        }
        d
    };

    for iter in 0..max_iter {
        // Order vertices by value.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let simplex_sorted: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let values_sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex_sorted;
        values = values_sorted;

        if diameter(&simplex) < tol {
            return Ok(NelderMeadResult {
                x: simplex[0].clone(),
                value: values[0],
                iterations: iter,
            });
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for j in 0..n {
                centroid[j] += v[j] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let at = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (centroid[j] - worst[j]))
                .collect()
        };

        let xr = at(alpha);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = at(alpha * gamma);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = at(alpha * rho);
                let v = f(&x);
                (x, v)
            } else {
                let x = at(-rho);
                let v = f(&x);
                (x, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=n {
                    for j in 0..n {
                        simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Err(Error::Numeric(format!(
        "nelder-mead did not converge in {max_iter} iterations; best point {:?} with value {:.6e}, simplex diameter {:.3e}",
        simplex[best],
        values[best],
        diameter(&simplex)
    )))
}
