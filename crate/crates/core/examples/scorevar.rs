use nalgebra::{DMatrix, DVector};
use ppql::estimate::{godambe_covariance, Estimator, FitInternals};
use ppql::model::QuadratureScheme;
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{replicate_rng_pub, simulate_thomas, StudyConfig, StudyContext, ThomasSpec};

fn main() {
    let (kappa, omega, beta1) = (100.0, 0.02, 1.0);
    let config = StudyConfig::default();
    let ctx = StudyContext::new(config.clone()).unwrap();
    let psi = PairCorrelationModel::thomas(kappa, omega).unwrap();
    // One fixed covariate draw and true model.
    let mut rng0 = replicate_rng_pub(17, 0, 0);
    let (model, _) = ctx.simulate_replicate(kappa, omega, beta1, &mut rng0).unwrap();
    let quad = ctx.quad();

    // CL score: sum_events z(u) - sum_i z(u_i) lambda_i w_i  (p = 2)
    let reps = 3000;
    let mut scores: Vec<DVector<f64>> = Vec::with_capacity(reps);
    let spec = ThomasSpec { kappa, omega, model: model.clone() };
    let mut integral = DVector::zeros(2);
    for (i, u) in quad.nodes().iter().enumerate() {
        let g = model.intensity_gradient(u.x, u.y).unwrap();
        for j in 0..2 { integral[j] += g[j] * quad.weights()[i]; }
    }
    for rep in 0..reps {
        let mut rng = replicate_rng_pub(18, 1, rep as u64);
        let pat = simulate_thomas(&spec, config.window, &mut rng).unwrap();
        let mut s = -integral.clone();
        for p in pat.points() {
            let lam = model.intensity(p.x, p.y).unwrap();
            let g = model.intensity_gradient(p.x, p.y).unwrap();
            for j in 0..2 { s[j] += g[j] / lam; }
        }
        scores.push(s);
    }
    let mean = scores.iter().fold(DVector::zeros(2), |a, s| a + s) / reps as f64;
    let mut cov = DMatrix::<f64>::zeros(2, 2);
    for s in &scores {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov /= reps as f64 - 1.0;
    println!("empirical mean score: {:?} (should be ~0)", (mean[0], mean[1]));
    println!("empirical Var(e_CL):  [[{:.4}, {:.4}], [{:.4}, {:.4}]]", cov[(0,0)], cov[(0,1)], cov[(1,0)], cov[(1,1)]);

    // Analytic: Sigma = S + integral of f f lambda lambda c with f = z.
    // Reuse the sandwich: cov_CL = S^-1 Sigma S^-1 so Sigma = S cov S.
    let fi = FitInternals { model: &model, pcf: Some(&psi), quad, estimator: Estimator::Cl, taper_eps: 0.002 };
    let cov_cl = godambe_covariance(&fi).unwrap();
    // Sensitivity for CL = Poisson information.
    let mut info = DMatrix::<f64>::zeros(2, 2);
    for (i, u) in quad.nodes().iter().enumerate() {
        let lam = model.intensity(u.x, u.y).unwrap();
        let g = model.intensity_gradient(u.x, u.y).unwrap();
        for a in 0..2 { for b in 0..2 {
            info[(a, b)] += g[a] * g[b] / lam * quad.weights()[i];
        } }
    }
    let sigma = &info * &cov_cl * &info;
    println!("analytic Var(e_CL):   [[{:.4}, {:.4}], [{:.4}, {:.4}]]", sigma[(0,0)], sigma[(0,1)], sigma[(1,0)], sigma[(1,1)]);
    let _ = QuadratureScheme::grid(config.window, 2, 2);
}
