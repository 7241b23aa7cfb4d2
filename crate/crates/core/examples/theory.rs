use ppql::estimate::{godambe_covariance, Estimator, FitInternals};
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{replicate_rng_pub, StudyConfig, StudyContext};

fn main() {
    let (kappa, omega, beta1) = (100.0, 0.02, 1.0);
    let config = StudyConfig::default();
    let ctx = StudyContext::new(config.clone()).unwrap();
    let psi = PairCorrelationModel::thomas(kappa, omega).unwrap();

    let mut sums = [0.0f64; 3];
    let draws = 5;
    for rep in 0..draws {
        let mut rng = replicate_rng_pub(3, 0, rep);
        let (model_true, _) = ctx.simulate_replicate(kappa, omega, beta1, &mut rng).unwrap();
        for (idx, est) in [Estimator::Cl, Estimator::Wcl, Estimator::Ql].iter().enumerate() {
            let fi = FitInternals {
                model: &model_true,
                pcf: Some(&psi),
                quad: ctx.quad(),
                estimator: *est,
                taper_eps: 0.002,
            };
            let cov = godambe_covariance(&fi).unwrap();
            sums[idx] += cov[(0, 0)] + cov[(1, 1)];
        }
    }
    println!("avg asymptotic summed variance: CL {:.5e}, WCL {:.5e}, QL {:.5e}", sums[0]/draws as f64, sums[1]/draws as f64, sums[2]/draws as f64);
    println!("theoretical reduction: WCL {:.1}%, QL {:.1}%", 100.0*(1.0-sums[1]/sums[0]), 100.0*(1.0-sums[2]/sums[0]));
}
