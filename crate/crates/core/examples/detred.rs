use ppql::estimate::{godambe_covariance, Estimator, FitInternals};
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{replicate_rng_pub, StudyConfig, StudyContext};

fn main() {
    for (kappa, omega, pw, pq) in [(100.0f64, 0.02, 41.4, 59.3), (200.0, 0.04, 3.0, 26.2)] {
        let ctx = StudyContext::new(StudyConfig::default()).unwrap();
        let psi = PairCorrelationModel::thomas(kappa, omega).unwrap();
        let mut dets = [0.0f64; 3];
        let draws = 8;
        for rep in 0..draws {
            let mut rng = replicate_rng_pub(23, 0, rep);
            let (model, _) = ctx.simulate_replicate(kappa, omega, 1.0, &mut rng).unwrap();
            for (idx, est) in [Estimator::Cl, Estimator::Wcl, Estimator::Ql].iter().enumerate() {
                let fi = FitInternals { model: &model, pcf: Some(&psi), quad: ctx.quad(), estimator: *est, taper_eps: 0.002 };
                let cov = godambe_covariance(&fi).unwrap();
                dets[idx] += (cov[(0,0)]*cov[(1,1)] - cov[(0,1)]*cov[(1,0)]) / draws as f64;
            }
        }
        println!("cell ({kappa}, {omega}): paper {pw}/{pq} | det-reduction WCL {:.1}%, QL {:.1}%",
            100.0*(1.0-dets[1]/dets[0]), 100.0*(1.0-dets[2]/dets[0]));
    }
}
