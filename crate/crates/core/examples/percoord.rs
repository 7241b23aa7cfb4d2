use ppql::estimate::{godambe_covariance, Estimator, FitInternals};
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{replicate_rng_pub, StudyConfig, StudyContext};

fn main() {
    for (kappa, omega) in [(100.0, 0.02), (200.0, 0.04)] {
        let beta1 = 1.0;
        let ctx = StudyContext::new(StudyConfig::default()).unwrap();
        let psi = PairCorrelationModel::thomas(kappa, omega).unwrap();
        let mut v = [[0.0f64; 2]; 3];
        let draws = 8;
        for rep in 0..draws {
            let mut rng = replicate_rng_pub(23, 0, rep);
            let (model, _) = ctx.simulate_replicate(kappa, omega, beta1, &mut rng).unwrap();
            for (idx, est) in [Estimator::Cl, Estimator::Wcl, Estimator::Ql].iter().enumerate() {
                let fi = FitInternals { model: &model, pcf: Some(&psi), quad: ctx.quad(), estimator: *est, taper_eps: 0.002 };
                let cov = godambe_covariance(&fi).unwrap();
                v[idx][0] += cov[(0, 0)] / draws as f64;
                v[idx][1] += cov[(1, 1)] / draws as f64;
            }
        }
        println!("cell ({kappa}, {omega}, beta1=1):");
        println!("  var beta0: CL {:.5}, WCL {:.5}, QL {:.5}", v[0][0], v[1][0], v[2][0]);
        println!("  var beta1: CL {:.5}, WCL {:.5}, QL {:.5}", v[0][1], v[1][1], v[2][1]);
        println!("  reduction beta0 only: WCL {:.1}%, QL {:.1}%", 100.0*(1.0-v[1][0]/v[0][0]), 100.0*(1.0-v[2][0]/v[0][0]));
        println!("  reduction beta1 only: WCL {:.1}%, QL {:.1}%", 100.0*(1.0-v[1][1]/v[0][1]), 100.0*(1.0-v[2][1]/v[0][1]));
        println!("  reduction summed:     WCL {:.1}%, QL {:.1}%",
            100.0*(1.0-(v[1][0]+v[1][1])/(v[0][0]+v[0][1])), 100.0*(1.0-(v[2][0]+v[2][1])/(v[0][0]+v[0][1])));
    }
}
