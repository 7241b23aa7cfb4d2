use ppql::estimate::{godambe_covariance, Estimator, FitInternals};
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{replicate_rng_pub, StudyConfig, StudyContext};

fn reductions(ctx: &StudyContext, kappa: f64, omega: f64, beta1: f64, draws: u64) -> (f64, f64) {
    let psi = PairCorrelationModel::thomas(kappa, omega).unwrap();
    let mut sums = [0.0f64; 3];
    for rep in 0..draws {
        let mut rng = replicate_rng_pub(3, 7, rep);
        let (model_true, _) = ctx.simulate_replicate(kappa, omega, beta1, &mut rng).unwrap();
        for (idx, est) in [Estimator::Cl, Estimator::Wcl, Estimator::Ql].iter().enumerate() {
            let fi = FitInternals { model: &model_true, pcf: Some(&psi), quad: ctx.quad(), estimator: *est, taper_eps: 0.002 };
            let cov = godambe_covariance(&fi).unwrap();
            sums[idx] += cov[(0, 0)] + cov[(1, 1)];
        }
    }
    (100.0*(1.0-sums[1]/sums[0]), 100.0*(1.0-sums[2]/sums[0]))
}

fn main() {
    let ctx = StudyContext::new(StudyConfig::default()).unwrap();
    println!("cell                paper_wcl paper_ql | theory_wcl theory_ql");
    let table = [
        (100.0, 0.02, 0.5, 15.6, 35.9), (100.0, 0.02, 1.0, 41.4, 59.3),
        (100.0, 0.04, 0.5, 1.5, 34.4), (100.0, 0.04, 1.0, 14.2, 42.2),
        (200.0, 0.02, 0.5, 4.9, 15.4), (200.0, 0.02, 1.0, 20.2, 34.0),
        (200.0, 0.04, 0.5, -3.5, 16.5), (200.0, 0.04, 1.0, 3.0, 26.2),
    ];
    for (k, o, b1, pw, pq) in table {
        let (tw, tq) = reductions(&ctx, k, o, b1, 6);
        println!("({k:>3}, {o}, b1={b1}):  {pw:>5.1} {pq:>5.1} | {tw:>6.1} {tq:>6.1}");
    }
    println!("--- dispersal convention check: omega/sqrt(2) ---");
    for (k, o, b1, pw, pq) in [(100.0, 0.02, 1.0, 41.4, 59.3), (200.0, 0.04, 1.0, 3.0, 26.2)] {
        let (tw, tq) = reductions(&ctx, k, o / 2.0f64.sqrt(), b1, 6);
        println!("({k:>3}, {:.4}, b1={b1}): {pw:>5.1} {pq:>5.1} | {tw:>6.1} {tq:>6.1}", o / 2.0f64.sqrt());
    }
}
