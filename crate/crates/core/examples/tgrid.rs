use ppql::estimate::{fit_cl, fit_ql, fit_two_step_psi, fit_wcl, Estimator, FitConfig, PcfFamily};
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{replicate_rng_pub, StudyConfig, StudyContext};

fn run(ctx: &StudyContext, kappa: f64, omega: f64, t_max: f64, reps: u64) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let t_grid: Vec<f64> = (1..=100).map(|i| t_max * i as f64 / 100.0).collect();
    let (mut cl_sq, mut wcl_sq, mut ql_sq) = (0.0, 0.0, 0.0);
    let mut kaps = Vec::new();
    let mut oms = Vec::new();
    for rep in 0..reps {
        let mut rng = replicate_rng_pub(7, 0, rep);
        let (mt, pattern) = ctx.simulate_replicate(kappa, omega, 1.0, &mut rng).unwrap();
        let bstar = [mt.beta()[0], mt.beta()[1]];
        let m0 = mt.with_beta(vec![0.0, 0.0]).unwrap();
        let mut cfg = FitConfig { estimator: Estimator::Cl, ..FitConfig::default() };
        let cl = fit_cl(&pattern, &m0, ctx.quad(), &cfg).unwrap();
        let mtild = m0.with_beta(cl.beta_hat.clone()).unwrap();
        let psi = match fit_two_step_psi(&pattern, &mtild, PcfFamily::Thomas, &t_grid) {
            Ok(p) => p,
            Err(_) => continue,
        };
        if let PairCorrelationModel::Thomas { kappa: k, omega: o } = psi { kaps.push(k); oms.push(o); }
        cfg.init = Some(cl.beta_hat.clone());
        let wcl = fit_wcl(&pattern, &m0, &psi, ctx.quad(), &cfg).unwrap();
        let ql = fit_ql(&pattern, &m0, &psi, ctx.quad(), &cfg).unwrap();
        let sq = |b: &[f64]| (b[0]-bstar[0]).powi(2) + (b[1]-bstar[1]).powi(2);
        cl_sq += sq(&cl.beta_hat); wcl_sq += sq(&wcl.beta_hat); ql_sq += sq(&ql.beta_hat);
    }
    (100.0*(1.0-wcl_sq/cl_sq), 100.0*(1.0-ql_sq/cl_sq), kaps, oms)
}

fn main() {
    let ctx = StudyContext::new(StudyConfig::default()).unwrap();
    for (kappa, omega) in [(200.0f64, 0.04), (100.0, 0.02)] {
        for t_max in [0.25f64, 0.125] {
            let (w, q, mut kaps, mut oms) = run(&ctx, kappa, omega, t_max, 40);
            kaps.sort_by(|a,b| a.partial_cmp(b).unwrap());
            oms.sort_by(|a,b| a.partial_cmp(b).unwrap());
            println!("cell ({kappa},{omega}) t_max {t_max}: WCL {w:.1}% QL {q:.1}% | kappa~ med {:.0} omega~ med {:.4} (n={})",
                kaps[kaps.len()/2], oms[oms.len()/2], kaps.len());
        }
    }
}
