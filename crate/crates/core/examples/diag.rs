use ppql::estimate::{fit_cl, fit_ql, fit_two_step_psi, fit_wcl, default_t_grid, Estimator, FitConfig, PcfFamily};
use ppql::paircorr::PairCorrelationModel;
use ppql::simulate::{StudyConfig, StudyContext};

fn main() {
    let (kappa, omega, beta1) = (100.0, 0.02, 1.0);
    let config = StudyConfig::default();
    let ctx = StudyContext::new(config.clone()).unwrap();
    let t_grid = default_t_grid(config.window);
    let reps = 60;

    let mut kap_est = Vec::new();
    let mut om_est = Vec::new();
    let (mut cl_sq, mut wcl_sq, mut ql_sq, mut wcl_o_sq, mut ql_o_sq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let psi_star = PairCorrelationModel::thomas(kappa, omega).unwrap();
    for rep in 0..reps {
        let mut rng = ppql::simulate::replicate_rng_pub(7, 0, rep);
        let (model_true, pattern) = ctx.simulate_replicate(kappa, omega, beta1, &mut rng).unwrap();
        let bstar = [model_true.beta()[0], model_true.beta()[1]];
        let model0 = model_true.with_beta(vec![0.0, 0.0]).unwrap();
        let mut cfg = FitConfig { estimator: Estimator::Cl, ..FitConfig::default() };
        let cl = fit_cl(&pattern, &model0, ctx.quad(), &cfg).unwrap();
        let model_tilde = model0.with_beta(cl.beta_hat.clone()).unwrap();
        let psi = fit_two_step_psi(&pattern, &model_tilde, PcfFamily::Thomas, &t_grid).unwrap();
        if let PairCorrelationModel::Thomas { kappa: k, omega: o } = psi {
            kap_est.push(k);
            om_est.push(o);
        }
        cfg.init = Some(cl.beta_hat.clone());
        let wcl = fit_wcl(&pattern, &model0, &psi, ctx.quad(), &cfg).unwrap();
        let ql = fit_ql(&pattern, &model0, &psi, ctx.quad(), &cfg).unwrap();
        let wcl_o = fit_wcl(&pattern, &model0, &psi_star, ctx.quad(), &cfg).unwrap();
        let ql_o = fit_ql(&pattern, &model0, &psi_star, ctx.quad(), &cfg).unwrap();
        let sq = |b: &[f64]| (b[0]-bstar[0]).powi(2) + (b[1]-bstar[1]).powi(2);
        cl_sq += sq(&cl.beta_hat);
        wcl_sq += sq(&wcl.beta_hat);
        ql_sq += sq(&ql.beta_hat);
        wcl_o_sq += sq(&wcl_o.beta_hat);
        ql_o_sq += sq(&ql_o.beta_hat);
    }
    kap_est.sort_by(|a, b| a.partial_cmp(b).unwrap());
    om_est.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("kappa~ median {:.1} (q25 {:.1}, q75 {:.1}) vs 100", kap_est[reps as usize/2], kap_est[reps as usize/4], kap_est[3*reps as usize/4]);
    println!("omega~ median {:.4} (q25 {:.4}, q75 {:.4}) vs 0.02", om_est[reps as usize/2], om_est[reps as usize/4], om_est[3*reps as usize/4]);
    println!("reduction WCL(psi~) {:.1}%  QL(psi~) {:.1}%", 100.0*(1.0-wcl_sq/cl_sq), 100.0*(1.0-ql_sq/cl_sq));
    println!("reduction WCL(psi*) {:.1}%  QL(psi*) {:.1}%", 100.0*(1.0-wcl_o_sq/cl_sq), 100.0*(1.0-ql_o_sq/cl_sq));
}
