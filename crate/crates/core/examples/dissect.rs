use ppql::simulate::{replicate_rng_pub, StudyConfig, StudyContext};
use ppql::paircorr::PairCorrelationModel;

fn main() {
    let ctx = StudyContext::new(StudyConfig::default()).unwrap();
    let (kappa, omega) = (200.0, 0.04);
    let reps = 200u64;
    let mut recs = Vec::new();
    for rep in 0..reps {
        let mut rng = replicate_rng_pub(42, 1, rep); // same stream as study cell 1 (cell_idx 1)
        match ctx.run_replicate(kappa, omega, 1.0, &mut rng) {
            Ok(r) => recs.push(r),
            Err(e) => println!("rep {rep} failed: {e}"),
        }
    }
    let n = recs.len() as f64;
    let (mut scl, mut sql): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let (mut b1cl, mut b1ql) = (0.0, 0.0);
    for r in &recs {
        scl.push(r.sq_err_cl);
        sql.push(r.sq_err_ql);
        b1cl += (r.beta_cl[1] - r.beta_true[1]).powi(2);
        b1ql += (r.beta_ql[1] - r.beta_true[1]).powi(2);
    }
    let tot = |v: &[f64]| v.iter().sum::<f64>();
    println!("summed-coord reduction QL: {:.1}%", 100.0*(1.0 - tot(&sql)/tot(&scl)));
    println!("slope-only reduction  QL: {:.1}%", 100.0*(1.0 - b1ql/b1cl));
    let mut idx: Vec<usize> = (0..recs.len()).collect();
    idx.sort_by(|&a, &b| sql[b].partial_cmp(&sql[a]).unwrap());
    println!("top-5 QL sq errors: {:?}", idx.iter().take(5).map(|&i| sql[i]).collect::<Vec<_>>());
    println!("their CL sq errors: {:?}", idx.iter().take(5).map(|&i| scl[i]).collect::<Vec<_>>());
    println!("their psi~ : {:?}", idx.iter().take(5).map(|&i| {
        let r = &recs[i];
        (r.beta_ql[0], r.beta_ql[1], r.beta_true[0])
    }).collect::<Vec<_>>());
    // reduction without top-3 QL outliers
    let skip: Vec<usize> = idx.iter().take(3).cloned().collect();
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..recs.len() {
        if !skip.contains(&i) { a += scl[i]; b += sql[i]; }
    }
    println!("reduction QL without top-3 QL outliers: {:.1}%", 100.0*(1.0-b/a));
    println!("median QL sq err {:.4}, median CL sq err {:.4}, n={n}",
        { let mut s = sql.clone(); s.sort_by(|a,b| a.partial_cmp(b).unwrap()); s[s.len()/2] },
        { let mut s = scl.clone(); s.sort_by(|a,b| a.partial_cmp(b).unwrap()); s[s.len()/2] });
    let _ = PairCorrelationModel::Poisson;
}
