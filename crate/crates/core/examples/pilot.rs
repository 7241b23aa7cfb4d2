use ppql::simulate::{run_mse_study, StudyConfig};
fn main() {
    let t0 = std::time::Instant::now();
    let config = StudyConfig { n_reps: 50, ..StudyConfig::default() };
    let table = run_mse_study(&config, 20260809).unwrap();
    for line in table.summary_lines() {
        println!("{line}");
    }
    println!("elapsed: {:.1}s for {} cells x 50 reps", t0.elapsed().as_secs_f64(), table.cells.len());
}
