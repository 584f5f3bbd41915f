//! Forward rank selection and an η grid search by 5-fold cross-validation.

use sjive::selection::{select_eta_and_ranks, CvPlan};
use sjive::simulate::{generate, SimConfig};
use sjive::{FitConfig, Ranks};

fn main() -> sjive::Result<()> {
    let (data, y, _) = generate(&SimConfig {
        p: vec![30, 30],
        n: 60,
        n_test: 0,
        ranks: Ranks::new(1, vec![1, 1]),
        x_err: 0.3,
        y_err: 0.1,
        seed: 21,
        ..SimConfig::default()
    })?;
    let plan = CvPlan::five_fold(data.n(), 21)?;
    let base = FitConfig::new(0.5, Ranks::zeros(2));
    // coarse grid for speed; `default_eta_grid()` is the full one
    let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
    let (eta, ranks, rank_trace, eta_trace) = select_eta_and_ranks(&data, &y, &base, &grid, &plan)?;

    println!("rank search");
    for row in &rank_trace.rows {
        println!("  step {} {:<8} cv mse {:.4}", row.step, row.candidate.to_string(), row.score.mean);
    }
    println!("eta search");
    for row in &eta_trace.rows {
        println!("  {:<6} cv mse {:.4}", row.candidate.to_string(), row.score.mean);
    }
    println!("chosen ranks {ranks}, eta {eta}");
    Ok(())
}
