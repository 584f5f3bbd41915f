//! Simulate two blocks, fit sJIVE at fixed η and ranks, and look at the pieces.

use sjive::simulate::{generate, SimConfig};
use sjive::{fit, FitConfig, Ranks};

fn main() -> sjive::Result<()> {
    let sim = SimConfig {
        p: vec![60, 80],
        n: 100,
        n_test: 0,
        x_err: 0.5,
        y_err: 0.1,
        ..SimConfig::default()
    };
    let (data, y, truth) = generate(&sim)?;

    let cfg = FitConfig::new(0.5, Ranks::new(1, vec![1, 1]));
    let (model, report) = fit(&data, &y, &cfg)?;
    println!(
        "{} iterations, converged {}, objective {:.4}",
        report.iterations, report.converged, report.final_objective
    );

    let theta = model.theta()?;
    println!("theta joint {:.4}", theta.joint[0]);
    for (i, t) in theta.individual.iter().enumerate() {
        println!("theta individual {} {:.4}", i + 1, t[0]);
    }

    let j_hat = model.joint_stacked();
    let j = truth.joint_stacked();
    println!("joint recovery error {:.4}", (&j_hat - &j).norm_squared() / j.norm_squared());
    let fitted = model.fitted_outcome()?;
    println!("training MSE {:.4}", (fitted - &y.values).norm_squared() / y.len() as f64);
    Ok(())
}
