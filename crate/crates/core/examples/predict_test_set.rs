//! Fit on a training split, then score and predict an independent test split.

use sjive::eval::test_mse;
use sjive::predict::{contributions, estimate_scores, predict};
use sjive::simulate::{generate_study, SimConfig};
use sjive::{fit, FitConfig, Ranks};

fn main() -> sjive::Result<()> {
    let study = generate_study(&SimConfig {
        p: vec![100, 100],
        n: 120,
        n_test: 60,
        x_err: 0.6,
        y_err: 0.1,
        seed: 4,
        ..SimConfig::default()
    })?;
    let (model, _) = fit(&study.train, &study.train_y, &FitConfig::new(0.4, Ranks::uniform(2, 1)))?;

    let scores = estimate_scores(&model, &study.test)?;
    println!("score estimation: {} alternations, converged {}", scores.iterations, scores.converged);

    // simulated outcomes are already standardized, so `predict` returns the same scale
    let pred = predict(&model, &scores)?;
    println!("test MSE {:.4}", test_mse(&study.test_y.values, &pred)?);

    let parts = contributions(&model, &scores)?;
    for s in 0..3 {
        let indiv: Vec<String> = parts.individual.iter().map(|c| format!("{:+.3}", c[s])).collect();
        println!("sample {s}: joint {:+.3}, individual [{}]", parts.joint[s], indiv.join(", "));
    }
    Ok(())
}
