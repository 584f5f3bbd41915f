//! sJIVE against JIVE-predict and principal components regression over a few
//! simulated replicates.

use sjive::benchmark::{run_benchmark, BenchmarkConfig, EtaChoice};
use sjive::simulate::SimConfig;

fn main() -> sjive::Result<()> {
    let sim = SimConfig {
        p: vec![80, 80],
        n: 80,
        n_test: 80,
        x_err: 0.9,
        y_err: 0.01,
        ..SimConfig::default()
    };
    let mut cfg = BenchmarkConfig::new(sim, 3);
    // fixed η keeps the example quick; the default is CV over the grid
    cfg.eta = EtaChoice::Fixed(0.5);
    let summary = run_benchmark(&cfg)?;

    let means = summary.mean_mse();
    let wins = summary.win_rates();
    for ((name, m), w) in summary.methods.iter().zip(&means).zip(&wins) {
        println!("{name:<18} mean test MSE {m:.4}  wins {w:.0}%");
    }
    for (name, err) in summary.mean_recovery(true) {
        println!("sJIVE {name} recovery error {err:.4}");
    }
    Ok(())
}
