//! Wide blocks (p ≫ n) are replaced by their n × n SVD scores before fitting.
//! The fit is the same; only the cost changes.

use std::time::Instant;

use sjive::model::{objective, Compression};
use sjive::simulate::{generate, SimConfig};
use sjive::{fit, FitConfig, Ranks};

fn main() -> sjive::Result<()> {
    let (data, y, _) = generate(&SimConfig {
        p: vec![1500, 800],
        n: 60,
        n_test: 0,
        x_err: 0.5,
        y_err: 0.1,
        ..SimConfig::default()
    })?;
    let base = FitConfig::new(0.5, Ranks::uniform(2, 1));
    for mode in [Compression::Never, Compression::Always] {
        let start = Instant::now();
        let (model, report) = fit(&data, &y, &FitConfig { compression: mode, ..base.clone() })?;
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{mode:?}: objective {:.10}, {} iterations, {:.1} ms, compressed blocks {:?}",
            objective(&data, &y, &model)?,
            report.iterations,
            secs * 1e3,
            report.compressed
        );
    }
    Ok(())
}
