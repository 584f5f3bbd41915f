//! Top singular values of signal and noise as X_err grows: the signal drops
//! below the noise just above 97% error.

use sjive::simulate::{eigen_signal_report, generate, SimConfig};

fn main() -> sjive::Result<()> {
    println!("{:>7} {:>9} {:>9}", "X_err", "signal", "noise");
    for x_err in [0.1, 0.5, 0.9, 0.95, 0.97, 0.98, 0.99, 0.999] {
        let (_, _, truth) = generate(&SimConfig {
            n_test: 0,
            x_err,
            y_err: 0.1,
            ..SimConfig::default()
        })?;
        let e = eigen_signal_report(&truth)?;
        let flag = if e.signal < e.noise { "  noise dominates" } else { "" };
        println!("{x_err:>7} {:>9.2} {:>9.2}{flag}", e.signal, e.noise);
    }
    Ok(())
}
