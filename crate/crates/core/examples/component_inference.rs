//! Which components carry the outcome? Nested F-tests per component group and
//! per-variable meta-loadings.

use sjive::eval::{component_inference, meta_loadings};
use sjive::simulate::{generate, SimConfig};
use sjive::{fit, FitConfig, Ranks};

fn main() -> sjive::Result<()> {
    let (data, y, _) = generate(&SimConfig {
        p: vec![40, 40, 40],
        n: 90,
        n_test: 0,
        ranks: Ranks::new(1, vec![1, 1, 1]),
        x_err: 0.5,
        y_err: 0.2,
        seed: 3,
        ..SimConfig::default()
    })?;
    let (model, _) = fit(&data, &y, &FitConfig::new(0.5, Ranks::new(1, vec![1, 1, 1])))?;

    println!("{:<14} {:>4} {:>10} {:>10} {:>10}", "component", "rank", "partial R2", "F", "p");
    for t in component_inference(&model, &y.values)? {
        println!("{:<14} {:>4} {:>10.4} {:>10.3} {:>10.2e}", t.component, t.rank, t.partial_r2, t.f_stat, t.p_value);
    }

    for (i, m) in meta_loadings(&model)?.iter().enumerate() {
        let top = m.iamax();
        println!("block {}: largest meta-loading {} = {:+.4}", i + 1, model.variable_ids[i][top], m[top]);
    }
    Ok(())
}
