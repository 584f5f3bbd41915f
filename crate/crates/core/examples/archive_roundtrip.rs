//! Fit from CSV files, save the model archive, load it back and predict.

use nalgebra::DMatrix;
use sjive::archive::{load_model, save_model};
use sjive::data::{load_csv, standardize, write_csv, LabeledMatrix, Orientation, ZeroVariancePolicy};
use sjive::predict::{estimate_scores, predict_standardized};
use sjive::simulate::{generate, SimConfig};
use sjive::{fit, FitConfig, MultiSourceDataset, Outcome, Ranks};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("sjive_archive_example");
    std::fs::create_dir_all(&dir)?;

    // write two blocks and an outcome as CSV, variables as rows
    let (data, y, _) = generate(&SimConfig {
        p: vec![12, 18],
        n: 30,
        n_test: 0,
        x_err: 0.3,
        ..SimConfig::default()
    })?;
    let samples: Vec<String> = data.sample_ids().to_vec();
    for i in 0..data.k() {
        let m = LabeledMatrix {
            values: data.block(i).clone(),
            row_ids: data.variable_ids()[i].clone(),
            col_ids: samples.clone(),
        };
        write_csv(dir.join(format!("X{}.csv", i + 1)), &m)?;
    }
    let y_csv = LabeledMatrix {
        values: DMatrix::from_row_slice(1, y.len(), y.values.as_slice()),
        row_ids: vec!["y".into()],
        col_ids: samples,
    };
    write_csv(dir.join("y.csv"), &y_csv)?;

    // read them back, standardize, fit
    let blocks = (1..=2)
        .map(|i| load_csv(dir.join(format!("X{i}.csv")), Orientation::VariablesAsRows))
        .collect::<sjive::Result<Vec<_>>>()?;
    let raw = MultiSourceDataset::from_labeled(blocks)?;
    let (raw_y, _) = Outcome::from_labeled(load_csv(dir.join("y.csv"), Orientation::VariablesAsRows)?)?;
    let (train, train_y, _) = standardize(&raw, &raw_y, ZeroVariancePolicy::Error)?;
    let (model, report) = fit(&train, &train_y, &FitConfig::new(0.5, Ranks::uniform(2, 1)))?;

    let path = dir.join("model.tar");
    save_model(&path, &model, Some(&report))?;
    let (loaded, info) = load_model(&path)?;
    println!("loaded model: {} iterations, objective {:?}", info.iterations.unwrap_or(0), info.objective);
    assert_eq!(loaded, model);

    let a = predict_standardized(&model, &estimate_scores(&model, &train)?)?;
    let b = predict_standardized(&loaded, &estimate_scores(&loaded, &train)?)?;
    println!("predictions identical after reload: {}", a == b);
    Ok(())
}
