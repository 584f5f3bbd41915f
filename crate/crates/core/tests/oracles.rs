mod common;

use common::*;
use nalgebra::DVector;
use sjive::baselines::fit_jive;
use sjive::eval::component_inference;
use sjive::predict::{estimate_scores, predict_standardized};
use sjive::simulate::{generate, generate_study, SimConfig};
use sjive::{fit, FitConfig, Ranks};

fn small(x_err: f64, seed: u64) -> SimConfig {
    SimConfig {
        p: vec![20, 30],
        n: 40,
        n_test: 25,
        ranks: Ranks::uniform(2, 1),
        x_err,
        y_err: 0.2,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn incomplete_beta_closed_forms() {
    for x in [0.01f64, 0.2, 0.5, 0.77, 0.999] {
        assert!((reg_inc_beta(1.0, 1.0, x) - x).abs() < 1e-14);
        assert!((reg_inc_beta(3.5, 1.0, x) - x.powf(3.5)).abs() < 1e-13);
        assert!((reg_inc_beta(1.0, 2.5, x) - (1.0 - (1.0 - x).powf(2.5))).abs() < 1e-13);
    }
    // F(2, d) upper tail is (1 + 2f/d)^(-d/2)
    for (f, d) in [(0.3f64, 7.0f64), (2.0, 25.0), (11.0, 4.0)] {
        let want = (1.0 + 2.0 * f / d).powf(-d / 2.0);
        assert!((f_sf(f, 2.0, d) - want).abs() < 1e-13);
    }
}

#[test]
fn ln_gamma_at_integers_and_half() {
    let mut fact = 1.0f64;
    for n in 1..15 {
        assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "n = {n}");
        fact *= n as f64;
    }
    assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
}

#[test]
fn eta_one_fit_follows_plain_jive_iterates() {
    let (data, y, _) = generate(&small(0.4, 11)).unwrap();
    let ranks = Ranks::uniform(2, 1);
    let cfg = FitConfig {
        tol: 1e-12,
        ..FitConfig::new(1.0, ranks.clone())
    };
    let (model, report) = fit(&data, &y, &cfg).unwrap();
    let oracle = jive_oracle(data.blocks(), 1, &[1, 1], 0.0, report.objective_trace.len());
    assert!((report.final_objective - oracle.objective).abs() <= 1e-10 * oracle.objective);
    assert!(max_principal_angle(&row_basis(&model.joint_scores), &oracle.joint_rows) < 1e-8);
    for i in 0..2 {
        let a = model.indiv_part(i);
        assert!((&a - &oracle.indiv[i]).norm() <= 1e-8 * oracle.indiv[i].norm());
    }
    let (jive, _) = fit_jive(&data, &ranks, &cfg).unwrap();
    assert!((jive.joint_stacked() - model.joint_stacked()).norm() <= 1e-12 * model.joint_stacked().norm());
}

#[test]
fn joint_rank_two_matches_oracle() {
    let cfg = SimConfig {
        ranks: Ranks::new(2, vec![1, 2]),
        ..small(0.3, 4)
    };
    let (data, y, _) = generate(&cfg).unwrap();
    let fit_cfg = FitConfig {
        tol: 1e-12,
        ..FitConfig::new(1.0, Ranks::new(2, vec![1, 2]))
    };
    let (model, report) = fit(&data, &y, &fit_cfg).unwrap();
    let oracle = jive_oracle(data.blocks(), 2, &[1, 2], 0.0, report.objective_trace.len());
    assert!((report.final_objective - oracle.objective).abs() <= 1e-10 * oracle.objective);
    assert!(max_principal_angle(&row_basis(&model.joint_scores), &oracle.joint_rows) < 1e-8);
}

#[test]
fn inference_matches_nested_least_squares() {
    for seed in 1..=4 {
        let (data, y, _) = generate(&SimConfig { n: 30, n_test: 0, ..small(0.5, seed) }).unwrap();
        let (model, _) = fit(&data, &y, &FitConfig::new(0.5, Ranks::new(1, vec![2, 1]))).unwrap();
        let got = component_inference(&model, &y.values).unwrap();
        let rows = |s: &M| -> Vec<DVector<f64>> { s.row_iter().map(|r| r.transpose()).collect() };
        let mut groups = vec![rows(&model.joint_scores)];
        groups.extend(model.indiv_scores.iter().map(rows));
        let want = nested_tests(&groups, &y.values);
        for (g, w) in got.iter().zip(&want) {
            assert!((g.partial_r2 - w.partial_r2).abs() < 1e-10, "{}", g.component);
            assert!((g.f_stat - w.f_stat).abs() < 1e-9 * w.f_stat.max(1.0), "{}", g.component);
            assert!((g.p_value - w.p_value).abs() < 1e-10, "{}", g.component);
        }
    }
}

/// Scores for new samples by one joint least-squares solve over all blocks.
fn stacked_ls_prediction(model: &sjive::SJiveModel, blocks: &[M]) -> DVector<f64> {
    let k = model.k();
    let rj = model.ranks.joint;
    let widths: Vec<usize> = model.ranks.individual.clone();
    let cols = rj + widths.iter().sum::<usize>();
    let rows: usize = model.dims().iter().sum();
    let mut design = M::zeros(rows, cols);
    let mut stacked = M::zeros(rows, blocks[0].ncols());
    let mut r = 0;
    let mut c = rj;
    for i in 0..k {
        let p = model.dims()[i];
        design.view_mut((r, 0), (p, rj)).copy_from(&model.joint_loadings[i]);
        design.view_mut((r, c), (p, widths[i])).copy_from(&model.indiv_loadings[i]);
        stacked.rows_mut(r, p).copy_from(&blocks[i]);
        r += p;
        c += widths[i];
    }
    let scores = design.svd(true, true).solve(&stacked, 1e-14).unwrap();
    let th = model.theta.as_ref().unwrap();
    let mut coef = DVector::zeros(cols);
    coef.rows_mut(0, rj).copy_from(&th.joint);
    let mut c = rj;
    for i in 0..k {
        coef.rows_mut(c, widths[i]).copy_from(&th.individual[i]);
        c += widths[i];
    }
    scores.tr_mul(&coef)
}

#[test]
fn new_sample_scores_solve_the_stacked_least_squares_problem() {
    for seed in [2, 9] {
        let study = generate_study(&small(0.6, seed)).unwrap();
        let (model, _) = fit(&study.train, &study.train_y, &FitConfig::new(0.3, Ranks::new(1, vec![1, 2]))).unwrap();
        let est = estimate_scores(&model, &study.test).unwrap();
        assert!(est.converged);
        let got = predict_standardized(&model, &est).unwrap();
        let want = stacked_ls_prediction(&model, study.test.blocks());
        let scale = want.amax().max(1.0);
        assert!((got - want).amax() < 1e-6 * scale);
    }
}

#[test]
fn noiseless_data_is_recovered() {
    let study = generate_study(&SimConfig { y_err: 0.0, ..small(0.0, 6) }).unwrap();
    let (model, _) = fit(&study.train, &study.train_y, &FitConfig::new(0.5, Ranks::uniform(2, 1))).unwrap();
    let t = &study.truth;
    let rel = |a: &M, b: &M| (a - b).norm_squared() / b.norm_squared();
    assert!(rel(&model.joint_stacked(), &t.joint_stacked()) < 1e-10);
    for i in 0..2 {
        assert!(rel(&model.indiv_part(i), &t.indiv(i)) < 1e-10);
    }
    let pred = predict_standardized(&model, &estimate_scores(&model, &study.test).unwrap()).unwrap();
    assert!((pred - &study.test_y.values).norm_squared() / 25.0 < 1e-10);
}

#[test]
fn first_sweep_already_beats_the_zero_model() {
    let (data, y, _) = generate(&SimConfig { y_err: 0.0, ..small(0.0, 5) }).unwrap();
    let cfg = FitConfig::new(0.5, Ranks::uniform(2, 1));
    let (_, report) = fit(&data, &y, &cfg).unwrap();
    let zero: f64 = 0.5 * data.blocks().iter().map(|b| b.norm_squared()).sum::<f64>() + 0.5 * y.values.norm_squared();
    assert!(report.objective_trace[0] < zero);
    assert!(report.final_objective < 1e-20 * zero);
}
