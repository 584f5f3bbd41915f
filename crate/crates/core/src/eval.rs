//! Test error, structure recovery, per-component F-tests, meta-loadings and win rates.

use nalgebra::DVector;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, least_squares, Mat};
use crate::model::SJiveModel;

pub fn test_mse(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} outcomes vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Input("no test samples".into()));
    }
    Ok((y_true - y_pred).norm_squared() / y_true.len() as f64)
}

/// ‖est − truth‖²_F / ‖truth‖²_F.
pub fn recovery_error(estimated: &Mat, truth: &Mat) -> Result<f64> {
    if estimated.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "estimate is {:?}, truth is {:?}",
            estimated.shape(),
            truth.shape()
        )));
    }
    let denom = frobenius_sq(truth);
    if denom == 0.0 {
        return Err(Error::Degeneracy("true component is zero".into()));
    }
    Ok(frobenius_sq(&(estimated - truth)) / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTest {
    /// `joint` or `individual_<i>` (1-based).
    pub component: String,
    pub rank: usize,
    pub partial_r2: f64,
    pub f_stat: f64,
    pub p_value: f64,
    pub df1: usize,
    pub df2: usize,
}

/// Nested-model F-test of each component group in the regression of `y` on an
/// intercept and all score rows. Partial R² is `(SSE_without − SSE_full) / SST`.
/// Zero-rank groups report R² 0, F 0 and p 1.
pub fn component_inference(model: &SJiveModel, y: &DVector<f64>) -> Result<Vec<ComponentTest>> {
    let n = model.n();
    if y.len() != n {
        return Err(Error::Shape(format!("outcome has {} values, model has {n} samples", y.len())));
    }
    let total = model.ranks.total();
    if total + 1 >= n {
        return Err(Error::InferenceUnavailable(format!(
            "total rank {total} leaves no residual degrees of freedom with {n} samples"
        )));
    }
    let df2 = n - total - 1;
    let mut groups: Vec<(String, &Mat)> = vec![("joint".into(), &model.joint_scores)];
    for (i, s) in model.indiv_scores.iter().enumerate() {
        groups.push((format!("individual_{}", i + 1), s));
    }
    let design = |skip: Option<usize>| -> Mat {
        let cols: usize = 1 + groups
            .iter()
            .enumerate()
            .filter(|(g, _)| Some(*g) != skip)
            .map(|(_, (_, s))| s.nrows())
            .sum::<usize>();
        let mut d = Mat::zeros(n, cols);
        d.column_mut(0).fill(1.0);
        let mut c = 1;
        for (g, (_, s)) in groups.iter().enumerate() {
            if Some(g) == skip {
                continue;
            }
            for r in 0..s.nrows() {
                d.column_mut(c).copy_from(&s.row(r).transpose());
                c += 1;
            }
        }
        d
    };
    let sse = |d: &Mat| -> f64 {
        let beta = least_squares(d, y);
        (y - d * beta).norm_squared()
    };
    let sse_full = sse(&design(None));
    let mean = y.mean();
    let sst = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    groups
        .iter()
        .enumerate()
        .map(|(g, (name, s))| {
            let q = s.nrows();
            if q == 0 {
                return Ok(ComponentTest {
                    component: name.clone(),
                    rank: 0,
                    partial_r2: 0.0,
                    f_stat: 0.0,
                    p_value: 1.0,
                    df1: 0,
                    df2,
                });
            }
            let reduction = (sse(&design(Some(g))) - sse_full).max(0.0);
            let partial_r2 = if sst > 0.0 { (reduction / sst).min(1.0) } else { 0.0 };
            let (f_stat, p_value) = if sse_full > 0.0 {
                let f = (reduction / q as f64) / (sse_full / df2 as f64);
                let dist = FisherSnedecor::new(q as f64, df2 as f64)
                    .map_err(|e| Error::InferenceUnavailable(e.to_string()))?;
                (f, dist.sf(f).clamp(0.0, 1.0))
            } else if reduction > 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                (0.0, 1.0)
            };
            Ok(ComponentTest {
                component: name.clone(),
                rank: q,
                partial_r2,
                f_stat,
                p_value,
                df1: q,
                df2,
            })
        })
        .collect()
}

/// Per block, `U_i θ₁ + W_i θ₂ᵢ`.
pub fn meta_loadings(model: &SJiveModel) -> Result<Vec<DVector<f64>>> {
    let th = model.theta()?;
    Ok((0..model.k())
        .map(|i| &model.joint_loadings[i] * &th.joint + &model.indiv_loadings[i] * &th.individual[i])
        .collect())
}

/// Percentage of replicates in which each method has the lowest MSE. A tie
/// for the minimum splits that replicate equally among the tied methods.
/// `mses[rep][method]`.
pub fn win_rate(mses: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = mses.first() else {
        return Err(Error::Input("no replicates".into()));
    };
    let m = first.len();
    if m < 2 || mses.iter().any(|r| r.len() != m) {
        return Err(Error::Input("every replicate needs the same number (≥ 2) of methods".into()));
    }
    let mut wins = vec![0.0; m];
    for rep in mses {
        let min = rep.iter().copied().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = (0..m).filter(|&j| rep[j] == min).collect();
        for &j in &tied {
            wins[j] += 1.0 / tied.len() as f64;
        }
    }
    Ok(wins.iter().map(|w| 100.0 * w / mses.len() as f64).collect())
}

/// Summary of one fitted model against held-out data and, for simulations, the truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub test_mse: Option<f64>,
    /// (component, standardized squared Frobenius error).
    pub recovery: Vec<(String, f64)>,
    pub inference: Vec<ComponentTest>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficients, Ranks};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn seeded(m: usize, n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn model(n: usize, seed: u64, ranks: Ranks) -> SJiveModel {
        SJiveModel {
            eta: 0.5,
            joint_loadings: vec![seeded(6, ranks.joint, seed), seeded(5, ranks.joint, seed + 1)],
            joint_scores: seeded(ranks.joint, n, seed + 2),
            indiv_loadings: vec![seeded(6, ranks.individual[0], seed + 3), seeded(5, ranks.individual[1], seed + 4)],
            indiv_scores: vec![seeded(ranks.individual[0], n, seed + 5), seeded(ranks.individual[1], n, seed + 6)],
            theta: Some(Coefficients {
                joint: seeded(ranks.joint, 1, seed + 7).column(0).into_owned(),
                individual: vec![
                    seeded(ranks.individual[0], 1, seed + 8).column(0).into_owned(),
                    seeded(ranks.individual[1], 1, seed + 9).column(0).into_owned(),
                ],
            }),
            ranks,
            variable_ids: vec![],
            x_standardization: None,
            y_standardization: None,
            zero_components: vec![],
        }
    }

    #[test]
    fn mse_basics() {
        let y = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        assert_eq!(test_mse(&y, &y).unwrap(), 0.0);
        assert_close!(test_mse(&y, &DVector::zeros(3)).unwrap(), 2.0, 1e-15);
        assert!(test_mse(&y, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn recovery_basics() {
        let t = seeded(4, 5, 1);
        assert_eq!(recovery_error(&t, &t).unwrap(), 0.0);
        assert_close!(recovery_error(&Mat::zeros(4, 5), &t).unwrap(), 1.0, 1e-15);
        assert!(matches!(recovery_error(&t, &Mat::zeros(4, 5)), Err(Error::Degeneracy(_))));
        assert!(matches!(recovery_error(&t, &Mat::zeros(5, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn joint_only_outcome() {
        // fitted models have centered joint scores orthogonal to the individual ones
        let mut m = model(30, 2, Ranks::new(1, vec![1, 1]));
        let mean = m.joint_scores.mean();
        m.joint_scores.add_scalar_mut(-mean);
        let basis = crate::linalg::row_space_basis(&crate::linalg::vstack(&[&Mat::from_element(1, 30, 1.0), &m.joint_scores]));
        for s in m.indiv_scores.iter_mut() {
            *s = crate::linalg::project_out_rows(s, &basis);
        }
        let y = m.joint_scores.row(0).transpose() * 2.0;
        let tests = component_inference(&m, &y).unwrap();
        assert_close!(tests[0].partial_r2, 1.0, 1e-6);
        assert!(tests[1].partial_r2 < 1e-6 && tests[2].partial_r2 < 1e-6);
        assert_eq!(tests[0].df2, 30 - 3 - 1);
    }

    #[test]
    fn inference_unavailable_when_saturated() {
        let m = model(5, 3, Ranks::new(2, vec![1, 1]));
        let y = seeded(5, 1, 1).column(0).into_owned();
        assert!(matches!(component_inference(&m, &y), Err(Error::InferenceUnavailable(_))));
    }

    #[test]
    fn zero_rank_group_reported_as_null() {
        let m = model(20, 4, Ranks::new(1, vec![0, 2]));
        let y = seeded(20, 1, 2).column(0).into_owned();
        let tests = component_inference(&m, &y).unwrap();
        assert_eq!(tests[1].rank, 0);
        assert_eq!((tests[1].partial_r2, tests[1].f_stat, tests[1].p_value), (0.0, 0.0, 1.0));
        assert!(tests.iter().all(|t| (0.0..=1.0).contains(&t.p_value) && (0.0..=1.0).contains(&t.partial_r2)));
    }

    #[test]
    fn meta_loadings_cases() {
        let mut m = model(10, 5, Ranks::new(1, vec![1, 1]));
        m.theta = Some(Coefficients {
            joint: DVector::from_vec(vec![1.0]),
            individual: vec![DVector::zeros(1), DVector::zeros(1)],
        });
        let ml = meta_loadings(&m).unwrap();
        assert_eq!(ml[0], m.joint_loadings[0].column(0).into_owned());
        m.theta.as_mut().unwrap().joint[0] = 0.0;
        assert!(meta_loadings(&m).unwrap().iter().all(|v| v.iter().all(|x| *x == 0.0)));
        m.theta = None;
        assert!(meta_loadings(&m).is_err());
    }

    #[test]
    fn meta_loadings_scalar_oracle() {
        let m = model(10, 6, Ranks::new(2, vec![3, 1]));
        let th = m.theta.as_ref().unwrap();
        let ml = meta_loadings(&m).unwrap();
        for i in 0..2 {
            for r in 0..m.joint_loadings[i].nrows() {
                let mut v = 0.0;
                for c in 0..2 {
                    v += m.joint_loadings[i][(r, c)] * th.joint[c];
                }
                for c in 0..m.ranks.individual[i] {
                    v += m.indiv_loadings[i][(r, c)] * th.individual[i][c];
                }
                assert_close!(ml[i][r], v, 1e-12);
            }
        }
    }

    #[test]
    fn win_rates() {
        let always = vec![vec![0.1, 0.2], vec![0.3, 0.5]];
        assert_eq!(win_rate(&always).unwrap(), vec![100.0, 0.0]);
        let ties = vec![vec![0.2, 0.2], vec![0.4, 0.4]];
        assert_eq!(win_rate(&ties).unwrap(), vec![50.0, 50.0]);
        let mixed = vec![vec![0.1, 0.2, 0.1], vec![0.5, 0.4, 0.6], vec![0.3, 0.3, 0.3]];
        let w = win_rate(&mixed).unwrap();
        assert_close!(w.iter().sum::<f64>(), 100.0, 1e-12);
        assert!(win_rate(&[]).is_err());
        assert!(win_rate(&[vec![1.0]]).is_err());
    }
}
