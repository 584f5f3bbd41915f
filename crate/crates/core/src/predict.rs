//! Out-of-sample scores and outcome predictions with the fitted loadings held fixed.

use nalgebra::DVector;

use crate::data::MultiSourceDataset;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, pinv, vstack, Mat};
use crate::model::SJiveModel;

/// Relative change in the scores between alternations that ends the loop.
pub const SCORE_TOL: f64 = 1e-10;
pub const SCORE_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEstimate {
    /// r_J × m.
    pub joint_scores: Mat,
    /// r_i × m per block.
    pub indiv_scores: Vec<Mat>,
    pub iterations: usize,
    pub converged: bool,
}

impl ScoreEstimate {
    pub fn m(&self) -> usize {
        self.joint_scores.ncols()
    }
}

/// Per-sample outcome contributions θ₁Ŝ_J and θ₂ᵢŜ_i on the standardized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Contributions {
    pub joint: DVector<f64>,
    pub individual: Vec<DVector<f64>>,
}

impl Contributions {
    pub fn total(&self) -> DVector<f64> {
        let mut t = self.joint.clone();
        for c in &self.individual {
            t += c;
        }
        t
    }
}

fn check_blocks(model: &SJiveModel, data: &MultiSourceDataset) -> Result<()> {
    if data.k() != model.k() {
        return Err(Error::Shape(format!(
            "model has {} blocks, new data has {}",
            model.k(),
            data.k()
        )));
    }
    for i in 0..model.k() {
        if data.p(i) != model.joint_loadings[i].nrows() {
            return Err(Error::Shape(format!(
                "block {} has {} variables, model expects {}",
                i + 1,
                data.p(i),
                model.joint_loadings[i].nrows()
            )));
        }
    }
    if data.n() == 0 {
        return Err(Error::Shape("new data has no samples".into()));
    }
    Ok(())
}

/// Minimizes `Σ‖X*_i − U_i S_J − W_i S_i‖²` over the scores by alternating
/// exact least-squares updates, starting from `S_i = 0`. `new_data` must be
/// on the training scale. After the identifiability rescaling the loadings are
/// no longer orthonormal, so the updates use `(UᵀU)⁺Uᵀ` rather than `Uᵀ`.
pub fn estimate_scores(model: &SJiveModel, new_data: &MultiSourceDataset) -> Result<ScoreEstimate> {
    check_blocks(model, new_data)?;
    let k = model.k();
    let m = new_data.n();
    let u_refs: Vec<&Mat> = model.joint_loadings.iter().collect();
    let u_pinv = pinv(&vstack(&u_refs));
    let w_pinv: Vec<Mat> = model.indiv_loadings.iter().map(pinv).collect();
    let x_star = new_data.stacked();

    let mut s_j = Mat::zeros(model.ranks.joint, m);
    let mut s_i: Vec<Mat> = model.ranks.individual.iter().map(|&r| Mat::zeros(r, m)).collect();
    let residual = |s_j: &Mat, s_i: &[Mat]| -> f64 {
        (0..k)
            .map(|i| {
                frobenius_sq(&(new_data.block(i) - &model.joint_loadings[i] * s_j - &model.indiv_loadings[i] * &s_i[i]))
            })
            .sum()
    };
    let start = residual(&s_j, &s_i);
    let floor = 1e-28 * frobenius_sq(&x_star).max(f64::MIN_POSITIVE);
    let mut converged = start <= floor;
    let mut best = (start, s_j.clone(), s_i.clone());
    let mut iterations = 0;
    while !converged && iterations < SCORE_MAX_ITER {
        iterations += 1;
        // joint step on X* − W S
        let mut target = x_star.clone();
        let mut row = 0;
        for i in 0..k {
            let p = new_data.p(i);
            let mut part = target.rows_mut(row, p);
            part -= &model.indiv_loadings[i] * &s_i[i];
            row += p;
        }
        let next_j = &u_pinv * target;
        let mut change = frobenius_sq(&(&next_j - &s_j));
        s_j = next_j;
        for i in 0..k {
            let next = &w_pinv[i] * (new_data.block(i) - &model.joint_loadings[i] * &s_j);
            change += frobenius_sq(&(&next - &s_i[i]));
            s_i[i] = next;
        }
        let size = frobenius_sq(&s_j) + s_i.iter().map(frobenius_sq).sum::<f64>();
        let cur = residual(&s_j, &s_i);
        if cur <= best.0 {
            best = (cur, s_j.clone(), s_i.clone());
        }
        converged = cur <= floor || change <= SCORE_TOL * SCORE_TOL * size;
    }
    if !converged {
        log::warn!("score estimation did not converge in {SCORE_MAX_ITER} alternations");
    }
    let (_, joint_scores, indiv_scores) = best;
    Ok(ScoreEstimate {
        joint_scores,
        indiv_scores,
        iterations,
        converged,
    })
}

fn check_scores(model: &SJiveModel, scores: &ScoreEstimate) -> Result<()> {
    let bad_joint = scores.joint_scores.nrows() != model.ranks.joint;
    let bad_indiv = scores.indiv_scores.len() != model.k()
        || scores
            .indiv_scores
            .iter()
            .zip(&model.ranks.individual)
            .any(|(s, &r)| s.nrows() != r || s.ncols() != scores.m());
    if bad_joint || bad_indiv {
        return Err(Error::Shape(format!(
            "score dimensions do not match model ranks {}",
            model.ranks
        )));
    }
    Ok(())
}

pub fn contributions(model: &SJiveModel, scores: &ScoreEstimate) -> Result<Contributions> {
    check_scores(model, scores)?;
    let th = model.theta()?;
    Ok(Contributions {
        joint: scores.joint_scores.tr_mul(&th.joint),
        individual: scores
            .indiv_scores
            .iter()
            .zip(&th.individual)
            .map(|(s, t)| s.tr_mul(t))
            .collect(),
    })
}

/// ŷ* = θ₁Ŝ_J + Σθ₂ᵢŜ_i on the standardized outcome scale.
pub fn predict_standardized(model: &SJiveModel, scores: &ScoreEstimate) -> Result<DVector<f64>> {
    Ok(contributions(model, scores)?.total())
}

/// Predictions on the raw outcome scale (training mean and sd restored).
pub fn predict(model: &SJiveModel, scores: &ScoreEstimate) -> Result<DVector<f64>> {
    let z = predict_standardized(model, scores)?;
    Ok(match &model.y_standardization {
        Some(m) => z.map(|v| v * m.sd + m.mean),
        None => z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Moments, Outcome};
    use crate::model::{fit, Coefficients, FitConfig, Ranks};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn seeded(m: usize, n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn fitted(seed: u64) -> (MultiSourceDataset, SJiveModel) {
        let n = 30;
        let sj = seeded(1, n, seed);
        let x1 = seeded(10, 1, seed + 1) * &sj + seeded(10, 1, seed + 2) * seeded(1, n, seed + 3) + seeded(10, n, seed + 4) * 0.2;
        let x2 = seeded(8, 1, seed + 5) * &sj + seeded(8, 1, seed + 6) * seeded(1, n, seed + 7) + seeded(8, n, seed + 8) * 0.2;
        let data = MultiSourceDataset::from_blocks(vec![x1, x2]).unwrap();
        let y = Outcome::new(sj.row(0).transpose() + seeded(n, 1, seed + 9).column(0) * 0.3).unwrap();
        let (m, _) = fit(&data, &y, &FitConfig::new(0.5, Ranks::uniform(2, 1))).unwrap();
        (data, m)
    }

    #[test]
    fn zero_input_gives_zero_scores() {
        let (data, m) = fitted(1);
        let zero = MultiSourceDataset::from_blocks(vec![Mat::zeros(10, 4), Mat::zeros(8, 4)]).unwrap();
        let s = estimate_scores(&m, &zero).unwrap();
        assert!(s.converged);
        assert!(s.joint_scores.iter().chain(s.indiv_scores.iter().flat_map(|x| x.iter())).all(|v| *v == 0.0));
        assert_eq!(data.k(), 2);
    }

    #[test]
    fn alternation_decreases_reconstruction_error() {
        let (data, m) = fitted(2);
        let s = estimate_scores(&m, &data).unwrap();
        let err = |sj: &Mat, si: &[Mat]| -> f64 {
            (0..2)
                .map(|i| frobenius_sq(&(data.block(i) - &m.joint_loadings[i] * sj - &m.indiv_loadings[i] * &si[i])))
                .sum()
        };
        // the fitted training scores are one feasible point; the estimate cannot be worse
        assert!(err(&s.joint_scores, &s.indiv_scores) <= err(&m.joint_scores, &m.indiv_scores) * (1.0 + 1e-9));
    }

    #[test]
    fn shape_errors() {
        let (_, m) = fitted(3);
        let wrong = MultiSourceDataset::from_blocks(vec![Mat::zeros(9, 4), Mat::zeros(8, 4)]).unwrap();
        assert!(matches!(estimate_scores(&m, &wrong), Err(Error::Shape(_))));
        let one = MultiSourceDataset::from_blocks(vec![Mat::zeros(10, 4)]).unwrap();
        assert!(matches!(estimate_scores(&m, &one), Err(Error::Shape(_))));
        let bad = ScoreEstimate {
            joint_scores: Mat::zeros(2, 3),
            indiv_scores: vec![Mat::zeros(1, 3), Mat::zeros(1, 3)],
            iterations: 0,
            converged: true,
        };
        assert!(matches!(predict(&m, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_scores_predict_training_mean() {
        let (_, mut m) = fitted(4);
        m.y_standardization = Some(Moments { mean: 3.5, sd: 2.0 });
        let s = ScoreEstimate {
            joint_scores: Mat::zeros(1, 3),
            indiv_scores: vec![Mat::zeros(1, 3), Mat::zeros(1, 3)],
            iterations: 0,
            converged: true,
        };
        assert!(predict(&m, &s).unwrap().iter().all(|v| *v == 3.5));
    }

    #[test]
    fn zero_theta_predicts_constant() {
        let (data, mut m) = fitted(5);
        m.theta = Some(Coefficients {
            joint: DVector::zeros(1),
            individual: vec![DVector::zeros(1), DVector::zeros(1)],
        });
        m.y_standardization = Some(Moments { mean: -1.0, sd: 4.0 });
        let s = estimate_scores(&m, &data).unwrap();
        assert!(predict(&m, &s).unwrap().iter().all(|v| *v == -1.0));
    }

    #[test]
    fn predictions_follow_column_permutation() {
        let (data, m) = fitted(6);
        let order: Vec<usize> = (0..data.n()).rev().collect();
        let a = predict(&m, &estimate_scores(&m, &data).unwrap()).unwrap();
        let b = predict(&m, &estimate_scores(&m, &data.select_samples(&order)).unwrap()).unwrap();
        for (j, &o) in order.iter().enumerate() {
            assert_close!(b[j], a[o], 1e-9);
        }
    }
}
