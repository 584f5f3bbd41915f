//! Synthetic multi-source data with known joint, individual and outcome structure.
//!
//! Random draws come from ChaCha8 with one stream per purpose, so changing one
//! block's size does not perturb any other block's draws:
//!
//! | stream            | draws                                             |
//! |-------------------|---------------------------------------------------|
//! | `(1, 0)`          | joint loading drafts (column-major), then θ₁      |
//! | `(2, i)`          | block i individual loading drafts, then θ₂ᵢ       |
//! | `(3 + 8s, 0)`     | joint scores for split s (0 train, 1 test)        |
//! | `(4 + 8s, i)`     | block i individual scores                         |
//! | `(5 + 8s, i)`     | block i noise                                     |
//! | `(6 + 8s, 0)`     | outcome noise                                     |
//!
//! Scores and noise rows are centered, so the per-variable standardization at
//! the end is a pure rescaling and the returned truth reproduces the data exactly.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{moments, MultiSourceDataset, Outcome};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, project_out_rows, qr_orthonormalize, row_space_basis, svd_truncated, vstack, Mat};
use crate::model::{Coefficients, Ranks, SJiveModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub p: Vec<usize>,
    pub n: usize,
    /// Samples in the independent test split drawn with the same loadings.
    pub n_test: usize,
    pub ranks: Ranks,
    pub w_joint: f64,
    pub w_indiv: f64,
    /// Fraction of each block's variation that is noise, in [0, 1).
    pub x_err: f64,
    /// Fraction of the outcome's variation that is noise, in [0, 1).
    pub y_err: f64,
    /// Fraction of each component's ranks that carry outcome signal, in (0, 1].
    pub r_prop: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            p: vec![200, 200],
            n: 200,
            n_test: 200,
            ranks: Ranks::uniform(2, 1),
            w_joint: 1.0,
            w_indiv: 1.0,
            x_err: 0.9,
            y_err: 0.01,
            r_prop: 1.0,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() {
            return Err(Error::Config("at least one block is required".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if self.n_test == 1 {
            return Err(Error::Config("n_test must be 0 or at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.x_err) || !(0.0..1.0).contains(&self.y_err) {
            return Err(Error::Config(format!(
                "X_err and Y_err must lie in [0, 1), got {} and {}",
                self.x_err, self.y_err
            )));
        }
        if !(self.r_prop > 0.0 && self.r_prop <= 1.0) {
            return Err(Error::Config(format!("r_prop must lie in (0, 1], got {}", self.r_prop)));
        }
        if !(self.w_joint >= 0.0 && self.w_indiv >= 0.0) {
            return Err(Error::Config("signal weights must be nonnegative".into()));
        }
        self.ranks.validate(self.n, &self.p)
    }
}

/// Ground truth of a generated dataset, on the standardized scale of the
/// returned training data.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub ranks: Ranks,
    pub joint_loadings: Vec<Mat>,
    pub joint_scores: Mat,
    pub indiv_loadings: Vec<Mat>,
    pub indiv_scores: Vec<Mat>,
    pub theta: Coefficients,
    pub noise: Vec<Mat>,
    pub outcome_noise: DVector<f64>,
}

impl SimTruth {
    pub fn k(&self) -> usize {
        self.joint_loadings.len()
    }

    /// J_i = U_i S_J.
    pub fn joint(&self, i: usize) -> Mat {
        &self.joint_loadings[i] * &self.joint_scores
    }

    /// A_i = W_i S_i.
    pub fn indiv(&self, i: usize) -> Mat {
        &self.indiv_loadings[i] * &self.indiv_scores[i]
    }

    pub fn joint_stacked(&self) -> Mat {
        let parts: Vec<Mat> = (0..self.k()).map(|i| self.joint(i)).collect();
        vstack(&parts.iter().collect::<Vec<_>>())
    }

    /// Stacked signal `[J_1 + A_1; …; J_k + A_k]`.
    pub fn signal_stacked(&self) -> Mat {
        let parts: Vec<Mat> = (0..self.k()).map(|i| self.joint(i) + self.indiv(i)).collect();
        vstack(&parts.iter().collect::<Vec<_>>())
    }

    /// j_y = θ₁ S_J.
    pub fn outcome_joint(&self) -> DVector<f64> {
        self.joint_scores.tr_mul(&self.theta.joint)
    }

    /// a_y = Σ θ₂ᵢ S_i.
    pub fn outcome_indiv(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.joint_scores.ncols());
        for (s, t) in self.indiv_scores.iter().zip(&self.theta.individual) {
            acc += s.tr_mul(t);
        }
        acc
    }

    /// The truth as a fitted model, e.g. to evaluate the objective at it.
    pub fn as_model(&self, eta: f64, data: &MultiSourceDataset) -> SJiveModel {
        SJiveModel {
            eta,
            ranks: self.ranks.clone(),
            joint_loadings: self.joint_loadings.clone(),
            joint_scores: self.joint_scores.clone(),
            indiv_loadings: self.indiv_loadings.clone(),
            indiv_scores: self.indiv_scores.clone(),
            theta: Some(self.theta.clone()),
            variable_ids: data.variable_ids().to_vec(),
            x_standardization: None,
            y_standardization: None,
            zero_components: Vec::new(),
        }
    }
}

/// A training set with its truth plus an independent test set sharing the
/// loadings, coefficients, noise levels and training scale factors.
#[derive(Debug, Clone)]
pub struct SimStudy {
    pub train: MultiSourceDataset,
    pub train_y: Outcome,
    pub test: MultiSourceDataset,
    pub test_y: Outcome,
    pub truth: SimTruth,
}

fn stream(seed: u64, purpose: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | index as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Mat {
    // filled column-major
    Mat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn center_rows(a: &mut Mat) {
    for mut row in a.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
}

/// Draws `[loadings; θ]` (rows+1 × r) and orthonormalizes it by QR. The
/// orthonormalization mixes columns, so θ entries zeroed in the draft are
/// generally nonzero afterwards.
fn draw_loadings(rng: &mut ChaCha8Rng, rows: usize, r: usize, r_prop: f64) -> Result<(Mat, DVector<f64>)> {
    if r == 0 {
        return Ok((Mat::zeros(rows, 0), DVector::zeros(0)));
    }
    let q = qr_orthonormalize(&draft_loadings(rng, rows, r, r_prop))?;
    let theta = q.row(rows).transpose();
    Ok((q.rows(0, rows).into_owned(), theta))
}

/// uniform(0.5, 1) entries; θ entries beyond `ceil(r_prop · r)` are zero.
fn draft_loadings(rng: &mut ChaCha8Rng, rows: usize, r: usize, r_prop: f64) -> Mat {
    let mut draft = Mat::zeros(rows + 1, r);
    for j in 0..r {
        for i in 0..rows {
            draft[(i, j)] = rng.random_range(0.5..1.0);
        }
    }
    let predictive = (r_prop * r as f64).ceil() as usize;
    for j in 0..r {
        let v: f64 = rng.random_range(0.5..1.0);
        draft[(rows, j)] = if j < predictive { v } else { 0.0 };
    }
    draft
}

struct Scores {
    joint: Mat,
    indiv: Vec<Mat>,
}

fn draw_scores(cfg: &SimConfig, split: u64, n: usize) -> Scores {
    let mut rng = stream(cfg.seed, 3 + 8 * split, 0);
    let mut joint = normal(&mut rng, cfg.ranks.joint, n) * cfg.w_joint;
    center_rows(&mut joint);
    let basis = row_space_basis(&joint);
    let indiv = cfg
        .ranks
        .individual
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut rng = stream(cfg.seed, 4 + 8 * split, i);
            let raw = normal(&mut rng, r, n) * cfg.w_indiv;
            let mut s = project_out_rows(&raw, &basis);
            // centering keeps orthogonality because the joint rows are centered
            center_rows(&mut s);
            s
        })
        .collect();
    Scores { joint, indiv }
}

/// Smallest c ≥ 0 with ‖cE‖² = frac · ‖S + cE‖².
fn noise_scale(signal_sq: f64, noise_sq: f64, cross: f64, frac: f64) -> f64 {
    if frac == 0.0 || noise_sq == 0.0 {
        return 0.0;
    }
    let a = (1.0 - frac) * noise_sq;
    let b = -2.0 * frac * cross;
    let c = -frac * signal_sq;
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

struct Split {
    signal: Vec<Mat>,
    noise: Vec<Mat>,
    y_signal: DVector<f64>,
    y_noise: DVector<f64>,
}

fn assemble(
    cfg: &SimConfig,
    split: u64,
    scores: &Scores,
    u: &[Mat],
    w: &[Mat],
    theta: &Coefficients,
) -> Split {
    let n = scores.joint.ncols();
    let signal: Vec<Mat> = (0..cfg.k())
        .map(|i| &u[i] * &scores.joint + &w[i] * &scores.indiv[i])
        .collect();
    let noise = (0..cfg.k())
        .map(|i| {
            let mut rng = stream(cfg.seed, 5 + 8 * split, i);
            let mut e = normal(&mut rng, cfg.p[i], n);
            center_rows(&mut e);
            e
        })
        .collect();
    let mut y_signal = scores.joint.tr_mul(&theta.joint);
    for (s, t) in scores.indiv.iter().zip(&theta.individual) {
        y_signal += s.tr_mul(t);
    }
    let mut rng = stream(cfg.seed, 6 + 8 * split, 0);
    let mut y_noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mean = y_noise.mean();
    y_noise.add_scalar_mut(-mean);
    Split {
        signal,
        noise,
        y_signal,
        y_noise,
    }
}

fn rows_scale(a: &Mat, inv_sd: &[f64]) -> Mat {
    let mut out = a.clone();
    for (mut row, s) in out.row_iter_mut().zip(inv_sd) {
        row *= *s;
    }
    out
}

/// Generates the training data, outcome and truth.
pub fn generate(cfg: &SimConfig) -> Result<(MultiSourceDataset, Outcome, SimTruth)> {
    let study = build(cfg, false)?;
    Ok((study.train, study.train_y, study.truth))
}

/// Generates training data, truth, and an independent test split of `n_test` samples.
pub fn generate_study(cfg: &SimConfig) -> Result<SimStudy> {
    if cfg.n_test < 2 {
        return Err(Error::Config("n_test must be at least 2 for a test split".into()));
    }
    build(cfg, true)
}

fn build(cfg: &SimConfig, with_test: bool) -> Result<SimStudy> {
    cfg.validate()?;
    let k = cfg.k();
    let mut rng = stream(cfg.seed, 1, 0);
    let p_total: usize = cfg.p.iter().sum();
    let (joint_stack, theta_joint) = draw_loadings(&mut rng, p_total, cfg.ranks.joint, cfg.r_prop)?;
    let mut u = Vec::with_capacity(k);
    let mut at = 0;
    for &p in &cfg.p {
        u.push(joint_stack.rows(at, p).into_owned());
        at += p;
    }
    let mut w = Vec::with_capacity(k);
    let mut theta_indiv = Vec::with_capacity(k);
    for i in 0..k {
        let mut rng = stream(cfg.seed, 2, i);
        let (wi, ti) = draw_loadings(&mut rng, cfg.p[i], cfg.ranks.individual[i], cfg.r_prop)?;
        w.push(wi);
        theta_indiv.push(ti);
    }
    let theta = Coefficients {
        joint: theta_joint,
        individual: theta_indiv,
    };

    let scores = draw_scores(cfg, 0, cfg.n);
    let train = assemble(cfg, 0, &scores, &u, &w, &theta);

    // noise levels are fixed on the training split and reused for the test split
    let mut x_scale = Vec::with_capacity(k);
    for i in 0..k {
        let s = &train.signal[i];
        if frobenius_sq(s) == 0.0 {
            return Err(Error::Config(format!("block {} has no signal", i + 1)));
        }
        let e = &train.noise[i];
        x_scale.push(noise_scale(frobenius_sq(s), frobenius_sq(e), s.dot(e), cfg.x_err));
    }
    if train.y_signal.norm_squared() == 0.0 {
        return Err(Error::Config(
            "outcome has no signal: no predictive ranks or zero signal weights".into(),
        ));
    }
    let y_scale = noise_scale(
        train.y_signal.norm_squared(),
        train.y_noise.norm_squared(),
        train.y_signal.dot(&train.y_noise),
        cfg.y_err,
    );

    // per-variable unit variance from the training split
    let raw_x: Vec<Mat> = (0..k).map(|i| &train.signal[i] + &train.noise[i] * x_scale[i]).collect();
    let inv_sd: Vec<Vec<f64>> = raw_x
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.row_iter()
                .enumerate()
                .map(|(j, row)| {
                    let sd = moments(row.iter().copied()).sd;
                    if sd > 0.0 {
                        Ok(1.0 / sd)
                    } else {
                        Err(Error::Config(format!(
                            "block {} variable {} is constant; increase noise or signal",
                            i + 1,
                            j + 1
                        )))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let raw_y = &train.y_signal + &train.y_noise * y_scale;
    let y_inv_sd = 1.0 / moments(raw_y.iter().copied()).sd;

    let mut truth = SimTruth {
        ranks: cfg.ranks.clone(),
        joint_loadings: (0..k).map(|i| rows_scale(&u[i], &inv_sd[i])).collect(),
        joint_scores: scores.joint.clone(),
        indiv_loadings: (0..k).map(|i| rows_scale(&w[i], &inv_sd[i])).collect(),
        indiv_scores: scores.indiv.clone(),
        theta: Coefficients {
            joint: &theta.joint * y_inv_sd,
            individual: theta.individual.iter().map(|t| t * y_inv_sd).collect(),
        },
        noise: (0..k)
            .map(|i| rows_scale(&(&train.noise[i] * x_scale[i]), &inv_sd[i]))
            .collect(),
        outcome_noise: &train.y_noise * (y_scale * y_inv_sd),
    };
    normalize_truth(&mut truth);

    let x_blocks: Vec<Mat> = (0..k).map(|i| rows_scale(&raw_x[i], &inv_sd[i])).collect();
    let train_data = MultiSourceDataset::from_blocks(x_blocks)?;
    let train_y = Outcome::new(raw_y * y_inv_sd)?;

    let (test, test_y) = if with_test {
        let ts = draw_scores(cfg, 1, cfg.n_test);
        let split = assemble(cfg, 1, &ts, &u, &w, &theta);
        let blocks: Vec<Mat> = (0..k)
            .map(|i| rows_scale(&(&split.signal[i] + &split.noise[i] * x_scale[i]), &inv_sd[i]))
            .collect();
        let y = (&split.y_signal + &split.y_noise * y_scale) * y_inv_sd;
        (MultiSourceDataset::from_blocks(blocks)?, Outcome::new(y)?)
    } else {
        (train_data.select_samples(&[]), train_y.select(&[]))
    };
    Ok(SimStudy {
        train: train_data,
        train_y,
        test,
        test_y,
        truth,
    })
}

/// Unit Frobenius norm for `[U; θ₁]` and each `[W_i; θ₂ᵢ]`, scores absorbing the scale.
fn normalize_truth(t: &mut SimTruth) {
    if t.ranks.joint > 0 {
        let norm = (t.joint_loadings.iter().map(frobenius_sq).sum::<f64>() + t.theta.joint.norm_squared()).sqrt();
        if norm > 0.0 {
            t.joint_loadings.iter_mut().for_each(|u| *u /= norm);
            t.theta.joint /= norm;
            t.joint_scores *= norm;
        }
    }
    for i in 0..t.k() {
        if t.ranks.individual[i] == 0 {
            continue;
        }
        let norm = (frobenius_sq(&t.indiv_loadings[i]) + t.theta.individual[i].norm_squared()).sqrt();
        if norm > 0.0 {
            t.indiv_loadings[i] /= norm;
            t.theta.individual[i] /= norm;
            t.indiv_scores[i] *= norm;
        }
    }
}

/// Leading singular values of the signal components and of the noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenReport {
    /// Largest over the stacked joint structure J and each individual A_i.
    pub signal: f64,
    /// Largest over the per-block noise matrices E_i.
    pub noise: f64,
}

pub fn eigen_signal_report(truth: &SimTruth) -> Result<EigenReport> {
    let mut signal = top_singular_value(&truth.joint_stacked())?;
    for i in 0..truth.k() {
        signal = signal.max(top_singular_value(&truth.indiv(i))?);
    }
    let mut noise = 0.0f64;
    for e in &truth.noise {
        noise = noise.max(top_singular_value(e)?);
    }
    Ok(EigenReport { signal, noise })
}

fn top_singular_value(a: &Mat) -> Result<f64> {
    if a.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(svd_truncated(a, 1)?.singvals[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::objective;

    fn small(x_err: f64, y_err: f64, seed: u64) -> SimConfig {
        SimConfig {
            p: vec![30, 20],
            n: 40,
            n_test: 40,
            ranks: Ranks::new(2, vec![1, 2]),
            x_err,
            y_err,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn noiseless_truth_has_zero_objective() {
        let (data, y, truth) = generate(&small(0.0, 0.0, 3)).unwrap();
        assert!(truth.noise.iter().all(|e| e.iter().all(|v| *v == 0.0)));
        assert!(truth.outcome_noise.iter().all(|v| *v == 0.0));
        let m = truth.as_model(0.5, &data);
        let obj = objective(&data, &y, &m).unwrap();
        assert!(obj < 1e-20 * frobenius_sq(&data.stacked()), "objective {obj}");
    }

    #[test]
    fn truth_reproduces_noisy_data() {
        let (data, y, truth) = generate(&small(0.4, 0.2, 4)).unwrap();
        for i in 0..2 {
            let rebuilt = truth.joint(i) + truth.indiv(i) + &truth.noise[i];
            assert!((rebuilt - data.block(i)).amax() < 1e-12);
        }
        let y_rebuilt = truth.outcome_joint() + truth.outcome_indiv() + &truth.outcome_noise;
        assert!((y_rebuilt - &y.values).amax() < 1e-12);
    }

    #[test]
    fn realized_noise_fraction() {
        let cfg = SimConfig {
            p: vec![100, 100],
            n: 100,
            x_err: 0.5,
            y_err: 0.3,
            ..SimConfig::default()
        };
        let (data, y, truth) = generate(&cfg).unwrap();
        for i in 0..2 {
            let ratio = frobenius_sq(&truth.noise[i]) / frobenius_sq(data.block(i));
            assert!((ratio - 0.5).abs() < 0.02, "ratio {ratio}");
        }
        let ry = truth.outcome_noise.norm_squared() / y.values.norm_squared();
        assert!((ry - 0.3).abs() < 0.02, "outcome ratio {ry}");
    }

    #[test]
    fn structural_invariants() {
        let (data, y, truth) = generate(&small(0.3, 0.1, 5)).unwrap();
        for i in 0..2 {
            assert!((&truth.joint_scores * truth.indiv_scores[i].transpose()).amax() < 1e-10);
            let n = frobenius_sq(&truth.indiv_loadings[i]) + truth.theta.individual[i].norm_squared();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let n = truth.joint_loadings.iter().map(frobenius_sq).sum::<f64>() + truth.theta.joint.norm_squared();
        assert!((n - 1.0).abs() < 1e-12);
        // unit variance per variable
        for row in data.stacked().row_iter() {
            let m = moments(row.iter().copied());
            assert!(m.mean.abs() < 1e-12 && (m.sd - 1.0).abs() < 1e-12);
        }
        let m = moments(y.values.iter().copied());
        assert!((m.sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qr_loadings_orthonormal_before_scaling() {
        let mut rng = stream(9, 1, 0);
        let (l, t) = draw_loadings(&mut rng, 12, 3, 1.0).unwrap();
        let stacked = vstack(&[&l, &Mat::from_row_slice(1, 3, t.as_slice())]);
        assert!((stacked.transpose() * &stacked - Mat::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn r_prop_zeroes_trailing_draft_coefficients() {
        let mut rng = stream(3, 1, 0);
        let d = draft_loadings(&mut rng, 10, 4, 0.25);
        assert!(d[(10, 0)] >= 0.5);
        assert!((1..4).all(|j| d[(10, j)] == 0.0));
        assert!(d.rows(0, 10).iter().all(|v| (0.5..1.0).contains(v)));
        let mut rng = stream(3, 1, 0);
        let d = draft_loadings(&mut rng, 10, 4, 0.3);
        assert!(d[(10, 1)] > 0.0 && d[(10, 2)] == 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_study(&small(0.5, 0.5, 11)).unwrap();
        let b = generate_study(&small(0.5, 0.5, 11)).unwrap();
        assert_eq!(a.train.stacked(), b.train.stacked());
        assert_eq!(a.test.stacked(), b.test.stacked());
        assert_eq!(a.test_y.values, b.test_y.values);
        let c = generate_study(&small(0.5, 0.5, 12)).unwrap();
        assert_ne!(a.train.stacked(), c.train.stacked());
    }

    #[test]
    fn config_errors() {
        let mut cfg = small(1.0, 0.1, 1);
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        cfg.x_err = 0.1;
        cfg.ranks = Ranks::zeros(2);
        assert!(generate(&cfg).is_err());
        cfg.ranks = Ranks::new(1, vec![1, 1]);
        cfg.r_prop = 0.0;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn eigen_report_zero_noise() {
        let (_, _, truth) = generate(&small(0.0, 0.1, 2)).unwrap();
        let r = eigen_signal_report(&truth).unwrap();
        assert_eq!(r.noise, 0.0);
        assert!(r.signal > 0.0);
    }
}
