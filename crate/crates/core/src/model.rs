//! The supervised JIVE fit: alternating joint / individual low-rank updates on
//! the weighted stack of data blocks and outcome, followed by the
//! identifiability rescaling.
//!
//! All iterations run on the weighted quantities `X̃_i = √η X_i`,
//! `ỹ = √(1−η) y`, `[Ũ; θ̃₁]`, `[W̃_i; θ̃₂ᵢ]`. Each joint step takes the leading
//! `r_J` left singular vectors of the stacked residual and sets the scores to
//! their projection; each individual step does the same for one block after
//! removing the joint row space. Weights are divided back out once the loop
//! stops.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::data::{compress, decompress_loadings, CompressedBlock, Moments, MultiSourceDataset, Outcome, Standardization};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, least_squares, project_out_rows, row_space_basis, Mat, TruncatedSvd};

/// Joint rank and one individual rank per block. Zero means the component is absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranks {
    pub joint: usize,
    pub individual: Vec<usize>,
}

impl Ranks {
    pub fn new(joint: usize, individual: Vec<usize>) -> Self {
        Ranks { joint, individual }
    }

    pub fn zeros(k: usize) -> Self {
        Ranks {
            joint: 0,
            individual: vec![0; k],
        }
    }

    pub fn uniform(k: usize, r: usize) -> Self {
        Ranks {
            joint: r,
            individual: vec![r; k],
        }
    }

    pub fn total(&self) -> usize {
        self.joint + self.individual.iter().sum::<usize>()
    }

    /// Checks `r_J <= min(n, p_1..p_k)` and `r_i <= min(n, p_i)`.
    pub fn validate(&self, n: usize, dims: &[usize]) -> Result<()> {
        if self.individual.len() != dims.len() {
            return Err(Error::Rank(format!(
                "{} individual ranks given for {} blocks",
                self.individual.len(),
                dims.len()
            )));
        }
        let jmax = dims.iter().copied().fold(n, usize::min);
        if self.joint > jmax {
            return Err(Error::Rank(format!(
                "joint rank {} exceeds min(n, p_1..p_k) = {jmax}",
                self.joint
            )));
        }
        for (i, (&r, &p)) in self.individual.iter().zip(dims).enumerate() {
            if r > n.min(p) {
                return Err(Error::Rank(format!(
                    "individual rank {r} for block {} exceeds min(n, p_i) = {}",
                    i + 1,
                    n.min(p)
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Ranks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.joint)?;
        for r in &self.individual {
            write!(f, ",{r}")?;
        }
        Ok(())
    }
}

impl FromStr for Ranks {
    type Err = Error;

    /// Parses `rJ,r1,...,rk`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad rank '{t}' in '{s}'")))
            })
            .collect::<Result<_>>()?;
        if parts.len() < 2 {
            return Err(Error::Config(format!(
                "ranks need a joint rank and at least one individual rank, got '{s}'"
            )));
        }
        Ok(Ranks::new(parts[0], parts[1..].to_vec()))
    }
}

/// When to replace a block by its n-dimensional SVD scores before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compression {
    /// Compress blocks with more variables than samples.
    #[default]
    Auto,
    Never,
    Always,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub eta: f64,
    pub ranks: Ranks,
    pub max_iter: usize,
    /// Relative objective change that ends the loop.
    pub tol: f64,
    pub seed: u64,
    pub compression: Compression,
}

impl FitConfig {
    pub fn new(eta: f64, ranks: Ranks) -> Self {
        FitConfig {
            eta,
            ranks,
            max_iter: 1000,
            tol: 1e-6,
            seed: 1,
            compression: Compression::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Regression coefficients of the outcome on the joint and individual scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub joint: DVector<f64>,
    pub individual: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SJiveModel {
    pub eta: f64,
    pub ranks: Ranks,
    /// U_i, p_i × r_J.
    pub joint_loadings: Vec<Mat>,
    /// S_J, r_J × n.
    pub joint_scores: Mat,
    /// W_i, p_i × r_i.
    pub indiv_loadings: Vec<Mat>,
    /// S_i, r_i × n.
    pub indiv_scores: Vec<Mat>,
    /// `None` for an unsupervised (JIVE) fit.
    pub theta: Option<Coefficients>,
    pub variable_ids: Vec<Vec<String>>,
    pub x_standardization: Option<Standardization>,
    pub y_standardization: Option<Moments>,
    /// Components whose stacked loading block was entirely zero at rescaling.
    pub zero_components: Vec<String>,
}

impl SJiveModel {
    pub fn k(&self) -> usize {
        self.joint_loadings.len()
    }

    pub fn n(&self) -> usize {
        self.joint_scores.ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.joint_loadings.iter().map(|u| u.nrows()).collect()
    }

    /// J_i = U_i S_J.
    pub fn joint_part(&self, i: usize) -> Mat {
        &self.joint_loadings[i] * &self.joint_scores
    }

    /// A_i = W_i S_i.
    pub fn indiv_part(&self, i: usize) -> Mat {
        &self.indiv_loadings[i] * &self.indiv_scores[i]
    }

    /// Stacked joint structure `[J_1; …; J_k]`.
    pub fn joint_stacked(&self) -> Mat {
        let parts: Vec<Mat> = (0..self.k()).map(|i| self.joint_part(i)).collect();
        let refs: Vec<&Mat> = parts.iter().collect();
        crate::linalg::vstack(&refs)
    }

    pub fn theta(&self) -> Result<&Coefficients> {
        self.theta.as_ref().ok_or_else(|| {
            Error::Input(
                "model has no outcome coefficients (unsupervised JIVE fit); use fit_jive_predict".into(),
            )
        })
    }

    /// θ₁ S_J + Σ θ₂ᵢ S_i on the standardized outcome scale.
    pub fn fitted_outcome(&self) -> Result<DVector<f64>> {
        let th = self.theta()?;
        let mut out = self.joint_scores.tr_mul(&th.joint);
        for (s, t) in self.indiv_scores.iter().zip(&th.individual) {
            out += s.tr_mul(t);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Objective after initialization, then after every full iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Blocks that were fit on their compressed scores.
    pub compressed: Vec<bool>,
}

/// The weighted objective `Σ η‖X_i − U_i S_J − W_i S_i‖² + (1−η)‖y − θ₁S_J − Σθ₂ᵢS_i‖²`.
pub fn objective(data: &MultiSourceDataset, y: &Outcome, model: &SJiveModel) -> Result<f64> {
    check_model_shape(data, model)?;
    if y.len() != data.n() {
        return Err(Error::Shape(format!(
            "outcome length {} vs {} samples",
            y.len(),
            data.n()
        )));
    }
    let mut x_term = 0.0;
    for i in 0..data.k() {
        let resid = data.block(i) - model.joint_part(i) - model.indiv_part(i);
        x_term += frobenius_sq(&resid);
    }
    let y_weight = 1.0 - model.eta;
    let y_term = match &model.theta {
        Some(_) => (&y.values - model.fitted_outcome()?).norm_squared(),
        None if y_weight == 0.0 => 0.0,
        None => {
            return Err(Error::Input(
                "objective with eta < 1 needs outcome coefficients".into(),
            ))
        }
    };
    Ok(model.eta * x_term + y_weight * y_term)
}

fn check_model_shape(data: &MultiSourceDataset, model: &SJiveModel) -> Result<()> {
    if model.k() != data.k() {
        return Err(Error::Shape(format!(
            "model has {} blocks, data has {}",
            model.k(),
            data.k()
        )));
    }
    if model.n() != data.n() {
        return Err(Error::Shape(format!(
            "model has {} samples, data has {}",
            model.n(),
            data.n()
        )));
    }
    for i in 0..data.k() {
        if model.joint_loadings[i].nrows() != data.p(i) || model.indiv_loadings[i].nrows() != data.p(i) {
            return Err(Error::Shape(format!(
                "block {} has {} variables, model loadings have {}",
                i + 1,
                data.p(i),
                model.joint_loadings[i].nrows()
            )));
        }
    }
    Ok(())
}

/// State of the alternating updates, in weighted (tilde) space.
#[derive(Clone)]
struct Engine {
    blocks: Vec<Mat>,
    /// Weighted outcome as a 1 × n row; `None` when η = 1.
    y: Option<Mat>,
    ranks: Ranks,
    u: Vec<Mat>,
    theta_j: Mat,
    s_j: Mat,
    joint_basis: Mat,
    w: Vec<Mat>,
    theta_i: Vec<Mat>,
    s_i: Vec<Mat>,
    joint_svd: TruncatedSvd,
    indiv_svd: Vec<TruncatedSvd>,
}

impl Engine {
    fn new(blocks: Vec<Mat>, y: Option<Mat>, ranks: Ranks, seed: u64) -> Self {
        let n = blocks[0].ncols();
        let k = blocks.len();
        let rj = ranks.joint;
        Engine {
            u: blocks.iter().map(|b| Mat::zeros(b.nrows(), rj)).collect(),
            theta_j: Mat::zeros(1, rj),
            s_j: Mat::zeros(rj, n),
            joint_basis: Mat::zeros(n, 0),
            w: blocks
                .iter()
                .zip(&ranks.individual)
                .map(|(b, &r)| Mat::zeros(b.nrows(), r))
                .collect(),
            theta_i: ranks.individual.iter().map(|&r| Mat::zeros(1, r)).collect(),
            s_i: ranks.individual.iter().map(|&r| Mat::zeros(r, n)).collect(),
            joint_svd: TruncatedSvd::new(seed),
            indiv_svd: (0..k)
                .map(|i| TruncatedSvd::new(seed.wrapping_add(1 + i as u64)))
                .collect(),
            blocks,
            y,
            ranks,
        }
    }

    fn n(&self) -> usize {
        self.blocks[0].ncols()
    }

    fn outcome_indiv_sum(&self, skip: Option<usize>) -> Mat {
        let mut acc = Mat::zeros(1, self.n());
        for (i, (t, s)) in self.theta_i.iter().zip(&self.s_i).enumerate() {
            if Some(i) != skip && t.ncols() > 0 {
                acc += t * s;
            }
        }
        acc
    }

    fn joint_step(&mut self) {
        let rj = self.ranks.joint;
        if rj == 0 {
            return;
        }
        let n = self.n();
        let m: usize = self.blocks.iter().map(|b| b.nrows()).sum::<usize>() + self.y.is_some() as usize;
        let mut resid = Mat::zeros(m, n);
        let mut row = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            let mut part = b.clone();
            if self.ranks.individual[i] > 0 {
                part -= &self.w[i] * &self.s_i[i];
            }
            resid.rows_mut(row, b.nrows()).copy_from(&part);
            row += b.nrows();
        }
        if let Some(y) = &self.y {
            let target = y - self.outcome_indiv_sum(None);
            resid.rows_mut(row, 1).copy_from(&target);
        }
        let f = self.joint_svd.compute(&resid, rj);
        let loadings = f.left;
        self.s_j = loadings.tr_mul(&resid);
        let mut row = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            self.u[i] = loadings.rows(row, b.nrows()).into_owned();
            row += b.nrows();
        }
        if self.y.is_some() {
            self.theta_j = loadings.rows(row, 1).into_owned();
        }
        self.joint_basis = row_space_basis(&self.s_j);
    }

    fn indiv_step(&mut self, i: usize) {
        let ri = self.ranks.individual[i];
        if ri == 0 {
            return;
        }
        let p = self.blocks[i].nrows();
        let n = self.n();
        let m = p + self.y.is_some() as usize;
        let mut resid = Mat::zeros(m, n);
        let mut xpart = self.blocks[i].clone();
        if self.ranks.joint > 0 {
            xpart -= &self.u[i] * &self.s_j;
        }
        resid.rows_mut(0, p).copy_from(&xpart);
        if let Some(y) = &self.y {
            let mut target = y - self.outcome_indiv_sum(Some(i));
            if self.ranks.joint > 0 {
                target -= &self.theta_j * &self.s_j;
            }
            resid.rows_mut(p, 1).copy_from(&target);
        }
        let projected = project_out_rows(&resid, &self.joint_basis);
        let f = self.indiv_svd[i].compute(&projected, ri);
        let loadings = f.left;
        self.s_i[i] = loadings.tr_mul(&projected);
        self.w[i] = loadings.rows(0, p).into_owned();
        if self.y.is_some() {
            self.theta_i[i] = loadings.rows(p, 1).into_owned();
        }
    }

    fn sweep(&mut self) {
        self.joint_step();
        for i in 0..self.blocks.len() {
            self.indiv_step(i);
        }
    }

    /// Weighted objective of the all-zero model.
    fn scale(&self) -> f64 {
        self.blocks.iter().map(frobenius_sq).sum::<f64>() + self.y.as_ref().map_or(0.0, frobenius_sq)
    }

    /// Weighted objective; equals the original objective at the un-weighted parameters.
    fn objective(&self) -> f64 {
        let mut total = 0.0;
        for (i, b) in self.blocks.iter().enumerate() {
            let mut r = b.clone();
            if self.ranks.joint > 0 {
                r -= &self.u[i] * &self.s_j;
            }
            if self.ranks.individual[i] > 0 {
                r -= &self.w[i] * &self.s_i[i];
            }
            total += frobenius_sq(&r);
        }
        if let Some(y) = &self.y {
            let mut r = y - self.outcome_indiv_sum(None);
            if self.ranks.joint > 0 {
                r -= &self.theta_j * &self.s_j;
            }
            total += frobenius_sq(&r);
        }
        total
    }
}

struct Prepared {
    engine: Engine,
    compressed: Vec<Option<CompressedBlock>>,
}

fn prepare(
    data: &MultiSourceDataset,
    y: Option<&Outcome>,
    cfg: &FitConfig,
    use_outcome: bool,
) -> Result<Prepared> {
    cfg.validate()?;
    cfg.ranks.validate(data.n(), &data.dims())?;
    if let Some(y) = y {
        if y.len() != data.n() {
            return Err(Error::Shape(format!(
                "outcome has {} values, data has {} samples",
                y.len(),
                data.n()
            )));
        }
        let m = crate::data::moments(y.values.iter().copied());
        if m.sd <= 1e-12 * m.mean.abs().max(1.0) {
            return Err(Error::Degeneracy("outcome is constant".into()));
        }
    }
    let n = data.n();
    let compressed: Vec<Option<CompressedBlock>> = data
        .blocks()
        .iter()
        .map(|b| {
            let on = match cfg.compression {
                Compression::Auto => b.nrows() > n,
                Compression::Never => false,
                Compression::Always => true,
            };
            on.then(|| compress(b))
        })
        .collect();
    let sq_eta = cfg.eta.sqrt();
    let blocks: Vec<Mat> = data
        .blocks()
        .iter()
        .zip(&compressed)
        .map(|(b, c)| match c {
            Some(c) => &c.scores * sq_eta,
            None => b * sq_eta,
        })
        .collect();
    let y_row = match (use_outcome && cfg.eta < 1.0, y) {
        (true, Some(y)) => Some(Mat::from_row_slice(1, y.len(), y.values.as_slice()) * (1.0 - cfg.eta).sqrt()),
        _ => None,
    };
    Ok(Prepared {
        engine: Engine::new(blocks, y_row, cfg.ranks.clone(), cfg.seed),
        compressed,
    })
}

/// Starting values: the joint part from the leading singular vectors of the
/// weighted stack, then each individual part from its block's residual with
/// the joint row space removed.
pub fn initialize(data: &MultiSourceDataset, y: &Outcome, cfg: &FitConfig) -> Result<SJiveModel> {
    let mut prep = prepare(data, Some(y), cfg, true)?;
    prep.engine.sweep();
    finish(data, Some(y), cfg, prep.engine, &prep.compressed)
}

/// Fits the supervised model. Returns the best iterate with `converged = false`
/// if `max_iter` is reached first.
pub fn fit(data: &MultiSourceDataset, y: &Outcome, cfg: &FitConfig) -> Result<(SJiveModel, FitReport)> {
    run(data, Some(y), cfg, true)
}

/// The same alternating updates with the outcome rows removed (η treated as 1).
/// The returned model has no coefficients.
pub(crate) fn fit_unsupervised(
    data: &MultiSourceDataset,
    ranks: &Ranks,
    cfg: &FitConfig,
) -> Result<(SJiveModel, FitReport)> {
    let cfg = FitConfig {
        eta: 1.0,
        ranks: ranks.clone(),
        ..cfg.clone()
    };
    run(data, None, &cfg, false)
}

fn run(
    data: &MultiSourceDataset,
    y: Option<&Outcome>,
    cfg: &FitConfig,
    use_outcome: bool,
) -> Result<(SJiveModel, FitReport)> {
    let Prepared {
        mut engine,
        compressed,
    } = prepare(data, y, cfg, use_outcome)?;
    engine.sweep();
    // an exact fit decays geometrically toward zero and never meets the
    // relative criterion, so also stop once the objective is at rounding level
    let floor = 1e-28 * engine.scale();
    let mut current = engine.objective();
    let mut trace = vec![current];
    let mut best = (current, engine.clone());
    let mut converged = current <= floor;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iter {
        engine.sweep();
        iterations += 1;
        let next = engine.objective();
        trace.push(next);
        if next < best.0 {
            best = (next, engine.clone());
        }
        let change = (current - next).abs() / current.max(f64::MIN_POSITIVE);
        converged = next <= floor || change < cfg.tol;
        current = next;
    }
    if !converged {
        log::warn!(
            "fit did not converge in {} iterations (last relative change above {})",
            cfg.max_iter,
            cfg.tol
        );
    }
    let (final_objective, engine) = best;
    let model = finish(data, y, cfg, engine, &compressed)?;
    let report = FitReport {
        objective_trace: trace,
        iterations,
        converged,
        final_objective,
        compressed: compressed.iter().map(Option::is_some).collect(),
    };
    Ok((model, report))
}

fn finish(
    data: &MultiSourceDataset,
    y: Option<&Outcome>,
    cfg: &FitConfig,
    engine: Engine,
    compressed: &[Option<CompressedBlock>],
) -> Result<SJiveModel> {
    let sq_eta = cfg.eta.sqrt();
    let restore = |i: usize, l: &Mat| -> Result<Mat> {
        let l = l / sq_eta;
        match &compressed[i] {
            Some(cb) => decompress_loadings(cb, &l),
            None => Ok(l),
        }
    };
    let joint_loadings = (0..engine.blocks.len())
        .map(|i| restore(i, &engine.u[i]))
        .collect::<Result<Vec<_>>>()?;
    let indiv_loadings = (0..engine.blocks.len())
        .map(|i| restore(i, &engine.w[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut model = SJiveModel {
        eta: cfg.eta,
        ranks: cfg.ranks.clone(),
        joint_loadings,
        joint_scores: engine.s_j,
        indiv_loadings,
        indiv_scores: engine.s_i,
        theta: None,
        variable_ids: data.variable_ids().to_vec(),
        x_standardization: data.standardization().cloned(),
        y_standardization: y.and_then(|y| y.standardization),
        zero_components: Vec::new(),
    };
    if engine.y.is_some() {
        let sq = (1.0 - cfg.eta).sqrt();
        model.theta = Some(Coefficients {
            joint: engine.theta_j.row(0).transpose() / sq,
            individual: engine.theta_i.iter().map(|t| t.row(0).transpose() / sq).collect(),
        });
    } else if let Some(y) = y {
        model.theta = Some(regress_on_scores(&model, &y.values));
    }
    Ok(rescale_identifiable(model))
}

/// Ordinary least squares of `y` on the stacked score rows `[S_J; S_1; …; S_k]`.
pub(crate) fn regress_on_scores(model: &SJiveModel, y: &DVector<f64>) -> Coefficients {
    let design = score_design(model);
    if design.ncols() > 0 && crate::linalg::numerical_rank(&design) < design.ncols() {
        log::warn!("score design matrix is singular; using the pseudoinverse");
    }
    let beta = if design.ncols() == 0 {
        DVector::zeros(0)
    } else {
        least_squares(&design, y)
    };
    split_coefficients(&model.ranks, &beta)
}

/// n × (r_J + Σ r_i) design of score rows.
pub(crate) fn score_design(model: &SJiveModel) -> Mat {
    let mut parts: Vec<&Mat> = vec![&model.joint_scores];
    parts.extend(model.indiv_scores.iter());
    crate::linalg::vstack(&parts).transpose()
}

fn split_coefficients(ranks: &Ranks, beta: &DVector<f64>) -> Coefficients {
    let mut at = ranks.joint;
    let joint = beta.rows(0, ranks.joint).into_owned();
    let individual = ranks
        .individual
        .iter()
        .map(|&r| {
            let v = beta.rows(at, r).into_owned();
            at += r;
            v
        })
        .collect();
    Coefficients { joint, individual }
}

/// Scales the stacked joint block `[U_1; …; U_k; θ₁]` and every stacked
/// individual block `[W_i; θ₂ᵢ]` to unit Frobenius norm, with the scores
/// absorbing the scale. Each loading column is also oriented so its
/// largest-magnitude entry is positive. Products `U_i S_J`, `W_i S_i`,
/// `θ S` are unchanged. All-zero blocks are left alone and recorded in
/// `zero_components`.
pub fn rescale_identifiable(mut model: SJiveModel) -> SJiveModel {
    model.zero_components.clear();
    let k = model.k();

    if model.ranks.joint > 0 {
        let theta = model.theta.as_mut().map(|t| &mut t.joint);
        let ok = rescale_component(&mut model.joint_loadings, theta, &mut model.joint_scores);
        if !ok {
            model.zero_components.push("joint".into());
        }
    }
    for i in 0..k {
        if model.ranks.individual[i] == 0 {
            continue;
        }
        let theta = model.theta.as_mut().map(|t| &mut t.individual[i]);
        let mut loads = vec![std::mem::take(&mut model.indiv_loadings[i])];
        let ok = rescale_component(&mut loads, theta, &mut model.indiv_scores[i]);
        model.indiv_loadings[i] = loads.pop().expect("one block");
        if !ok {
            model.zero_components.push(format!("individual_{}", i + 1));
        }
    }
    model
}

fn rescale_component(
    loadings: &mut [Mat],
    theta: Option<&mut DVector<f64>>,
    scores: &mut Mat,
) -> bool {
    let mut norm_sq: f64 = loadings.iter().map(frobenius_sq).sum();
    if let Some(t) = &theta {
        norm_sq += t.norm_squared();
    }
    let norm = norm_sq.sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    let mut theta = theta;
    for l in loadings.iter_mut() {
        *l /= norm;
    }
    if let Some(t) = theta.as_deref_mut() {
        *t /= norm;
    }
    *scores *= norm;

    // orientation: largest |entry| of each stacked column is positive
    for c in 0..scores.nrows() {
        let mut best = 0.0f64;
        let mut best_abs = -1.0f64;
        for l in loadings.iter() {
            for v in l.column(c).iter() {
                if v.abs() > best_abs {
                    best_abs = v.abs();
                    best = *v;
                }
            }
        }
        if let Some(t) = theta.as_deref() {
            if t[c].abs() > best_abs {
                best = t[c];
            }
        }
        if best < 0.0 {
            for l in loadings.iter_mut() {
                l.column_mut(c).neg_mut();
            }
            if let Some(t) = theta.as_deref_mut() {
                t[c] = -t[c];
            }
            scores.row_mut(c).neg_mut();
        }
    }
    true
}
