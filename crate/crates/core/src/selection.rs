//! Cross-validated choice of η (grid search) and of the ranks (forward selection).

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{standardize, MultiSourceDataset, Outcome, ZeroVariancePolicy};
use crate::error::{Error, Result};
use crate::model::{fit, FitConfig, Ranks};
use crate::predict::{estimate_scores, predict_standardized};

/// A rank increment must lower the mean CV MSE by more than this to be kept.
pub const RANK_IMPROVEMENT: f64 = 1e-4;

pub fn default_eta_grid() -> Vec<f64> {
    let mut g = vec![0.01];
    g.extend((1..=19).map(|i| (5 * i) as f64 / 100.0));
    g.push(0.99);
    g
}

/// Partition of sample indices into folds: contiguous chunks of a seeded shuffle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl CvPlan {
    pub fn new(n: usize, n_folds: usize, seed: u64) -> Result<Self> {
        if n_folds < 2 || n < n_folds {
            return Err(Error::Config(format!(
                "cannot split {n} samples into {n_folds} folds"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let base = n / n_folds;
        let extra = n % n_folds;
        let mut folds = Vec::with_capacity(n_folds);
        let mut at = 0;
        for f in 0..n_folds {
            let size = base + usize::from(f < extra);
            let mut fold = idx[at..at + size].to_vec();
            fold.sort_unstable();
            folds.push(fold);
            at += size;
        }
        Ok(CvPlan { folds, seed })
    }

    pub fn five_fold(n: usize, seed: u64) -> Result<Self> {
        Self::new(n, 5, seed)
    }

    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Size of the smallest training set across folds.
    pub fn min_train(&self) -> usize {
        let n = self.n();
        n - self.folds.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    pub mean: f64,
    pub per_fold: Vec<f64>,
}

/// Mean over folds of the standardized-scale test MSE. Each training fold is
/// standardized with its own moments, and the held-out fold with those.
pub fn cv_mse(data: &MultiSourceDataset, y: &Outcome, cfg: &FitConfig, plan: &CvPlan) -> Result<CvScore> {
    if plan.n() != data.n() || y.len() != data.n() {
        return Err(Error::Shape(format!(
            "CV plan covers {} samples, data has {} and outcome {}",
            plan.n(),
            data.n(),
            y.len()
        )));
    }
    let mut local = data.clone();
    local.set_standardization(None);
    let mut local_y = y.clone();
    local_y.standardization = None;

    let per_fold = (0..plan.folds.len())
        .into_par_iter()
        .map(|f| fold_mse(&local, &local_y, cfg, plan, f))
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(CvScore { mean, per_fold })
}

fn fold_mse(data: &MultiSourceDataset, y: &Outcome, cfg: &FitConfig, plan: &CvPlan, f: usize) -> Result<f64> {
    let train_idx = plan.train_indices(f);
    let test_idx = &plan.folds[f];
    let (train, train_y, _) = standardize(
        &data.select_samples(&train_idx),
        &y.select(&train_idx),
        ZeroVariancePolicy::Drop,
    )?;
    cfg.ranks
        .validate(train.n(), &train.dims())
        .map_err(|e| Error::Rank(format!("fold {}: {e}", f + 1)))?;
    let st = train.standardization().expect("standardized").clone();
    let test = data.select_samples(test_idx).apply_standardization(&st)?;
    let ym = train_y.standardization.expect("standardized");
    let test_y = y.select(test_idx).apply_standardization(ym);
    let (model, _) = fit(&train, &train_y, cfg)?;
    let pred = predict_standardized(&model, &estimate_scores(&model, &test)?)?;
    Ok((pred - &test_y.values).norm_squared() / test_idx.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    Eta(f64),
    Ranks(Ranks),
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Eta(e) => write!(f, "eta={e}"),
            Candidate::Ranks(r) => write!(f, "ranks={r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Grid search: 0. Forward selection: the round in which the candidate was tried.
    pub step: usize,
    pub candidate: Candidate,
    pub score: CvScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub rows: Vec<TraceRow>,
    pub chosen: Candidate,
}

/// Index of the smallest value; ties go to the earliest.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Picks the grid value of η with the lowest CV MSE (earliest on ties).
/// Ranks, tolerances and seed come from `base`.
pub fn select_eta(
    data: &MultiSourceDataset,
    y: &Outcome,
    base: &FitConfig,
    grid: &[f64],
    plan: &CvPlan,
) -> Result<(f64, SelectionTrace)> {
    if grid.is_empty() {
        return Err(Error::Config("empty eta grid".into()));
    }
    if let Some(bad) = grid.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::Config(format!("eta grid value {bad} outside (0, 1]")));
    }
    let scores = grid
        .par_iter()
        .map(|&eta| {
            let cfg = FitConfig { eta, ..base.clone() };
            cv_mse(data, y, &cfg, plan)
        })
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = scores.iter().map(|s| s.mean).collect();
    let best = argmin(&means);
    let rows = grid
        .iter()
        .zip(scores)
        .map(|(&eta, score)| TraceRow {
            step: 0,
            candidate: Candidate::Eta(eta),
            score,
        })
        .collect();
    Ok((
        grid[best],
        SelectionTrace {
            rows,
            chosen: Candidate::Eta(grid[best]),
        },
    ))
}

/// Forward selection from all-zero ranks: each round tries raising r_J and
/// each r_i by one and keeps the single best increment, until no increment
/// lowers the CV MSE by more than [`RANK_IMPROVEMENT`]. Ties prefer the joint
/// rank, then the lowest block. η comes from `base`.
pub fn select_ranks(
    data: &MultiSourceDataset,
    y: &Outcome,
    base: &FitConfig,
    plan: &CvPlan,
) -> Result<(Ranks, SelectionTrace)> {
    let k = data.k();
    let n_train = plan.min_train();
    let dims = data.dims();
    let score = |ranks: &Ranks| {
        let cfg = FitConfig {
            ranks: ranks.clone(),
            ..base.clone()
        };
        cv_mse(data, y, &cfg, plan)
    };
    let mut current = Ranks::zeros(k);
    let first = score(&current)?;
    let mut best = first.mean;
    let mut rows = vec![TraceRow {
        step: 0,
        candidate: Candidate::Ranks(current.clone()),
        score: first,
    }];
    let mut step = 0;
    loop {
        step += 1;
        let mut candidates = Vec::with_capacity(k + 1);
        let mut next = current.clone();
        next.joint += 1;
        candidates.push(next);
        for i in 0..k {
            let mut next = current.clone();
            next.individual[i] += 1;
            candidates.push(next);
        }
        candidates.retain(|r| r.validate(n_train, &dims).is_ok());
        if candidates.is_empty() {
            break;
        }
        let scores = candidates.par_iter().map(&score).collect::<Result<Vec<_>>>()?;
        let means: Vec<f64> = scores.iter().map(|s| s.mean).collect();
        let pick = argmin(&means);
        let improved = means[pick] < best - RANK_IMPROVEMENT;
        for (c, s) in candidates.iter().zip(scores) {
            rows.push(TraceRow {
                step,
                candidate: Candidate::Ranks(c.clone()),
                score: s,
            });
        }
        if !improved {
            break;
        }
        best = means[pick];
        current = candidates.swap_remove(pick);
    }
    Ok((
        current.clone(),
        SelectionTrace {
            rows,
            chosen: Candidate::Ranks(current),
        },
    ))
}

/// Ranks first at η = 0.5, then η over `grid` with those ranks.
pub fn select_eta_and_ranks(
    data: &MultiSourceDataset,
    y: &Outcome,
    base: &FitConfig,
    grid: &[f64],
    plan: &CvPlan,
) -> Result<(f64, Ranks, SelectionTrace, SelectionTrace)> {
    let at_half = FitConfig {
        eta: 0.5,
        ..base.clone()
    };
    let (ranks, rank_trace) = select_ranks(data, y, &at_half, plan)?;
    let with_ranks = FitConfig {
        ranks: ranks.clone(),
        ..base.clone()
    };
    let (eta, eta_trace) = select_eta(data, y, &with_ranks, grid, plan)?;
    Ok((eta, ranks, rank_trace, eta_trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use nalgebra::DVector;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(m: usize, n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn null_problem(n: usize, seed: u64) -> (MultiSourceDataset, Outcome) {
        let data = MultiSourceDataset::from_blocks(vec![noise(12, n, seed), noise(9, n, seed + 1)]).unwrap();
        let y = Outcome::new(noise(n, 1, seed + 2).column(0).into_owned()).unwrap();
        (data, y)
    }

    #[test]
    fn plan_partitions_samples() {
        for n in [5, 17, 40] {
            let plan = CvPlan::five_fold(n, 3).unwrap();
            let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            assert_eq!(plan, CvPlan::five_fold(n, 3).unwrap());
        }
        assert!(CvPlan::five_fold(4, 1).is_err());
    }

    #[test]
    fn zero_rank_cv_is_near_one() {
        let (data, y) = null_problem(60, 4);
        let plan = CvPlan::five_fold(60, 1).unwrap();
        let s = cv_mse(&data, &y, &FitConfig::new(0.5, Ranks::zeros(2)), &plan).unwrap();
        assert!((s.mean - 1.0).abs() < 0.3, "{}", s.mean);
        assert_eq!(s.per_fold.len(), 5);
    }

    #[test]
    fn cv_is_deterministic() {
        let (data, y) = null_problem(40, 5);
        let plan = CvPlan::five_fold(40, 9).unwrap();
        let cfg = FitConfig::new(0.3, Ranks::uniform(2, 1));
        assert_eq!(cv_mse(&data, &y, &cfg, &plan).unwrap(), cv_mse(&data, &y, &cfg, &plan).unwrap());
    }

    #[test]
    fn fold_rank_error_names_fold() {
        let (data, y) = null_problem(10, 6);
        let plan = CvPlan::five_fold(10, 1).unwrap();
        let err = cv_mse(&data, &y, &FitConfig::new(0.5, Ranks::new(9, vec![0, 0])), &plan).unwrap_err();
        assert!(matches!(&err, Error::Rank(m) if m.contains("fold 1")), "{err}");
    }

    #[test]
    fn singleton_grid() {
        let (data, y) = null_problem(30, 7);
        let plan = CvPlan::five_fold(30, 1).unwrap();
        let (eta, trace) = select_eta(&data, &y, &FitConfig::new(0.9, Ranks::uniform(2, 1)), &[0.5], &plan).unwrap();
        assert_eq!(eta, 0.5);
        assert_eq!(trace.rows.len(), 1);
    }

    #[test]
    fn selected_eta_attains_minimum() {
        let (data, y) = null_problem(30, 8);
        let plan = CvPlan::five_fold(30, 2).unwrap();
        let grid = [0.1, 0.5, 0.9, 1.0];
        let (eta, trace) = select_eta(&data, &y, &FitConfig::new(0.5, Ranks::uniform(2, 1)), &grid, &plan).unwrap();
        let min = trace.rows.iter().map(|r| r.score.mean).fold(f64::INFINITY, f64::min);
        let chosen = trace.rows.iter().find(|r| r.candidate == Candidate::Eta(eta)).unwrap();
        assert_eq!(chosen.score.mean, min);
        assert_eq!(trace.rows.len(), 4);
    }

    #[test]
    fn pure_noise_selects_small_ranks() {
        let (data, y) = null_problem(50, 9);
        let plan = CvPlan::five_fold(50, 3).unwrap();
        let (ranks, trace) = select_ranks(&data, &y, &FitConfig::new(0.5, Ranks::zeros(2)), &plan).unwrap();
        assert!(ranks.total() <= 1, "selected {ranks}");
        // every accepted step lowered the recorded best by the threshold
        assert!(trace.rows.len() >= 4);
    }

    #[test]
    fn noiseless_data_selects_true_ranks() {
        use crate::simulate::{generate, SimConfig};
        let cfg = SimConfig {
            p: vec![100, 100],
            n: 100,
            n_test: 0,
            x_err: 0.0,
            y_err: 0.0,
            seed: 1,
            ..SimConfig::default()
        };
        let (data, y, _) = generate(&cfg).unwrap();
        let plan = CvPlan::five_fold(100, 1).unwrap();
        let (ranks, _) = select_ranks(&data, &y, &FitConfig::new(0.5, Ranks::zeros(2)), &plan).unwrap();
        assert_eq!(ranks, Ranks::uniform(2, 1));
    }

    #[test]
    fn eta_grid_default() {
        let g = default_eta_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.01);
        assert_eq!(*g.last().unwrap(), 0.99);
        assert!((g[2] - 0.10).abs() < 1e-12);
        assert!(select_eta(
            &null_problem(10, 1).0,
            &Outcome::new(DVector::from_element(10, 1.0)).unwrap(),
            &FitConfig::new(0.5, Ranks::zeros(2)),
            &[1.5],
            &CvPlan::five_fold(10, 1).unwrap()
        )
        .is_err());
    }
}
