//! Replicated simulation comparison of sJIVE against JIVE-predict and PCA regressions.

use rayon::prelude::*;

use crate::baselines::{fit_jive_predict, fit_pca_regression, BaselineModel, PcaMode};
use crate::data::{MultiSourceDataset, Outcome};
use crate::error::{Error, Result};
use crate::eval::{recovery_error, test_mse, win_rate};
use crate::data::{standardize, ZeroVariancePolicy};
use crate::model::{fit, Compression, FitConfig, Ranks, SJiveModel};
use crate::predict::{estimate_scores, predict_standardized};
use crate::selection::{default_eta_grid, select_eta, select_ranks, CvPlan};
use crate::simulate::{eigen_signal_report, generate_study, EigenReport, SimConfig, SimTruth};

#[derive(Debug, Clone, PartialEq)]
pub enum EtaChoice {
    Fixed(f64),
    /// 5-fold CV over the grid on each training set.
    Cv(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// Replicate `r` uses seed `sim.seed + r`.
    pub sim: SimConfig,
    pub reps: usize,
    pub eta: EtaChoice,
    pub tol: f64,
    pub max_iter: usize,
    pub compression: Compression,
}

impl BenchmarkConfig {
    pub fn new(sim: SimConfig, reps: usize) -> Self {
        BenchmarkConfig {
            sim,
            reps,
            eta: EtaChoice::Cv(default_eta_grid()),
            tol: 1e-6,
            max_iter: 1000,
            compression: Compression::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub seed: u64,
    pub eta: f64,
    pub ranks: Ranks,
    /// Test MSE per method, in [`BenchmarkSummary::methods`] order.
    pub mse: Vec<f64>,
    /// Simulated replicates only.
    pub eigen: Option<EigenReport>,
    /// (component, error) for the sJIVE fit; zero true components are skipped.
    pub recovery_sjive: Vec<(String, f64)>,
    pub recovery_jive: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSummary {
    pub methods: Vec<String>,
    pub replicates: Vec<Replicate>,
}

impl BenchmarkSummary {
    pub fn mean_mse(&self) -> Vec<f64> {
        let r = self.replicates.len() as f64;
        (0..self.methods.len())
            .map(|m| self.replicates.iter().map(|rep| rep.mse[m]).sum::<f64>() / r)
            .collect()
    }

    /// Percentage of replicates where sJIVE beats JIVE-predict (ties split).
    pub fn sjive_win_pct(&self) -> f64 {
        let pairs: Vec<Vec<f64>> = self.replicates.iter().map(|r| vec![r.mse[0], r.mse[1]]).collect();
        win_rate(&pairs).map(|w| w[0]).unwrap_or(f64::NAN)
    }

    /// Win percentage of every method against all others.
    pub fn win_rates(&self) -> Vec<f64> {
        let all: Vec<Vec<f64>> = self.replicates.iter().map(|r| r.mse.clone()).collect();
        win_rate(&all).unwrap_or_else(|_| vec![f64::NAN; self.methods.len()])
    }

    pub fn mean_recovery(&self, sjive: bool) -> Vec<(String, f64)> {
        let Some(first) = self.replicates.first() else {
            return Vec::new();
        };
        let pick = |r: &Replicate| if sjive { r.recovery_sjive.clone() } else { r.recovery_jive.clone() };
        pick(first)
            .iter()
            .enumerate()
            .map(|(c, (name, _))| {
                let mean = self.replicates.iter().map(|r| pick(r)[c].1).sum::<f64>() / self.replicates.len() as f64;
                (name.clone(), mean)
            })
            .collect()
    }
}

pub fn method_names(k: usize) -> Vec<String> {
    let mut m = vec!["sJIVE".to_string(), "JIVE-predict".into(), "Concatenated PCA".into()];
    m.extend((1..=k).map(|i| format!("Individual PCA {i}")));
    m
}

fn model_mse(model: &SJiveModel, test: &MultiSourceDataset, test_y: &Outcome) -> Result<f64> {
    let pred = predict_standardized(model, &estimate_scores(model, test)?)?;
    test_mse(&test_y.values, &pred)
}

fn recovery(model: &SJiveModel, truth: &SimTruth) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let j = truth.joint_stacked();
    if truth.ranks.joint > 0 && j.iter().any(|v| *v != 0.0) {
        out.push(("joint".to_string(), recovery_error(&model.joint_stacked(), &j)?));
    }
    for i in 0..truth.k() {
        let a = truth.indiv(i);
        if truth.ranks.individual[i] > 0 && a.iter().any(|v| *v != 0.0) {
            out.push((format!("individual_{}", i + 1), recovery_error(&model.indiv_part(i), &a)?));
        }
    }
    Ok(out)
}

struct Comparison {
    eta: f64,
    mse: Vec<f64>,
    sjive: SJiveModel,
    jive: SJiveModel,
}

/// Fits every method on a standardized training split and scores it on the test split.
fn compare_methods(
    train: &MultiSourceDataset,
    train_y: &Outcome,
    test: &MultiSourceDataset,
    test_y: &Outcome,
    base: &FitConfig,
    eta: &EtaChoice,
    seed: u64,
) -> Result<Comparison> {
    let ranks = base.ranks.clone();
    let eta = match eta {
        EtaChoice::Fixed(e) => *e,
        EtaChoice::Cv(grid) => {
            let plan = CvPlan::five_fold(train.n(), seed)?;
            select_eta(train, train_y, base, grid, &plan)?.0
        }
    };
    let (sjive, _) = fit(train, train_y, &FitConfig { eta, ..base.clone() })?;
    let jive_pred = fit_jive_predict(train, train_y, &ranks, base)?;
    let mut mse = vec![
        model_mse(&sjive, test, test_y)?,
        test_mse(&test_y.values, &jive_pred.predict_standardized(test)?)?,
    ];
    let r = ranks.total();
    let concat = fit_pca_regression(train, train_y, r.min(train.dims().iter().sum()).min(train.n()), PcaMode::Concatenated)?;
    mse.push(test_mse(&test_y.values, &concat.predict_standardized(test)?)?);
    for i in 0..train.k() {
        let r_i = r.min(train.p(i)).min(train.n());
        let m = fit_pca_regression(train, train_y, r_i, PcaMode::PerBlock(i))?;
        mse.push(test_mse(&test_y.values, &m.predict_standardized(test)?)?);
    }
    let BaselineModel::JivePredict(jive) = jive_pred else {
        unreachable!("fit_jive_predict returns a JIVE model")
    };
    Ok(Comparison { eta, mse, sjive, jive })
}

/// Runs one simulated replicate with the given seed.
pub fn run_replicate(cfg: &BenchmarkConfig, seed: u64) -> Result<Replicate> {
    let sim = SimConfig {
        seed,
        ..cfg.sim.clone()
    };
    let study = generate_study(&sim)?;
    let base = FitConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        compression: cfg.compression,
        seed,
        ..FitConfig::new(0.5, sim.ranks.clone())
    };
    let c = compare_methods(&study.train, &study.train_y, &study.test, &study.test_y, &base, &cfg.eta, seed)?;
    // JIVE-predict's components are the unsupervised JIVE fit
    Ok(Replicate {
        seed,
        eta: c.eta,
        ranks: sim.ranks.clone(),
        mse: c.mse,
        eigen: Some(eigen_signal_report(&study.truth)?),
        recovery_sjive: recovery(&c.sjive, &study.truth)?,
        recovery_jive: recovery(&c.jive, &study.truth)?,
    })
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkSummary> {
    let replicates = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| run_replicate(cfg, cfg.sim.seed + r))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkSummary {
        methods: method_names(cfg.sim.k()),
        replicates,
    })
}

/// Benchmark on observed data: each replicate is a seeded random train/test
/// split, standardized with the training moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBenchmarkConfig {
    pub reps: usize,
    /// Fraction of samples held out in each replicate.
    pub test_fraction: f64,
    /// `None` selects ranks by forward CV at η = 0.5 on each training split.
    pub ranks: Option<Ranks>,
    pub eta: EtaChoice,
    pub tol: f64,
    pub max_iter: usize,
    pub compression: Compression,
    pub zero_variance: ZeroVariancePolicy,
    /// Replicate `r` uses seed `seed + r`.
    pub seed: u64,
}

impl DatasetBenchmarkConfig {
    pub fn new(reps: usize, ranks: Option<Ranks>) -> Self {
        DatasetBenchmarkConfig {
            reps,
            test_fraction: 0.3,
            ranks,
            eta: EtaChoice::Cv(default_eta_grid()),
            tol: 1e-6,
            max_iter: 1000,
            compression: Compression::Auto,
            zero_variance: ZeroVariancePolicy::Error,
            seed: 1,
        }
    }
}

fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Runs every method on `reps` random splits of raw (unstandardized) data.
pub fn run_dataset_benchmark(
    data: &MultiSourceDataset,
    y: &Outcome,
    cfg: &DatasetBenchmarkConfig,
) -> Result<BenchmarkSummary> {
    if y.len() != data.n() {
        return Err(Error::Shape(format!(
            "outcome has {} values, data has {} samples",
            y.len(),
            data.n()
        )));
    }
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {}", cfg.test_fraction)));
    }
    let (train_idx, test_idx) = split_indices(data.n(), cfg.test_fraction, cfg.seed);
    if test_idx.is_empty() || train_idx.len() < 2 {
        return Err(Error::Input(format!("{} samples are too few to split", data.n())));
    }
    let replicates = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed + r;
            let (train_idx, test_idx) = split_indices(data.n(), cfg.test_fraction, seed);
            let (train, train_y, _) = standardize(
                &data.select_samples(&train_idx),
                &y.select(&train_idx),
                cfg.zero_variance,
            )?;
            let st = train.standardization().expect("standardized").clone();
            let test = data.select_samples(&test_idx).apply_standardization(&st)?;
            let y_moments = train_y.standardization.expect("standardized");
            let test_y = y.select(&test_idx).apply_standardization(y_moments);
            let mut base = FitConfig {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                compression: cfg.compression,
                seed,
                ..FitConfig::new(0.5, Ranks::zeros(data.k()))
            };
            base.ranks = match &cfg.ranks {
                Some(r) => r.clone(),
                None => {
                    let plan = CvPlan::five_fold(train.n(), seed)?;
                    select_ranks(&train, &train_y, &base, &plan)?.0
                }
            };
            let c = compare_methods(&train, &train_y, &test, &test_y, &base, &cfg.eta, seed)?;
            Ok(Replicate {
                seed,
                eta: c.eta,
                ranks: base.ranks,
                mse: c.mse,
                eigen: None,
                recovery_sjive: Vec::new(),
                recovery_jive: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkSummary {
        methods: method_names(data.k()),
        replicates,
    })
}
