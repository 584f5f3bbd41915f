//! Comparison methods: unsupervised JIVE, JIVE followed by least squares on its
//! scores, and principal components regression on concatenated or single blocks.

use nalgebra::DVector;

use crate::data::{Moments, MultiSourceDataset, Outcome};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, svd_truncated, Mat};
use crate::model::{fit_unsupervised, regress_on_scores, rescale_identifiable, FitConfig, FitReport, Ranks, SJiveModel};
use crate::predict::{estimate_scores, predict_standardized};

/// JIVE: the alternating updates without the outcome. `cfg.eta` is ignored.
/// The model has no coefficients.
pub fn fit_jive(data: &MultiSourceDataset, ranks: &Ranks, cfg: &FitConfig) -> Result<(SJiveModel, FitReport)> {
    fit_unsupervised(data, ranks, cfg)
}

/// JIVE, then ordinary least squares of `y` on the stacked scores
/// (one coefficient per rank).
pub fn fit_jive_predict(
    data: &MultiSourceDataset,
    y: &Outcome,
    ranks: &Ranks,
    cfg: &FitConfig,
) -> Result<BaselineModel> {
    if y.len() != data.n() {
        return Err(Error::Shape(format!(
            "outcome has {} values, data has {} samples",
            y.len(),
            data.n()
        )));
    }
    let (mut model, _) = fit_jive(data, ranks, cfg)?;
    model.theta = Some(regress_on_scores(&model, &y.values));
    model.y_standardization = y.standardization;
    Ok(BaselineModel::JivePredict(rescale_identifiable(model)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaMode {
    Concatenated,
    /// Only the given block (0-based).
    PerBlock(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaRegression {
    pub mode: PcaMode,
    /// p × r leading left singular vectors.
    pub loadings: Mat,
    pub coefficients: DVector<f64>,
    pub y_standardization: Option<Moments>,
}

impl PcaRegression {
    fn input(&self, data: &MultiSourceDataset) -> Result<Mat> {
        match self.mode {
            PcaMode::Concatenated => Ok(data.stacked()),
            PcaMode::PerBlock(i) => data
                .blocks()
                .get(i)
                .cloned()
                .ok_or_else(|| Error::Shape(format!("data has no block {}", i + 1))),
        }
    }

    pub fn predict_standardized(&self, new_data: &MultiSourceDataset) -> Result<DVector<f64>> {
        let x = self.input(new_data)?;
        if x.nrows() != self.loadings.nrows() {
            return Err(Error::Shape(format!(
                "new data has {} variables, model expects {}",
                x.nrows(),
                self.loadings.nrows()
            )));
        }
        let scores = self.loadings.tr_mul(&x);
        Ok(scores.tr_mul(&self.coefficients))
    }
}

/// Rank-`r` principal components of the (concatenated or single-block) data,
/// then least squares of `y` on the `r` score rows. `r = 0` predicts the mean.
pub fn fit_pca_regression(
    data: &MultiSourceDataset,
    y: &Outcome,
    r: usize,
    mode: PcaMode,
) -> Result<BaselineModel> {
    if y.len() != data.n() {
        return Err(Error::Shape(format!(
            "outcome has {} values, data has {} samples",
            y.len(),
            data.n()
        )));
    }
    let proto = PcaRegression {
        mode,
        loadings: Mat::zeros(0, 0),
        coefficients: DVector::zeros(0),
        y_standardization: y.standardization,
    };
    let x = proto.input(data)?;
    let bound = x.nrows().min(x.ncols());
    if r > bound {
        return Err(Error::Rank(format!("PCA rank {r} exceeds min(p, n) = {bound}")));
    }
    if r == 0 {
        return Ok(BaselineModel::Pca(PcaRegression {
            loadings: Mat::zeros(x.nrows(), 0),
            ..proto
        }));
    }
    let f = svd_truncated(&x, r)?;
    let scores = f.left.tr_mul(&x);
    let coefficients = least_squares(&scores.transpose(), &y.values);
    Ok(BaselineModel::Pca(PcaRegression {
        loadings: f.left,
        coefficients,
        ..proto
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    JivePredict(SJiveModel),
    Pca(PcaRegression),
}

impl BaselineModel {
    /// Predictions on the standardized outcome scale for data on the training scale.
    pub fn predict_standardized(&self, new_data: &MultiSourceDataset) -> Result<DVector<f64>> {
        match self {
            BaselineModel::JivePredict(m) => predict_standardized(m, &estimate_scores(m, new_data)?),
            BaselineModel::Pca(p) => p.predict_standardized(new_data),
        }
    }

    /// Predictions on the raw outcome scale.
    pub fn predict(&self, new_data: &MultiSourceDataset) -> Result<DVector<f64>> {
        let z = self.predict_standardized(new_data)?;
        let st = match self {
            BaselineModel::JivePredict(m) => m.y_standardization,
            BaselineModel::Pca(p) => p.y_standardization,
        };
        Ok(match st {
            Some(m) => z.map(|v| v * m.sd + m.mean),
            None => z,
        })
    }

    pub fn as_sjive(&self) -> Option<&SJiveModel> {
        match self {
            BaselineModel::JivePredict(m) => Some(m),
            BaselineModel::Pca(_) => None,
        }
    }
}
