//! Multi-source datasets and outcomes: CSV ingestion, standardization and the
//! SVD compression used for high-dimensional blocks.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{check_finite, dense_svd, Mat};

/// Location and scale of one variable (or the outcome) on the raw scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    pub fn identity() -> Self {
        Moments { mean: 0.0, sd: 1.0 }
    }

    /// Moments of `(v - mean)/sd` composed with `self`, expressed on the raw scale.
    fn then(self, inner: Moments) -> Moments {
        Moments {
            mean: self.mean + self.sd * inner.mean,
            sd: self.sd * inner.sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableScaling {
    pub id: String,
    pub moments: Moments,
}

/// Per-block, per-variable scaling of a standardized dataset.
pub type Standardization = Vec<Vec<VariableScaling>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroVariancePolicy {
    #[default]
    Error,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    VariablesAsRows,
    SamplesAsRows,
}

/// A numeric table with row and column labels, always stored as variables × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub values: Mat,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

pub fn load_csv(path: impl AsRef<Path>, orientation: Orientation) -> Result<LabeledMatrix> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path, orientation)
}

/// Parses the `id,<sample ids...>` / `<variable id>,<values...>` layout.
pub fn parse_csv(text: &str, path: &Path, orientation: Orientation) -> Result<LabeledMatrix> {
    let perr = |row: usize, col: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| perr(1, 1, e.to_string()))?,
        None => return Err(perr(1, 1, "empty file".into())),
    };
    if header.len() < 2 {
        return Err(perr(1, 1, "header needs an id column and at least one sample".into()));
    }
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    check_unique(&col_ids).map_err(|(c, id)| perr(1, c + 2, format!("duplicate id '{id}'")))?;

    let width = col_ids.len();
    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in records.enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| perr(line, 1, e.to_string()))?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if rec.len() != width + 1 {
            return Err(perr(
                line,
                rec.len().min(width + 1),
                format!("expected {} fields, found {}", width + 1, rec.len()),
            ));
        }
        row_ids.push(rec[0].to_string());
        for (c, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| perr(line, c + 2, format!("non-numeric cell '{cell}'")))?;
            if !v.is_finite() {
                return Err(perr(line, c + 2, format!("non-finite cell '{cell}'")));
            }
            values.push(v);
        }
    }
    if row_ids.is_empty() {
        return Err(perr(2, 1, "no data rows".into()));
    }
    check_unique(&row_ids).map_err(|(r, id)| perr(r + 2, 1, format!("duplicate id '{id}'")))?;
    let values = Mat::from_row_slice(row_ids.len(), width, &values);
    Ok(match orientation {
        Orientation::VariablesAsRows => LabeledMatrix {
            values,
            row_ids,
            col_ids,
        },
        Orientation::SamplesAsRows => LabeledMatrix {
            values: values.transpose(),
            row_ids: col_ids,
            col_ids: row_ids,
        },
    })
}

fn check_unique(ids: &[String]) -> std::result::Result<(), (usize, String)> {
    let mut seen = HashSet::new();
    for (i, id) in ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return Err((i, id.clone()));
        }
    }
    Ok(())
}

/// Writes a labeled matrix in the same layout `load_csv` reads.
pub fn write_csv(path: impl AsRef<Path>, m: &LabeledMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("id");
    for c in &m.col_ids {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, rid) in m.row_ids.iter().enumerate() {
        out.push_str(rid);
        for j in 0..m.values.ncols() {
            out.push(',');
            out.push_str(&m.values[(i, j)].to_string());
        }
        out.push('\n');
    }
    File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// k data blocks on the same n samples; block i is p_i × n.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSourceDataset {
    blocks: Vec<Mat>,
    sample_ids: Vec<String>,
    variable_ids: Vec<Vec<String>>,
    standardization: Option<Standardization>,
}

impl MultiSourceDataset {
    pub fn new(
        blocks: Vec<Mat>,
        sample_ids: Vec<String>,
        variable_ids: Vec<Vec<String>>,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Input("a dataset needs at least one block".into()));
        }
        let n = blocks[0].ncols();
        if n == 0 {
            return Err(Error::Shape("blocks must have at least one sample".into()));
        }
        if sample_ids.len() != n {
            return Err(Error::Shape(format!(
                "{} sample ids for {n} samples",
                sample_ids.len()
            )));
        }
        if variable_ids.len() != blocks.len() {
            return Err(Error::Shape("one variable-id list per block is required".into()));
        }
        for (i, (b, ids)) in blocks.iter().zip(&variable_ids).enumerate() {
            if b.ncols() != n {
                return Err(Error::Shape(format!(
                    "block {} has {} samples, block 1 has {n}",
                    i + 1,
                    b.ncols()
                )));
            }
            if b.nrows() == 0 {
                return Err(Error::Shape(format!("block {} has no variables", i + 1)));
            }
            if ids.len() != b.nrows() {
                return Err(Error::Shape(format!(
                    "block {} has {} rows but {} variable ids",
                    i + 1,
                    b.nrows(),
                    ids.len()
                )));
            }
            check_finite(b, &format!("block {}", i + 1))?;
        }
        Ok(MultiSourceDataset {
            blocks,
            sample_ids,
            variable_ids,
            standardization: None,
        })
    }

    /// Builds a dataset with generated labels (`s1..`, `b<i>_v<j>`).
    pub fn from_blocks(blocks: Vec<Mat>) -> Result<Self> {
        let n = blocks.first().map(|b| b.ncols()).unwrap_or(0);
        let sample_ids = (1..=n).map(|j| format!("s{j}")).collect();
        let variable_ids = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (1..=b.nrows()).map(|j| format!("b{}_v{j}", i + 1)).collect())
            .collect();
        Self::new(blocks, sample_ids, variable_ids)
    }

    /// Assembles a dataset from loaded CSV blocks, checking sample alignment.
    pub fn from_labeled(blocks: Vec<LabeledMatrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Input("no blocks given".into()))?;
        let sample_ids = first.col_ids.clone();
        for (i, b) in blocks.iter().enumerate() {
            if b.col_ids != sample_ids {
                return Err(Error::Shape(format!(
                    "block {} sample ids differ from block 1 (same ids in the same order are required)",
                    i + 1
                )));
            }
        }
        let variable_ids = blocks.iter().map(|b| b.row_ids.clone()).collect();
        Self::new(
            blocks.into_iter().map(|b| b.values).collect(),
            sample_ids,
            variable_ids,
        )
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn p(&self, i: usize) -> usize {
        self.blocks[i].nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Mat {
        &self.blocks[i]
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn variable_ids(&self) -> &[Vec<String>] {
        &self.variable_ids
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Stacked `[X_1; …; X_k]`.
    pub fn stacked(&self) -> Mat {
        let refs: Vec<&Mat> = self.blocks.iter().collect();
        crate::linalg::vstack(&refs)
    }

    /// Subset of samples (columns), keeping standardization metadata.
    pub fn select_samples(&self, idx: &[usize]) -> Self {
        MultiSourceDataset {
            blocks: self.blocks.iter().map(|b| b.select_columns(idx)).collect(),
            sample_ids: idx.iter().map(|&j| self.sample_ids[j].clone()).collect(),
            variable_ids: self.variable_ids.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Applies a training standardization to data on the same raw scale as the
    /// training data was before it was standardized. Variables are matched by id.
    pub fn apply_standardization(&self, reference: &Standardization) -> Result<Self> {
        if reference.len() != self.k() {
            return Err(Error::Shape(format!(
                "standardization has {} blocks, data has {}",
                reference.len(),
                self.k()
            )));
        }
        let mut blocks = Vec::with_capacity(self.k());
        let mut variable_ids = Vec::with_capacity(self.k());
        for (i, scaling) in reference.iter().enumerate() {
            let lookup: HashMap<&str, usize> = self.variable_ids[i]
                .iter()
                .enumerate()
                .map(|(r, id)| (id.as_str(), r))
                .collect();
            let n = self.n();
            let mut out = Mat::zeros(scaling.len(), n);
            for (r, vs) in scaling.iter().enumerate() {
                let src = *lookup.get(vs.id.as_str()).ok_or_else(|| {
                    Error::Shape(format!("block {} lacks variable '{}'", i + 1, vs.id))
                })?;
                for j in 0..n {
                    out[(r, j)] = (self.blocks[i][(src, j)] - vs.moments.mean) / vs.moments.sd;
                }
            }
            blocks.push(out);
            variable_ids.push(scaling.iter().map(|v| v.id.clone()).collect());
        }
        Ok(MultiSourceDataset {
            blocks,
            sample_ids: self.sample_ids.clone(),
            variable_ids,
            standardization: Some(reference.clone()),
        })
    }

    /// Maps standardized values back to the raw scale.
    pub fn destandardize(&self) -> Self {
        let Some(st) = &self.standardization else {
            return self.clone();
        };
        let blocks = self
            .blocks
            .iter()
            .zip(st)
            .map(|(b, sc)| {
                Mat::from_fn(b.nrows(), b.ncols(), |r, j| {
                    b[(r, j)] * sc[r].moments.sd + sc[r].moments.mean
                })
            })
            .collect();
        MultiSourceDataset {
            blocks,
            sample_ids: self.sample_ids.clone(),
            variable_ids: self.variable_ids.clone(),
            standardization: None,
        }
    }

    pub(crate) fn set_standardization(&mut self, st: Option<Standardization>) {
        self.standardization = st;
    }
}

/// Length-n continuous response.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub values: DVector<f64>,
    pub standardization: Option<Moments>,
}

impl Outcome {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empty outcome".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("outcome has non-finite values".into()));
        }
        Ok(Outcome {
            name: "y".into(),
            values,
            standardization: None,
        })
    }

    /// Reads an outcome from a one-row (or one-column with `SamplesAsRows`) CSV.
    pub fn from_labeled(m: LabeledMatrix) -> Result<(Self, Vec<String>)> {
        if m.values.nrows() != 1 {
            return Err(Error::Shape(format!(
                "outcome file must hold exactly one variable, found {}",
                m.values.nrows()
            )));
        }
        let mut y = Outcome::new(m.values.row(0).transpose())?;
        y.name = m.row_ids[0].clone();
        Ok((y, m.col_ids))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Outcome {
            name: self.name.clone(),
            values: DVector::from_iterator(idx.len(), idx.iter().map(|&j| self.values[j])),
            standardization: self.standardization,
        }
    }

    /// Standardizes with externally supplied moments (e.g. a training fold's).
    pub fn apply_standardization(&self, m: Moments) -> Self {
        Outcome {
            name: self.name.clone(),
            values: self.values.map(|v| (v - m.mean) / m.sd),
            standardization: Some(m),
        }
    }

    pub fn destandardize_value(&self, v: f64) -> f64 {
        match self.standardization {
            Some(m) => v * m.sd + m.mean,
            None => v,
        }
    }
}

/// Sample mean and standard deviation (n − 1 denominator).
pub fn moments(values: impl Iterator<Item = f64> + Clone) -> Moments {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    Moments { mean, sd }
}

fn is_constant(m: Moments) -> bool {
    m.sd <= 1e-12 * m.mean.abs().max(1.0)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardizeReport {
    /// (block index, variable id) of every dropped zero-variance variable.
    pub dropped: Vec<(usize, String)>,
}

/// Centers and scales every variable and the outcome to mean 0, variance 1.
pub fn standardize(
    data: &MultiSourceDataset,
    y: &Outcome,
    policy: ZeroVariancePolicy,
) -> Result<(MultiSourceDataset, Outcome, StandardizeReport)> {
    if y.len() != data.n() {
        return Err(Error::Shape(format!(
            "outcome has {} values, data has {} samples",
            y.len(),
            data.n()
        )));
    }
    let (std_data, report) = standardize_blocks(data, policy)?;
    let ym = moments(y.values.iter().copied());
    if is_constant(ym) {
        return Err(Error::Degeneracy(format!(
            "outcome '{}' has zero variance",
            y.name
        )));
    }
    let mut std_y = y.apply_standardization(ym);
    std_y.standardization = Some(y.standardization.unwrap_or_else(Moments::identity).then(ym));
    Ok((std_data, std_y, report))
}

/// Standardizes the blocks only.
pub fn standardize_blocks(
    data: &MultiSourceDataset,
    policy: ZeroVariancePolicy,
) -> Result<(MultiSourceDataset, StandardizeReport)> {
    let mut report = StandardizeReport::default();
    let mut blocks = Vec::with_capacity(data.k());
    let mut variable_ids = Vec::with_capacity(data.k());
    let mut scaling_all = Vec::with_capacity(data.k());
    for (i, b) in data.blocks.iter().enumerate() {
        let mut keep = Vec::new();
        let mut scaling = Vec::new();
        for r in 0..b.nrows() {
            let m = moments(b.row(r).iter().copied());
            let id = &data.variable_ids[i][r];
            if is_constant(m) {
                match policy {
                    ZeroVariancePolicy::Error => {
                        return Err(Error::Degeneracy(format!(
                            "variable '{id}' in block {} has zero variance",
                            i + 1
                        )))
                    }
                    ZeroVariancePolicy::Drop => {
                        log::warn!("dropping constant variable '{id}' in block {}", i + 1);
                        report.dropped.push((i, id.clone()));
                        continue;
                    }
                }
            }
            let prior = data
                .standardization
                .as_ref()
                .and_then(|s| s[i].get(r))
                .map(|v| v.moments)
                .unwrap_or_else(Moments::identity);
            keep.push((r, m));
            scaling.push(VariableScaling {
                id: id.clone(),
                moments: prior.then(m),
            });
        }
        if keep.is_empty() {
            return Err(Error::Degeneracy(format!(
                "block {} has no non-constant variables",
                i + 1
            )));
        }
        let out = Mat::from_fn(keep.len(), b.ncols(), |r, j| {
            let (src, m) = keep[r];
            (b[(src, j)] - m.mean) / m.sd
        });
        variable_ids.push(keep.iter().map(|(r, _)| data.variable_ids[i][*r].clone()).collect());
        blocks.push(out);
        scaling_all.push(scaling);
    }
    Ok((
        MultiSourceDataset {
            blocks,
            sample_ids: data.sample_ids.clone(),
            variable_ids,
            standardization: Some(scaling_all),
        },
        report,
    ))
}

/// A block replaced by its column geometry: `block = back_map · scores`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlock {
    /// min(p, n) × n, equal to D Vᵀ of the block SVD.
    pub scores: Mat,
    /// p × min(p, n), the left singular vectors.
    pub back_map: Mat,
}

pub fn compress(block: &Mat) -> CompressedBlock {
    let (p, n) = block.shape();
    let f = dense_svd(block, p.min(n));
    let mut scores = f.right.transpose();
    for (r, s) in f.singvals.iter().enumerate() {
        scores.row_mut(r).scale_mut(*s);
    }
    CompressedBlock {
        scores,
        back_map: f.left,
    }
}

/// Maps loadings estimated on compressed scores back to the variable space.
pub fn decompress_loadings(cb: &CompressedBlock, compressed_loadings: &Mat) -> Result<Mat> {
    if compressed_loadings.nrows() != cb.back_map.ncols() {
        return Err(Error::Shape(format!(
            "compressed loadings have {} rows, expected {}",
            compressed_loadings.nrows(),
            cb.back_map.ncols()
        )));
    }
    Ok(&cb.back_map * compressed_loadings)
}
