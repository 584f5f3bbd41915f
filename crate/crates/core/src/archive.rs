//! Single-file model and truth archives: a tar of CSV matrices plus a
//! `manifest.txt` of `key = value` lines. Floats are written in shortest
//! round-trip form, so loading reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::data::{Moments, VariableScaling};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{Coefficients, FitReport, Ranks, SJiveModel};
use crate::simulate::SimTruth;

const FORMAT: &str = "sjive-archive-1";

type Entries = BTreeMap<String, Vec<u8>>;

fn write_tar(path: &Path, entries: &Entries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut builder = tar::Builder::new(file);
    for (name, bytes) in entries {
        let mut header = tar::Header::new_gnu();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_cksum();
        builder
            .append_data(&mut header, name, bytes.as_slice())
            .map_err(|e| Error::io(path, e))?;
    }
    builder
        .into_inner()
        .and_then(|mut f| f.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_tar(path: &Path) -> Result<Entries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut archive = tar::Archive::new(file);
    let mut out = Entries::new();
    for entry in archive.entries().map_err(|e| Error::io(path, e))? {
        let mut entry = entry.map_err(|e| Error::io(path, e))?;
        let name = entry
            .path()
            .map_err(|e| Error::io(path, e))?
            .to_string_lossy()
            .into_owned();
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        out.insert(name, bytes);
    }
    Ok(out)
}

/// First line `rows,cols`, then one line per row.
fn encode_matrix(m: &Mat) -> Vec<u8> {
    let mut s = format!("{},{}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

fn decode_matrix(name: &str, bytes: &[u8]) -> Result<Mat> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Archive(format!("{name} is not UTF-8")))?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::Archive(format!("{name}: {msg}"));
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("empty"))?
        .split(',')
        .map(|t| t.parse().map_err(|_| bad("bad dimensions")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(bad("bad dimensions"));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = lines.next().ok_or_else(|| bad("too few rows"))?;
        if cols == 0 {
            continue;
        }
        for t in line.split(',') {
            data.push(t.parse::<f64>().map_err(|_| bad(&format!("bad number '{t}'")))?);
        }
    }
    if data.len() != rows * cols {
        return Err(bad("ragged rows"));
    }
    Ok(Mat::from_row_slice(rows, cols, &data))
}

fn encode_vector(v: &DVector<f64>) -> Vec<u8> {
    encode_matrix(&Mat::from_column_slice(v.len(), 1, v.as_slice()))
}

fn decode_vector(name: &str, bytes: &[u8]) -> Result<DVector<f64>> {
    let m = decode_matrix(name, bytes)?;
    if m.ncols() != 1 {
        return Err(Error::Archive(format!("{name}: expected one column")));
    }
    Ok(m.column(0).into_owned())
}

fn encode_ids(ids: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for id in ids {
        w.write_record([id]).map_err(|e| Error::Archive(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Archive(e.to_string()))
}

fn decode_ids(name: &str, bytes: &[u8]) -> Result<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
    r.records()
        .map(|rec| {
            rec.map(|rec| rec.get(0).unwrap_or_default().to_string())
                .map_err(|e| Error::Archive(format!("{name}: {e}")))
        })
        .collect()
}

fn encode_scaling(sc: &[VariableScaling]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for v in sc {
        w.write_record([v.id.clone(), format!("{:?}", v.moments.mean), format!("{:?}", v.moments.sd)])
            .map_err(|e| Error::Archive(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Archive(e.to_string()))
}

fn decode_scaling(name: &str, bytes: &[u8]) -> Result<Vec<VariableScaling>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Archive(format!("{name}: {e}")))?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Archive(format!("{name}: bad scaling row")))
            };
            Ok(VariableScaling {
                id: rec.get(0).unwrap_or_default().to_string(),
                moments: Moments { mean: num(1)?, sd: num(2)? },
            })
        })
        .collect()
}

fn encode_manifest(kv: &[(String, String)]) -> Vec<u8> {
    let mut s = String::new();
    for (k, v) in kv {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s.into_bytes()
}

fn decode_manifest(bytes: &[u8]) -> Result<BTreeMap<String, String>> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Archive("manifest is not UTF-8".into()))?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Archive(format!("bad manifest line '{line}'")))?;
        out.insert(k.to_string(), v.to_string());
    }
    if out.get("format").map(String::as_str) != Some(FORMAT) {
        return Err(Error::Archive(format!("not a {FORMAT} archive")));
    }
    Ok(out)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn bytes(&self, name: &str) -> Result<&[u8]> {
        self.entries
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Archive(format!("missing entry {name}")))
    }

    fn matrix(&self, name: &str) -> Result<Mat> {
        decode_matrix(name, self.bytes(name)?)
    }

    fn vector(&self, name: &str) -> Result<DVector<f64>> {
        decode_vector(name, self.bytes(name)?)
    }
}

fn field<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str) -> Result<T> {
    m.get(key)
        .ok_or_else(|| Error::Archive(format!("manifest lacks '{key}'")))?
        .parse()
        .map_err(|_| Error::Archive(format!("manifest field '{key}' is malformed")))
}

/// Fit diagnostics stored alongside a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveInfo {
    pub iterations: Option<usize>,
    pub objective: Option<f64>,
    pub converged: Option<bool>,
}

pub fn save_model(path: impl AsRef<Path>, model: &SJiveModel, report: Option<&FitReport>) -> Result<()> {
    let path = path.as_ref();
    let k = model.k();
    let mut kv = vec![
        ("format".to_string(), FORMAT.to_string()),
        ("kind".into(), "model".into()),
        ("eta".into(), format!("{:?}", model.eta)),
        ("ranks".into(), model.ranks.to_string()),
        ("k".into(), k.to_string()),
        ("n".into(), model.n().to_string()),
        ("has_theta".into(), model.theta.is_some().to_string()),
        ("has_x_standardization".into(), model.x_standardization.is_some().to_string()),
        ("zero_components".into(), model.zero_components.join(";")),
    ];
    if let Some(m) = model.y_standardization {
        kv.push(("y_mean".into(), format!("{:?}", m.mean)));
        kv.push(("y_sd".into(), format!("{:?}", m.sd)));
    }
    if let Some(r) = report {
        kv.push(("iterations".into(), r.iterations.to_string()));
        kv.push(("objective".into(), format!("{:?}", r.final_objective)));
        kv.push(("converged".into(), r.converged.to_string()));
    }
    let mut e = Entries::new();
    e.insert("manifest.txt".into(), encode_manifest(&kv));
    e.insert("joint_scores.csv".into(), encode_matrix(&model.joint_scores));
    for i in 0..k {
        let b = i + 1;
        e.insert(format!("joint_loadings_{b}.csv"), encode_matrix(&model.joint_loadings[i]));
        e.insert(format!("indiv_loadings_{b}.csv"), encode_matrix(&model.indiv_loadings[i]));
        e.insert(format!("indiv_scores_{b}.csv"), encode_matrix(&model.indiv_scores[i]));
        e.insert(format!("variable_ids_{b}.csv"), encode_ids(&model.variable_ids[i])?);
        if let Some(st) = &model.x_standardization {
            e.insert(format!("standardization_{b}.csv"), encode_scaling(&st[i])?);
        }
    }
    if let Some(th) = &model.theta {
        e.insert("theta_joint.csv".into(), encode_vector(&th.joint));
        for (i, t) in th.individual.iter().enumerate() {
            e.insert(format!("theta_indiv_{}.csv", i + 1), encode_vector(t));
        }
    }
    write_tar(path, &e)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(SJiveModel, ArchiveInfo)> {
    let r = Reader {
        entries: read_tar(path.as_ref())?,
    };
    let man = decode_manifest(r.bytes("manifest.txt")?)?;
    if man.get("kind").map(String::as_str) != Some("model") {
        return Err(Error::Archive("archive does not hold a model".into()));
    }
    let k: usize = field(&man, "k")?;
    let ranks: Ranks = field::<String>(&man, "ranks")?
        .parse()
        .map_err(|_| Error::Archive("bad ranks".into()))?;
    let mut joint_loadings = Vec::with_capacity(k);
    let mut indiv_loadings = Vec::with_capacity(k);
    let mut indiv_scores = Vec::with_capacity(k);
    let mut variable_ids = Vec::with_capacity(k);
    for b in 1..=k {
        joint_loadings.push(r.matrix(&format!("joint_loadings_{b}.csv"))?);
        indiv_loadings.push(r.matrix(&format!("indiv_loadings_{b}.csv"))?);
        indiv_scores.push(r.matrix(&format!("indiv_scores_{b}.csv"))?);
        let name = format!("variable_ids_{b}.csv");
        variable_ids.push(decode_ids(&name, r.bytes(&name)?)?);
    }
    let x_standardization = if field::<bool>(&man, "has_x_standardization")? {
        Some(
            (1..=k)
                .map(|b| {
                    let name = format!("standardization_{b}.csv");
                    decode_scaling(&name, r.bytes(&name)?)
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let theta = if field::<bool>(&man, "has_theta")? {
        Some(Coefficients {
            joint: r.vector("theta_joint.csv")?,
            individual: (1..=k)
                .map(|b| r.vector(&format!("theta_indiv_{b}.csv")))
                .collect::<Result<_>>()?,
        })
    } else {
        None
    };
    let y_standardization = match (man.get("y_mean"), man.get("y_sd")) {
        (Some(_), Some(_)) => Some(Moments {
            mean: field(&man, "y_mean")?,
            sd: field(&man, "y_sd")?,
        }),
        _ => None,
    };
    let zero_components = man
        .get("zero_components")
        .filter(|s| !s.is_empty())
        .map(|s| s.split(';').map(str::to_string).collect())
        .unwrap_or_default();
    let model = SJiveModel {
        eta: field(&man, "eta")?,
        ranks,
        joint_loadings,
        joint_scores: r.matrix("joint_scores.csv")?,
        indiv_loadings,
        indiv_scores,
        theta,
        variable_ids,
        x_standardization,
        y_standardization,
        zero_components,
    };
    check_consistent(&model)?;
    let info = ArchiveInfo {
        iterations: man.get("iterations").map(|_| field(&man, "iterations")).transpose()?,
        objective: man.get("objective").map(|_| field(&man, "objective")).transpose()?,
        converged: man.get("converged").map(|_| field(&man, "converged")).transpose()?,
    };
    Ok((model, info))
}

fn check_consistent(m: &SJiveModel) -> Result<()> {
    let bad = |what: &str| Err(Error::Archive(format!("inconsistent archive: {what}")));
    if m.ranks.individual.len() != m.k() || m.joint_scores.nrows() != m.ranks.joint {
        return bad("ranks");
    }
    for i in 0..m.k() {
        let p = m.joint_loadings[i].nrows();
        if m.joint_loadings[i].ncols() != m.ranks.joint
            || m.indiv_loadings[i].shape() != (p, m.ranks.individual[i])
            || m.indiv_scores[i].shape() != (m.ranks.individual[i], m.n())
            || m.variable_ids[i].len() != p
        {
            return bad(&format!("block {}", i + 1));
        }
    }
    Ok(())
}

pub fn save_truth(path: impl AsRef<Path>, truth: &SimTruth) -> Result<()> {
    let k = truth.k();
    let kv = vec![
        ("format".to_string(), FORMAT.to_string()),
        ("kind".into(), "truth".into()),
        ("ranks".into(), truth.ranks.to_string()),
        ("k".into(), k.to_string()),
    ];
    let mut e = Entries::new();
    e.insert("manifest.txt".into(), encode_manifest(&kv));
    e.insert("joint_scores.csv".into(), encode_matrix(&truth.joint_scores));
    e.insert("theta_joint.csv".into(), encode_vector(&truth.theta.joint));
    e.insert("outcome_noise.csv".into(), encode_vector(&truth.outcome_noise));
    for i in 0..k {
        let b = i + 1;
        e.insert(format!("joint_loadings_{b}.csv"), encode_matrix(&truth.joint_loadings[i]));
        e.insert(format!("indiv_loadings_{b}.csv"), encode_matrix(&truth.indiv_loadings[i]));
        e.insert(format!("indiv_scores_{b}.csv"), encode_matrix(&truth.indiv_scores[i]));
        e.insert(format!("theta_indiv_{b}.csv"), encode_vector(&truth.theta.individual[i]));
        e.insert(format!("noise_{b}.csv"), encode_matrix(&truth.noise[i]));
    }
    write_tar(path.as_ref(), &e)
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<SimTruth> {
    let r = Reader {
        entries: read_tar(path.as_ref())?,
    };
    let man = decode_manifest(r.bytes("manifest.txt")?)?;
    if man.get("kind").map(String::as_str) != Some("truth") {
        return Err(Error::Archive("archive does not hold simulation truth".into()));
    }
    let k: usize = field(&man, "k")?;
    let ranks: Ranks = field::<String>(&man, "ranks")?
        .parse()
        .map_err(|_| Error::Archive("bad ranks".into()))?;
    let each = |prefix: &str| -> Result<Vec<Mat>> { (1..=k).map(|b| r.matrix(&format!("{prefix}_{b}.csv"))).collect() };
    Ok(SimTruth {
        ranks,
        joint_loadings: each("joint_loadings")?,
        joint_scores: r.matrix("joint_scores.csv")?,
        indiv_loadings: each("indiv_loadings")?,
        indiv_scores: each("indiv_scores")?,
        theta: Coefficients {
            joint: r.vector("theta_joint.csv")?,
            individual: (1..=k)
                .map(|b| r.vector(&format!("theta_indiv_{b}.csv")))
                .collect::<Result<_>>()?,
        },
        noise: each("noise")?,
        outcome_noise: r.vector("outcome_noise.csv")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = Mat::from_row_slice(2, 3, &[0.1, -1e-300, 1.0 / 3.0, f64::MAX, 5e-324, -0.0]);
        let back = decode_matrix("m", &encode_matrix(&m)).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let empty = Mat::zeros(3, 0);
        assert_eq!(decode_matrix("e", &encode_matrix(&empty)).unwrap().shape(), (3, 0));
    }

    #[test]
    fn malformed_matrix_rejected() {
        assert!(decode_matrix("m", b"2,2\n1,2\n3\n").is_err());
        assert!(decode_matrix("m", b"2,2\n1,2\n").is_err());
        assert!(decode_matrix("m", b"x\n").is_err());
    }

    #[test]
    fn ids_with_commas_survive() {
        let ids = vec!["a,b".to_string(), "plain".into(), "q\"uote".into()];
        assert_eq!(decode_ids("i", &encode_ids(&ids).unwrap()).unwrap(), ids);
    }
}
