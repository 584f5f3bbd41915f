//! Run configuration files: TOML with `[simulation]`, `[fit]`, `[selection]`
//! and `[benchmark]` sections. Every key is optional and falls back to the
//! library default.
//!
//! ```toml
//! [simulation]
//! k = 2
//! p = [200, 200]
//! n = 200
//! r_J = 1
//! r_A = 1          # one value for every block, or a list
//! X_err = 0.5
//! Y_err = 0.1
//!
//! [fit]
//! eta = "auto"
//! ranks = "1,1,1"
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::benchmark::{BenchmarkConfig, EtaChoice};
use crate::error::{Error, Result};
use crate::model::{Compression, FitConfig, Ranks};
use crate::selection::default_eta_grid;
use crate::simulate::SimConfig;

/// A number, or the string `"auto"` to select it by cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaSetting {
    Auto,
    Fixed(f64),
}

impl FromStr for EtaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(EtaSetting::Auto);
        }
        s.trim()
            .parse()
            .map(EtaSetting::Fixed)
            .map_err(|_| Error::Config(format!("eta must be a number or 'auto', got '{s}'")))
    }
}

impl std::fmt::Display for EtaSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EtaSetting::Auto => write!(f, "auto"),
            EtaSetting::Fixed(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RankSetting {
    Auto,
    Fixed(Ranks),
}

impl FromStr for RankSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RankSetting::Auto);
        }
        s.parse()
            .map(RankSetting::Fixed)
            .map_err(|_| Error::Config(format!("ranks must be 'rJ,r1,...,rk' or 'auto', got '{s}'")))
    }
}

impl std::fmt::Display for RankSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankSetting::Auto => write!(f, "auto"),
            RankSetting::Fixed(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    Text(String),
}

impl NumOrText {
    fn eta(&self) -> Result<EtaSetting> {
        match self {
            NumOrText::Num(v) => Ok(EtaSetting::Fixed(*v)),
            NumOrText::Text(s) => s.parse(),
        }
    }

    fn from_eta(e: &EtaSetting) -> Self {
        match e {
            EtaSetting::Auto => NumOrText::Text("auto".into()),
            EtaSetting::Fixed(v) => NumOrText::Num(*v),
        }
    }
}

/// A per-block setting given once for every block or as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerBlock {
    All(usize),
    Each(Vec<usize>),
}

impl PerBlock {
    fn count(&self) -> Option<usize> {
        match self {
            PerBlock::All(_) => None,
            PerBlock::Each(v) => Some(v.len()),
        }
    }

    fn expand(&self, k: usize) -> Vec<usize> {
        match self {
            PerBlock::All(v) => vec![*v; k],
            PerBlock::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub k: Option<usize>,
    pub p: Option<PerBlock>,
    pub n: Option<usize>,
    pub n_test: Option<usize>,
    #[serde(rename = "r_J")]
    pub r_j: Option<usize>,
    #[serde(rename = "r_A")]
    pub r_a: Option<PerBlock>,
    #[serde(rename = "w_J")]
    pub w_j: Option<f64>,
    #[serde(rename = "w_A")]
    pub w_a: Option<f64>,
    #[serde(rename = "X_err")]
    pub x_err: Option<f64>,
    #[serde(rename = "Y_err")]
    pub y_err: Option<f64>,
    pub r_prop: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    eta: Option<NumOrText>,
    pub ranks: Option<String>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    /// `auto`, `never` or `always`.
    pub compression: Option<String>,
    pub drop_constant: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub eta_grid: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub reps: Option<usize>,
    /// A fixed η, or `"auto"` for per-replicate CV over the selection grid.
    eta: Option<NumOrText>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

/// Fit options with η and ranks possibly left to model selection.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub eta: EtaSetting,
    pub ranks: RankSetting,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub compression: Compression,
    pub drop_constant: bool,
}

impl FitSettings {
    /// A concrete fit configuration; `auto` values become placeholders.
    pub fn base(&self, k: usize) -> FitConfig {
        let eta = match self.eta {
            EtaSetting::Fixed(e) => e,
            EtaSetting::Auto => 0.5,
        };
        let ranks = match &self.ranks {
            RankSetting::Fixed(r) => r.clone(),
            RankSetting::Auto => Ranks::zeros(k),
        };
        FitConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
            compression: self.compression,
            ..FitConfig::new(eta, ranks)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSettings {
    pub eta_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

fn parse_compression(s: &str) -> Result<Compression> {
    match s.to_ascii_lowercase().as_str() {
        "auto" => Ok(Compression::Auto),
        "never" => Ok(Compression::Never),
        "always" => Ok(Compression::Always),
        _ => Err(Error::Config(format!("compression must be auto, never or always, got '{s}'"))),
    }
}

fn compression_name(c: Compression) -> &'static str {
    match c {
        Compression::Auto => "auto",
        Compression::Never => "never",
        Compression::Always => "always",
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections serialize")
    }

    pub fn simulation(&self) -> Result<SimConfig> {
        let s = &self.simulation;
        let d = SimConfig::default();
        let k = s
            .k
            .or(s.p.as_ref().and_then(PerBlock::count))
            .or(s.r_a.as_ref().and_then(PerBlock::count))
            .unwrap_or(d.p.len());
        let p = s.p.as_ref().map_or_else(|| vec![d.p[0]; k], |v| v.expand(k));
        let r_a = s.r_a.as_ref().map_or_else(|| vec![d.ranks.individual[0]; k], |v| v.expand(k));
        if p.len() != k || r_a.len() != k {
            return Err(Error::Config(format!(
                "simulation: k = {k} but p has {} entries and r_A has {}",
                p.len(),
                r_a.len()
            )));
        }
        let cfg = SimConfig {
            p,
            n: s.n.unwrap_or(d.n),
            n_test: s.n_test.unwrap_or(d.n_test),
            ranks: Ranks::new(s.r_j.unwrap_or(d.ranks.joint), r_a),
            w_joint: s.w_j.unwrap_or(d.w_joint),
            w_indiv: s.w_a.unwrap_or(d.w_indiv),
            x_err: s.x_err.unwrap_or(d.x_err),
            y_err: s.y_err.unwrap_or(d.y_err),
            r_prop: s.r_prop.unwrap_or(d.r_prop),
            seed: s.seed.unwrap_or(d.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_simulation(&mut self, cfg: &SimConfig) {
        self.simulation = SimulationSection {
            k: Some(cfg.k()),
            p: Some(PerBlock::Each(cfg.p.clone())),
            n: Some(cfg.n),
            n_test: Some(cfg.n_test),
            r_j: Some(cfg.ranks.joint),
            r_a: Some(PerBlock::Each(cfg.ranks.individual.clone())),
            w_j: Some(cfg.w_joint),
            w_a: Some(cfg.w_indiv),
            x_err: Some(cfg.x_err),
            y_err: Some(cfg.y_err),
            r_prop: Some(cfg.r_prop),
            seed: Some(cfg.seed),
        };
    }

    pub fn fit(&self) -> Result<FitSettings> {
        let f = &self.fit;
        let d = FitConfig::new(0.5, Ranks::zeros(0));
        let settings = FitSettings {
            eta: f.eta.as_ref().map(NumOrText::eta).transpose()?.unwrap_or(EtaSetting::Auto),
            ranks: f.ranks.as_deref().map(str::parse).transpose()?.unwrap_or(RankSetting::Auto),
            max_iter: f.max_iter.unwrap_or(d.max_iter),
            tol: f.tol.unwrap_or(d.tol),
            seed: f.seed.unwrap_or(d.seed),
            compression: f.compression.as_deref().map(parse_compression).transpose()?.unwrap_or(d.compression),
            drop_constant: f.drop_constant.unwrap_or(false),
        };
        if let EtaSetting::Fixed(e) = settings.eta {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("fit: eta must lie in (0, 1], got {e}")));
            }
        }
        if !(settings.tol > 0.0) || settings.max_iter == 0 {
            return Err(Error::Config("fit: tol and max_iter must be positive".into()));
        }
        Ok(settings)
    }

    pub fn set_fit(&mut self, s: &FitSettings) {
        self.fit = FitSection {
            eta: Some(NumOrText::from_eta(&s.eta)),
            ranks: Some(s.ranks.to_string()),
            max_iter: Some(s.max_iter),
            tol: Some(s.tol),
            seed: Some(s.seed),
            compression: Some(compression_name(s.compression).into()),
            drop_constant: Some(s.drop_constant),
        };
    }

    pub fn selection(&self) -> Result<SelectionSettings> {
        let s = &self.selection;
        let grid = s.eta_grid.clone().unwrap_or_else(default_eta_grid);
        if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::Config("selection: eta_grid must be a nonempty list within (0, 1]".into()));
        }
        let folds = s.folds.unwrap_or(5);
        if folds < 2 {
            return Err(Error::Config("selection: folds must be at least 2".into()));
        }
        Ok(SelectionSettings {
            eta_grid: grid,
            folds,
            seed: s.seed.unwrap_or(1),
        })
    }

    pub fn set_selection(&mut self, s: &SelectionSettings) {
        self.selection = SelectionSection {
            eta_grid: Some(s.eta_grid.clone()),
            folds: Some(s.folds),
            seed: Some(s.seed),
        };
    }

    /// Benchmark settings; fit tolerances come from `[fit]`, the grid from `[selection]`.
    pub fn benchmark(&self) -> Result<BenchmarkConfig> {
        let sim = self.simulation()?;
        let fit = self.fit()?;
        let sel = self.selection()?;
        let mut cfg = BenchmarkConfig::new(sim, self.benchmark.reps.unwrap_or(10));
        cfg.eta = match self.benchmark.eta.as_ref().map(NumOrText::eta).transpose()? {
            Some(EtaSetting::Fixed(e)) => EtaChoice::Fixed(e),
            _ => EtaChoice::Cv(sel.eta_grid),
        };
        cfg.tol = fit.tol;
        cfg.max_iter = fit.max_iter;
        cfg.compression = fit.compression;
        if cfg.reps == 0 {
            return Err(Error::Config("benchmark: reps must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn set_benchmark(&mut self, cfg: &BenchmarkConfig) {
        self.benchmark = BenchmarkSection {
            reps: Some(cfg.reps),
            eta: Some(match &cfg.eta {
                EtaChoice::Fixed(e) => NumOrText::Num(*e),
                EtaChoice::Cv(_) => NumOrText::Text("auto".into()),
            }),
        };
    }
}
