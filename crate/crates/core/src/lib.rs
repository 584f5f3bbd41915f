//! Supervised joint and individual variation explained (sJIVE): low-rank
//! decomposition of several data blocks measured on the same samples into
//! shared and block-specific structure, fit jointly with a continuous outcome.

#[cfg(test)]
#[macro_use]
mod test_macros;

pub mod archive;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod predict;
pub mod selection;
pub mod simulate;

pub use data::{MultiSourceDataset, Outcome};
pub use error::{Error, Result};
pub use model::{fit, FitConfig, FitReport, Ranks, SJiveModel};
