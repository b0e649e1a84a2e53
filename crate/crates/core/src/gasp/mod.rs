//! Gaussian stochastic process regression with a product correlation.
//!
//! Training maximizes the profile likelihood (trend coefficients and process
//! variance concentrated out) over per-input scales and smoothness
//! parameters. Inputs are rescaled to `[0, 1]` and the output standardized
//! before fitting; predictions are mapped back to the original scale.

mod kernel;
mod likelihood;
mod model;
pub mod optimize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetError;

pub use kernel::{KernelFamily, KernelSpec};
pub use likelihood::NUGGET_LADDER;
pub use model::{neg_log_likelihood, train, GaspModel, Prediction, MODEL_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum GaspError {
    #[error("correlation matrix not positive definite even with nugget {nugget:e}")]
    CholeskyFailure { nugget: f64 },
    #[error("trend design matrix is rank deficient")]
    RankDeficientTrend,
    #[error("need more than {trend_columns} runs, got {n}")]
    TooFewRuns { n: usize, trend_columns: usize },
    #[error("all {starts} optimizer starts failed")]
    OptimizationFailure { starts: usize },
    #[error("dataset has no output column")]
    NoOutput,
    #[error("dataset has no input columns")]
    NoInputs,
    #[error("model input `{0}` missing from prediction data")]
    ColumnMismatch(String),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendKind {
    Constant,
    Linear,
}

impl fmt::Display for TrendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrendKind::Constant => "constant",
            TrendKind::Linear => "linear",
        })
    }
}

impl FromStr for TrendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "constant" => Ok(TrendKind::Constant),
            "linear" => Ok(TrendKind::Linear),
            other => Err(format!("unknown trend `{other}` (expected constant or linear)")),
        }
    }
}

/// Regression part of the model: an intercept, plus linear terms in the
/// listed kernel-input positions for [`TrendKind::Linear`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSpec {
    pub kind: TrendKind,
    pub regressors: Vec<usize>,
}

impl TrendSpec {
    pub fn constant() -> Self {
        TrendSpec { kind: TrendKind::Constant, regressors: Vec::new() }
    }

    pub fn columns(&self) -> usize {
        1 + self.regressors.len()
    }

    /// Regressor values `f(x)` for one (scaled) input row.
    pub fn row(&self, x: &[f64]) -> Vec<f64> {
        std::iter::once(1.0).chain(self.regressors.iter().map(|&j| x[j])).collect()
    }
}

/// Training options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub family: KernelFamily,
    pub trend: TrendKind,
    pub starts: usize,
    pub seed: u64,
    /// Estimate the power-exponential smoothness; otherwise fix it at `fixed_power`.
    pub estimate_power: bool,
    pub fixed_power: f64,
    pub theta_bounds: (f64, f64),
    pub nugget_ladder: Vec<f64>,
    pub max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: KernelFamily::PowerExponential,
            trend: TrendKind::Constant,
            starts: 8,
            seed: 0,
            estimate_power: true,
            fixed_power: 2.0,
            theta_bounds: (1e-6, 1e4),
            nugget_ladder: NUGGET_LADDER.to_vec(),
            max_iter: 150,
        }
    }
}

impl TrainConfig {
    pub fn new(family: KernelFamily, trend: TrendKind, seed: u64) -> Self {
        TrainConfig { family, trend, seed, ..Default::default() }
    }
}
