//! Basis-quantity validation, exponent solving and Π transforms.
//!
//! A basis of `p` variables must be *independent* (its dimension submatrix
//! has full rank `p`) and *representative* (every remaining variable's
//! dimension lies in the span of the basis columns). Both checks use exact
//! rational elimination.

mod arrange;
pub mod linalg;
pub mod presets;
mod transform;

pub use arrange::{arrange_inputs, InputArrangement};
pub use transform::{apply_transform, build_pi_transform, CuratedRecipes, PiQuantity, PiTransform};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::dimension::{DimensionError, DimensionVector, EvalError, FundamentalDimension, Rational, SystemSpec, VariableSpec};
use crate::fanova::FanovaReport;
use linalg::RationalMatrix;

#[derive(Debug, Error)]
pub enum BuckinghamError {
    #[error("basis needs {expected} members, got {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("`{0}` is not an input of the system")]
    UnknownVariable(String),
    #[error("basis {0:?} is not independent")]
    NotIndependent(Vec<String>),
    #[error("`{variable}` cannot be represented by basis {basis:?}")]
    NotRepresentative { variable: String, basis: Vec<String> },
    #[error("no valid basis of size {p} exists among the ranked inputs")]
    Infeasible { p: usize },
    #[error("curated quantity `{name}` is not dimensionless: [{dimension}]")]
    CuratedNotDimensionless { name: String, dimension: DimensionVector },
    #[error("curated set has {found} input quantities, expected {expected}")]
    CuratedCount { expected: usize, found: usize },
    #[error("output recipe `{0}` is not invertible in the output variable")]
    NoInverse(String),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error("domain error in `{quantity}`: {source}")]
    Domain { quantity: String, source: EvalError },
    #[error("non-positive value {value} in column `{column}` cannot be logged")]
    LogDomain { column: String, value: f64 },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("strategy `{strategy}` is not available for testbed `{testbed}`")]
    Unavailable { strategy: &'static str, testbed: &'static str },
}

/// Dimension exponents of every system variable over the dimensions present.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionMatrix {
    pub dimensions: Vec<FundamentalDimension>,
    pub variables: Vec<String>,
    /// `entries[row][col]`: exponent of `dimensions[row]` in `variables[col]`.
    pub entries: RationalMatrix,
}

impl DimensionMatrix {
    pub fn from_system(sys: &SystemSpec) -> Self {
        let dimensions = sys.present_dimensions();
        let vars: Vec<&VariableSpec> = sys.all_variables().collect();
        let entries = dimensions
            .iter()
            .map(|d| vars.iter().map(|v| v.dimension.exponent(*d)).collect())
            .collect();
        DimensionMatrix {
            dimensions,
            variables: vars.iter().map(|v| v.name.clone()).collect(),
            entries,
        }
    }

    pub fn column_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Variable's dimension restricted to the present dimensions.
    pub fn restrict(&self, dim: &DimensionVector) -> Vec<Rational> {
        self.dimensions.iter().map(|d| dim.exponent(*d)).collect()
    }
}

/// A validated set of basis quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub members: Vec<String>,
    dimensions: Vec<FundamentalDimension>,
    /// `p × p`, rows are dimensions, columns are members.
    basis_matrix: RationalMatrix,
}

impl BasisSet {
    pub fn basis_matrix(&self) -> &RationalMatrix {
        &self.basis_matrix
    }

    pub fn dimensions(&self) -> &[FundamentalDimension] {
        &self.dimensions
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.members.iter().any(|m| m == name)
    }
}

/// Checks count, representativity and independence of a candidate basis.
///
/// Representativity is checked first, so a rank-deficient basis in a
/// full-rank system reports the variable it cannot represent.
pub fn validate_basis<S: AsRef<str>>(candidates: &[S], sys: &SystemSpec) -> Result<BasisSet, BuckinghamError> {
    let matrix = DimensionMatrix::from_system(sys);
    let p = matrix.dimensions.len();
    let members: Vec<String> = candidates.iter().map(|c| c.as_ref().to_string()).collect();
    if members.len() != p {
        return Err(BuckinghamError::WrongCount { expected: p, found: members.len() });
    }
    let mut cols = Vec::with_capacity(p);
    for m in &members {
        if !sys.inputs.iter().any(|v| &v.name == m) {
            return Err(BuckinghamError::UnknownVariable(m.clone()));
        }
        cols.push(matrix.column_of(m).expect("input column"));
    }
    let basis_matrix: RationalMatrix =
        matrix.entries.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect();
    for (j, name) in matrix.variables.iter().enumerate() {
        if cols.contains(&j) {
            continue;
        }
        let target: Vec<Rational> = matrix.entries.iter().map(|row| row[j]).collect();
        if !linalg::in_column_space(&basis_matrix, &target) {
            return Err(BuckinghamError::NotRepresentative { variable: name.clone(), basis: members });
        }
    }
    if linalg::rank(&basis_matrix) < p {
        return Err(BuckinghamError::NotIndependent(members));
    }
    Ok(BasisSet { members, dimensions: matrix.dimensions, basis_matrix })
}

/// Exponents `a` with `basis_matrix · a = dim(v)`, so `v / Π bₖ^{aₖ}` is dimensionless.
pub fn solve_exponents(v: &VariableSpec, basis: &BasisSet) -> Result<Vec<Rational>, BuckinghamError> {
    let not_rep = || BuckinghamError::NotRepresentative { variable: v.name.clone(), basis: basis.members.clone() };
    if v.dimension.support().any(|d| !basis.dimensions.contains(&d)) {
        return Err(not_rep());
    }
    if basis.is_empty() {
        return Ok(Vec::new());
    }
    let rhs: Vec<Rational> = basis.dimensions.iter().map(|d| v.dimension.exponent(*d)).collect();
    linalg::solve(&basis.basis_matrix, &rhs).ok_or_else(not_rep)
}

/// Greedy basis choice from main-effect importance.
///
/// Inputs are ranked by score (descending, ties in declaration order); an
/// input joins the basis iff it raises the rank of the selected dimension
/// submatrix. Stops at rank `p`.
pub fn recommend_basis_from_scores(sys: &SystemSpec, scores: &[(String, f64)]) -> Result<BasisSet, BuckinghamError> {
    let matrix = DimensionMatrix::from_system(sys);
    let p = matrix.dimensions.len();
    let mut ranked: Vec<(usize, &VariableSpec, f64)> = sys
        .non_constant_inputs()
        .enumerate()
        .map(|(order, v)| {
            let score = scores.iter().find(|(n, _)| n == &v.name).map(|s| s.1);
            score.map(|s| (order, v, s)).ok_or_else(|| BuckinghamError::UnknownVariable(v.name.clone()))
        })
        .collect::<Result<_, _>>()?;
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let mut chosen_cols: Vec<usize> = Vec::new();
    let mut chosen: Vec<String> = Vec::new();
    for (_, v, _) in &ranked {
        if chosen.len() == p {
            break;
        }
        let col = matrix.column_of(&v.name).expect("input column");
        let mut trial = chosen_cols.clone();
        trial.push(col);
        if linalg::column_rank(&matrix.entries, &trial) > chosen_cols.len() {
            chosen_cols = trial;
            chosen.push(v.name.clone());
        }
    }
    if chosen.len() < p {
        return Err(BuckinghamError::Infeasible { p });
    }
    validate_basis(&chosen, sys).map_err(|_| BuckinghamError::Infeasible { p })
}

/// [`recommend_basis_from_scores`] driven by a FANOVA report's main effects.
pub fn recommend_basis(sys: &SystemSpec, fanova: &FanovaReport) -> Result<BasisSet, BuckinghamError> {
    let scores: Vec<(String, f64)> = fanova.main_effects.iter().map(|m| (m.input.clone(), m.percent)).collect();
    recommend_basis_from_scores(sys, &scores)
}
