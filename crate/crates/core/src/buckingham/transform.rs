use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{solve_exponents, BasisSet, BuckinghamError};
use crate::dataset::{Column, Dataset};
use crate::dimension::{check_expr, monomial_quotient, QuantityExpr, Rational, SystemSpec};

/// One dimensionless quantity and how to compute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiQuantity {
    /// Column name in transformed datasets.
    pub name: String,
    pub expr: QuantityExpr,
    /// Solved basis exponents when the quantity is a generic monomial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<Rational>>,
}

/// Hand-chosen quantities overriding the generic monomial recipes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CuratedRecipes {
    /// Replaces the whole input set when present.
    pub inputs: Option<Vec<QuantityExpr>>,
    pub output: Option<QuantityExpr>,
}

/// A validated nondimensionalization of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiTransform {
    pub label: String,
    pub system: SystemSpec,
    pub basis: BasisSet,
    pub inputs: Vec<PiQuantity>,
    pub output: PiQuantity,
}

fn column_name(expr: &QuantityExpr, fallback: String) -> String {
    match expr {
        QuantityExpr::Var(name) => name.clone(),
        _ => fallback,
    }
}

/// Builds the `(#inputs − p)` input recipes plus the output recipe.
///
/// Without curation every non-basis input `v` (constants included) becomes
/// `v / Π bₖ^{aₖ}` with exponents from [`solve_exponents`], and likewise
/// the output.
pub fn build_pi_transform(
    sys: &SystemSpec,
    basis: &BasisSet,
    curated: Option<&CuratedRecipes>,
    label: &str,
) -> Result<PiTransform, BuckinghamError> {
    let expected = sys.inputs.len() - basis.len();
    let monomial = |v: &crate::dimension::VariableSpec| -> Result<(QuantityExpr, Vec<Rational>), BuckinghamError> {
        let a = solve_exponents(v, basis)?;
        Ok((monomial_quotient(&v.name, &basis.members, &a), a))
    };
    let curated_inputs = curated.and_then(|c| c.inputs.as_ref());
    let inputs: Vec<PiQuantity> = match curated_inputs {
        Some(exprs) => {
            if exprs.len() != expected {
                return Err(BuckinghamError::CuratedCount { expected, found: exprs.len() });
            }
            exprs
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let dimension = check_expr(e, sys)?;
                    let name = column_name(e, format!("q{}", i + 1));
                    if !dimension.is_dimensionless() {
                        return Err(BuckinghamError::CuratedNotDimensionless { name, dimension });
                    }
                    Ok(PiQuantity { name, expr: e.clone(), exponents: None })
                })
                .collect::<Result<_, _>>()?
        }
        None => sys
            .inputs
            .iter()
            .filter(|v| !basis.contains(&v.name))
            .enumerate()
            .map(|(i, v)| {
                let (expr, a) = monomial(v)?;
                debug_assert!(check_expr(&expr, sys).map(|d| d.is_dimensionless()).unwrap_or(false));
                Ok(PiQuantity { name: column_name(&expr, format!("q{}", i + 1)), expr, exponents: Some(a) })
            })
            .collect::<Result<_, BuckinghamError>>()?,
    };

    let output = match curated.and_then(|c| c.output.as_ref()) {
        Some(e) => {
            let dimension = check_expr(e, sys)?;
            let name = column_name(e, "q0".to_string());
            if !dimension.is_dimensionless() {
                return Err(BuckinghamError::CuratedNotDimensionless { name, dimension });
            }
            PiQuantity { name, expr: e.clone(), exponents: None }
        }
        None => {
            let (expr, a) = monomial(&sys.output)?;
            PiQuantity { name: column_name(&expr, "q0".to_string()), expr, exponents: Some(a) }
        }
    };
    if !output.expr.is_invertible_in(&sys.output.name) {
        return Err(BuckinghamError::NoInverse(output.expr.to_string()));
    }
    Ok(PiTransform {
        label: label.to_string(),
        system: sys.clone(),
        basis: basis.clone(),
        inputs,
        output,
    })
}

struct RowLookup<'a> {
    data: &'a Dataset,
    index: HashMap<&'a str, usize>,
}

impl<'a> RowLookup<'a> {
    fn new(data: &'a Dataset) -> Self {
        let index = data.columns().iter().enumerate().map(|(j, c)| (c.name.as_str(), j)).collect();
        RowLookup { data, index }
    }

    fn at(&self, row: usize) -> impl Fn(&str) -> Option<f64> + '_ {
        move |name| self.index.get(name).map(|&j| self.data.values()[(row, j)])
    }

    fn eval_column(&self, q: &PiQuantity) -> Result<Vec<f64>, BuckinghamError> {
        for leaf in q.expr.leaves() {
            self.data.require(&leaf)?;
        }
        (0..self.data.nrows())
            .map(|i| {
                q.expr
                    .eval(&self.at(i))
                    .map_err(|source| BuckinghamError::Domain { quantity: q.name.clone(), source })
            })
            .collect()
    }
}

impl PiTransform {
    pub fn output_name(&self) -> &str {
        &self.system.output.name
    }

    /// Dimensionless input columns, in recipe order.
    pub fn transform_inputs(&self, data: &Dataset) -> Result<Vec<(String, Vec<f64>)>, BuckinghamError> {
        let lookup = RowLookup::new(data);
        self.inputs.iter().map(|q| Ok((q.name.clone(), lookup.eval_column(q)?))).collect()
    }

    /// The dimensionless output column; `data` must contain the output.
    pub fn forward_output(&self, data: &Dataset) -> Result<Vec<f64>, BuckinghamError> {
        RowLookup::new(data).eval_column(&self.output)
    }

    /// Maps predicted `q0` values back to the original output scale.
    ///
    /// `data` supplies every other leaf of the output recipe row by row.
    pub fn invert_output(&self, q0: &[f64], data: &Dataset) -> Result<Vec<f64>, BuckinghamError> {
        let lookup = RowLookup::new(data);
        let target = self.output_name();
        for leaf in self.output.expr.leaves() {
            if leaf != target {
                data.require(&leaf)?;
            }
        }
        q0.iter()
            .enumerate()
            .map(|(i, &q)| {
                let at = lookup.at(i);
                let env = |name: &str| if name == target { None } else { at(name) };
                self.output
                    .expr
                    .solve_for(target, q, &env)
                    .ok_or_else(|| BuckinghamError::NoInverse(self.output.expr.to_string()))?
                    .map_err(|source| BuckinghamError::Domain { quantity: self.output.name.clone(), source })
            })
            .collect()
    }
}

/// Replaces original columns by the transform's dimensionless columns.
///
/// Row order is preserved; the output column is transformed when present.
pub fn apply_transform(t: &PiTransform, data: &Dataset) -> Result<Dataset, BuckinghamError> {
    let mut cols: Vec<(Column, Vec<f64>)> = t
        .transform_inputs(data)?
        .into_iter()
        .map(|(name, v)| (Column::input(name), v))
        .collect();
    if data.column_index(t.output_name()).is_some() {
        cols.push((Column::output(t.output.name.clone()), t.forward_output(data)?));
    }
    Ok(Dataset::from_columns(cols, data.provenance)?)
}
