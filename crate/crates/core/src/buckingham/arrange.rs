use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BuckinghamError;
use crate::dataset::{Column, ColumnKind, Dataset};

/// How model inputs are presented to the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputArrangement {
    Raw,
    Log,
    /// Logged inputs plus every pairwise sum and difference of logs.
    ExpandedLog,
}

impl InputArrangement {
    pub const ALL: [InputArrangement; 3] = [InputArrangement::Raw, InputArrangement::Log, InputArrangement::ExpandedLog];

    pub fn name(self) -> &'static str {
        match self {
            InputArrangement::Raw => "raw",
            InputArrangement::Log => "log",
            InputArrangement::ExpandedLog => "expanded-log",
        }
    }
}

impl fmt::Display for InputArrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputArrangement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "raw" => Ok(InputArrangement::Raw),
            "log" => Ok(InputArrangement::Log),
            "expanded-log" | "expanded_log" => Ok(InputArrangement::ExpandedLog),
            other => Err(format!("unknown input arrangement `{other}` (expected raw, log or expanded-log)")),
        }
    }
}

fn logged(name: &str, values: Vec<f64>) -> Result<Vec<f64>, BuckinghamError> {
    values
        .into_iter()
        .map(|v| {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(BuckinghamError::LogDomain { column: name.to_string(), value: v })
            }
        })
        .collect()
}

/// Rearranges the `Input` columns of `data`.
///
/// `log` replaces each input `x` by `ln(x)`; `expanded-log` also appends,
/// for every pair `i < j`, the columns `ln(xi)+ln(xj)` and `ln(xi)-ln(xj)`
/// tagged [`ColumnKind::Expanded`]. The output column stays last and untouched.
pub fn arrange_inputs(data: &Dataset, kind: InputArrangement) -> Result<Dataset, BuckinghamError> {
    if kind == InputArrangement::Raw {
        return Ok(data.clone());
    }
    let mut logs: Vec<(String, Vec<f64>)> = Vec::new();
    for j in data.indices_of(&[ColumnKind::Input]) {
        let name = &data.columns()[j].name;
        logs.push((name.clone(), logged(name, data.column_values(j))?));
    }
    let mut cols: Vec<(Column, Vec<f64>)> =
        logs.iter().map(|(n, v)| (Column::input(format!("ln({n})")), v.clone())).collect();
    if kind == InputArrangement::ExpandedLog {
        for i in 0..logs.len() {
            for j in (i + 1)..logs.len() {
                let (a, va) = &logs[i];
                let (b, vb) = &logs[j];
                let sum = va.iter().zip(vb).map(|(x, y)| x + y).collect();
                let diff = va.iter().zip(vb).map(|(x, y)| x - y).collect();
                cols.push((Column { name: format!("ln({a})+ln({b})"), kind: ColumnKind::Expanded, spec: None }, sum));
                cols.push((Column { name: format!("ln({a})-ln({b})"), kind: ColumnKind::Expanded, spec: None }, diff));
            }
        }
    }
    if let Some(j) = data.output_index() {
        cols.push((data.columns()[j].clone(), data.column_values(j)));
    }
    Ok(Dataset::from_columns(cols, data.provenance)?)
}
