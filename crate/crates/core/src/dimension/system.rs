use std::collections::HashSet;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DimensionVector, FundamentalDimension};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("variable `{name}`: invalid range [{lo}, {hi}]")]
    InvalidRange { name: String, lo: f64, hi: f64 },
    #[error("constant `{0}` must have a degenerate training range")]
    NonDegenerateConstant(String),
    #[error("system needs exactly one output, found {0}")]
    OutputCount(usize),
    #[error("variable `{0}`: output role expected")]
    NotOutput(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config write error: {0}")]
    Write(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Affine map of `u ∈ [0, 1]` onto the interval.
    pub fn lerp(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Output,
    Constant,
}

/// One physical quantity of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(default)]
    pub dimension: DimensionVector,
    #[serde(default)]
    pub units: String,
    pub role: Role,
    pub training_range: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolation_range: Option<Interval>,
}

impl VariableSpec {
    pub fn new(name: &str, dimension: DimensionVector, units: &str, role: Role, training: [f64; 2]) -> Self {
        VariableSpec {
            name: name.to_string(),
            dimension,
            units: units.to_string(),
            role,
            training_range: training.into(),
            extrapolation_range: None,
        }
    }

    pub fn with_extrapolation(mut self, range: [f64; 2]) -> Self {
        self.extrapolation_range = Some(range.into());
        self
    }

    pub fn is_constant(&self) -> bool {
        self.role == Role::Constant
    }

    /// Extrapolation range if declared, training range otherwise.
    pub fn extrapolation_or_training(&self) -> Interval {
        self.extrapolation_range.unwrap_or(self.training_range)
    }

    fn validate(&self) -> Result<(), SpecError> {
        let check = |r: &Interval| {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(SpecError::InvalidRange { name: self.name.clone(), lo: r.lo, hi: r.hi });
            }
            Ok(())
        };
        check(&self.training_range)?;
        if let Some(r) = &self.extrapolation_range {
            check(r)?;
        }
        if self.is_constant() && self.training_range.lo != self.training_range.hi {
            return Err(SpecError::NonDegenerateConstant(self.name.clone()));
        }
        Ok(())
    }
}

/// A physical system: ordered inputs (including constants) and one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigFile", into = "ConfigFile")]
pub struct SystemSpec {
    pub name: String,
    pub inputs: Vec<VariableSpec>,
    pub output: VariableSpec,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ConfigFile {
    name: String,
    variables: Vec<VariableSpec>,
}

impl TryFrom<ConfigFile> for SystemSpec {
    type Error = SpecError;

    fn try_from(file: ConfigFile) -> Result<Self, SpecError> {
        let (outputs, inputs): (Vec<_>, Vec<_>) =
            file.variables.into_iter().partition(|v| v.role == Role::Output);
        if outputs.len() != 1 {
            return Err(SpecError::OutputCount(outputs.len()));
        }
        let output = outputs.into_iter().next().expect("one output");
        SystemSpec::new(&file.name, inputs, output)
    }
}

impl From<SystemSpec> for ConfigFile {
    fn from(sys: SystemSpec) -> Self {
        let mut variables = sys.inputs;
        variables.push(sys.output);
        ConfigFile { name: sys.name, variables }
    }
}

impl SystemSpec {
    pub fn new(name: &str, inputs: Vec<VariableSpec>, output: VariableSpec) -> Result<Self, SpecError> {
        if output.role != Role::Output {
            return Err(SpecError::NotOutput(output.name));
        }
        let mut seen = HashSet::new();
        for v in inputs.iter().chain(std::iter::once(&output)) {
            v.validate()?;
            if v.role == Role::Output && v.name != output.name {
                return Err(SpecError::OutputCount(2));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(SpecError::DuplicateName(v.name.clone()));
            }
        }
        Ok(SystemSpec { name: name.to_string(), inputs, output })
    }

    /// Parses the TOML config format (`name` plus a `[[variables]]` list).
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        let file: ConfigFile = toml::from_str(text)?;
        SystemSpec::try_from(file)
    }

    pub fn to_toml(&self) -> Result<String, SpecError> {
        Ok(toml::to_string(&ConfigFile::from(self.clone()))?)
    }

    /// Inputs, constants and the output, in declaration order.
    pub fn all_variables(&self) -> impl Iterator<Item = &VariableSpec> {
        self.inputs.iter().chain(std::iter::once(&self.output))
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.all_variables().find(|v| v.name == name)
    }

    pub fn non_constant_inputs(&self) -> impl Iterator<Item = &VariableSpec> {
        self.inputs.iter().filter(|v| !v.is_constant())
    }

    pub fn constants(&self) -> impl Iterator<Item = &VariableSpec> {
        self.inputs.iter().filter(|v| v.is_constant())
    }

    /// Number of varying inputs.
    pub fn d(&self) -> usize {
        self.non_constant_inputs().count()
    }

    /// Fundamental dimensions appearing anywhere in the system, canonical order.
    pub fn present_dimensions(&self) -> Vec<FundamentalDimension> {
        FundamentalDimension::ALL
            .into_iter()
            .filter(|d| self.all_variables().any(|v| !v.dimension.exponent(*d).is_zero()))
            .collect()
    }

    /// Number of fundamental dimensions appearing in the system.
    pub fn p(&self) -> usize {
        self.present_dimensions().len()
    }
}
