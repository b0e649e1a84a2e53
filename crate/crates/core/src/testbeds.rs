//! Closed-form reference systems with their variable specifications.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Column, Dataset, DatasetError};
use crate::dimension::{DimensionVector, Role, SystemSpec, VariableSpec};

#[derive(Debug, Error)]
pub enum TestbedError {
    #[error("{testbed}: {reason}")]
    Domain { testbed: &'static str, reason: String },
    #[error("no sign change bracketing root {index} for Biot number {biot}")]
    BracketFailure { biot: f64, index: usize },
    #[error("expected {expected} inputs, got {found}")]
    Arity { expected: usize, found: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestbedId {
    Gravity,
    Borehole,
    Sphere,
    Pythagorean,
}

impl TestbedId {
    pub const ALL: [TestbedId; 4] = [TestbedId::Gravity, TestbedId::Borehole, TestbedId::Sphere, TestbedId::Pythagorean];

    pub fn name(self) -> &'static str {
        match self {
            TestbedId::Gravity => "gravity",
            TestbedId::Borehole => "borehole",
            TestbedId::Sphere => "sphere",
            TestbedId::Pythagorean => "pythagorean",
        }
    }
}

impl fmt::Display for TestbedId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestbedId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestbedId::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| format!("unknown testbed `{s}` (expected gravity, borehole, sphere or pythagorean)"))
    }
}

fn dims(e: [i64; 7]) -> DimensionVector {
    DimensionVector::from_ints(e)
}

const LEN: [i64; 7] = [0, 1, 0, 0, 0, 0, 0];
const TIME: [i64; 7] = [0, 0, 1, 0, 0, 0, 0];
const TEMP: [i64; 7] = [0, 0, 0, 1, 0, 0, 0];
const VELOCITY: [i64; 7] = [0, 1, -1, 0, 0, 0, 0];
const ACCEL: [i64; 7] = [0, 1, -2, 0, 0, 0, 0];
const DIFFUSIVITY: [i64; 7] = [0, 2, -1, 0, 0, 0, 0];

fn input(name: &str, dim: [i64; 7], units: &str, training: [f64; 2]) -> VariableSpec {
    VariableSpec::new(name, dims(dim), units, Role::Input, training)
}

pub fn gravity_spec() -> SystemSpec {
    SystemSpec::new(
        "gravity",
        vec![
            input("y0", LEN, "m", [1.0, 10.0]).with_extrapolation([10.0, 20.0]),
            input("V0", VELOCITY, "m/s", [1.0, 10.0]).with_extrapolation([10.0, 20.0]),
            input("t", TIME, "s", [1.0, 10.0]).with_extrapolation([10.0, 20.0]),
            input("g", ACCEL, "m/s^2", [1.62, 9.81]).with_extrapolation([10.44, 24.79]),
        ],
        VariableSpec::new("y", dims(LEN), "m", Role::Output, [-480.0, 41.0]),
    )
    .expect("gravity spec")
}

pub fn borehole_spec() -> SystemSpec {
    SystemSpec::new(
        "borehole",
        vec![
            input("r_w", LEN, "m", [0.05, 0.15]).with_extrapolation([0.15, 0.25]),
            input("r", LEN, "m", [100.0, 50000.0]),
            input("T_u", DIFFUSIVITY, "m^2/year", [63070.0, 115600.0]),
            input("H_u", LEN, "m", [990.0, 1110.0]).with_extrapolation([1110.0, 1170.0]),
            input("T_l", DIFFUSIVITY, "m^2/year", [63.1, 116.0]),
            input("H_l", LEN, "m", [700.0, 820.0]).with_extrapolation([820.0, 880.0]),
            input("L", LEN, "m", [1120.0, 1680.0]).with_extrapolation([1680.0, 1960.0]),
            input("K_w", VELOCITY, "m/year", [9855.0, 12045.0]),
        ],
        VariableSpec::new("y_b", dims([0, 3, -1, 0, 0, 0, 0]), "m^3/year", Role::Output, [0.0, 1500.0]),
    )
    .expect("borehole spec")
}

pub fn sphere_spec() -> SystemSpec {
    SystemSpec::new(
        "sphere",
        vec![
            input("R", [0; 7], "", [0.01, 1.0]),
            input("r", LEN, "m", [0.05, 0.2]).with_extrapolation([0.2, 0.25]),
            input("t", TIME, "s", [1.0, 600.0]).with_extrapolation([600.0, 750.0]),
            input("T_m", TEMP, "K", [240.0, 270.0]).with_extrapolation([270.0, 280.0]),
            input("Delta_T", TEMP, "K", [50.0, 80.0]).with_extrapolation([40.0, 50.0]),
            input("h_c", [1, 0, -3, -1, 0, 0, 0], "kg s^-3 K^-1", [100.0, 160.0]),
            input("k", [1, 1, -3, -1, 0, 0, 0], "kg m s^-3 K^-1", [30.0, 100.0]),
            VariableSpec::new("c", dims([0, 2, -2, -1, 0, 0, 0]), "m^2 s^-2 K^-1", Role::Constant, [400.0, 400.0]),
            VariableSpec::new("rho", dims([1, -3, 0, 0, 0, 0, 0]), "kg m^-3", Role::Constant, [8000.0, 8000.0]),
        ],
        VariableSpec::new("T_s", dims(TEMP), "K", Role::Output, [240.0, 360.0]),
    )
    .expect("sphere spec")
}

/// Right triangle with legs `x1`, `x2` and hypotenuse `y`.
pub fn pythagorean_spec() -> SystemSpec {
    SystemSpec::new(
        "pythagorean",
        vec![
            input("x1", LEN, "cm", [1.0, 10.0]).with_extrapolation([1e5, 1e6]),
            input("x2", LEN, "cm", [1.0, 10.0]).with_extrapolation([1e5, 1e6]),
        ],
        VariableSpec::new("y", dims(LEN), "cm", Role::Output, [1.0, 15.0]),
    )
    .expect("pythagorean spec")
}

/// Displacement after time `t` from height `y0` with initial velocity `v0`.
pub fn gravity(y0: f64, v0: f64, t: f64, g: f64) -> f64 {
    y0 + v0 * t - 0.5 * g * t * t
}

/// Borehole flow for inputs `[r_w, r, T_u, H_u, T_l, H_l, L, K_w]`.
///
/// Evaluated as `lr = ln(r/r_w)`, then
/// `2π·T_u·(H_u−H_l) / (lr·(1 + 2·L·T_u/(lr·r_w²·K_w) + T_u/T_l))`,
/// left to right.
pub fn borehole(x: &[f64; 8]) -> Result<f64, TestbedError> {
    let [r_w, r, t_u, h_u, t_l, h_l, l, k_w] = *x;
    if x.iter().any(|v| *v <= 0.0) {
        return Err(TestbedError::Domain { testbed: "borehole", reason: "all inputs must be positive".into() });
    }
    if r <= r_w {
        return Err(TestbedError::Domain { testbed: "borehole", reason: format!("r = {r} must exceed r_w = {r_w}") });
    }
    let lr = (r / r_w).ln();
    let denom = lr * (1.0 + 2.0 * l * t_u / (lr * r_w * r_w * k_w) + t_u / t_l);
    Ok(2.0 * PI * t_u * (h_u - h_l) / denom)
}

fn eta_residual(eta: f64, biot: f64) -> f64 {
    1.0 - eta * eta.cos() / eta.sin() - biot
}

/// The `i`-th positive root of `1 − η·cot η = biot`, in `((i−1)π, iπ)`.
///
/// Bisection on the bracket shrunk by 1e-9 at both ends; the residual is
/// increasing on every branch.
pub fn sphere_eta(biot: f64, i: usize) -> Result<f64, TestbedError> {
    if !(biot > 0.0) || i == 0 {
        return Err(TestbedError::BracketFailure { biot, index: i });
    }
    let mut lo = (i - 1) as f64 * PI + 1e-9;
    let mut hi = i as f64 * PI - 1e-9;
    if eta_residual(lo, biot) > 0.0 || eta_residual(hi, biot) < 0.0 {
        return Err(TestbedError::BracketFailure { biot, index: i });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eta_residual(mid, biot) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (rl, rh) = (eta_residual(lo, biot).abs(), eta_residual(hi, biot).abs());
    Ok(if rl <= rh { lo } else { hi })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Number of series terms used to generate sphere data.
pub const SPHERE_TERMS: usize = 4;

/// Sphere temperature for `[R, r, t, T_m, Delta_T, h_c, k, c, rho]` with a
/// four-term series.
pub fn sphere(x: &[f64; 9]) -> Result<f64, TestbedError> {
    sphere_with_terms(x, SPHERE_TERMS)
}

/// Sphere temperature truncated after `terms` series terms; 100 terms serves
/// as a reference for truncation error.
pub fn sphere_with_terms(x: &[f64; 9], terms: usize) -> Result<f64, TestbedError> {
    let [big_r, r, t, t_m, delta_t, h_c, k, c, rho] = *x;
    if big_r <= 0.0 {
        return Err(TestbedError::Domain { testbed: "sphere", reason: format!("R = {big_r} must be positive") });
    }
    if delta_t <= 0.0 {
        return Err(TestbedError::Domain { testbed: "sphere", reason: format!("Delta_T = {delta_t} must be positive") });
    }
    let temp_ratio = t_m / delta_t;
    let biot = h_c * r / k;
    let fourier = k * t / (c * rho * r * r);
    let mut q0 = temp_ratio;
    for i in 1..=terms {
        let eta = sphere_eta(biot, i)?;
        let coef = 4.0 * (eta.sin() - eta * eta.cos()) / (2.0 * eta - (2.0 * eta).sin());
        q0 += coef * (-eta * eta * fourier).exp() * sinc(eta * big_r);
    }
    Ok(q0 * delta_t)
}

/// Hypotenuse of a right triangle.
pub fn pythagorean(x1: f64, x2: f64) -> f64 {
    x1.hypot(x2)
}

/// A reference system: its specification and exact evaluator.
#[derive(Debug, Clone)]
pub struct Testbed {
    pub id: TestbedId,
    pub spec: SystemSpec,
}

impl Testbed {
    pub fn new(id: TestbedId) -> Self {
        let spec = match id {
            TestbedId::Gravity => gravity_spec(),
            TestbedId::Borehole => borehole_spec(),
            TestbedId::Sphere => sphere_spec(),
            TestbedId::Pythagorean => pythagorean_spec(),
        };
        Testbed { id, spec }
    }

    /// Evaluates the output for all inputs (constants included) in declaration order.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, TestbedError> {
        let expected = self.spec.inputs.len();
        if x.len() != expected {
            return Err(TestbedError::Arity { expected, found: x.len() });
        }
        match self.id {
            TestbedId::Gravity => Ok(gravity(x[0], x[1], x[2], x[3])),
            TestbedId::Borehole => borehole(x.try_into().expect("arity checked")),
            TestbedId::Sphere => sphere(x.try_into().expect("arity checked")),
            TestbedId::Pythagorean => Ok(pythagorean(x[0], x[1])),
        }
    }

    /// Evaluates every row of `data`; constants missing from `data` take
    /// their declared value.
    pub fn evaluate_dataset(&self, data: &Dataset) -> Result<Vec<f64>, TestbedError> {
        let sources: Vec<Result<usize, f64>> = self
            .spec
            .inputs
            .iter()
            .map(|v| match data.column_index(&v.name) {
                Some(j) => Ok(Ok(j)),
                None if v.is_constant() => Ok(Err(v.training_range.lo)),
                None => Err(DatasetError::MissingColumn(v.name.clone())),
            })
            .collect::<Result<_, _>>()?;
        let values = data.values();
        let mut x = vec![0.0; sources.len()];
        (0..data.nrows())
            .map(|i| {
                for (slot, s) in x.iter_mut().zip(&sources) {
                    *slot = match s {
                        Ok(j) => values[(i, *j)],
                        Err(c) => *c,
                    };
                }
                self.evaluate(&x)
            })
            .collect()
    }

    /// `data` with the declared constants appended (if absent) and the output column.
    pub fn complete_dataset(&self, data: &Dataset) -> Result<Dataset, TestbedError> {
        let y = self.evaluate_dataset(data)?;
        let mut out = data.clone();
        for c in self.spec.constants() {
            if out.column_index(&c.name).is_none() {
                out.push_column(Column::input(c.name.clone()).with_spec(c.clone()), &vec![c.training_range.lo; y.len()])?;
            }
        }
        out.push_column(Column::output(self.spec.output.name.clone()).with_spec(self.spec.output.clone()), &y)?;
        Ok(out)
    }
}
