use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::{DimensionError, DimensionVector, Rational, SystemSpec};

/// Expression tree over named physical quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityExpr {
    Var(String),
    /// Dimensionless numeric literal.
    Const(f64),
    Mul(Box<QuantityExpr>, Box<QuantityExpr>),
    Div(Box<QuantityExpr>, Box<QuantityExpr>),
    Add(Box<QuantityExpr>, Box<QuantityExpr>),
    Sub(Box<QuantityExpr>, Box<QuantityExpr>),
    Pow(Box<QuantityExpr>, Rational),
    Root(Box<QuantityExpr>, u32),
    Log(Box<QuantityExpr>),
    Exp(Box<QuantityExpr>),
}

/// Numeric failure while evaluating an expression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("{op} of {value} is undefined")]
    Domain { op: &'static str, value: f64 },
}

impl QuantityExpr {
    pub fn var(name: impl Into<String>) -> Self {
        QuantityExpr::Var(name.into())
    }

    pub fn constant(value: f64) -> Self {
        QuantityExpr::Const(value)
    }

    pub fn pow(self, r: Rational) -> Self {
        QuantityExpr::Pow(Box::new(self), r)
    }

    pub fn powi(self, r: i64) -> Self {
        self.pow(Rational::from_integer(r))
    }

    pub fn root(self, k: u32) -> Self {
        QuantityExpr::Root(Box::new(self), k)
    }

    pub fn ln(self) -> Self {
        QuantityExpr::Log(Box::new(self))
    }

    pub fn exp(self) -> Self {
        QuantityExpr::Exp(Box::new(self))
    }

    /// Names of every variable leaf, deduplicated and sorted.
    pub fn leaves(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut BTreeSet<String>) {
        match self {
            QuantityExpr::Var(name) => {
                out.insert(name.clone());
            }
            QuantityExpr::Const(_) => {}
            QuantityExpr::Mul(a, b)
            | QuantityExpr::Div(a, b)
            | QuantityExpr::Add(a, b)
            | QuantityExpr::Sub(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
            QuantityExpr::Pow(a, _)
            | QuantityExpr::Root(a, _)
            | QuantityExpr::Log(a)
            | QuantityExpr::Exp(a) => a.collect_leaves(out),
        }
    }

    /// Number of times `name` occurs as a leaf.
    pub fn occurrences(&self, name: &str) -> usize {
        match self {
            QuantityExpr::Var(v) => usize::from(v == name),
            QuantityExpr::Const(_) => 0,
            QuantityExpr::Mul(a, b)
            | QuantityExpr::Div(a, b)
            | QuantityExpr::Add(a, b)
            | QuantityExpr::Sub(a, b) => a.occurrences(name) + b.occurrences(name),
            QuantityExpr::Pow(a, _)
            | QuantityExpr::Root(a, _)
            | QuantityExpr::Log(a)
            | QuantityExpr::Exp(a) => a.occurrences(name),
        }
    }

    /// Dimension of the expression given a per-variable lookup.
    pub fn dimension<F>(&self, lookup: &F) -> Result<DimensionVector, DimensionError>
    where
        F: Fn(&str) -> Option<DimensionVector>,
    {
        match self {
            QuantityExpr::Var(name) => {
                lookup(name).ok_or_else(|| DimensionError::UnknownVariable(name.clone()))
            }
            QuantityExpr::Const(_) => Ok(DimensionVector::dimensionless()),
            QuantityExpr::Mul(a, b) => Ok(a.dimension(lookup)? * b.dimension(lookup)?),
            QuantityExpr::Div(a, b) => Ok(a.dimension(lookup)? / b.dimension(lookup)?),
            QuantityExpr::Add(a, b) | QuantityExpr::Sub(a, b) => {
                let (left, right) = (a.dimension(lookup)?, b.dimension(lookup)?);
                if left != right {
                    let op = if matches!(self, QuantityExpr::Add(..)) { "add" } else { "sub" };
                    return Err(DimensionError::DimensionMismatch { op, left, right });
                }
                Ok(left)
            }
            QuantityExpr::Pow(a, r) => Ok(a.dimension(lookup)?.dim_pow(*r)),
            QuantityExpr::Root(a, k) => {
                if *k == 0 {
                    return Err(DimensionError::ZeroRoot);
                }
                Ok(a.dimension(lookup)?.dim_pow(Rational::new(1, i64::from(*k))))
            }
            QuantityExpr::Log(a) | QuantityExpr::Exp(a) => {
                let dimension = a.dimension(lookup)?;
                if !dimension.is_dimensionless() {
                    let op = if matches!(self, QuantityExpr::Log(_)) { "log" } else { "exp" };
                    return Err(DimensionError::NonDimensionlessArg { op, dimension });
                }
                Ok(dimension)
            }
        }
    }

    /// Evaluates the expression numerically.
    pub fn eval<F>(&self, lookup: &F) -> Result<f64, EvalError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        Ok(match self {
            QuantityExpr::Var(name) => {
                lookup(name).ok_or_else(|| EvalError::UnknownVariable(name.clone()))?
            }
            QuantityExpr::Const(c) => *c,
            QuantityExpr::Mul(a, b) => a.eval(lookup)? * b.eval(lookup)?,
            QuantityExpr::Div(a, b) => a.eval(lookup)? / b.eval(lookup)?,
            QuantityExpr::Add(a, b) => a.eval(lookup)? + b.eval(lookup)?,
            QuantityExpr::Sub(a, b) => a.eval(lookup)? - b.eval(lookup)?,
            QuantityExpr::Pow(a, r) => rational_pow(a.eval(lookup)?, *r)?,
            QuantityExpr::Root(a, k) => nth_root(a.eval(lookup)?, *k)?,
            QuantityExpr::Log(a) => {
                let x = a.eval(lookup)?;
                if x <= 0.0 {
                    return Err(EvalError::Domain { op: "log", value: x });
                }
                x.ln()
            }
            QuantityExpr::Exp(a) => a.eval(lookup)?.exp(),
        })
    }

    /// Solves `self == value` for the single occurrence of `target`.
    ///
    /// Walks the path from the root to the `target` leaf, undoing one node
    /// at a time. Returns `None` when `target` does not occur exactly once.
    pub fn solve_for<F>(&self, target: &str, value: f64, lookup: &F) -> Option<Result<f64, EvalError>>
    where
        F: Fn(&str) -> Option<f64>,
    {
        if self.occurrences(target) != 1 {
            return None;
        }
        Some(self.solve_inner(target, value, lookup))
    }

    /// Whether [`solve_for`](Self::solve_for) can invert the expression in `target`.
    pub fn is_invertible_in(&self, target: &str) -> bool {
        if self.occurrences(target) != 1 {
            return false;
        }
        let mut node = self;
        loop {
            node = match node {
                QuantityExpr::Var(_) => return true,
                QuantityExpr::Const(_) => return false,
                QuantityExpr::Mul(a, b)
                | QuantityExpr::Div(a, b)
                | QuantityExpr::Add(a, b)
                | QuantityExpr::Sub(a, b) => {
                    if a.occurrences(target) == 1 {
                        a
                    } else {
                        b
                    }
                }
                QuantityExpr::Pow(_, r) if r.is_zero() => return false,
                QuantityExpr::Root(_, 0) => return false,
                QuantityExpr::Pow(a, _)
                | QuantityExpr::Root(a, _)
                | QuantityExpr::Log(a)
                | QuantityExpr::Exp(a) => a,
            };
        }
    }

    fn solve_inner<F>(&self, target: &str, value: f64, lookup: &F) -> Result<f64, EvalError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        match self {
            QuantityExpr::Var(_) => Ok(value),
            QuantityExpr::Const(c) => Ok(*c),
            QuantityExpr::Mul(a, b) => {
                if a.occurrences(target) == 1 {
                    a.solve_inner(target, value / b.eval(lookup)?, lookup)
                } else {
                    b.solve_inner(target, value / a.eval(lookup)?, lookup)
                }
            }
            QuantityExpr::Div(a, b) => {
                if a.occurrences(target) == 1 {
                    a.solve_inner(target, value * b.eval(lookup)?, lookup)
                } else {
                    b.solve_inner(target, a.eval(lookup)? / value, lookup)
                }
            }
            QuantityExpr::Add(a, b) => {
                if a.occurrences(target) == 1 {
                    a.solve_inner(target, value - b.eval(lookup)?, lookup)
                } else {
                    b.solve_inner(target, value - a.eval(lookup)?, lookup)
                }
            }
            QuantityExpr::Sub(a, b) => {
                if a.occurrences(target) == 1 {
                    a.solve_inner(target, value + b.eval(lookup)?, lookup)
                } else {
                    b.solve_inner(target, a.eval(lookup)? - value, lookup)
                }
            }
            QuantityExpr::Pow(a, r) => a.solve_inner(target, rational_pow(value, r.recip())?, lookup),
            QuantityExpr::Root(a, k) => a.solve_inner(target, value.powi(*k as i32), lookup),
            QuantityExpr::Log(a) => a.solve_inner(target, value.exp(), lookup),
            QuantityExpr::Exp(a) => {
                if value <= 0.0 {
                    return Err(EvalError::Domain { op: "log", value });
                }
                a.solve_inner(target, value.ln(), lookup)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            QuantityExpr::Add(..) | QuantityExpr::Sub(..) => 1,
            QuantityExpr::Mul(..) | QuantityExpr::Div(..) => 2,
            QuantityExpr::Pow(..) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, child: &QuantityExpr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if child.precedence() < min {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

fn rational_pow(x: f64, r: Rational) -> Result<f64, EvalError> {
    if r.is_integer() {
        return Ok(x.powi(r.to_integer() as i32));
    }
    let (num, den) = (*r.numer(), *r.denom());
    if x < 0.0 {
        // odd denominators have real roots of negatives
        if den % 2 == 0 {
            return Err(EvalError::Domain { op: "fractional power", value: x });
        }
        let root = -(-x).powf(1.0 / den as f64);
        return Ok(root.powi(num as i32));
    }
    if den == 2 {
        return Ok(x.sqrt().powi(num as i32));
    }
    if den == 3 {
        return Ok(x.cbrt().powi(num as i32));
    }
    Ok(x.powf(num as f64 / den as f64))
}

fn nth_root(x: f64, k: u32) -> Result<f64, EvalError> {
    match k {
        0 => Err(EvalError::Domain { op: "zeroth root", value: x }),
        1 => Ok(x),
        2 if x >= 0.0 => Ok(x.sqrt()),
        3 => Ok(x.cbrt()),
        _ if x < 0.0 && k % 2 == 0 => Err(EvalError::Domain { op: "even root", value: x }),
        _ if x < 0.0 => Ok(-(-x).powf(1.0 / f64::from(k))),
        _ => Ok(x.powf(1.0 / f64::from(k))),
    }
}

/// Dimension of `e` with leaves resolved against `env`.
pub fn check_expr(e: &QuantityExpr, env: &SystemSpec) -> Result<DimensionVector, DimensionError> {
    e.dimension(&|name: &str| env.variable(name).map(|v| v.dimension))
}

impl fmt::Display for QuantityExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantityExpr::Var(name) => f.write_str(name),
            QuantityExpr::Const(c) => write!(f, "{c}"),
            QuantityExpr::Mul(a, b) => {
                self.fmt_child(a, 2, f)?;
                f.write_str("*")?;
                self.fmt_child(b, 2, f)
            }
            QuantityExpr::Div(a, b) => {
                self.fmt_child(a, 2, f)?;
                f.write_str("/")?;
                self.fmt_child(b, 3, f)
            }
            QuantityExpr::Add(a, b) => {
                self.fmt_child(a, 1, f)?;
                f.write_str(" + ")?;
                self.fmt_child(b, 1, f)
            }
            QuantityExpr::Sub(a, b) => {
                self.fmt_child(a, 1, f)?;
                f.write_str(" - ")?;
                self.fmt_child(b, 2, f)
            }
            QuantityExpr::Pow(a, r) => {
                self.fmt_child(a, 4, f)?;
                if r.is_integer() {
                    write!(f, "^{}", r.to_integer())
                } else {
                    write!(f, "^({}/{})", r.numer(), r.denom())
                }
            }
            QuantityExpr::Root(a, 2) => write!(f, "sqrt({a})"),
            QuantityExpr::Root(a, 3) => write!(f, "cbrt({a})"),
            QuantityExpr::Root(a, k) => write!(f, "root{k}({a})"),
            QuantityExpr::Log(a) => write!(f, "ln({a})"),
            QuantityExpr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl $trait for QuantityExpr {
            type Output = QuantityExpr;
            fn $method(self, rhs: QuantityExpr) -> QuantityExpr {
                QuantityExpr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}

binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);
binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);

/// Monomial `target / Π basisₖ^{aₖ}`, written with negative exponents
/// moved to the numerator; zero exponents are omitted.
pub(crate) fn monomial_quotient(target: &str, basis: &[String], exponents: &[Rational]) -> QuantityExpr {
    let factor = |b: &str, a: Rational| {
        if a.is_one() {
            QuantityExpr::var(b)
        } else {
            QuantityExpr::var(b).pow(a)
        }
    };
    let product = |terms: Vec<QuantityExpr>| terms.into_iter().reduce(|acc, t| acc * t);
    let mut num = vec![QuantityExpr::var(target)];
    let mut den = Vec::new();
    for (b, a) in basis.iter().zip(exponents) {
        if *a > Rational::zero() {
            den.push(factor(b, *a));
        } else if *a < Rational::zero() {
            num.push(factor(b, -*a));
        }
    }
    let num = product(num).expect("target term");
    match product(den) {
        None => num,
        Some(d) => num / d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::{Interval, Role, VariableSpec};

    fn v(name: &str) -> QuantityExpr {
        QuantityExpr::var(name)
    }

    fn gravity_env() -> SystemSpec {
        let mk = |name: &str, dim: [i64; 7], role: Role| VariableSpec {
            name: name.into(),
            dimension: DimensionVector::from_ints(dim),
            units: String::new(),
            role,
            training_range: Interval::new(1.0, 2.0),
            extrapolation_range: None,
        };
        SystemSpec::new(
            "g",
            vec![
                mk("y0", [0, 1, 0, 0, 0, 0, 0], Role::Input),
                mk("V0", [0, 1, -1, 0, 0, 0, 0], Role::Input),
                mk("t", [0, 0, 1, 0, 0, 0, 0], Role::Input),
                mk("g", [0, 1, -2, 0, 0, 0, 0], Role::Input),
                mk("Ts", [0, 0, 0, 1, 0, 0, 0], Role::Input),
                mk("Tm", [0, 0, 0, 1, 0, 0, 0], Role::Input),
                mk("dT", [0, 0, 0, 1, 0, 0, 0], Role::Input),
            ],
            mk("y", [0, 1, 0, 0, 0, 0, 0], Role::Output),
        )
        .unwrap()
    }

    #[test]
    fn temperature_ratio_is_dimensionless() {
        let env = gravity_env();
        let e = (v("Ts") - v("Tm")) / v("dT");
        assert!(check_expr(&e, &env).unwrap().is_dimensionless());
    }

    #[test]
    fn log_of_length_rejected() {
        let env = gravity_env();
        let err = check_expr(&v("y0").ln(), &env).unwrap_err();
        assert!(matches!(err, DimensionError::NonDimensionlessArg { op: "log", .. }));
    }

    #[test]
    fn length_plus_velocity_rejected() {
        let env = gravity_env();
        let err = check_expr(&(v("y0") + v("V0")), &env).unwrap_err();
        assert!(matches!(err, DimensionError::DimensionMismatch { op: "add", .. }));
    }

    #[test]
    fn unknown_leaf() {
        let env = gravity_env();
        assert_eq!(
            check_expr(&v("zz"), &env).unwrap_err(),
            DimensionError::UnknownVariable("zz".into())
        );
    }

    #[test]
    fn eval_and_solve_round_trip() {
        let e = ((v("Ts") - v("Tm")) / v("dT")).ln();
        let vals = |n: &str| match n {
            "Ts" => Some(260.0),
            "Tm" => Some(240.0),
            "dT" => Some(50.0),
            _ => None,
        };
        let q = e.eval(&vals).unwrap();
        assert!((q - 0.4f64.ln()).abs() < 1e-15);
        let ts = e.solve_for("Ts", q, &vals).unwrap().unwrap();
        assert!((ts - 260.0).abs() < 1e-12);
        assert!(e.is_invertible_in("Ts"));
        assert!(!(v("Ts") / v("Ts")).is_invertible_in("Ts"));
        assert!(!v("Ts").powi(0).is_invertible_in("Ts"));
    }

    #[test]
    fn solve_through_roots_and_powers() {
        let e = (v("x") * v("a").powi(2)).root(3);
        let vals = |n: &str| match n {
            "x" => Some(7.0),
            "a" => Some(1.5),
            _ => None,
        };
        let q = e.eval(&vals).unwrap();
        let x = e.solve_for("x", q, &vals).unwrap().unwrap();
        assert!((x - 7.0).abs() < 1e-12);
        // target in a denominator and on the right of a difference
        let e2 = v("a") / (v("b") - v("x"));
        let vals2 = |n: &str| match n {
            "a" => Some(3.0),
            "b" => Some(10.0),
            "x" => Some(4.0),
            _ => None,
        };
        let q2 = e2.eval(&vals2).unwrap();
        assert!((e2.solve_for("x", q2, &vals2).unwrap().unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let vals = |_: &str| Some(-1.0);
        assert!(matches!(v("x").ln().eval(&vals), Err(EvalError::Domain { .. })));
        assert!(matches!(v("x").root(2).eval(&vals), Err(EvalError::Domain { .. })));
        assert!((v("x").root(3).eval(&vals).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn display_is_readable() {
        let e = v("y") / (v("g") * v("t").powi(2));
        assert_eq!(e.to_string(), "y/(g*t^2)");
        let m = monomial_quotient("T_u", &["r_w".into(), "K_w".into()], &[Rational::one(), Rational::one()]);
        assert_eq!(m.to_string(), "T_u/(r_w*K_w)");
    }
}
