//! Exact dimension-vector algebra over the seven fundamental dimensions.
//!
//! Exponents are exact rationals so repeated products, quotients and roots
//! never drift. A [`DimensionVector`] is all-zero iff the quantity is
//! dimensionless.

mod expr;
mod system;

pub use expr::{check_expr, EvalError, QuantityExpr};
pub(crate) use expr::monomial_quotient;
pub use system::{Interval, Role, SystemSpec, VariableSpec};

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Div, Mul};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact rational exponent, always stored in lowest terms.
pub type Rational = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimensionError {
    #[error("dimension mismatch in {op}: [{left}] vs [{right}]")]
    DimensionMismatch {
        op: &'static str,
        left: DimensionVector,
        right: DimensionVector,
    },
    #[error("argument of {op} must be dimensionless, got [{dimension}]")]
    NonDimensionlessArg {
        op: &'static str,
        dimension: DimensionVector,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown fundamental dimension `{0}`")]
    UnknownDimension(String),
    #[error("invalid exponent `{0}`")]
    InvalidExponent(String),
    #[error("root index must be positive")]
    ZeroRoot,
}

/// The seven fundamental dimensions, in fixed order M, L, T, Θ, Q, N, Iᵥ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FundamentalDimension {
    Mass,
    Length,
    Time,
    Temperature,
    Current,
    Amount,
    Luminosity,
}

impl FundamentalDimension {
    pub const ALL: [FundamentalDimension; 7] = [
        FundamentalDimension::Mass,
        FundamentalDimension::Length,
        FundamentalDimension::Time,
        FundamentalDimension::Temperature,
        FundamentalDimension::Current,
        FundamentalDimension::Amount,
        FundamentalDimension::Luminosity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            FundamentalDimension::Mass => "M",
            FundamentalDimension::Length => "L",
            FundamentalDimension::Time => "T",
            FundamentalDimension::Temperature => "Theta",
            FundamentalDimension::Current => "Q",
            FundamentalDimension::Amount => "N",
            FundamentalDimension::Luminosity => "Iv",
        }
    }
}

impl fmt::Display for FundamentalDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for FundamentalDimension {
    type Err = DimensionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" => Ok(FundamentalDimension::Mass),
            "L" => Ok(FundamentalDimension::Length),
            "T" => Ok(FundamentalDimension::Time),
            "Theta" | "Θ" | "K" => Ok(FundamentalDimension::Temperature),
            "Q" | "I" => Ok(FundamentalDimension::Current),
            "N" => Ok(FundamentalDimension::Amount),
            "Iv" | "Iᵥ" | "J" => Ok(FundamentalDimension::Luminosity),
            other => Err(DimensionError::UnknownDimension(other.to_string())),
        }
    }
}

/// Parses `"3"`, `"-1"` or `"1/2"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, DimensionError> {
    let bad = || DimensionError::InvalidExponent(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((num, den)) => {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            let den: i64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            Ok(Rational::new(num, den))
        }
        None => s.parse::<i64>().map(Rational::from_integer).map_err(|_| bad()),
    }
}

fn format_rational(r: Rational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exponents over the seven fundamental dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DimensionVector([Rational; 7]);

impl DimensionVector {
    pub fn dimensionless() -> Self {
        DimensionVector([Rational::zero(); 7])
    }

    pub fn from_exponents(exponents: [Rational; 7]) -> Self {
        DimensionVector(exponents)
    }

    /// Builds a vector from integer exponents in M, L, T, Θ, Q, N, Iᵥ order.
    pub fn from_ints(exponents: [i64; 7]) -> Self {
        DimensionVector(exponents.map(Rational::from_integer))
    }

    /// Builds a vector from `(dimension, exponent)` pairs; repeats accumulate.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (FundamentalDimension, Rational)>,
    {
        let mut v = Self::dimensionless();
        for (dim, e) in pairs {
            v.0[dim.index()] += e;
        }
        v
    }

    pub fn mass() -> Self {
        Self::from_ints([1, 0, 0, 0, 0, 0, 0])
    }
    pub fn length() -> Self {
        Self::from_ints([0, 1, 0, 0, 0, 0, 0])
    }
    pub fn time() -> Self {
        Self::from_ints([0, 0, 1, 0, 0, 0, 0])
    }
    pub fn temperature() -> Self {
        Self::from_ints([0, 0, 0, 1, 0, 0, 0])
    }

    pub fn exponent(&self, dim: FundamentalDimension) -> Rational {
        self.0[dim.index()]
    }

    pub fn exponents(&self) -> &[Rational; 7] {
        &self.0
    }

    pub fn is_dimensionless(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    /// Dimensions with a nonzero exponent, in canonical order.
    pub fn support(&self) -> impl Iterator<Item = FundamentalDimension> + '_ {
        FundamentalDimension::ALL
            .into_iter()
            .filter(|d| !self.0[d.index()].is_zero())
    }

    pub fn inverse(&self) -> Self {
        DimensionVector(self.0.map(|e| -e))
    }

    /// Product of two dimensions: exponents add.
    pub fn dim_mul(&self, other: &Self) -> Self {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0.iter()) {
            *o += *b;
        }
        DimensionVector(out)
    }

    pub fn dim_div(&self, other: &Self) -> Self {
        self.dim_mul(&other.inverse())
    }

    /// Raises to an exact rational power: exponents scale by `r`.
    pub fn dim_pow(&self, r: Rational) -> Self {
        DimensionVector(self.0.map(|e| e * r))
    }
}

impl Mul for DimensionVector {
    type Output = DimensionVector;
    fn mul(self, rhs: Self) -> Self {
        self.dim_mul(&rhs)
    }
}

impl Div for DimensionVector {
    type Output = DimensionVector;
    fn div(self, rhs: Self) -> Self {
        self.dim_div(&rhs)
    }
}

impl fmt::Display for DimensionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .support()
            .map(|d| {
                let e = self.exponent(d);
                if e.is_one() {
                    d.symbol().to_string()
                } else {
                    format!("{}^{}", d.symbol(), format_rational(e))
                }
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Exponent as written in config files: an integer or a `"num/den"` string.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Int(i64),
    Text(String),
}

impl Serialize for DimensionVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&'static str, ExponentRepr> = self
            .support()
            .map(|d| {
                let e = self.exponent(d);
                let repr = if e.is_integer() {
                    ExponentRepr::Int(e.to_integer())
                } else {
                    ExponentRepr::Text(format_rational(e))
                };
                (d.symbol(), repr)
            })
            .collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DimensionVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, ExponentRepr>::deserialize(deserializer)?;
        let mut pairs = Vec::with_capacity(map.len());
        for (key, value) in map {
            let dim: FundamentalDimension = key.parse().map_err(serde::de::Error::custom)?;
            let e = match value {
                ExponentRepr::Int(i) => Rational::from_integer(i),
                ExponentRepr::Text(s) => parse_rational(&s).map_err(serde::de::Error::custom)?,
            };
            pairs.push((dim, e));
        }
        Ok(DimensionVector::from_pairs(pairs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn length_times_length_is_area() {
        let area = DimensionVector::length() * DimensionVector::length();
        assert_eq!(area.exponent(FundamentalDimension::Length), r(2, 1));
        assert_eq!(area.to_string(), "L^2");
    }

    #[test]
    fn identity_element() {
        let density = DimensionVector::from_ints([1, -3, 0, 0, 0, 0, 0]);
        assert_eq!(density * DimensionVector::dimensionless(), density);
    }

    #[test]
    fn borehole_output_ratio_is_dimensionless() {
        // L^3 T^-1 / (L^2 * L T^-1)
        let flow = DimensionVector::from_ints([0, 3, -1, 0, 0, 0, 0]);
        let area = DimensionVector::from_ints([0, 2, 0, 0, 0, 0, 0]);
        let conductivity = DimensionVector::from_ints([0, 1, -1, 0, 0, 0, 0]);
        assert!((flow * (area * conductivity).inverse()).is_dimensionless());
    }

    #[test]
    fn pow_rules() {
        let v2 = DimensionVector::from_ints([0, 2, -2, 0, 0, 0, 0]);
        assert_eq!(v2.dim_pow(r(1, 2)), DimensionVector::from_ints([0, 1, -1, 0, 0, 0, 0]));
        assert!(v2.dim_pow(r(0, 1)).is_dimensionless());
        // h_c * t^3 * T_m / (rho r^3) style cancellation under a cube root
        let h_c = DimensionVector::from_ints([1, 0, -3, -1, 0, 0, 0]);
        let t3 = DimensionVector::time().dim_pow(r(3, 1));
        let inner = h_c * t3 * DimensionVector::temperature() * DimensionVector::mass().inverse();
        assert!(inner.dim_pow(r(1, 3)).is_dimensionless());
    }

    #[test]
    fn parse_exponents() {
        assert_eq!(parse_rational("3").unwrap(), r(3, 1));
        assert_eq!(parse_rational("-2/4").unwrap(), r(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!("Θ".parse::<FundamentalDimension>().unwrap(), FundamentalDimension::Temperature);
        assert!("Z".parse::<FundamentalDimension>().is_err());
    }

    #[test]
    fn serde_uses_exponent_map() {
        let v = DimensionVector::from_pairs([
            (FundamentalDimension::Length, r(3, 1)),
            (FundamentalDimension::Time, r(-1, 2)),
        ]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"L":3,"T":"-1/2"}"#);
        let back: DimensionVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    fn arb_rational() -> impl Strategy<Value = Rational> {
        (-12i64..=12, 1i64..=6).prop_map(|(n, d)| Rational::new(n, d))
    }

    fn arb_dim() -> impl Strategy<Value = DimensionVector> {
        proptest::array::uniform7(arb_rational()).prop_map(DimensionVector::from_exponents)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn abelian_group_laws(a in arb_dim(), b in arb_dim(), c in arb_dim()) {
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!(a * DimensionVector::dimensionless(), a);
            prop_assert!((a * a.inverse()).is_dimensionless());
        }

        #[test]
        fn pow_round_trip(a in arb_dim(), r in arb_rational()) {
            prop_assume!(!r.is_zero());
            prop_assert_eq!(a.dim_pow(r).dim_pow(r.recip()), a);
        }
    }
}
