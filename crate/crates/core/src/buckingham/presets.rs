//! Named nondimensionalization strategies for the shipped testbeds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{build_pi_transform, validate_basis, BasisSet, BuckinghamError, CuratedRecipes, PiTransform};
use crate::dimension::QuantityExpr;
use crate::testbeds::{Testbed, TestbedId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Original variables, no transform.
    NonDa,
    /// Gravity with basis `{y0, t}`.
    InitialDa,
    /// Basis chosen from FANOVA main effects.
    FanovaDa,
    /// Borehole with basis `{H_u, T_u}`.
    SlcDa,
    /// Sphere quantities taken from the series solution.
    TDa,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::NonDa, Strategy::InitialDa, Strategy::FanovaDa, Strategy::SlcDa, Strategy::TDa];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NonDa => "non-da",
            Strategy::InitialDa => "initial-da",
            Strategy::FanovaDa => "fanova-da",
            Strategy::SlcDa => "slc-da",
            Strategy::TDa => "t-da",
        }
    }

    pub fn available_for(self, id: TestbedId) -> bool {
        match self {
            Strategy::NonDa | Strategy::FanovaDa => true,
            Strategy::InitialDa => id == TestbedId::Gravity,
            Strategy::SlcDa => id == TestbedId::Borehole,
            Strategy::TDa => id == TestbedId::Sphere,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| format!("unknown strategy `{s}` (expected non-da, initial-da, fanova-da, slc-da or t-da)"))
    }
}

fn v(name: &str) -> QuantityExpr {
    QuantityExpr::var(name)
}

/// Hand-built sphere quantities for the `{T_m, t, r, h_c}` basis.
pub fn sphere_fanova_recipes() -> CuratedRecipes {
    let ratio = (v("T_s") - v("T_m")) / v("Delta_T");
    CuratedRecipes {
        inputs: Some(vec![
            v("R"),
            v("Delta_T") / (v("T_m") + v("Delta_T")),
            v("k") / (v("h_c") * v("r")),
            (v("c") * v("t").powi(2) * v("T_m") / v("r").powi(2)).root(2),
            (v("h_c") * v("t").powi(3) * v("T_m") / (v("rho") * v("r").powi(3))).root(3),
        ]),
        output: Some(ratio.ln()),
    }
}

/// Sphere quantities read off the series solution.
pub fn sphere_series_recipes() -> CuratedRecipes {
    CuratedRecipes {
        inputs: Some(vec![
            v("T_m") / v("Delta_T"),
            v("R"),
            v("h_c") * v("r") / v("k"),
            v("k") * v("t") / (v("c") * v("rho") * v("r").powi(2)),
            v("h_c").powi(2) / (v("Delta_T") * v("c").powi(3) * v("rho").powi(2)),
        ]),
        output: Some(v("T_s") / v("Delta_T")),
    }
}

/// Basis a strategy uses on a testbed, `None` for `non-da`.
pub fn preset_basis(id: TestbedId, strategy: Strategy) -> Result<Option<Vec<&'static str>>, BuckinghamError> {
    if !strategy.available_for(id) {
        return Err(BuckinghamError::Unavailable { strategy: strategy.name(), testbed: id.name() });
    }
    Ok(match (id, strategy) {
        (_, Strategy::NonDa) => None,
        (TestbedId::Gravity, Strategy::InitialDa) => Some(vec!["y0", "t"]),
        (TestbedId::Gravity, Strategy::FanovaDa) => Some(vec!["t", "g"]),
        (TestbedId::Borehole, Strategy::FanovaDa) => Some(vec!["r_w", "K_w"]),
        (TestbedId::Borehole, Strategy::SlcDa) => Some(vec!["H_u", "T_u"]),
        (TestbedId::Sphere, Strategy::FanovaDa) => Some(vec!["T_m", "t", "r", "h_c"]),
        (TestbedId::Sphere, Strategy::TDa) => Some(vec!["Delta_T", "r", "c", "rho"]),
        (TestbedId::Pythagorean, Strategy::FanovaDa) => Some(vec!["x1"]),
        _ => unreachable!("availability checked"),
    })
}

/// Transform for `strategy` built on an explicit basis.
///
/// The sphere's curated recipes apply only when `basis` is the basis they
/// were written for; any other basis gets generic monomials.
pub fn transform_with_basis(id: TestbedId, strategy: Strategy, basis: &BasisSet) -> Result<PiTransform, BuckinghamError> {
    let tb = Testbed::new(id);
    let curated = match (id, strategy) {
        (TestbedId::Sphere, Strategy::TDa) => Some(sphere_series_recipes()),
        (TestbedId::Sphere, Strategy::FanovaDa) => {
            let standard = preset_basis(id, strategy)?.unwrap_or_default();
            let same = basis.len() == standard.len() && standard.iter().all(|m| basis.contains(m));
            same.then(sphere_fanova_recipes)
        }
        _ => None,
    };
    build_pi_transform(&tb.spec, basis, curated.as_ref(), strategy.name())
}

/// The named transform for a testbed; `Ok(None)` for `non-da`.
pub fn preset_transform(id: TestbedId, strategy: Strategy) -> Result<Option<PiTransform>, BuckinghamError> {
    let Some(members) = preset_basis(id, strategy)? else {
        return Ok(None);
    };
    let basis = validate_basis(&members, &Testbed::new(id).spec)?;
    transform_with_basis(id, strategy, &basis).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::check_expr;

    #[test]
    fn every_preset_builds_and_is_dimensionless() {
        for id in TestbedId::ALL {
            for s in Strategy::ALL {
                if !s.available_for(id) {
                    assert!(matches!(preset_transform(id, s), Err(BuckinghamError::Unavailable { .. })));
                    continue;
                }
                let Some(t) = preset_transform(id, s).unwrap() else {
                    assert_eq!(s, Strategy::NonDa);
                    continue;
                };
                let sys = &t.system;
                assert_eq!(t.inputs.len(), sys.inputs.len() - sys.p(), "{id} {s}");
                for q in t.inputs.iter().chain([&t.output]) {
                    assert!(check_expr(&q.expr, sys).unwrap().is_dimensionless(), "{id} {s} {}", q.expr);
                }
            }
        }
    }

    #[test]
    fn published_recipes() {
        let show = |t: &PiTransform| t.inputs.iter().map(|q| q.expr.to_string()).collect::<Vec<_>>();
        let g = preset_transform(TestbedId::Gravity, Strategy::FanovaDa).unwrap().unwrap();
        assert_eq!(show(&g), vec!["y0/(t^2*g)", "V0/(t*g)"]);
        assert_eq!(g.output.expr.to_string(), "y/(t^2*g)");

        let b = preset_transform(TestbedId::Borehole, Strategy::FanovaDa).unwrap().unwrap();
        assert_eq!(show(&b), vec!["r/r_w", "T_u/(r_w*K_w)", "H_u/r_w", "T_l/(r_w*K_w)", "H_l/r_w", "L/r_w"]);
        assert_eq!(b.output.expr.to_string(), "y_b/(r_w^2*K_w)");

        let s = preset_transform(TestbedId::Borehole, Strategy::SlcDa).unwrap().unwrap();
        assert_eq!(show(&s), vec!["r_w/H_u", "r/H_u", "T_l/T_u", "H_l/H_u", "L/H_u", "K_w*H_u/T_u"]);
        assert_eq!(s.output.expr.to_string(), "y_b/(H_u*T_u)");
    }

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>(), Ok(s));
        }
        assert!("da".parse::<Strategy>().is_err());
    }
}
