//! Latin hypercube designs, random or maximin-optimized.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Column, Dataset, DatasetError, Provenance};
use crate::dimension::{Interval, VariableSpec};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("a design needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("a design needs at least one variable")]
    NoVariables,
    #[error("`{0}` has a degenerate range and cannot be a design variable")]
    Degenerate(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeMode {
    Training,
    Extrapolation,
}

impl RangeMode {
    pub fn range_of(self, v: &VariableSpec) -> Interval {
        match self {
            RangeMode::Training => v.training_range,
            RangeMode::Extrapolation => v.extrapolation_or_training(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignRequest {
    pub n: usize,
    /// Non-constant variables, one design column each.
    pub variables: Vec<VariableSpec>,
    pub range_mode: RangeMode,
    pub seed: u64,
    pub optimize: bool,
    /// Put every point at its stratum midpoint instead of jittering.
    pub midpoints: bool,
}

impl DesignRequest {
    pub fn new(n: usize, variables: Vec<VariableSpec>, range_mode: RangeMode, seed: u64) -> Self {
        DesignRequest { n, variables, range_mode, seed, optimize: true, midpoints: false }
    }

    fn validate(&self) -> Result<(), DesignError> {
        if self.n < 2 {
            return Err(DesignError::TooFewRuns(self.n));
        }
        if self.variables.is_empty() {
            return Err(DesignError::NoVariables);
        }
        if let Some(v) = self.variables.iter().find(|v| self.range_mode.range_of(v).width() <= 0.0) {
            return Err(DesignError::Degenerate(v.name.clone()));
        }
        Ok(())
    }
}

/// Default swap budget for `d` variables.
pub fn default_budget(d: usize) -> usize {
    20_000 * d
}

/// A design together with its space-filling history.
#[derive(Debug, Clone)]
pub struct Design {
    pub data: Dataset,
    /// Minimum pairwise distance on the unit cube before optimization.
    pub start_min_distance: f64,
    pub min_distance: f64,
    /// Minimum distance after every accepted swap.
    pub trace: Vec<f64>,
}

/// Unit-cube Latin hypercube, `u[i][k]`.
fn unit_lhd(n: usize, d: usize, midpoints: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut u = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..d {
        perm.shuffle(rng);
        for i in 0..n {
            let jitter = if midpoints { 0.5 } else { rng.random::<f64>() };
            u[i][k] = (perm[i] as f64 + jitter) / n as f64;
        }
    }
    u
}

fn to_dataset(u: &[Vec<f64>], req: &DesignRequest) -> Result<Dataset, DesignError> {
    let cols = req
        .variables
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let range = req.range_mode.range_of(v);
            let values = u.iter().map(|row| range.lerp(row[k]).clamp(range.lo, range.hi)).collect();
            (Column::input(v.name.clone()).with_spec(v.clone()), values)
        })
        .collect();
    Ok(Dataset::from_columns(cols, Provenance::Training)?)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Random Latin hypercube: one point per stratum in every column, jittered
/// uniformly within its stratum and mapped onto the variable's range.
pub fn lhd(req: &DesignRequest) -> Result<Dataset, DesignError> {
    req.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    to_dataset(&unit_lhd(req.n, req.variables.len(), req.midpoints, &mut rng), req)
}

/// Maximin Latin hypercube by hill climbing over within-column swaps.
///
/// Starts from [`lhd`] with the same seed. Each step swaps one column's
/// values between a row of the closest pair and a random other row; the swap
/// is kept iff no changed distance falls below the current minimum, so the
/// minimum never decreases.
pub fn maximin_lhd(req: &DesignRequest, budget: usize) -> Result<Design, DesignError> {
    req.validate()?;
    let (n, d) = (req.n, req.variables.len());
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut u = unit_lhd(n, d, req.midpoints, &mut rng);
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = sq_dist(&u[i], &u[j]);
            dist[i][j] = s;
            dist[j][i] = s;
        }
    }
    let global_min = |dist: &[Vec<f64>]| {
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..n {
            for j in (i + 1)..n {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        best
    };
    let (mut min, mut ca, mut cb) = global_min(&dist);
    let start_min_distance = min.sqrt();
    let mut trace = Vec::new();
    let mut fresh = vec![0.0; n];
    let mut fresh_b = vec![0.0; n];
    let iterations = if req.optimize { budget } else { 0 };
    for _ in 0..iterations {
        let a = if rng.random::<bool>() { ca } else { cb };
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let k = rng.random_range(0..d);
        let (ua, ub) = (u[a][k], u[b][k]);
        let mut ok = true;
        for i in 0..n {
            if i == a || i == b {
                continue;
            }
            let ui = u[i][k];
            fresh[i] = dist[a][i] - (ua - ui).powi(2) + (ub - ui).powi(2);
            fresh_b[i] = dist[b][i] - (ub - ui).powi(2) + (ua - ui).powi(2);
            if fresh[i] < min || fresh_b[i] < min {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        u[a][k] = ub;
        u[b][k] = ua;
        for i in 0..n {
            if i == a || i == b {
                continue;
            }
            dist[a][i] = fresh[i];
            dist[i][a] = fresh[i];
            dist[b][i] = fresh_b[i];
            dist[i][b] = fresh_b[i];
        }
        if a == ca || a == cb || b == ca || b == cb {
            (min, ca, cb) = global_min(&dist);
        }
        trace.push(min.sqrt());
    }
    Ok(Design { data: to_dataset(&u, req)?, start_min_distance, min_distance: min.sqrt(), trace })
}

/// Builds the requested design: maximin when `req.optimize`, else plain.
pub fn generate(req: &DesignRequest, budget: usize) -> Result<Dataset, DesignError> {
    if req.optimize {
        Ok(maximin_lhd(req, budget)?.data)
    } else {
        lhd(req)
    }
}

/// Appends each constant variable as a fixed column.
pub fn append_constants(data: &mut Dataset, constants: &[VariableSpec]) -> Result<(), DesignError> {
    let n = data.nrows();
    for c in constants {
        data.push_column(Column::input(c.name.clone()).with_spec(c.clone()), &vec![c.training_range.lo; n])?;
    }
    Ok(())
}

/// Minimum pairwise Euclidean distance of a design mapped onto the unit cube.
pub fn min_distance(data: &Dataset, req: &DesignRequest) -> f64 {
    let u: Vec<Vec<f64>> = (0..data.nrows())
        .map(|i| {
            req.variables
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let r = req.range_mode.range_of(v);
                    (data.values()[(i, k)] - r.lo) / r.width()
                })
                .collect()
        })
        .collect();
    let mut m = f64::INFINITY;
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            m = m.min(sq_dist(&u[i], &u[j]));
        }
    }
    m.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::{DimensionVector, Role};
    use crate::testbeds::{borehole_spec, gravity_spec};

    fn unit_var(name: &str) -> VariableSpec {
        VariableSpec::new(name, DimensionVector::dimensionless(), "", Role::Input, [0.0, 1.0])
    }

    fn ranks(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank;
        }
        r
    }

    #[test]
    fn one_point_per_stratum() {
        let req = DesignRequest { optimize: false, ..DesignRequest::new(4, vec![unit_var("x")], RangeMode::Training, 5) };
        let d = lhd(&req).unwrap();
        let mut strata: Vec<usize> = d.column_values(0).iter().map(|v| (v * 4.0).floor() as usize).collect();
        strata.sort();
        assert_eq!(strata, vec![0, 1, 2, 3]);
    }

    #[test]
    fn latin_property_and_ranges() {
        let sys = gravity_spec();
        let vars: Vec<VariableSpec> = sys.non_constant_inputs().cloned().collect();
        for mode in [RangeMode::Training, RangeMode::Extrapolation] {
            let req = DesignRequest::new(40, vars.clone(), mode, 17);
            let d = maximin_lhd(&req, 2000).unwrap().data;
            assert_eq!(d.column_names(), vec!["y0", "V0", "t", "g"]);
            for (k, v) in vars.iter().enumerate() {
                let col = d.column_values(k);
                let r = mode.range_of(v);
                assert!(col.iter().all(|x| *x >= r.lo && *x <= r.hi));
                let mut rk = ranks(&col);
                rk.sort();
                assert_eq!(rk, (0..40).collect::<Vec<_>>());
                let strata: std::collections::BTreeSet<usize> =
                    col.iter().map(|x| (((x - r.lo) / r.width() * 40.0).floor() as usize).min(39)).collect();
                assert_eq!(strata.len(), 40);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let vars = vec![unit_var("a"), unit_var("b")];
        let req = DesignRequest::new(12, vars.clone(), RangeMode::Training, 99);
        assert_eq!(maximin_lhd(&req, 500).unwrap().data, maximin_lhd(&req, 500).unwrap().data);
        let other = DesignRequest::new(12, vars, RangeMode::Training, 100);
        assert_ne!(maximin_lhd(&req, 500).unwrap().data, maximin_lhd(&other, 500).unwrap().data);
    }

    #[test]
    fn zero_budget_is_plain_lhd() {
        let req = DesignRequest::new(10, vec![unit_var("a"), unit_var("b")], RangeMode::Training, 3);
        assert_eq!(maximin_lhd(&req, 0).unwrap().data, lhd(&req).unwrap());
    }

    #[test]
    fn optimization_never_lowers_min_distance() {
        let req = DesignRequest::new(10, vec![unit_var("a"), unit_var("b")], RangeMode::Training, 21);
        let design = maximin_lhd(&req, 5000).unwrap();
        assert!(design.min_distance >= design.start_min_distance);
        assert!(design.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((min_distance(&design.data, &req) - design.min_distance).abs() < 1e-12);
        let plain = lhd(&req).unwrap();
        assert!((min_distance(&plain, &req) - design.start_min_distance).abs() < 1e-12);
    }

    #[test]
    fn borehole_sized_request_is_quick() {
        let sys = borehole_spec();
        let vars: Vec<VariableSpec> = sys.non_constant_inputs().cloned().collect();
        let req = DesignRequest::new(80, vars, RangeMode::Training, 1);
        let t = std::time::Instant::now();
        let design = maximin_lhd(&req, default_budget(8)).unwrap();
        assert!(t.elapsed().as_secs_f64() < 10.0);
        assert!(design.min_distance > design.start_min_distance);
    }

    #[test]
    fn invalid_requests() {
        assert!(matches!(lhd(&DesignRequest::new(1, vec![unit_var("a")], RangeMode::Training, 0)), Err(DesignError::TooFewRuns(1))));
        assert!(matches!(lhd(&DesignRequest::new(5, vec![], RangeMode::Training, 0)), Err(DesignError::NoVariables)));
        let c = VariableSpec::new("c", DimensionVector::dimensionless(), "", Role::Constant, [2.0, 2.0]);
        assert!(matches!(lhd(&DesignRequest::new(5, vec![c.clone()], RangeMode::Training, 0)), Err(DesignError::Degenerate(_))));
        let mut d = lhd(&DesignRequest::new(5, vec![unit_var("a")], RangeMode::Training, 0)).unwrap();
        append_constants(&mut d, &[c]).unwrap();
        assert_eq!(d.column_values(1), vec![2.0; 5]);
    }
}
