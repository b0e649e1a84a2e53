use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{KernelFamily, KernelSpec, PairCache};
use super::likelihood::{gradient, profile, Profile};
use super::optimize::{minimize, LbfgsOptions};
use super::{GaspError, TrainConfig, TrendKind, TrendSpec};
use crate::dataset::{ColumnKind, Dataset};
use crate::dimension::Interval;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Mean and standard error per prediction point.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// A trained GaSP surrogate.
///
/// Internally inputs live on `[0, 1]` (by `scaling`) and the output is
/// standardized by `y_center`/`y_scale`; `beta`, `sigma2` and `gamma` refer
/// to that standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaspModel {
    pub format_version: u32,
    pub input_names: Vec<String>,
    pub output_name: String,
    pub scaling: Vec<Interval>,
    pub kernel: KernelSpec,
    pub trend: TrendSpec,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub y_center: f64,
    pub y_scale: f64,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Lower Cholesky factor of `R + δI`.
    pub chol_l: DMatrix<f64>,
    pub gamma: DVector<f64>,
    /// `FᵀR⁻¹F`.
    pub trend_gram: DMatrix<f64>,
    pub nugget: f64,
    /// Maximized log-likelihood on the original output scale.
    pub log_likelihood: f64,
    pub seed: u64,
}

fn to_unit(v: f64, s: &Interval) -> f64 {
    (v - s.lo) / s.width()
}

fn column_scaling(data: &Dataset, j: usize) -> Interval {
    let col = &data.columns()[j];
    if let Some(spec) = &col.spec {
        if spec.training_range.width() > 0.0 {
            return spec.training_range;
        }
    }
    let v = data.column_values(j);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        Interval::new(lo, hi)
    } else {
        Interval::new(lo, lo + 1.0)
    }
}

fn trend_matrix(trend: &TrendSpec, x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), trend.columns(), |i, c| if c == 0 { 1.0 } else { x[(i, trend.regressors[c - 1])] })
}

struct Problem<'a> {
    cache: PairCache,
    y: &'a DVector<f64>,
    f: &'a DMatrix<f64>,
    family: KernelFamily,
    d: usize,
    estimate_power: bool,
    fixed_power: f64,
    ladder: &'a [f64],
}

impl Problem<'_> {
    fn unpack(&self, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let theta: Vec<f64> = psi[..self.d].iter().map(|v| v.exp()).collect();
        let power = match self.family {
            KernelFamily::SquaredExponential => vec![2.0; self.d],
            KernelFamily::PowerExponential if self.estimate_power => psi[self.d..].to_vec(),
            KernelFamily::PowerExponential => vec![self.fixed_power; self.d],
        };
        (theta, power)
    }

    fn with_power(&self) -> bool {
        self.family == KernelFamily::PowerExponential && self.estimate_power
    }

    fn fit(&self, psi: &[f64]) -> Result<Profile, GaspError> {
        let (theta, power) = self.unpack(psi);
        profile(&self.cache.correlation(&theta, &power), self.y, self.f, self.ladder)
    }

    fn value_and_gradient(&self, psi: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (theta, power) = self.unpack(psi);
        let prof = profile(&self.cache.correlation(&theta, &power), self.y, self.f, self.ladder).ok()?;
        if !prof.nll.is_finite() {
            return None;
        }
        let g = gradient(&self.cache, &prof, &theta, &power, self.with_power());
        Some((prof.nll, g))
    }
}

/// Kernel-input column indices and, among them, the positions that feed a linear trend.
fn model_columns(data: &Dataset) -> (Vec<usize>, Vec<usize>) {
    let inputs = data.indices_of(&[ColumnKind::Input, ColumnKind::Expanded]);
    let regressors = inputs
        .iter()
        .enumerate()
        .filter(|(_, &j)| data.columns()[j].kind == ColumnKind::Input)
        .map(|(pos, _)| pos)
        .collect();
    (inputs, regressors)
}

/// Negative profile log-likelihood of `data` as given (no rescaling),
/// constants included.
pub fn neg_log_likelihood(kernel: &KernelSpec, trend: &TrendSpec, data: &Dataset, ladder: &[f64]) -> Result<f64, GaspError> {
    let (inputs, _) = model_columns(data);
    let out = data.output_index().ok_or(GaspError::NoOutput)?;
    let x = data.select(&inputs);
    let y = data.values().column(out).into_owned();
    let f = trend_matrix(trend, &x);
    if y.len() <= f.ncols() {
        return Err(GaspError::TooFewRuns { n: y.len(), trend_columns: f.ncols() });
    }
    let r = PairCache::new(&x).correlation(&kernel.theta, &kernel.power);
    Ok(profile(&r, &y, &f, ladder)?.nll)
}

/// Fits a GaSP to the output column of `data` by multi-start maximum likelihood.
///
/// `Input` and `Expanded` columns enter the correlation; only `Input`
/// columns are linear-trend regressors.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<GaspModel, GaspError> {
    let (inputs, regressors) = model_columns(data);
    if inputs.is_empty() {
        return Err(GaspError::NoInputs);
    }
    let out = data.output_index().ok_or(GaspError::NoOutput)?;
    let scaling: Vec<Interval> = inputs.iter().map(|&j| column_scaling(data, j)).collect();
    let n = data.nrows();
    let d = inputs.len();
    let x = DMatrix::from_fn(n, d, |i, k| to_unit(data.values()[(i, inputs[k])], &scaling[k]));
    let raw_y = data.values().column(out).into_owned();
    let y_center = raw_y.mean();
    let spread = (raw_y.iter().map(|v| (v - y_center).powi(2)).sum::<f64>() / n as f64).sqrt();
    let degenerate = !(spread > 1e-300);
    let y_scale = if degenerate { 1.0 } else { spread };
    let y = raw_y.map(|v| (v - y_center) / y_scale);

    let trend = match cfg.trend {
        TrendKind::Constant => TrendSpec::constant(),
        TrendKind::Linear => TrendSpec { kind: TrendKind::Linear, regressors },
    };
    let f = trend_matrix(&trend, &x);
    if n <= f.ncols() {
        return Err(GaspError::TooFewRuns { n, trend_columns: f.ncols() });
    }

    let problem = Problem {
        cache: PairCache::new(&x),
        y: &y,
        f: &f,
        family: cfg.family,
        d,
        estimate_power: cfg.estimate_power,
        fixed_power: cfg.fixed_power,
        ladder: &cfg.nugget_ladder,
    };
    let (tlo, thi) = (cfg.theta_bounds.0.ln(), cfg.theta_bounds.1.ln());
    let mut lo = vec![tlo; d];
    let mut hi = vec![thi; d];
    if problem.with_power() {
        lo.extend(std::iter::repeat_n(1.0, d));
        hi.extend(std::iter::repeat_n(2.0, d));
    }
    let base = (2.0 / d as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.starts.max(1))
        .map(|s| {
            let mut psi: Vec<f64> = (0..d)
                .map(|_| if s == 0 { base } else { base + rng.random_range(-2.5..2.5) })
                .collect();
            if problem.with_power() {
                psi.extend((0..d).map(|_| if s == 0 { 1.95 } else { rng.random_range(1.3..2.0) }));
            }
            psi
        })
        .collect();

    let best_psi = if degenerate {
        starts[0].clone()
    } else {
        let opts = LbfgsOptions { max_iter: cfg.max_iter, ..Default::default() };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in &starts {
            if let Some(m) = minimize(|p| problem.value_and_gradient(p), s, &lo, &hi, &opts) {
                if best.as_ref().is_none_or(|b| m.f < b.0) {
                    best = Some((m.f, m.x));
                }
            }
        }
        let (_, x) = best.ok_or(GaspError::OptimizationFailure { starts: starts.len() })?;
        let polish = LbfgsOptions { max_iter: cfg.max_iter, grad_tol: 1e-10, f_tol: 1e-15, ..Default::default() };
        minimize(|p| problem.value_and_gradient(p), &x, &lo, &hi, &polish).map_or(x, |m| m.x)
    };

    let (theta, power) = problem.unpack(&best_psi);
    let kernel = KernelSpec::new(cfg.family, theta, power);
    let prof = problem.fit(&best_psi)?;
    let (beta, sigma2, gamma, log_likelihood) = if degenerate {
        (DVector::zeros(f.ncols()), 0.0, DVector::zeros(n), f64::INFINITY)
    } else {
        (prof.beta.clone(), prof.sigma2, prof.gamma.clone(), -(prof.nll + n as f64 * y_scale.ln()))
    };
    let trend_gram = prof.f_white.transpose() * &prof.f_white;
    Ok(GaspModel {
        format_version: MODEL_FORMAT_VERSION,
        input_names: inputs.iter().map(|&j| data.columns()[j].name.clone()).collect(),
        output_name: data.columns()[out].name.clone(),
        scaling,
        kernel,
        trend,
        beta,
        sigma2,
        y_center,
        y_scale,
        x,
        y,
        chol_l: prof.chol.l(),
        gamma,
        trend_gram,
        nugget: prof.nugget,
        log_likelihood,
        seed: cfg.seed,
    })
}

impl GaspModel {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Process variance on the original output scale.
    pub fn process_variance(&self) -> f64 {
        self.sigma2 * self.y_scale * self.y_scale
    }

    /// Maps a row of original-unit inputs onto the unit cube.
    pub fn scale_row(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.scaling).map(|(v, s)| to_unit(*v, s)).collect()
    }

    /// Extracts the model's inputs from `data`, in model order and original units.
    pub fn inputs_from(&self, data: &Dataset) -> Result<DMatrix<f64>, GaspError> {
        let idx: Vec<usize> = self
            .input_names
            .iter()
            .map(|n| data.column_index(n).ok_or_else(|| GaspError::ColumnMismatch(n.clone())))
            .collect::<Result<_, _>>()?;
        Ok(data.select(&idx))
    }

    pub fn predict(&self, data: &Dataset) -> Result<Prediction, GaspError> {
        Ok(self.predict_raw(&self.inputs_from(data)?))
    }

    /// Predictions at rows of original-unit inputs in model order.
    pub fn predict_raw(&self, raw: &DMatrix<f64>) -> Prediction {
        let rows: Vec<Vec<f64>> = raw.row_iter().map(|r| self.scale_row(&r.iter().copied().collect::<Vec<_>>())).collect();
        self.predict_scaled(&rows)
    }

    /// Predictions at rows already on the unit cube.
    pub fn predict_scaled(&self, rows: &[Vec<f64>]) -> Prediction {
        let n = self.n();
        let gram_inv = self.trend_gram.clone().try_inverse();
        let train: Vec<Vec<f64>> = self.x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let f_white = self.chol_l.solve_lower_triangular(&self.trend_f()).expect("nonsingular factor");
        let mut mean = Vec::with_capacity(rows.len());
        let mut se = Vec::with_capacity(rows.len());
        for row in rows {
            let r = DVector::from_fn(n, |i, _| self.kernel.correlation(row, &train[i]));
            let f = DVector::from_vec(self.trend.row(row));
            let m = f.dot(&self.beta) + r.dot(&self.gamma);
            mean.push(self.y_center + self.y_scale * m);
            if self.sigma2 == 0.0 {
                se.push(0.0);
                continue;
            }
            let v = self.chol_l.solve_lower_triangular(&r).expect("nonsingular factor");
            let u = &f - f_white.transpose() * &v;
            let extra = gram_inv.as_ref().map_or(0.0, |g| u.dot(&(g * &u)));
            let var = self.sigma2 * (1.0 - v.norm_squared() + extra);
            se.push(self.y_scale * var.max(0.0).sqrt());
        }
        Prediction { mean, std_error: se }
    }

    /// Predictive mean at one row on the unit cube, original output scale.
    pub fn mean_scaled(&self, row: &[f64]) -> f64 {
        let trend: f64 = self.trend.row(row).iter().zip(self.beta.iter()).map(|(f, b)| f * b).sum();
        let kernel: f64 = self
            .x
            .row_iter()
            .zip(self.gamma.iter())
            .map(|(xi, g)| g * self.kernel.correlation(row, xi.transpose().as_slice()))
            .sum();
        self.y_center + self.y_scale * (trend + kernel)
    }

    /// Trend design matrix at the training inputs.
    pub fn trend_f(&self) -> DMatrix<f64> {
        trend_matrix(&self.trend, &self.x)
    }

    pub fn to_json(&self) -> Result<String, GaspError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, GaspError> {
        let m: GaspModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(GaspError::FormatVersion(m.format_version));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), GaspError> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self, GaspError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Provenance};
    use rand::Rng;

    fn dataset(x: &[Vec<f64>], y: &[f64]) -> Dataset {
        let d = x[0].len();
        let mut cols: Vec<(Column, Vec<f64>)> =
            (0..d).map(|k| (Column::input(format!("x{k}")), x.iter().map(|r| r[k]).collect())).collect();
        cols.push((Column::output("y"), y.to_vec()));
        Dataset::from_columns(cols, Provenance::Training).unwrap()
    }

    fn random_design(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let x = random_design(15, 3, 1);
        let y: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[2]).collect();
        let xm = DMatrix::from_fn(15, 3, |i, k| x[i][k]);
        let yv = DVector::from_vec(y);
        let f = DMatrix::from_fn(15, 2, |i, c| if c == 0 { 1.0 } else { xm[(i, 0)] });
        let problem = Problem {
            cache: PairCache::new(&xm),
            y: &yv,
            f: &f,
            family: KernelFamily::PowerExponential,
            d: 3,
            estimate_power: true,
            fixed_power: 2.0,
            ladder: &[0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mut psi: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..2.0)).collect();
            psi.extend((0..3).map(|_| rng.random_range(1.2..1.9)));
            let (_, g) = problem.value_and_gradient(&psi).unwrap();
            for k in 0..6 {
                let h = 1e-5;
                let mut a = psi.clone();
                let mut b = psi.clone();
                a[k] += h;
                b[k] -= h;
                let fd = (problem.fit(&a).unwrap().nll - problem.fit(&b).unwrap().nll) / (2.0 * h);
                let rel = (g[k] - fd).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-5, "component {k}: analytic {} vs fd {fd}", g[k]);
            }
        }
    }

    #[test]
    fn interpolates_training_points() {
        let x = random_design(25, 2, 4);
        let y: Vec<f64> = x.iter().map(|r| (4.0 * r[0]).sin() * (1.0 + r[1])).collect();
        let data = dataset(&x, &y);
        let m = train(&data, &TrainConfig { seed: 2, ..Default::default() }).unwrap();
        assert!(m.nugget <= 1e-8);
        let p = m.predict(&data).unwrap();
        let range = y.iter().copied().fold(f64::MIN, f64::max) - y.iter().copied().fold(f64::MAX, f64::min);
        for i in 0..y.len() {
            assert!((p.mean[i] - y[i]).abs() <= 1e-6 * range);
            assert!(p.std_error[i] <= 1e-3 * range);
        }
    }

    #[test]
    fn constant_output_gives_constant_model() {
        let x = random_design(10, 2, 5);
        let data = dataset(&x, &[4.25; 10]);
        let m = train(&data, &TrainConfig::default()).unwrap();
        assert_eq!(m.sigma2, 0.0);
        let p = m.predict_scaled(&[vec![0.3, 0.9], vec![5.0, -1.0]]);
        assert_eq!(p.mean, vec![4.25, 4.25]);
        assert_eq!(p.std_error, vec![0.0, 0.0]);
    }

    #[test]
    fn affine_output_invariance() {
        let x = random_design(20, 2, 6);
        let y: Vec<f64> = x.iter().map(|r| (7.0 * r[0]).sin() + (5.0 * r[1]).cos() * r[0]).collect();
        let ya: Vec<f64> = y.iter().map(|v| 250.0 * v - 17.0).collect();
        let cfg = TrainConfig { seed: 3, ..Default::default() };
        let m = train(&dataset(&x, &y), &cfg).unwrap();
        let ma = train(&dataset(&x, &ya), &cfg).unwrap();
        let test = random_design(30, 2, 7);
        let p = m.predict_scaled(&test);
        let pa = ma.predict_scaled(&test);
        for i in 0..test.len() {
            let back = (pa.mean[i] + 17.0) / 250.0;
            assert!((back - p.mean[i]).abs() <= 1e-10 * p.mean[i].abs().max(1.0), "{back} vs {} theta {:?} vs {:?}", p.mean[i], m.kernel, ma.kernel);
        }
    }

    #[test]
    fn far_field_reverts_to_trend() {
        let x = random_design(12, 1, 8);
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + (9.0 * r[0]).sin()).collect();
        let cfg = TrainConfig { trend: TrendKind::Linear, seed: 1, ..Default::default() };
        let m = train(&dataset(&x, &y), &cfg).unwrap();
        let far = 1e3;
        let p = m.predict_scaled(&[vec![far]]);
        let trend = m.y_center + m.y_scale * (m.beta[0] + m.beta[1] * far);
        assert!((p.mean[0] - trend).abs() <= 1e-9 * trend.abs());
    }

    #[test]
    fn recovers_known_scale() {
        // draws from a GP with θ = 20 (unit-cube scale), squared exponential
        let truth = 20.0;
        let mut ratios = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 + rng.random::<f64>()) / 30.0]).collect();
            let xm = DMatrix::from_fn(30, 1, |i, _| x[i][0]);
            let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![truth], vec![2.0]);
            let mut r = k.cross(&xm, &xm);
            for i in 0..30 {
                r[(i, i)] += 1e-10;
            }
            let l = r.cholesky().unwrap().l();
            let z = DVector::from_fn(30, |_, _| {
                let u1: f64 = rng.random::<f64>().max(1e-300);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            });
            let y = l * z;
            let mut data = dataset(&x, y.as_slice());
            // pin scaling to the unit interval so θ is comparable
            let spec = crate::dimension::VariableSpec::new(
                "x0",
                crate::dimension::DimensionVector::dimensionless(),
                "",
                crate::dimension::Role::Input,
                [0.0, 1.0],
            );
            let mut cols: Vec<(Column, Vec<f64>)> = vec![(Column::input("x0").with_spec(spec), data.column_values(0))];
            cols.push((Column::output("y"), data.column_values(1)));
            data = Dataset::from_columns(cols, Provenance::Training).unwrap();
            let cfg = TrainConfig { family: KernelFamily::SquaredExponential, seed, ..Default::default() };
            let m = train(&data, &cfg).unwrap();
            ratios.push(m.kernel.theta[0] / truth);
        }
        ratios.sort_by(f64::total_cmp);
        let median = 0.5 * (ratios[9] + ratios[10]);
        assert!(median > 1.0 / 3.0 && median < 3.0, "median ratio {median}");
    }

    #[test]
    fn json_round_trip_replays_predictions() {
        let x = random_design(15, 2, 10);
        let y: Vec<f64> = x.iter().map(|r| r[0] * 3.0 - r[1].powi(3)).collect();
        let m = train(&dataset(&x, &y), &TrainConfig::default()).unwrap();
        let back = GaspModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let t = random_design(5, 2, 11);
        assert_eq!(m.predict_scaled(&t), back.predict_scaled(&t));
        let mut bad = m.clone();
        bad.format_version = 99;
        assert!(matches!(GaspModel::from_json(&bad.to_json().unwrap()), Err(GaspError::FormatVersion(99))));
    }

    #[test]
    fn missing_prediction_column() {
        let x = random_design(8, 2, 12);
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let m = train(&dataset(&x, &y), &TrainConfig { starts: 1, ..Default::default() }).unwrap();
        let test = Dataset::from_columns(vec![(Column::input("x0"), vec![0.5])], Provenance::Test).unwrap();
        assert!(matches!(m.predict(&test), Err(GaspError::ColumnMismatch(c)) if c == "x1"));
    }
}
