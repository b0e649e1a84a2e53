//! Functional ANOVA of a trained GaSP predictor under uniform weights.
//!
//! The product-form correlation makes every integral of the predictor
//! separate into one-dimensional integrals of the per-input correlation
//! factors, which are done by Gauss–Legendre quadrature. Main-effect and
//! two-input interaction variances come from quadrature of the integrated
//! predictor; the total variance is computed in closed form from the same
//! one-dimensional integrals.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::Interval;
use crate::gasp::GaspModel;

/// Default quadrature nodes per dimension.
pub const DEFAULT_GRID: usize = 64;

/// How percentages are normalized, recorded in every report.
pub const DENOMINATOR: &str = "total predictor variance";

#[derive(Debug, Error)]
pub enum FanovaError {
    #[error("correlation is not a product of per-input factors")]
    NonProductKernel,
    #[error("`{0}` is not an input of the model")]
    UnknownInput(String),
    #[error("expected {expected} integration ranges, got {found}")]
    RangeCount { expected: usize, found: usize },
    #[error("integration range for `{0}` is empty")]
    EmptyRange(String),
    #[error("grid needs at least 2 points, got {0}")]
    Grid(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEffect {
    pub input: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub inputs: (String, String),
    pub percent: f64,
}

/// Centered main effect on an equispaced grid with approximate 95% bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub input: String,
    pub x: Vec<f64>,
    pub effect: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl EffectCurve {
    /// Largest minus smallest effect value.
    pub fn amplitude(&self) -> f64 {
        let max = self.effect.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.effect.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FanovaError> {
        writeln!(w, "x,effect,lo,hi")?;
        for i in 0..self.x.len() {
            writeln!(w, "{},{},{},{}", self.x[i], self.effect[i], self.lo[i], self.hi[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanovaReport {
    /// Predictor variance over the integration box, original output scale.
    pub total_variance: f64,
    pub mean: f64,
    /// Model input order.
    pub main_effects: Vec<MainEffect>,
    pub interactions: Vec<Interaction>,
    /// Everything not in a main effect or two-input interaction.
    pub residual_percent: f64,
    pub curves: Vec<EffectCurve>,
    pub denominator: String,
    pub grid: usize,
}

impl FanovaReport {
    pub fn main_effect(&self, input: &str) -> Option<f64> {
        self.main_effects.iter().find(|m| m.input == input).map(|m| m.percent)
    }

    pub fn interaction(&self, a: &str, b: &str) -> Option<f64> {
        self.interactions
            .iter()
            .find(|i| (i.inputs.0 == a && i.inputs.1 == b) || (i.inputs.0 == b && i.inputs.1 == a))
            .map(|i| i.percent)
    }

    pub fn curve(&self, input: &str) -> Option<&EffectCurve> {
        self.curves.iter().find(|c| c.input == input)
    }

    /// Main effects and interactions together, largest first.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = self
            .main_effects
            .iter()
            .map(|m| (m.input.clone(), m.percent))
            .chain(self.interactions.iter().map(|i| (format!("{}:{}", i.inputs.0, i.inputs.1), i.percent)))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1));
        all
    }

    /// `effect,percent` rows sorted descending, residual last.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FanovaError> {
        writeln!(w, "effect,percent")?;
        for (name, pct) in self.ranked() {
            writeln!(w, "{name},{pct}")?;
        }
        writeln!(w, "residual,{}", self.residual_percent)?;
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Double-double accumulator: an unevaluated sum `hi + lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TwoFloat {
    hi: f64,
    lo: f64,
}

impl TwoFloat {
    const ZERO: TwoFloat = TwoFloat { hi: 0.0, lo: 0.0 };
    const ONE: TwoFloat = TwoFloat { hi: 1.0, lo: 0.0 };

    fn from(v: f64) -> Self {
        TwoFloat { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn new_mul(a: f64, b: f64) -> Self {
        let p = a * b;
        TwoFloat { hi: p, lo: a.mul_add(b, -p) }
    }

    fn add(self, o: Self) -> Self {
        let (s, e) = Self::two_sum(self.hi, o.hi);
        let (t, f) = Self::two_sum(self.lo, o.lo);
        let (s, e) = Self::quick(s, e + t);
        let (hi, lo) = Self::quick(s, e + f);
        TwoFloat { hi, lo }
    }

    fn quick(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    fn mul(self, o: Self) -> Self {
        let p = Self::new_mul(self.hi, o.hi);
        let lo = p.lo + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = Self::quick(p.hi, lo);
        TwoFloat { hi, lo }
    }

    fn scale(self, v: f64) -> Self {
        self.mul(Self::from(v))
    }

    fn neg(self) -> Self {
        TwoFloat { hi: -self.hi, lo: -self.lo }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Per-input quadrature on the unit-cube interval `[a, b]`; weights sum to 1.
struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn new(a: f64, b: f64, n: usize) -> Self {
        let (z, w) = gauss_legendre(n);
        Rule {
            nodes: z.iter().map(|t| a + (b - a) * (t + 1.0) / 2.0).collect(),
            weights: w.iter().map(|v| v / 2.0).collect(),
        }
    }
}

/// Cached per-input integrals of the correlation factors.
struct Integrals<'a> {
    model: &'a GaspModel,
    /// Unit-cube integration box per input.
    boxes: Vec<(f64, f64)>,
    rules: Vec<Rule>,
    /// `A[j][(q, i)] = Rⱼ(node q, training point i)`.
    factors: Vec<DMatrix<f64>>,
    /// `m[(i, j)] = ∫ Rⱼ(x, xᵢⱼ) dx`.
    m: DMatrix<f64>,
    /// Linear trend coefficient per input (standardized scale), 0 if none.
    slope: Vec<f64>,
}

impl<'a> Integrals<'a> {
    fn new(model: &'a GaspModel, ranges: Option<&[Interval]>, grid: usize) -> Result<Self, FanovaError> {
        let d = model.dim();
        let n = model.n();
        if grid < 2 {
            return Err(FanovaError::Grid(grid));
        }
        let boxes: Vec<(f64, f64)> = match ranges {
            None => vec![(0.0, 1.0); d],
            Some(r) if r.len() != d => return Err(FanovaError::RangeCount { expected: d, found: r.len() }),
            Some(r) => r
                .iter()
                .zip(&model.scaling)
                .zip(&model.input_names)
                .map(|((r, s), name)| {
                    if r.width() > 0.0 {
                        Ok(((r.lo - s.lo) / s.width(), (r.hi - s.lo) / s.width()))
                    } else {
                        Err(FanovaError::EmptyRange(name.clone()))
                    }
                })
                .collect::<Result<_, _>>()?,
        };
        let rules: Vec<Rule> = boxes.iter().map(|&(a, b)| Rule::new(a, b, grid)).collect();
        let factors: Vec<DMatrix<f64>> = (0..d)
            .map(|j| DMatrix::from_fn(grid, n, |q, i| model.kernel.factor(j, rules[j].nodes[q] - model.x[(i, j)])))
            .collect();
        let m = DMatrix::from_fn(n, d, |i, j| (0..grid).map(|q| rules[j].weights[q] * factors[j][(q, i)]).sum());
        let mut slope = vec![0.0; d];
        for (pos, &j) in model.trend.regressors.iter().enumerate() {
            slope[j] = model.beta[1 + pos];
        }
        Ok(Integrals { model, boxes, rules, factors, m, slope })
    }

    /// `γᵢ Πₗ mᵢₗ` over all inputs except those in `skip`.
    fn weights_without(&self, skip: &[usize]) -> DVector<f64> {
        let (n, d) = self.m.shape();
        DVector::from_fn(n, |i, _| {
            let mut p = self.model.gamma[i];
            for l in 0..d {
                if !skip.contains(&l) {
                    p *= self.m[(i, l)];
                }
            }
            p
        })
    }

    /// Main effect (uncentered, up to a constant) at the quadrature nodes of input `j`.
    fn main_at_nodes(&self, j: usize) -> Vec<f64> {
        let a = self.weights_without(&[j]);
        let kern = &self.factors[j] * a;
        self.rules[j].nodes.iter().enumerate().map(|(q, x)| self.slope[j] * x + kern[q]).collect()
    }

    fn main_variance(&self, j: usize) -> f64 {
        let h = self.main_at_nodes(j);
        weighted_variance(&h, &self.rules[j].weights)
    }

    fn pair_variance(&self, j: usize, k: usize) -> f64 {
        let b = self.weights_without(&[j, k]);
        let mut scaled = self.factors[k].clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col *= b[i];
        }
        let h = &self.factors[j] * scaled.transpose();
        let (rj, rk) = (&self.rules[j], &self.rules[k]);
        let mut mean = 0.0;
        for q in 0..h.nrows() {
            for r in 0..h.ncols() {
                mean += rj.weights[q] * rk.weights[r] * (h[(q, r)] + self.slope[j] * rj.nodes[q] + self.slope[k] * rk.nodes[r]);
            }
        }
        let mut var = 0.0;
        for q in 0..h.nrows() {
            for r in 0..h.ncols() {
                let v = h[(q, r)] + self.slope[j] * rj.nodes[q] + self.slope[k] * rk.nodes[r] - mean;
                var += rj.weights[q] * rk.weights[r] * v * v;
            }
        }
        var
    }

    /// Variance and mean of the whole predictor over the box (standardized scale).
    ///
    /// The kernel weights of a near-interpolating model are huge and of
    /// alternating sign, so the quadratic form is accumulated in double-double
    /// arithmetic; everything before the final rounding is exact enough that
    /// the result equals the tensor-grid quadrature of the predictor itself.
    fn total(&self) -> (f64, f64) {
        let (n, d) = self.m.shape();
        let g: Vec<TwoFloat> = self.model.gamma.iter().map(|&v| TwoFloat::from(v)).collect();
        let mut prod = vec![TwoFloat::ONE; n * n];
        let mut mbar = vec![TwoFloat::ONE; n];
        let mut m_dd = vec![TwoFloat::ZERO; n * d];
        for j in 0..d {
            let a = &self.factors[j];
            let w = &self.rules[j].weights;
            for i in 0..n {
                let mut s = TwoFloat::ZERO;
                for q in 0..w.len() {
                    s = s.add(TwoFloat::new_mul(w[q], a[(q, i)]));
                }
                m_dd[i * d + j] = s;
                mbar[i] = mbar[i].mul(s);
            }
            for i in 0..n {
                for l in i..n {
                    let mut s = TwoFloat::ZERO;
                    for q in 0..w.len() {
                        s = s.add(TwoFloat::new_mul(a[(q, i)], a[(q, l)]).scale(w[q]));
                    }
                    prod[i * n + l] = prod[i * n + l].mul(s);
                }
            }
        }
        let mut kernel_var = TwoFloat::ZERO;
        for i in 0..n {
            let mut row = TwoFloat::ZERO;
            for l in i..n {
                let c = prod[i * n + l].add(mbar[i].mul(mbar[l]).neg()).mul(g[l]);
                row = row.add(if l == i { c } else { c.scale(2.0) });
            }
            kernel_var = kernel_var.add(row.mul(g[i]));
        }
        let mut trend_var = 0.0;
        let mut cross = TwoFloat::ZERO;
        let mut mean = g.iter().zip(&mbar).fold(TwoFloat::from(self.model.beta[0]), |acc, (a, b)| acc.add(a.mul(*b)));
        for j in 0..d {
            if self.slope[j] == 0.0 {
                continue;
            }
            let rule = &self.rules[j];
            let mu: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| x * w).sum();
            let var: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * (x - mu).powi(2)).sum();
            mean = mean.add(TwoFloat::new_mul(self.slope[j], mu));
            trend_var += self.slope[j].powi(2) * var;
            for i in 0..n {
                let mut e = TwoFloat::ZERO;
                for q in 0..rule.nodes.len() {
                    e = e.add(TwoFloat::new_mul(rule.weights[q] * (rule.nodes[q] - mu), self.factors[j][(q, i)]));
                }
                let mut others = g[i];
                for l in (0..d).filter(|&l| l != j) {
                    others = others.mul(m_dd[i * d + l]);
                }
                cross = cross.add(others.mul(e).scale(self.slope[j]));
            }
        }
        let total = kernel_var.add(cross.scale(2.0)).value() + trend_var;
        (total.max(0.0), mean.value())
    }

    /// Integrated predictor `∫ŷ dx₋ⱼ` at unit-cube points `xs` of input `j`,
    /// with its plug-in kriging standard error; standardized scale.
    fn integrated(&self, j: usize, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let model = self.model;
        let (n, d) = self.m.shape();
        let a = self.weights_without(&[j]);
        let mbar_without = DVector::from_fn(n, |i, _| (0..d).filter(|&l| l != j).map(|l| self.m[(i, l)]).product::<f64>());
        // ∫∫ R(x, x') over the other inputs, both arguments integrated
        let double: f64 = (0..d)
            .filter(|&l| l != j)
            .map(|l| {
                let rule = &self.rules[l];
                let mut s = 0.0;
                for (q, xq) in rule.nodes.iter().enumerate() {
                    for (r, xr) in rule.nodes.iter().enumerate() {
                        s += rule.weights[q] * rule.weights[r] * model.kernel.factor(l, xq - xr);
                    }
                }
                s
            })
            .product();
        let trend_mean: Vec<f64> = (0..d)
            .map(|l| {
                let (lo, hi) = self.boxes[l];
                (lo + hi) / 2.0
            })
            .collect();
        let f_train = model.trend_f();
        let f_white = model.chol_l.solve_lower_triangular(&f_train).expect("nonsingular factor");
        let gram_inv = model.trend_gram.clone().try_inverse();
        let mut mean = Vec::with_capacity(xs.len());
        let mut se = Vec::with_capacity(xs.len());
        for &x in xs {
            let rbar = DVector::from_fn(n, |i, _| model.kernel.factor(j, x - model.x[(i, j)]) * mbar_without[i]);
            let mut point = trend_mean.clone();
            point[j] = x;
            let f = DVector::from_vec(model.trend.row(&point));
            let kern: f64 = (0..n).map(|i| model.kernel.factor(j, x - model.x[(i, j)]) * a[i]).sum();
            mean.push(f.dot(&model.beta) + kern);
            if model.sigma2 == 0.0 {
                se.push(0.0);
                continue;
            }
            let v = model.chol_l.solve_lower_triangular(&rbar).expect("nonsingular factor");
            let u = &f - f_white.transpose() * &v;
            let extra = gram_inv.as_ref().map_or(0.0, |g| u.dot(&(g * &u)));
            let var = model.sigma2 * (double - v.norm_squared() + extra);
            se.push(var.max(0.0).sqrt());
        }
        (mean, se)
    }

    fn curve(&self, j: usize, points: usize) -> EffectCurve {
        let model = self.model;
        let (lo, hi) = self.boxes[j];
        let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
        let (mean, se) = self.integrated(j, &xs);
        let centre = self.overall_mean();
        let s = &model.scaling[j];
        let scale = model.y_scale;
        let effect: Vec<f64> = mean.iter().map(|m| (m - centre) * scale).collect();
        EffectCurve {
            input: model.input_names[j].clone(),
            x: xs.iter().map(|u| s.lo + u * s.width()).collect(),
            lo: effect.iter().zip(&se).map(|(e, s)| e - 1.96 * s * scale).collect(),
            hi: effect.iter().zip(&se).map(|(e, s)| e + 1.96 * s * scale).collect(),
            effect,
        }
    }

    /// Mean of the predictor over the box (standardized scale).
    fn overall_mean(&self) -> f64 {
        let trend: f64 = self.boxes.iter().zip(&self.slope).map(|((lo, hi), b)| b * (lo + hi) / 2.0).sum();
        self.model.beta[0] + trend + self.weights_without(&[]).sum()
    }
}

fn weighted_variance(h: &[f64], w: &[f64]) -> f64 {
    let mean: f64 = h.iter().zip(w).map(|(v, w)| v * w).sum();
    h.iter().zip(w).map(|(v, w)| w * (v - mean).powi(2)).sum()
}

/// FANOVA decomposition of `model` over `ranges` (original units, one per
/// model input; `None` uses the model's scaling ranges). `grid` is the
/// number of quadrature nodes per input and of points on each effect curve.
pub fn fanova(model: &GaspModel, ranges: Option<&[Interval]>, grid: usize) -> Result<FanovaReport, FanovaError> {
    let ints = Integrals::new(model, ranges, grid)?;
    let d = model.dim();
    let (total, mean) = ints.total();
    let scale2 = model.y_scale * model.y_scale;
    let pct = |v: f64| if total > 0.0 { (100.0 * v / total).max(0.0) } else { 0.0 };
    let main_var: Vec<f64> = (0..d).map(|j| ints.main_variance(j)).collect();
    let main_effects: Vec<MainEffect> = (0..d)
        .map(|j| MainEffect { input: model.input_names[j].clone(), percent: pct(main_var[j]) })
        .collect();
    let mut interactions = Vec::new();
    for j in 0..d {
        for k in (j + 1)..d {
            let v = ints.pair_variance(j, k) - main_var[j] - main_var[k];
            interactions.push(Interaction {
                inputs: (model.input_names[j].clone(), model.input_names[k].clone()),
                percent: pct(v),
            });
        }
    }
    let explained: f64 = main_effects.iter().map(|m| m.percent).sum::<f64>() + interactions.iter().map(|i| i.percent).sum::<f64>();
    let residual_percent = if total > 0.0 { (100.0 - explained).max(0.0) } else { 0.0 };
    let curves = (0..d).map(|j| ints.curve(j, grid)).collect();
    Ok(FanovaReport {
        total_variance: total * scale2,
        mean: model.y_center + model.y_scale * mean,
        main_effects,
        interactions,
        residual_percent,
        curves,
        denominator: DENOMINATOR.to_string(),
        grid,
    })
}

/// Centered main-effect curve of one input on `points` equispaced values.
pub fn main_effect_curve(
    model: &GaspModel,
    input: &str,
    ranges: Option<&[Interval]>,
    grid: usize,
    points: usize,
) -> Result<EffectCurve, FanovaError> {
    let j = model
        .input_names
        .iter()
        .position(|n| n == input)
        .ok_or_else(|| FanovaError::UnknownInput(input.to_string()))?;
    if points < 2 {
        return Err(FanovaError::Grid(points));
    }
    Ok(Integrals::new(model, ranges, grid)?.curve(j, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Dataset, Provenance};
    use crate::gasp::{train, KernelFamily, TrainConfig, TrendKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fit(d: usize, n: usize, seed: u64, trend: TrendKind, f: impl Fn(&[f64]) -> f64) -> GaspModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let mut cols: Vec<(Column, Vec<f64>)> = (0..d)
            .map(|k| {
                let spec_range = Interval::new(0.0, 1.0);
                let mut c = Column::input(format!("x{}", k + 1));
                c.spec = Some(crate::dimension::VariableSpec::new(
                    &format!("x{}", k + 1),
                    crate::dimension::DimensionVector::dimensionless(),
                    "",
                    crate::dimension::Role::Input,
                    [spec_range.lo, spec_range.hi],
                ));
                (c, x.iter().map(|r| r[k]).collect())
            })
            .collect();
        cols.push((Column::output("y"), x.iter().map(|r| f(r)).collect()));
        let data = Dataset::from_columns(cols, Provenance::Training).unwrap();
        train(&data, &TrainConfig::new(KernelFamily::PowerExponential, trend, seed)).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (z, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact through degree 9
        let i8: f64 = z.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 2.0 / 9.0).abs() < 1e-14);
        let (z64, w64) = gauss_legendre(64);
        let c: f64 = z64.iter().zip(&w64).map(|(x, w)| w * x.cos()).sum();
        assert!((c - 2.0 * 1f64.sin()).abs() < 1e-14);
        assert!(z64.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn double_double_keeps_low_order_bits() {
        let big = TwoFloat::from(1e16);
        let s = big.add(TwoFloat::from(1.0)).add(big.neg());
        assert_eq!(s.value(), 1.0);
        let p = TwoFloat::new_mul(1.0 + 2f64.powi(-30), 1.0 - 2f64.powi(-30));
        assert_eq!(p.add(TwoFloat::from(-1.0)).value(), -(2f64.powi(-60)));
    }

    #[test]
    fn additive_function_has_no_interaction() {
        let model = fit(2, 30, 3, TrendKind::Constant, |x| x[0] + x[1]);
        let r = fanova(&model, None, DEFAULT_GRID).unwrap();
        assert!(r.interaction("x1", "x2").unwrap() <= 0.5, "{r:?}");
        // equal slopes, equal shares
        assert!((r.main_effect("x1").unwrap() - 50.0).abs() < 1.0);
        assert!((r.main_effect("x2").unwrap() - 50.0).abs() < 1.0);
        let total = 1.0 / 6.0;
        assert!((r.total_variance - total).abs() < 1e-3 * total);
    }

    /// Pick-freeze Monte Carlo estimates of closed-effect variances, outputs
    /// centered on the sample mean.
    fn monte_carlo(model: &GaspModel, samples: usize, seed: u64) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let d = model.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Vec<f64>> = (0..samples).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let b: Vec<Vec<f64>> = (0..samples).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let fa: Vec<f64> = a.iter().map(|r| model.mean_scaled(r)).collect();
        let fb: Vec<f64> = b.iter().map(|r| model.mean_scaled(r)).collect();
        let all: Vec<f64> = fa.iter().chain(&fb).copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let total = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
        let closed = |set: &[usize]| {
            let mut s = 0.0;
            for i in 0..samples {
                let mut mixed = a[i].clone();
                for &j in set {
                    mixed[j] = b[i][j];
                }
                s += (fb[i] - mean) * (model.mean_scaled(&mixed) - fa[i]);
            }
            s / samples as f64
        };
        let mains: Vec<f64> = (0..d).map(|j| closed(&[j])).collect();
        let pairs: Vec<Vec<f64>> = (0..d).map(|j| (0..d).map(|k| if k > j { closed(&[j, k]) } else { 0.0 }).collect()).collect();
        (total, mains, pairs)
    }

    #[test]
    fn agrees_with_monte_carlo() {
        for (trend, seed) in [(TrendKind::Constant, 5), (TrendKind::Linear, 6)] {
            let model = fit(3, 40, seed, trend, |x| (3.0 * x[0]).sin() + x[1] * x[1] + 1.5 * x[0] * x[2]);
            let r = fanova(&model, None, DEFAULT_GRID).unwrap();
            let (total, mains, pairs) = monte_carlo(&model, 100_000, 11);
            assert!((r.total_variance - total).abs() < 0.01 * total, "{} vs {total}", r.total_variance);
            for j in 0..3 {
                let mc = 100.0 * mains[j] / total;
                assert!((r.main_effects[j].percent - mc).abs() < 1.0, "main {j}: {} vs {mc}", r.main_effects[j].percent);
                for k in (j + 1)..3 {
                    let mc = 100.0 * (pairs[j][k] - mains[j] - mains[k]) / total;
                    let got = r.interaction(&format!("x{}", j + 1), &format!("x{}", k + 1)).unwrap();
                    assert!((got - mc.max(0.0)).abs() < 1.0, "pair {j}{k}: {got} vs {mc}");
                }
            }
        }
    }

    #[test]
    fn grid_resolution_barely_matters() {
        let model = fit(3, 40, 8, TrendKind::Constant, |x| (4.0 * x[0]).exp() * x[1] + x[2]);
        let coarse = fanova(&model, None, 32).unwrap();
        let fine = fanova(&model, None, 64).unwrap();
        for (a, b) in coarse.ranked().iter().zip(fine.ranked()) {
            assert!((a.1 - b.1).abs() < 0.5, "{a:?} {b:?}");
        }
    }

    #[test]
    fn percentages_are_bounded() {
        let model = fit(4, 50, 9, TrendKind::Constant, |x| x[0] * x[1] * x[2] + (5.0 * x[3]).sin());
        let r = fanova(&model, None, 32).unwrap();
        let explained: f64 = r.main_effects.iter().map(|m| m.percent).sum::<f64>() + r.interactions.iter().map(|i| i.percent).sum::<f64>();
        assert!(explained <= 100.5);
        assert!(r.main_effects.iter().all(|m| m.percent >= 0.0));
        assert!(r.residual_percent >= 0.0);
        assert_eq!(r.denominator, DENOMINATOR);
    }

    #[test]
    fn inert_input_has_flat_curve() {
        let model = fit(3, 40, 12, TrendKind::Constant, |x| (3.0 * x[0]).sin() + x[1]);
        let c = main_effect_curve(&model, "x3", None, DEFAULT_GRID, 25).unwrap();
        let range = model.y.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - model.y.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(c.amplitude() <= 0.01 * range * model.y_scale, "{}", c.amplitude());
        let strong = main_effect_curve(&model, "x1", None, DEFAULT_GRID, 25).unwrap();
        assert!(strong.amplitude() > 0.5);
        assert!(strong.lo.iter().zip(&strong.hi).all(|(l, h)| l <= h));
    }

    #[test]
    fn curve_matches_direct_integration() {
        let model = fit(2, 30, 4, TrendKind::Linear, |x| x[0] * x[0] + x[0] * x[1]);
        let c = main_effect_curve(&model, "x1", None, DEFAULT_GRID, 5).unwrap();
        let (z, w) = gauss_legendre(64);
        let integrate = |x: f64| -> f64 { z.iter().zip(&w).map(|(t, w)| w / 2.0 * model.mean_scaled(&[x, (t + 1.0) / 2.0])).sum() };
        let overall: f64 = z.iter().zip(&w).map(|(t, w)| w / 2.0 * integrate((t + 1.0) / 2.0)).sum();
        for (x, e) in c.x.iter().zip(&c.effect) {
            assert!((integrate(*x) - overall - e).abs() < 1e-6, "{x}: {} vs {e}", integrate(*x) - overall);
        }
    }

    #[test]
    fn constant_model_is_all_zero() {
        let model = fit(2, 10, 1, TrendKind::Constant, |_| 3.0);
        let r = fanova(&model, None, 16).unwrap();
        assert_eq!(r.total_variance, 0.0);
        assert!(r.main_effects.iter().all(|m| m.percent == 0.0));
        assert_eq!(r.residual_percent, 0.0);
        assert!(r.curves.iter().all(|c| c.effect.iter().all(|e| *e == 0.0)));
    }

    #[test]
    fn errors_and_csv() {
        let model = fit(2, 12, 2, TrendKind::Constant, |x| x[0]);
        assert!(matches!(main_effect_curve(&model, "nope", None, 16, 5), Err(FanovaError::UnknownInput(_))));
        assert!(matches!(fanova(&model, Some(&[Interval::new(0.0, 1.0)]), 16), Err(FanovaError::RangeCount { .. })));
        let r = fanova(&model, None, 16).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("effect,percent\nx1,"));
        assert!(text.trim_end().ends_with(&format!("residual,{}", r.residual_percent)));
        let mut buf = Vec::new();
        r.curves[0].write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 17);
    }
}
