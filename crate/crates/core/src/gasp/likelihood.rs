use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::PairCache;
use super::GaspError;

/// Nugget values tried in order until the factorization succeeds.
pub const NUGGET_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Everything concentrated out of the likelihood at fixed kernel parameters.
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    pub nugget: f64,
    pub chol: Cholesky<f64, Dyn>,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    /// `(R + δI)⁻¹ (y − Fβ)`.
    pub gamma: DVector<f64>,
    /// `L⁻¹F`.
    pub f_white: DMatrix<f64>,
    /// Negative profile log-likelihood, constants included.
    pub nll: f64,
}

/// Cholesky of `r + δI` that also rejects numerically vanishing pivots.
pub(crate) fn factor(r: &DMatrix<f64>, nugget: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = r.nrows();
    let mut m = r.clone();
    for i in 0..n {
        m[(i, i)] += nugget;
    }
    let chol = Cholesky::new(m)?;
    let floor = n as f64 * f64::EPSILON;
    let l = chol.l_dirty();
    if (0..n).any(|i| !(l[(i, i)] * l[(i, i)] > floor)) {
        return None;
    }
    Some(chol)
}

/// Factorizes with the first workable nugget from `ladder` and profiles out
/// `β` and `σ²`.
pub(crate) fn profile(
    r: &DMatrix<f64>,
    y: &DVector<f64>,
    f: &DMatrix<f64>,
    ladder: &[f64],
) -> Result<Profile, GaspError> {
    let n = y.len();
    let (nugget, chol) = ladder
        .iter()
        .find_map(|&d| factor(r, d).map(|c| (d, c)))
        .ok_or(GaspError::CholeskyFailure { nugget: ladder.last().copied().unwrap_or(0.0) })?;
    let l = chol.l();
    let f_white = l.solve_lower_triangular(f).expect("nonsingular factor");
    let y_white = l.solve_lower_triangular(y).expect("nonsingular factor");
    let normal = f_white.transpose() * &f_white;
    let rhs = f_white.transpose() * &y_white;
    let beta = Cholesky::new(normal).ok_or(GaspError::RankDeficientTrend)?.solve(&rhs);
    let resid = &y_white - &f_white * &beta;
    let sigma2 = resid.norm_squared() / n as f64;
    let gamma = l.transpose().solve_upper_triangular(&resid).expect("nonsingular factor");
    let log_det: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let nll = 0.5 * n as f64 * ((2.0 * PI * sigma2).ln() + 1.0) + 0.5 * log_det;
    Ok(Profile { nugget, chol, beta, sigma2, gamma, f_white, nll })
}

/// Gradient of the negative profile log-likelihood with respect to
/// `ln θₖ` for every input, followed by `pₖ` when `with_power`.
pub(crate) fn gradient(cache: &PairCache, prof: &Profile, theta: &[f64], power: &[f64], with_power: bool) -> Vec<f64> {
    let d = cache.d;
    let inv = prof.chol.inverse();
    let g = &prof.gamma;
    let s2 = prof.sigma2;
    let mut out = vec![0.0; if with_power { 2 * d } else { d }];
    let mut terms = vec![0.0; d];
    for (p, (i, j)) in cache.pairs().enumerate() {
        let base = p * d;
        let mut s = 0.0;
        for k in 0..d {
            let t = cache.term(base + k, theta[k], power[k]);
            terms[k] = t;
            s += t;
        }
        let rij = (-s).exp();
        let w = (inv[(i, j)] - g[i] * g[j] / s2) * rij;
        if w == 0.0 {
            continue;
        }
        for k in 0..d {
            let t = terms[k];
            if t == 0.0 {
                continue;
            }
            out[k] -= w * t;
            if with_power {
                out[d + k] -= w * t * cache.log_abs[base + k];
            }
        }
    }
    out
}
