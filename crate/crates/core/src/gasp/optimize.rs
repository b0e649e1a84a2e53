//! Bound-constrained limited-memory quasi-Newton minimization.
//!
//! Directions come from the two-loop recursion restricted to variables not
//! held at a bound; steps are projected onto the box and accepted by an
//! Armijo test along the projected path.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of `f` falls below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iter: 200, memory: 8, grad_tol: 1e-6, f_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Components free to move: not at a bound with the gradient pushing outward.
fn free_mask(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
        .collect()
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lo[i], hi[i]) - x[i];
        m = m.max(step.abs());
    }
    m
}

/// Minimizes `fg` over the box `[lo, hi]` starting from `x0`.
///
/// `fg` returns the value and gradient, or `None` where the objective is
/// undefined; such points are treated as infinitely bad. Returns `None` if
/// the start itself is undefined.
pub fn minimize<F>(mut fg: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut f, mut g) = fg(&x)?;
    let mut evaluations = 1;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if projected_grad_norm(&x, &g, lo, hi) < opts.grad_tol {
            break;
        }
        iterations += 1;
        let free = free_mask(&x, &g, lo, hi);
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut dir: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&dir, &g) >= 0.0 {
            dir = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            hist.clear();
        }
        // the first step and steepest-descent restarts are capped in length
        if hist.is_empty() {
            let big = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if big > 1.0 {
                dir.iter_mut().for_each(|v| *v /= big);
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step * dir[i]).collect();
            project(&mut trial, lo, hi);
            let moved: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
            let decrease = dot(&g, &moved);
            if decrease >= 0.0 && moved.iter().all(|m| *m == 0.0) {
                break;
            }
            evaluations += 1;
            if let Some((ft, gt)) = fg(&trial) {
                let armijo = ft <= f + 1e-4 * decrease.min(0.0);
                // below the objective's rounding level, progress is judged by the slope
                let flat = ft <= f + 1e-10 * f.abs().max(1.0) && dot(&gt, &moved).abs() <= 0.9 * decrease.abs();
                if ft.is_finite() && (armijo || flat) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        };
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        // variables pinned at a bound carry no curvature information
        let y: Vec<f64> = (0..n).map(|i| if free[i] { gn[i] - g[i] } else { 0.0 }).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let rel = (f - fnew).abs() / f.abs().max(fnew.abs()).max(1.0);
        x = xn;
        f = fnew;
        g = gn;
        if rel < opts.f_tol {
            break;
        }
    }
    Some(Minimum { x, f, iterations, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_unconstrained() {
        let fg = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((f, g))
        };
        let opts = LbfgsOptions { max_iter: 500, f_tol: 0.0, grad_tol: 1e-9, ..Default::default() };
        let m = minimize(fg, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn active_bounds() {
        // minimum of (x−3)² + (y+2)² on [0,1]²
        let fg = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 2.0)]));
        let m = minimize(fg, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x, vec![1.0, 0.0]);
    }

    #[test]
    fn undefined_region_is_avoided() {
        // f undefined for x > 2
        let fg = |x: &[f64]| if x[0] > 2.0 { None } else { Some(((x[0] - 1.5).powi(2), vec![2.0 * (x[0] - 1.5)])) };
        let m = minimize(fg, &[-3.0], &[-10.0], &[10.0], &LbfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.5).abs() < 1e-6);
        assert!(minimize(fg, &[5.0], &[-10.0], &[10.0], &LbfgsOptions::default()).is_none());
    }
}
