use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    PowerExponential,
    SquaredExponential,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::PowerExponential => "power-exponential",
            KernelFamily::SquaredExponential => "squared-exponential",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "power-exponential" | "power_exponential" | "pexp" => Ok(KernelFamily::PowerExponential),
            "squared-exponential" | "squared_exponential" | "gauss" => Ok(KernelFamily::SquaredExponential),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

/// Product correlation `Π exp(−θⱼ |hⱼ|^{pⱼ})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub theta: Vec<f64>,
    /// Smoothness per input; all 2 for the squared exponential.
    pub power: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, theta: Vec<f64>, power: Vec<f64>) -> Self {
        let power = match family {
            KernelFamily::SquaredExponential => vec![2.0; theta.len()],
            KernelFamily::PowerExponential => power,
        };
        KernelSpec { family, theta, power }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// One-dimensional factor for input `j` at distance `h`.
    pub fn factor(&self, j: usize, h: f64) -> f64 {
        (-self.theta[j] * h.abs().powf(self.power[j])).exp()
    }

    pub fn correlation(&self, x: &[f64], z: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.theta.len() {
            let h = (x[j] - z[j]).abs();
            if h > 0.0 {
                s += self.theta[j] * h.powf(self.power[j]);
            }
        }
        (-s).exp()
    }

    /// Correlations between each row of `a` and each row of `b`.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let ra: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
        let rb: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, k| self.correlation(&ra[i], &rb[k]))
    }
}

/// Per-pair absolute differences of training rows, with their logs.
#[derive(Debug, Clone)]
pub(crate) struct PairCache {
    pub n: usize,
    pub d: usize,
    /// `|h|` for pair-major, dimension-minor layout over pairs `i < j`.
    pub abs: Vec<f64>,
    /// `ln|h|`, `-inf` where `h = 0`.
    pub log_abs: Vec<f64>,
}

impl PairCache {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, d) = x.shape();
        let pairs = n * n.saturating_sub(1) / 2;
        let mut abs = Vec::with_capacity(pairs * d);
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..d {
                    abs.push((x[(i, k)] - x[(j, k)]).abs());
                }
            }
        }
        let log_abs = abs.iter().map(|h| h.ln()).collect();
        PairCache { n, d, abs, log_abs }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
    }

    /// `θₖ|hₖ|^{pₖ}` for dimension `k` of pair slot `base + k`.
    #[inline]
    pub fn term(&self, idx: usize, theta: f64, power: f64) -> f64 {
        let h = self.abs[idx];
        if h == 0.0 {
            0.0
        } else if power == 2.0 {
            theta * h * h
        } else if power == 1.0 {
            theta * h
        } else {
            theta * (power * self.log_abs[idx]).exp()
        }
    }

    /// Correlation matrix (unit diagonal, no nugget).
    pub fn correlation(&self, theta: &[f64], power: &[f64]) -> DMatrix<f64> {
        let mut r = DMatrix::identity(self.n, self.n);
        for (p, (i, j)) in self.pairs().enumerate() {
            let base = p * self.d;
            let mut s = 0.0;
            for k in 0..self.d {
                s += self.term(base + k, theta[k], power[k]);
            }
            let v = (-s).exp();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_with_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d = rng.random_range(1..6);
            let theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..20.0)).collect();
            let power: Vec<f64> = (0..d).map(|_| rng.random_range(1.0..2.0)).collect();
            let k = KernelSpec::new(KernelFamily::PowerExponential, theta, power);
            let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let z: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            assert_eq!(k.correlation(&x, &z), k.correlation(&z, &x));
            assert_eq!(k.correlation(&x, &x), 1.0);
            let prod: f64 = (0..d).map(|j| k.factor(j, x[j] - z[j])).product();
            assert!((prod - k.correlation(&x, &z)).abs() < 1e-14);
        }
    }

    #[test]
    fn cache_matches_direct() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.1, 0.5, 0.5, 0.9, 0.2]);
        let k = KernelSpec::new(KernelFamily::PowerExponential, vec![2.0, 0.5], vec![1.5, 1.9]);
        let r = PairCache::new(&x).correlation(&k.theta, &k.power);
        let direct = k.cross(&x, &x);
        assert!((r - direct).abs().max() < 1e-15);
        let se = KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0], vec![1.0]);
        assert_eq!(se.power, vec![2.0]);
    }
}
