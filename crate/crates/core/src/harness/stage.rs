use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{training_set, without_constants, ExperimentConfig, HarnessError};
use crate::buckingham::{recommend_basis, validate_basis, BasisSet};
use crate::fanova::{fanova, FanovaReport, DEFAULT_GRID};
use crate::gasp::{train, KernelFamily, TrainConfig, TrendKind};
use crate::testbeds::{Testbed, TestbedId};

/// Settings for choosing basis quantities by FANOVA on the original variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanovaStageConfig {
    pub testbed: TestbedId,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub kernel: KernelFamily,
    pub trend: TrendKind,
    pub grid: usize,
    pub starts: usize,
    pub maximin_budget: Option<usize>,
    pub threads: usize,
}

impl FanovaStageConfig {
    pub fn new(testbed: TestbedId, n: usize, replicates: usize, seed: u64) -> Self {
        let kernel = match testbed {
            TestbedId::Gravity => KernelFamily::SquaredExponential,
            _ => KernelFamily::PowerExponential,
        };
        FanovaStageConfig {
            testbed,
            n,
            replicates,
            seed,
            kernel,
            trend: TrendKind::Constant,
            grid: DEFAULT_GRID,
            starts: 8,
            maximin_budget: None,
            threads: 0,
        }
    }

    /// The stage belonging to an experiment: smallest training size, same
    /// replicate designs.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        FanovaStageConfig {
            kernel: cfg.kernel,
            starts: cfg.starts,
            maximin_budget: cfg.maximin_budget,
            threads: cfg.threads,
            ..Self::new(cfg.testbed, cfg.n_values.iter().copied().min().unwrap_or(0), cfg.replicates, cfg.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanovaStageResult {
    pub n: usize,
    pub reports: Vec<FanovaReport>,
    /// Recommended basis per replicate.
    pub bases: Vec<Vec<String>>,
    pub consensus: Vec<String>,
    /// More than one basis shared the top count; the earliest replicate's won.
    pub tie_broken: bool,
}

impl FanovaStageResult {
    pub fn consensus_basis(&self, testbed: TestbedId) -> Result<BasisSet, HarnessError> {
        Ok(validate_basis(&self.consensus, &Testbed::new(testbed).spec)?)
    }
}

/// Most frequent basis (as a set), ties resolved toward the earliest entry.
/// Returns the winner and whether a tie had to be broken.
pub fn modal_basis(bases: &[Vec<String>]) -> Option<(Vec<String>, bool)> {
    let key = |b: &Vec<String>| {
        let mut k = b.clone();
        k.sort();
        k
    };
    let keys: Vec<Vec<String>> = bases.iter().map(key).collect();
    let count = |k: &Vec<String>| keys.iter().filter(|o| *o == k).count();
    let best = keys.iter().map(count).max()?;
    let winner = keys.iter().position(|k| count(k) == best)?;
    let mut distinct_best: Vec<&Vec<String>> = keys.iter().filter(|k| count(k) == best).collect();
    distinct_best.sort();
    distinct_best.dedup();
    Some((bases[winner].clone(), distinct_best.len() > 1))
}

/// FANOVA of a GaSP fit to each replicate's original-variable design, and
/// the basis recommended by each and by consensus.
pub fn fanova_stage(cfg: &FanovaStageConfig) -> Result<FanovaStageResult, HarnessError> {
    if cfg.replicates == 0 || cfg.n < 3 {
        return Err(HarnessError::Config("the FANOVA stage needs at least one replicate of three or more runs".into()));
    }
    let tb = Testbed::new(cfg.testbed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let per_rep: Vec<(FanovaReport, Vec<String>)> = pool.install(|| {
        (1..=cfg.replicates)
            .into_par_iter()
            .map(|rep| {
                let seed = cfg.seed ^ rep as u64;
                let data = without_constants(&training_set(&tb, cfg.n, seed, cfg.maximin_budget)?);
                let tc = TrainConfig { starts: cfg.starts, ..TrainConfig::new(cfg.kernel, cfg.trend, seed) };
                let model = train(&data, &tc)?;
                let report = fanova(&model, None, cfg.grid)?;
                let basis = recommend_basis(&tb.spec, &report)?;
                Ok((report, basis.members.clone()))
            })
            .collect::<Result<_, HarnessError>>()
    })?;
    let (reports, bases): (Vec<FanovaReport>, Vec<Vec<String>>) = per_rep.into_iter().unzip();
    let (consensus, tie_broken) = modal_basis(&bases).expect("at least one replicate");
    Ok(FanovaStageResult { n: cfg.n, reports, bases, consensus, tie_broken })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn modal_basis_counts_sets() {
        let bases = vec![v(&["a", "b"]), v(&["c", "d"]), v(&["b", "a"])];
        assert_eq!(modal_basis(&bases), Some((v(&["a", "b"]), false)));
    }

    #[test]
    fn ties_go_to_the_first_replicate() {
        let bases = vec![v(&["c", "d"]), v(&["a", "b"]), v(&["b", "a"]), v(&["d", "c"])];
        assert_eq!(modal_basis(&bases), Some((v(&["c", "d"]), true)));
        assert_eq!(modal_basis(&[]), None);
    }

    #[test]
    fn gravity_stage_picks_time_and_gravity() {
        let cfg = FanovaStageConfig { starts: 3, maximin_budget: Some(2000), threads: 1, grid: 32, ..FanovaStageConfig::new(TestbedId::Gravity, 20, 2, 1) };
        let r = fanova_stage(&cfg).unwrap();
        assert_eq!(r.reports.len(), 2);
        let mut c = r.consensus.clone();
        c.sort();
        assert_eq!(c, v(&["g", "t"]));
        assert!(!r.tie_broken);
        assert!(r.consensus_basis(TestbedId::Gravity).is_ok());
    }
}
