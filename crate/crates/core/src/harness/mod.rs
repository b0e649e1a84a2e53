//! Replicated strategy comparisons on the testbeds.
//!
//! Each replicate draws one maximin design in the original variables; every
//! strategy, arrangement and trend is trained on that same data and scored
//! on shared random test sets after mapping predictions back to the
//! original output scale.

mod metrics;
mod stage;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buckingham::presets::{preset_transform, transform_with_basis, Strategy};
use crate::buckingham::{apply_transform, arrange_inputs, validate_basis, BuckinghamError, InputArrangement, PiTransform};
use crate::dataset::{Column, ColumnKind, Dataset, DatasetError, Provenance};
use crate::design::{default_budget, lhd, maximin_lhd, DesignError, DesignRequest, RangeMode};
use crate::dimension::VariableSpec;
use crate::fanova::FanovaError;
use crate::gasp::{train, GaspError, GaspModel, KernelFamily, TrainConfig, TrendKind};
use crate::testbeds::{Testbed, TestbedError, TestbedId};

pub use metrics::{convergence_summary, log_log_slope, n_rmse, quantile, summarize, CellKey, CellSummary, SizeStats};
pub use stage::{fanova_stage, modal_basis, FanovaStageConfig, FanovaStageResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("normalizing RMSE is zero: test outputs all equal the training mean")]
    DegenerateDenominator,
    #[error("{pred} predictions for {truth} test outputs")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("not enough data for a convergence rate: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Buckingham(#[from] BuckinghamError),
    #[error(transparent)]
    Gasp(#[from] GaspError),
    #[error(transparent)]
    Fanova(#[from] FanovaError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    Interpolation,
    Extrapolation,
}

impl TestMode {
    pub const ALL: [TestMode; 2] = [TestMode::Interpolation, TestMode::Extrapolation];

    pub fn name(self) -> &'static str {
        match self {
            TestMode::Interpolation => "interpolation",
            TestMode::Extrapolation => "extrapolation",
        }
    }

    pub fn range_mode(self) -> RangeMode {
        match self {
            TestMode::Interpolation => RangeMode::Training,
            TestMode::Extrapolation => RangeMode::Extrapolation,
        }
    }
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "interpolation" | "interp" => Ok(TestMode::Interpolation),
            "extrapolation" | "extrap" => Ok(TestMode::Extrapolation),
            other => Err(format!("unknown mode `{other}` (expected interpolation or extrapolation)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 5 replicates, two training sizes, N = 2000.
    Desk,
    /// 20 replicates, the full range of training sizes, N = 10000.
    Full,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(format!("unknown preset `{other}` (expected desk or full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub testbed: TestbedId,
    pub strategies: Vec<Strategy>,
    pub arrangements: Vec<InputArrangement>,
    pub trends: Vec<TrendKind>,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub test_size: usize,
    pub modes: Vec<TestMode>,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub kernel: KernelFamily,
    pub estimate_power: bool,
    pub starts: usize,
    /// Maximin swap budget; `None` uses the default for the design dimension.
    pub maximin_budget: Option<usize>,
    /// Basis for `fanova-da` in place of the standard one.
    pub fanova_basis: Option<Vec<String>>,
}

impl ExperimentConfig {
    /// The standard setup for a testbed at the given scale.
    pub fn preset(testbed: TestbedId, preset: Preset) -> Self {
        let strategies: Vec<Strategy> = Strategy::ALL.into_iter().filter(|s| s.available_for(testbed)).collect();
        let arrangements = match testbed {
            TestbedId::Borehole => InputArrangement::ALL.to_vec(),
            _ => vec![InputArrangement::Raw],
        };
        let trends = match testbed {
            TestbedId::Sphere => vec![TrendKind::Linear],
            _ => vec![TrendKind::Constant],
        };
        let kernel = match testbed {
            TestbedId::Gravity => KernelFamily::SquaredExponential,
            _ => KernelFamily::PowerExponential,
        };
        let (n_values, replicates, test_size) = match (preset, testbed) {
            (Preset::Desk, TestbedId::Gravity) => (vec![40], 5, 2000),
            (Preset::Desk, TestbedId::Borehole) => (vec![80, 160], 5, 2000),
            (Preset::Desk, TestbedId::Sphere) => (vec![70, 140], 5, 2000),
            (Preset::Desk, TestbedId::Pythagorean) => (vec![10, 20], 5, 2000),
            (Preset::Full, TestbedId::Gravity) => (vec![20], 20, 10_000),
            (Preset::Full, TestbedId::Borehole) => (vec![80, 160, 320, 640], 20, 10_000),
            (Preset::Full, TestbedId::Sphere) => (vec![70, 140, 280, 560], 20, 10_000),
            (Preset::Full, TestbedId::Pythagorean) => (vec![10, 20, 40], 20, 10_000),
        };
        ExperimentConfig {
            testbed,
            strategies,
            arrangements,
            trends,
            n_values,
            replicates,
            test_size,
            modes: TestMode::ALL.to_vec(),
            seed: 1,
            threads: 0,
            kernel,
            estimate_power: true,
            starts: 8,
            maximin_budget: None,
            fanova_basis: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if let Some(s) = self.strategies.iter().find(|s| !s.available_for(self.testbed)) {
            return bad(format!("strategy {s} is not available for {}", self.testbed));
        }
        for (what, empty) in [
            ("strategies", self.strategies.is_empty()),
            ("arrangements", self.arrangements.is_empty()),
            ("trends", self.trends.is_empty()),
            ("training sizes", self.n_values.is_empty()),
            ("modes", self.modes.is_empty()),
        ] {
            if empty {
                return bad(format!("no {what} given"));
            }
        }
        if let Some(n) = self.n_values.iter().find(|&&n| n < 3) {
            return bad(format!("training size {n} is too small"));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.test_size < 2 {
            return bad("test size must be at least 2".into());
        }
        if self.starts == 0 {
            return bad("optimizer starts must be at least 1".into());
        }
        Ok(())
    }

    /// Seed of replicate `rep` (1-based): designs and optimizer starts.
    pub fn replicate_seed(&self, rep: usize) -> u64 {
        self.seed ^ rep as u64
    }

    /// Seed of the test set for `mode`; shared by every size and replicate.
    pub fn test_seed(&self, mode: TestMode) -> u64 {
        let salt = match mode {
            TestMode::Interpolation => 0x7e57_0000_0000_0001,
            TestMode::Extrapolation => 0x7e57_0000_0000_0002,
        };
        self.seed.rotate_left(32) ^ salt
    }

    pub fn train_config(&self, trend: TrendKind, seed: u64) -> TrainConfig {
        TrainConfig { starts: self.starts, estimate_power: self.estimate_power, ..TrainConfig::new(self.kernel, trend, seed) }
    }

    /// Transform per strategy, `None` for `non-da`.
    pub fn transforms(&self) -> Result<Vec<(Strategy, Option<PiTransform>)>, HarnessError> {
        let spec = Testbed::new(self.testbed).spec;
        self.strategies
            .iter()
            .map(|&s| {
                let t = match (&self.fanova_basis, s) {
                    (Some(members), Strategy::FanovaDa) => Some(transform_with_basis(self.testbed, s, &validate_basis(members, &spec)?)?),
                    _ => preset_transform(self.testbed, s)?,
                };
                Ok((s, t))
            })
            .collect()
    }

    fn pool(&self) -> Result<rayon::ThreadPool, HarnessError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
    }
}

/// One trained model scored in one test mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub testbed: TestbedId,
    pub strategy: Strategy,
    pub arrangement: InputArrangement,
    pub trend: TrendKind,
    pub n: usize,
    pub replicate: usize,
    pub mode: TestMode,
    /// Percent; absent when the run failed.
    pub n_rmse: Option<f64>,
    pub wall_time_s: f64,
    pub nugget: Option<f64>,
    pub seed: u64,
    pub failure: Option<String>,
}

fn design_variables(tb: &Testbed) -> Vec<VariableSpec> {
    tb.spec.non_constant_inputs().cloned().collect()
}

/// Training data in the original variables: design, constants and output.
pub fn training_set(tb: &Testbed, n: usize, seed: u64, budget: Option<usize>) -> Result<Dataset, HarnessError> {
    let vars = design_variables(tb);
    let budget = budget.unwrap_or_else(|| default_budget(vars.len()));
    let design = maximin_lhd(&DesignRequest::new(n, vars, RangeMode::Training, seed), budget)?;
    Ok(tb.complete_dataset(&design.data)?)
}

/// Random-LHD test set over the ranges of `mode`.
pub fn test_set(tb: &Testbed, mode: TestMode, size: usize, seed: u64) -> Result<Dataset, HarnessError> {
    let req = DesignRequest { optimize: false, ..DesignRequest::new(size, design_variables(tb), mode.range_mode(), seed) };
    let mut data = tb.complete_dataset(&lhd(&req)?)?;
    data.provenance = Provenance::Test;
    Ok(data)
}

/// Original-variable inputs (constants dropped), plus the output if present.
fn without_constants(data: &Dataset) -> Dataset {
    let keep: Vec<usize> = data
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| !(c.kind == ColumnKind::Input && c.spec.as_ref().is_some_and(|s| s.is_constant())))
        .map(|(j, _)| j)
        .collect();
    data.subset(&keep)
}

/// Model-ready training data for a strategy and arrangement.
pub fn model_training_data(data: &Dataset, transform: Option<&PiTransform>, arrangement: InputArrangement) -> Result<Dataset, HarnessError> {
    let base = match transform {
        Some(t) => apply_transform(t, data)?,
        None => without_constants(data),
    };
    Ok(arrange_inputs(&base, arrangement)?)
}

/// Model-ready inputs for prediction; the output is never touched.
pub fn model_test_inputs(data: &Dataset, transform: Option<&PiTransform>, arrangement: InputArrangement) -> Result<Dataset, HarnessError> {
    let base = match transform {
        Some(t) => {
            let cols = t.transform_inputs(data)?.into_iter().map(|(name, v)| (Column::input(name), v)).collect();
            Dataset::from_columns(cols, data.provenance)?
        }
        None => {
            let inputs = data.indices_of(&[ColumnKind::Input]);
            without_constants(&data.subset(&inputs))
        }
    };
    Ok(arrange_inputs(&base, arrangement)?)
}

/// Predictions on the original output scale.
pub fn predict_original(model: &GaspModel, data: &Dataset, transform: Option<&PiTransform>, arrangement: InputArrangement) -> Result<Vec<f64>, HarnessError> {
    let inputs = model_test_inputs(data, transform, arrangement)?;
    let mean = model.predict(&inputs)?.mean;
    Ok(match transform {
        Some(t) => t.invert_output(&mean, data)?,
        None => mean,
    })
}

fn output_values(tb: &Testbed, data: &Dataset) -> Result<Vec<f64>, HarnessError> {
    let j = data.require(&tb.spec.output.name)?;
    Ok(data.column_values(j))
}

struct Shared {
    n: usize,
    replicate: usize,
    seed: u64,
    data: Dataset,
    checksum: u64,
}

struct Unit<'a> {
    shared: &'a Shared,
    strategy: Strategy,
    transform: Option<&'a PiTransform>,
    arrangement: InputArrangement,
    trend: TrendKind,
}

fn run_unit(cfg: &ExperimentConfig, tb: &Testbed, tests: &[(TestMode, Dataset, Vec<f64>)], u: &Unit) -> Vec<MetricsRecord> {
    let shared = u.shared;
    assert_eq!(shared.data.checksum(), shared.checksum, "shared training data changed between strategies");
    let start = Instant::now();
    let record = |mode: TestMode, outcome: Result<f64, String>, nugget: Option<f64>| MetricsRecord {
        testbed: cfg.testbed,
        strategy: u.strategy,
        arrangement: u.arrangement,
        trend: u.trend,
        n: shared.n,
        replicate: shared.replicate,
        mode,
        n_rmse: outcome.as_ref().ok().copied(),
        wall_time_s: start.elapsed().as_secs_f64(),
        nugget,
        seed: shared.seed,
        failure: outcome.err(),
    };
    let fitted = model_training_data(&shared.data, u.transform, u.arrangement)
        .and_then(|d| Ok(train(&d, &cfg.train_config(u.trend, shared.seed))?));
    let model = match fitted {
        Ok(m) => m,
        Err(e) => return tests.iter().map(|(mode, _, _)| record(*mode, Err(e.to_string()), None)).collect(),
    };
    let outcome = |test: &Dataset, truth: &[f64]| -> Result<f64, HarnessError> {
        let y_bar = output_values(tb, &shared.data)?.iter().sum::<f64>() / shared.data.nrows() as f64;
        let pred = predict_original(&model, test, u.transform, u.arrangement)?;
        let e = n_rmse(&pred, truth, y_bar)?;
        if e.is_finite() {
            Ok(e)
        } else {
            Err(HarnessError::Config("non-finite prediction".into()))
        }
    };
    tests
        .iter()
        .map(|(mode, test, truth)| record(*mode, outcome(test, truth).map_err(|e| e.to_string()), Some(model.nugget)))
        .collect()
}

/// Runs every (size, replicate, strategy, arrangement, trend) combination
/// and scores it in each test mode. Failures of individual fits are
/// recorded in the `failure` column rather than aborting the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>, HarnessError> {
    cfg.validate()?;
    let tb = Testbed::new(cfg.testbed);
    let transforms = cfg.transforms()?;
    let pool = cfg.pool()?;
    pool.install(|| {
        let tests: Vec<(TestMode, Dataset, Vec<f64>)> = cfg
            .modes
            .iter()
            .map(|&m| {
                let d = test_set(&tb, m, cfg.test_size, cfg.test_seed(m))?;
                let y = output_values(&tb, &d)?;
                Ok((m, d, y))
            })
            .collect::<Result<_, HarnessError>>()?;
        let jobs: Vec<(usize, usize)> = cfg.n_values.iter().flat_map(|&n| (1..=cfg.replicates).map(move |r| (n, r))).collect();
        let shared: Vec<Shared> = jobs
            .par_iter()
            .map(|&(n, replicate)| {
                let seed = cfg.replicate_seed(replicate);
                let data = training_set(&tb, n, seed, cfg.maximin_budget)?;
                let checksum = data.checksum();
                Ok(Shared { n, replicate, seed, data, checksum })
            })
            .collect::<Result<_, HarnessError>>()?;
        let mut units = Vec::new();
        for s in &shared {
            for (strategy, transform) in &transforms {
                for &arrangement in &cfg.arrangements {
                    for &trend in &cfg.trends {
                        units.push(Unit { shared: s, strategy: *strategy, transform: transform.as_ref(), arrangement, trend });
                    }
                }
            }
        }
        Ok(units.par_iter().flat_map_iter(|u| run_unit(cfg, &tb, &tests, u)).collect())
    })
}

pub fn write_records_csv<W: Write>(records: &[MetricsRecord], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(r: R) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub records: usize,
    pub failures: usize,
    pub cells: Vec<CellSummary>,
}

pub fn write_summary_json<W: Write>(cfg: &ExperimentConfig, records: &[MetricsRecord], w: W) -> Result<(), HarnessError> {
    let summary = RunSummary {
        config: cfg.clone(),
        records: records.len(),
        failures: records.iter().filter(|r| r.failure.is_some()).count(),
        cells: summarize(records),
    };
    serde_json::to_writer_pretty(w, &summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(testbed: TestbedId) -> ExperimentConfig {
        ExperimentConfig {
            n_values: vec![12],
            replicates: 2,
            test_size: 50,
            starts: 2,
            maximin_budget: Some(200),
            threads: 1,
            ..ExperimentConfig::preset(testbed, Preset::Desk)
        }
    }

    #[test]
    fn presets_are_valid() {
        for id in TestbedId::ALL {
            for p in [Preset::Desk, Preset::Full] {
                ExperimentConfig::preset(id, p).validate().unwrap();
            }
        }
        let desk = ExperimentConfig::preset(TestbedId::Borehole, Preset::Desk);
        assert_eq!((desk.replicates, desk.test_size, desk.n_values.clone()), (5, 2000, vec![80, 160]));
        assert_eq!(desk.strategies, vec![Strategy::NonDa, Strategy::FanovaDa, Strategy::SlcDa]);
        let sphere = ExperimentConfig::preset(TestbedId::Sphere, Preset::Full);
        assert_eq!(sphere.trends, vec![TrendKind::Linear]);
        assert_eq!(sphere.n_values, vec![70, 140, 280, 560]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny(TestbedId::Gravity);
        c.strategies.push(Strategy::SlcDa);
        assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
        let c = ExperimentConfig { replicates: 0, ..tiny(TestbedId::Gravity) };
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let c = ExperimentConfig { modes: vec![], ..tiny(TestbedId::Gravity) };
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn seeds() {
        let c = tiny(TestbedId::Borehole);
        assert_eq!(c.replicate_seed(3), 1 ^ 3);
        assert_ne!(c.test_seed(TestMode::Interpolation), c.test_seed(TestMode::Extrapolation));
        assert!((1..=20).all(|r| c.replicate_seed(r) != c.test_seed(TestMode::Interpolation)));
    }

    #[test]
    fn extrapolation_shifts_the_tabled_variables() {
        let shifted = |id: TestbedId| -> Vec<String> {
            let tb = Testbed::new(id);
            let d = test_set(&tb, TestMode::Extrapolation, 200, 4).unwrap();
            tb.spec
                .non_constant_inputs()
                .filter(|v| {
                    let col = d.column(&v.name).unwrap();
                    col.iter().any(|x| !v.training_range.contains(*x))
                })
                .map(|v| v.name.clone())
                .collect()
        };
        assert_eq!(shifted(TestbedId::Gravity), vec!["y0", "V0", "t", "g"]);
        assert_eq!(shifted(TestbedId::Borehole), vec!["r_w", "H_u", "H_l", "L"]);
        assert_eq!(shifted(TestbedId::Sphere), vec!["r", "t", "T_m", "Delta_T"]);
    }

    #[test]
    fn gravity_run_is_deterministic_and_complete() {
        let c = tiny(TestbedId::Gravity);
        let a = run_experiment(&c).unwrap();
        assert_eq!(a.len(), 3 * 2 * 2);
        assert!(a.iter().all(|r| r.failure.is_none() && r.n_rmse.unwrap() >= 0.0), "{a:?}");
        let b = run_experiment(&c).unwrap();
        let strip = |v: &[MetricsRecord]| v.iter().map(|r| MetricsRecord { wall_time_s: 0.0, ..r.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        let mut buf = Vec::new();
        write_records_csv(&a, &mut buf).unwrap();
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), a.len());
        assert_eq!(back[0].strategy, a[0].strategy);
        assert_eq!(back[0].n_rmse, a[0].n_rmse);
        let mut json = Vec::new();
        write_summary_json(&c, &a, &mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["cells"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        // a linear trend in four inputs needs more than three runs
        let c = ExperimentConfig { n_values: vec![3], trends: vec![TrendKind::Linear], ..tiny(TestbedId::Gravity) };
        let recs = run_experiment(&c).unwrap();
        assert!(recs.iter().all(|r| r.failure.is_some() && r.n_rmse.is_none()));
    }

    #[test]
    fn strategies_share_training_data() {
        let tb = Testbed::new(TestbedId::Sphere);
        let a = training_set(&tb, 10, 7, Some(100)).unwrap();
        let b = training_set(&tb, 10, 7, Some(100)).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a.column_names(), vec!["R", "r", "t", "T_m", "Delta_T", "h_c", "k", "c", "rho", "T_s"]);
        let raw = model_training_data(&a, None, InputArrangement::Raw).unwrap();
        assert_eq!(raw.ncols(), 8);
    }
}
