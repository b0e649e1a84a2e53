//! Python bindings: testbeds, designs, dimensionless transforms, GaSP
//! training and prediction, FANOVA and the experiment harness.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pi_surrogate::buckingham::presets::{preset_transform, Strategy};
use pi_surrogate::buckingham::{validate_basis, InputArrangement};
use pi_surrogate::dataset::{Column, Dataset, Provenance};
use pi_surrogate::design::{default_budget, maximin_lhd, DesignRequest, RangeMode};
use pi_surrogate::fanova::{fanova as fanova_report, FanovaReport, DEFAULT_GRID};
use pi_surrogate::gasp::{train, GaspModel, KernelFamily, TrainConfig, TrendKind};
use pi_surrogate::harness::{self, ExperimentConfig, FanovaStageConfig, Preset, TestMode};
use pi_surrogate::testbeds::{Testbed, TestbedId};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(err)
}

type Columns = Vec<(String, Vec<f64>)>;

fn columns_of(d: &Bound<'_, PyDict>) -> PyResult<Columns> {
    d.iter().map(|(k, v)| Ok((k.extract::<String>()?, v.extract::<Vec<f64>>()?))).collect()
}

/// Dataset from named columns; `output` marks the output column, and
/// columns named like testbed variables pick up their specifications.
fn dataset(cols: Columns, output: Option<&str>, testbed: Option<TestbedId>, provenance: Provenance) -> PyResult<Dataset> {
    let spec = testbed.map(|id| Testbed::new(id).spec);
    let cols = cols
        .into_iter()
        .map(|(name, v)| {
            let mut c = if Some(name.as_str()) == output { Column::output(name.clone()) } else { Column::input(name.clone()) };
            if let Some(s) = spec.as_ref().and_then(|s| s.variable(&name)) {
                c.spec = Some(s.clone());
            }
            (c, v)
        })
        .collect();
    let data = Dataset::from_columns(cols, provenance).map_err(err)?;
    if let Some(o) = output {
        data.require(o).map_err(err)?;
    }
    Ok(data)
}

fn to_dict<'py>(py: Python<'py>, data: &Dataset) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (j, name) in data.column_names().iter().enumerate() {
        d.set_item(*name, data.column_values(j))?;
    }
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &FanovaReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let mains: BTreeMap<&str, f64> = r.main_effects.iter().map(|m| (m.input.as_str(), m.percent)).collect();
    let pairs: BTreeMap<String, f64> = r.interactions.iter().map(|i| (format!("{}:{}", i.inputs.0, i.inputs.1), i.percent)).collect();
    d.set_item("main_effects", mains)?;
    d.set_item("interactions", pairs)?;
    d.set_item("residual_percent", r.residual_percent)?;
    d.set_item("total_variance", r.total_variance)?;
    d.set_item("mean", r.mean)?;
    Ok(d)
}

/// Names of the available testbeds.
#[pyfunction]
fn testbeds() -> Vec<&'static str> {
    TestbedId::ALL.iter().map(|t| t.name()).collect()
}

/// A testbed's system specification as TOML.
#[pyfunction]
fn testbed_spec(testbed: &str) -> PyResult<String> {
    Testbed::new(parse(testbed)?).spec.to_toml().map_err(err)
}

/// Evaluates a testbed on rows of its inputs, constants included, in spec order.
#[pyfunction]
fn evaluate(testbed: &str, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let tb = Testbed::new(parse(testbed)?);
    rows.iter().map(|r| tb.evaluate(r).map_err(err)).collect()
}

/// Maximin Latin hypercube over a testbed's inputs, completed with
/// constants and the output.
#[pyfunction]
#[pyo3(signature = (testbed, n, seed=1, extrapolation=false, maximin_budget=None))]
fn design<'py>(py: Python<'py>, testbed: &str, n: usize, seed: u64, extrapolation: bool, maximin_budget: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let tb = Testbed::new(parse(testbed)?);
    let vars: Vec<_> = tb.spec.non_constant_inputs().cloned().collect();
    let budget = maximin_budget.unwrap_or_else(|| default_budget(vars.len()));
    let mode = if extrapolation { RangeMode::Extrapolation } else { RangeMode::Training };
    let d = maximin_lhd(&DesignRequest::new(n, vars, mode, seed), budget).map_err(err)?;
    to_dict(py, &tb.complete_dataset(&d.data).map_err(err)?)
}

/// Test-set normalized RMSE in percent.
#[pyfunction]
fn n_rmse(pred: Vec<f64>, truth: Vec<f64>, train_mean: f64) -> PyResult<f64> {
    harness::n_rmse(&pred, &truth, train_mean).map_err(err)
}

/// Dimensionless transform of a testbed.
#[pyclass(name = "PiTransform", module = "pi_surrogate_py", frozen)]
struct PyPiTransform {
    inner: pi_surrogate::buckingham::PiTransform,
}

#[pymethods]
impl PyPiTransform {
    /// The named strategy's transform; `None` for `non-da`.
    #[staticmethod]
    fn preset(testbed: &str, strategy: &str) -> PyResult<Option<Self>> {
        Ok(preset_transform(parse(testbed)?, parse(strategy)?).map_err(err)?.map(|inner| PyPiTransform { inner }))
    }

    /// Transform built on an explicit basis.
    #[staticmethod]
    fn with_basis(testbed: &str, basis: Vec<String>) -> PyResult<Self> {
        let id: TestbedId = parse(testbed)?;
        let b = validate_basis(&basis, &Testbed::new(id).spec).map_err(err)?;
        let inner = pi_surrogate::buckingham::presets::transform_with_basis(id, Strategy::FanovaDa, &b).map_err(err)?;
        Ok(PyPiTransform { inner })
    }

    #[getter]
    fn basis(&self) -> Vec<String> {
        self.inner.basis.members.clone()
    }

    #[getter]
    fn input_names(&self) -> Vec<String> {
        self.inner.inputs.iter().map(|q| q.name.clone()).collect()
    }

    #[getter]
    fn output_name(&self) -> String {
        self.inner.output.name.clone()
    }

    /// Recipes as strings, inputs first and the output last.
    fn recipes(&self) -> Vec<String> {
        self.inner.inputs.iter().chain([&self.inner.output]).map(|q| format!("{} = {}", q.name, q.expr)).collect()
    }

    /// Dimensionless input columns, plus the output when present.
    fn forward<'py>(&self, py: Python<'py>, columns: &Bound<'py, PyDict>) -> PyResult<Bound<'py, PyDict>> {
        let data = dataset(columns_of(columns)?, None, None, Provenance::Test)?;
        let out = PyDict::new(py);
        for (name, v) in self.inner.transform_inputs(&data).map_err(err)? {
            out.set_item(name, v)?;
        }
        if data.column_index(self.inner.output_name()).is_some() {
            out.set_item(&self.inner.output.name, self.inner.forward_output(&data).map_err(err)?)?;
        }
        Ok(out)
    }

    /// Maps dimensionless output values back to the original output scale.
    fn invert(&self, q0: Vec<f64>, columns: &Bound<'_, PyDict>) -> PyResult<Vec<f64>> {
        let data = dataset(columns_of(columns)?, None, None, Provenance::Test)?;
        self.inner.invert_output(&q0, &data).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("PiTransform({}, basis={{{}}})", self.inner.label, self.inner.basis.members.join(", "))
    }
}

/// Trained GaSP surrogate.
#[pyclass(name = "GaspModel", module = "pi_surrogate_py", frozen)]
struct PyGaspModel {
    inner: GaspModel,
}

#[pymethods]
impl PyGaspModel {
    /// Fits a model; every column except `output` is an input. Naming a
    /// testbed attaches its variable ranges for input scaling.
    #[staticmethod]
    #[pyo3(signature = (columns, output, kernel="power-exponential", trend="constant", seed=1, starts=8, testbed=None))]
    fn train(
        columns: &Bound<'_, PyDict>,
        output: &str,
        kernel: &str,
        trend: &str,
        seed: u64,
        starts: usize,
        testbed: Option<&str>,
    ) -> PyResult<Self> {
        let id = testbed.map(parse::<TestbedId>).transpose()?;
        let data = dataset(columns_of(columns)?, Some(output), id, Provenance::Training)?;
        let family: KernelFamily = parse(kernel)?;
        let cfg = TrainConfig { starts, ..TrainConfig::new(family, parse::<TrendKind>(trend)?, seed) };
        Ok(PyGaspModel { inner: train(&data, &cfg).map_err(err)? })
    }

    /// Predictive mean and standard error at the given inputs.
    fn predict(&self, columns: &Bound<'_, PyDict>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let data = dataset(columns_of(columns)?, None, None, Provenance::Test)?;
        let p = self.inner.predict(&data).map_err(err)?;
        Ok((p.mean, p.std_error))
    }

    /// Main-effect and two-input interaction percentages.
    #[pyo3(signature = (grid=DEFAULT_GRID))]
    fn fanova<'py>(&self, py: Python<'py>, grid: usize) -> PyResult<Bound<'py, PyDict>> {
        report_dict(py, &fanova_report(&self.inner, None, grid).map_err(err)?)
    }

    #[getter]
    fn input_names(&self) -> Vec<String> {
        self.inner.input_names.clone()
    }

    #[getter]
    fn nugget(&self) -> f64 {
        self.inner.nugget
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.kernel.theta.clone()
    }

    #[getter]
    fn power(&self) -> Vec<f64> {
        self.inner.kernel.power.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGaspModel { inner: GaspModel::from_json(text).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyGaspModel { inner: GaspModel::load(&path).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("GaspModel(inputs=[{}], n={})", self.inner.input_names.join(", "), self.inner.n())
    }
}

/// FANOVA of fits on the original variables over replicate designs, and
/// the recommended basis per replicate and by consensus.
#[pyfunction]
#[pyo3(signature = (testbed, n, replicates=5, seed=1, grid=DEFAULT_GRID, threads=0))]
fn fanova_stage<'py>(py: Python<'py>, testbed: &str, n: usize, replicates: usize, seed: u64, grid: usize, threads: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = FanovaStageConfig { grid, threads, ..FanovaStageConfig::new(parse(testbed)?, n, replicates, seed) };
    let r = py.detach(|| harness::fanova_stage(&cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("bases", &r.bases)?;
    d.set_item("consensus", &r.consensus)?;
    d.set_item("tie_broken", r.tie_broken)?;
    let reports: Vec<Bound<'py, PyDict>> = r.reports.iter().map(|x| report_dict(py, x)).collect::<PyResult<_>>()?;
    d.set_item("reports", reports)?;
    Ok(d)
}

/// Runs a strategy comparison and returns one dict per model and test mode.
#[pyfunction]
#[pyo3(signature = (testbed, preset="desk", strategies=None, arrangements=None, trends=None, n=None, replicates=None, test_size=None, modes=None, seed=1, threads=0))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    testbed: &str,
    preset: &str,
    strategies: Option<Vec<String>>,
    arrangements: Option<Vec<String>>,
    trends: Option<Vec<String>>,
    n: Option<Vec<usize>>,
    replicates: Option<usize>,
    test_size: Option<usize>,
    modes: Option<Vec<String>>,
    seed: u64,
    threads: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = ExperimentConfig::preset(parse(testbed)?, parse::<Preset>(preset)?);
    cfg.seed = seed;
    cfg.threads = threads;
    if let Some(v) = strategies {
        cfg.strategies = v.iter().map(|s| parse::<Strategy>(s)).collect::<PyResult<_>>()?;
    }
    if let Some(v) = arrangements {
        cfg.arrangements = v.iter().map(|s| parse::<InputArrangement>(s)).collect::<PyResult<_>>()?;
    }
    if let Some(v) = trends {
        cfg.trends = v.iter().map(|s| parse::<TrendKind>(s)).collect::<PyResult<_>>()?;
    }
    if let Some(v) = modes {
        cfg.modes = v.iter().map(|s| parse::<TestMode>(s)).collect::<PyResult<_>>()?;
    }
    if let Some(v) = n {
        cfg.n_values = v;
    }
    if let Some(v) = replicates {
        cfg.replicates = v;
    }
    if let Some(v) = test_size {
        cfg.test_size = v;
    }
    cfg.validate().map_err(err)?;
    let records = py.detach(|| harness::run_experiment(&cfg)).map_err(err)?;
    records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("testbed", r.testbed.name())?;
            d.set_item("strategy", r.strategy.name())?;
            d.set_item("arrangement", r.arrangement.name())?;
            d.set_item("trend", r.trend.to_string())?;
            d.set_item("n", r.n)?;
            d.set_item("replicate", r.replicate)?;
            d.set_item("mode", r.mode.name())?;
            d.set_item("n_rmse", r.n_rmse)?;
            d.set_item("wall_time_s", r.wall_time_s)?;
            d.set_item("failure", r.failure.clone())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pi_surrogate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPiTransform>()?;
    m.add_class::<PyGaspModel>()?;
    m.add_function(wrap_pyfunction!(testbeds, m)?)?;
    m.add_function(wrap_pyfunction!(testbed_spec, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(n_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(fanova_stage, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
