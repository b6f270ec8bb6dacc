//! Python bindings. Structured values (covers, reports, validation results)
//! cross the boundary as JSON-compatible dicts and lists.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use scenario_cert::assess::{self as pipeline, ConfigFile};
use scenario_cert::geometry::{self, CoverClass};
use scenario_cert::model::BlackBox;
use scenario_cert::validate;
use scenario_cert::{experiments, Error, Regularizer};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.extract::<String>() {
        s
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows_to_vec(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec_to_rows(rows: &[Vec<f64>], width: usize) -> PyResult<nalgebra::DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err(format!("every row must have {width} entries")));
    }
    Ok(nalgebra::DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

/// Feed-forward network.
#[pyclass(name = "NetworkModel", module = "scenario_cert_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNetworkModel(scenario_cert::NetworkModel);

#[pymethods]
impl PyNetworkModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        scenario_cert::NetworkModel::from_json(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        scenario_cert::NetworkModel::load(path).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        Self(scenario_cert::NetworkModel::identity(dim))
    }

    #[staticmethod]
    fn random_relu(widths: Vec<usize>, seed: u64) -> PyResult<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(PyValueError::new_err("need at least two positive widths"));
        }
        Ok(Self(experiments::random_relu_network(&widths, seed)))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.evaluate(&x).map_err(py_err)
    }

    fn evaluate_batch(&self, py: Python<'_>, xs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let m = vec_to_rows(&xs, self.0.input_dim())?;
        let out = py.detach(|| self.0.evaluate_batch(&m)).map_err(py_err)?;
        Ok(rows_to_vec(&out))
    }

    fn __repr__(&self) -> String {
        format!("NetworkModel({} -> {}, {} layers)", self.0.input_dim(), self.0.output_dim(), self.0.layers().len())
    }
}

/// Seeded input distribution.
#[pyclass(name = "InputDistribution", module = "scenario_cert_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInputDistribution(scenario_cert::InputDistribution);

#[pymethods]
impl PyInputDistribution {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        scenario_cert::InputDistribution::from_json(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        scenario_cert::InputDistribution::load(path).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("distribution serializes")
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        self.0.sample(n, seed).map(|m| rows_to_vec(&m)).map_err(py_err)
    }
}

/// Polyhedral safe set `{y : Ay + b >= 0}`.
#[pyclass(name = "SafeSet", module = "scenario_cert_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySafeSet(scenario_cert::SafeSet);

#[pymethods]
impl PySafeSet {
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Self> {
        scenario_cert::SafeSet::from_matrix(a, b).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        scenario_cert::SafeSet::from_json(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        scenario_cert::SafeSet::load(path).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("safe set serializes")
    }

    /// Safety level of `y` for every row.
    fn levels(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.rows().iter().map(|r| r.level(&y).map_err(py_err)).collect()
    }

    fn min_level(&self, y: Vec<f64>) -> PyResult<f64> {
        self.0.min_level(&y).map_err(py_err)
    }

    fn contains(&self, y: Vec<f64>) -> PyResult<bool> {
        self.0.contains(&y).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.rows().len()
    }
}

/// Full assessment request: model, distribution, safe set and settings.
#[pyclass(name = "AssessmentConfig", module = "scenario_cert_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAssessmentConfig(scenario_cert::AssessmentConfig);

#[pymethods]
impl PyAssessmentConfig {
    /// Builds a config. `cover_class` is `l1`, `l2`, `linf`, `q_pca`,
    /// `half_space` or a class dict; `lam` may be `float("inf")`.
    #[new]
    #[pyo3(signature = (model, distribution, safe_set, eps, delta, cover_class, lam=0.0, regularizer="radius_squared", seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        model: &PyNetworkModel,
        distribution: &PyInputDistribution,
        safe_set: &PySafeSet,
        eps: f64,
        delta: f64,
        cover_class: &Bound<'_, PyAny>,
        lam: f64,
        regularizer: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let class = match cover_class.extract::<String>() {
            Ok(s) => CoverClass::parse(&s).map_err(py_err)?,
            Err(_) => from_py(cover_class)?,
        };
        let kind = serde_json::from_value(serde_json::Value::String(regularizer.into()))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let reg = Regularizer::new(kind, lam).map_err(py_err)?;
        Ok(Self(scenario_cert::AssessmentConfig {
            model: model.0.clone(),
            distribution: distribution.0.clone(),
            safe_set: safe_set.0.clone(),
            settings: scenario_cert::Settings::new(eps, delta, class, reg, seed),
        }))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Loads a config file whose model/distribution/safe set may be paths.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ConfigFile::load(path).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("config serializes")
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    /// Copy with a different seed.
    fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.0.clone();
        c.settings.seed = seed;
        Self(c)
    }

    /// Copy with a different `λ` (same regularizer kind).
    fn with_lambda(&self, lam: f64) -> PyResult<Self> {
        let mut c = self.0.clone();
        c.settings.regularizer.lambda = lam;
        c.settings.regularizer.validate().map_err(py_err)?;
        Ok(Self(c))
    }

    #[getter]
    fn model(&self) -> PyNetworkModel {
        PyNetworkModel(self.0.model.clone())
    }

    #[getter]
    fn distribution(&self) -> PyInputDistribution {
        PyInputDistribution(self.0.distribution.clone())
    }

    #[getter]
    fn safe_set(&self) -> PySafeSet {
        PySafeSet(self.0.safe_set.clone())
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.settings.eps
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.settings.delta
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.settings.seed
    }

    /// The scenario samples `(inputs, outputs)` this config draws.
    fn scenarios(&self, py: Python<'_>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let data = py.detach(|| pipeline::draw_scenarios(&self.0.model, &self.0)).map_err(py_err)?;
        Ok((rows_to_vec(&data.inputs), rows_to_vec(&data.outputs)))
    }

    /// Writes the scenario samples as CSV.
    fn write_samples_csv(&self, py: Python<'_>, path: &str) -> PyResult<()> {
        let data = py.detach(|| pipeline::draw_scenarios(&self.0.model, &self.0)).map_err(py_err)?;
        let file = std::fs::File::create(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        data.write_csv(std::io::BufWriter::new(file), &self.0.safe_set).map_err(py_err)
    }
}

/// Result of one assessment.
#[pyclass(name = "AssessmentReport", module = "scenario_cert_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAssessmentReport(scenario_cert::AssessmentReport);

#[pymethods]
impl PyAssessmentReport {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        scenario_cert::AssessmentReport::from_json(text).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    #[getter]
    fn certified(&self) -> bool {
        self.0.verdict == scenario_cert::Verdict::Certified
    }

    #[getter]
    fn verdict(&self) -> &'static str {
        if self.certified() {
            "certified"
        } else {
            "not_certified"
        }
    }

    #[getter]
    fn r_hat(&self) -> f64 {
        self.0.r_hat
    }

    #[getter]
    #[allow(non_snake_case)]
    fn N(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn config(&self) -> PyAssessmentConfig {
        PyAssessmentConfig(self.0.config.clone())
    }

    /// Per-row results as dicts.
    #[getter]
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.rows)
    }

    /// The cover `θ*` of row `row` as a dict.
    #[pyo3(signature = (row=0))]
    fn cover<'py>(&self, py: Python<'py>, row: usize) -> PyResult<Bound<'py, PyAny>> {
        let r = self.0.rows.get(row).ok_or_else(|| PyValueError::new_err(format!("no row {row}")))?;
        to_py(py, &r.theta_star)
    }

    fn __repr__(&self) -> String {
        format!("AssessmentReport(verdict={}, r_hat={}, N={})", self.verdict(), self.0.r_hat, self.0.n)
    }
}

/// Samples needed for `(eps, delta, p)`.
#[pyfunction]
fn sample_size(eps: f64, delta: f64, p: usize) -> PyResult<usize> {
    scenario_cert::sample_size(eps, delta, p).map_err(py_err)
}

/// Closed-form approximate robustness level of a cover dict against row `(a, b)`.
#[pyfunction]
fn approx_robustness(cover: &Bound<'_, PyAny>, a: Vec<f64>, b: f64) -> PyResult<f64> {
    let cover: scenario_cert::CoverParams = from_py(cover)?;
    let row = scenario_cert::SafetyRow::new(a, b).map_err(py_err)?;
    if let Some(c) = cover.center() {
        if c.len() != row.dim() {
            return Err(PyValueError::new_err("cover and row dimensions differ"));
        }
    }
    Ok(geometry::approx_robustness(&cover, &row))
}

/// Boundary-search reference for `approx_robustness`.
#[pyfunction]
#[pyo3(signature = (cover, a, b, n_grid=100_000))]
fn approx_robustness_oracle(cover: &Bound<'_, PyAny>, a: Vec<f64>, b: f64, n_grid: usize) -> PyResult<f64> {
    let cover: scenario_cert::CoverParams = from_py(cover)?;
    let row = scenario_cert::SafetyRow::new(a, b).map_err(py_err)?;
    geometry::approx_robustness_oracle(&cover, &row, n_grid).map_err(py_err)
}

#[pyfunction]
fn assess(py: Python<'_>, config: &PyAssessmentConfig) -> PyResult<PyAssessmentReport> {
    py.detach(|| pipeline::assess(&config.0)).map(PyAssessmentReport).map_err(py_err)
}

/// One report per `λ` on a shared sample set; `lambdas` must be ascending.
#[pyfunction]
fn sweep_lambda(py: Python<'_>, config: &PyAssessmentConfig, lambdas: Vec<f64>) -> PyResult<Vec<PyAssessmentReport>> {
    let reports = py.detach(|| pipeline::sweep_lambda(&config.0, &lambdas)).map_err(py_err)?;
    Ok(reports.into_iter().map(PyAssessmentReport).collect())
}

/// Fresh-sample coverage of a report's cover for row `row`.
#[pyfunction]
#[pyo3(signature = (report, m=100_000, seed=None, row=0))]
fn estimate_coverage<'py>(
    py: Python<'py>,
    report: &PyAssessmentReport,
    m: usize,
    seed: Option<u64>,
    row: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let r = &report.0;
    let safety = r.config.safe_set.rows().get(row).ok_or_else(|| PyValueError::new_err(format!("no row {row}")))?;
    let seed = seed.unwrap_or(r.seed);
    let cov = py
        .detach(|| validate::estimate_coverage(&r.config.model, &r.config.distribution, &r.rows[row].theta_star, safety, m, seed))
        .map_err(py_err)?;
    to_py(py, &cov)
}

/// Empirical `eps`-quantile of the safety level from `m` fresh samples.
#[pyfunction]
#[pyo3(signature = (config, eps, m=100_000, seed=None, row=0))]
fn estimate_prl(py: Python<'_>, config: &PyAssessmentConfig, eps: f64, m: usize, seed: Option<u64>, row: usize) -> PyResult<f64> {
    let c = &config.0;
    let safety = c.safe_set.rows().get(row).ok_or_else(|| PyValueError::new_err(format!("no row {row}")))?;
    let seed = seed.unwrap_or(c.settings.seed);
    py.detach(|| validate::estimate_prl(&c.model, &c.distribution, safety, eps, m, seed)).map_err(py_err)
}

/// The coordinate-wise ReLU comparison instance (ε = 0.1, δ = 1e-5).
#[pyfunction]
#[pyo3(signature = (cover_class="l2", lam=0.1, seed=42))]
fn relu2d_config(cover_class: &str, lam: f64, seed: u64) -> PyResult<PyAssessmentConfig> {
    let class = CoverClass::parse(cover_class).map_err(py_err)?;
    let reg = Regularizer::new(geometry::RegularizerKind::RadiusSquared, lam).map_err(py_err)?;
    Ok(PyAssessmentConfig(experiments::relu2d_config(class, reg, seed)))
}

/// Random 5-35-30-2 ReLU network with `q_pca` ellipsoids and `v = r²`.
#[pyfunction]
#[pyo3(signature = (lam=0.0, seed=7))]
fn illustrative_config(lam: f64, seed: u64) -> PyResult<PyAssessmentConfig> {
    let reg = Regularizer::new(geometry::RegularizerKind::RadiusSquared, lam).map_err(py_err)?;
    Ok(PyAssessmentConfig(experiments::illustrative_config(reg, seed)))
}

#[pymodule]
fn scenario_cert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetworkModel>()?;
    m.add_class::<PyInputDistribution>()?;
    m.add_class::<PySafeSet>()?;
    m.add_class::<PyAssessmentConfig>()?;
    m.add_class::<PyAssessmentReport>()?;
    m.add_function(wrap_pyfunction!(sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(approx_robustness, m)?)?;
    m.add_function(wrap_pyfunction!(approx_robustness_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_prl, m)?)?;
    m.add_function(wrap_pyfunction!(relu2d_config, m)?)?;
    m.add_function(wrap_pyfunction!(illustrative_config, m)?)?;
    Ok(())
}
