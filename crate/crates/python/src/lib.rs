//! Python bindings: response matrices, cBMM and oracle fits, synthetic data
//! and recovery metrics. Arrays cross the boundary as plain lists.

use cbmm::io::{fit_result_to_json, parse_matrix, DenseLabels, MatrixFormat};
use cbmm::metrics::{spearman as spearman_rs, Truth};
use cbmm::{
    equivalence_check as equivalence_rs, fit as fit_rs, fit_oracle as oracle_rs, generate, init_params, FitConfig, ModelParams,
    OracleConfig, Pattern, SyntheticSpec, Temperature,
};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn fit_err(e: cbmm::FitError) -> PyErr {
    match e {
        cbmm::FitError::NonFiniteLoss { .. } => PyArithmeticError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn temperature(sigma: f64) -> PyResult<Temperature> {
    Temperature::new(sigma).map_err(value_err)
}

/// Sparse binary response matrix; missing entries are simply absent.
#[pyclass(name = "ResponseMatrix", module = "cbmm_py", frozen)]
pub struct PyResponseMatrix {
    inner: cbmm::ResponseMatrix,
}

#[pymethods]
impl PyResponseMatrix {
    /// Builds from `(row, col, y)` triplets with `y` in {+1, -1}.
    #[new]
    fn new(n_models: usize, n_items: usize, triplets: Vec<(usize, usize, i64)>) -> PyResult<Self> {
        let inner = cbmm::ResponseMatrix::from_triplets(n_models, n_items, &triplets).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Builds from a list of rows; `None` or `0` marks a missing cell.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<Option<i64>>>) -> PyResult<Self> {
        let n = rows.len();
        let j = rows.first().map_or(0, Vec::len);
        let mut trips = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != j {
                return Err(PyValueError::new_err(format!("row {i} has {} cells, expected {j}", row.len())));
            }
            trips.extend(row.iter().enumerate().filter_map(|(c, y)| y.filter(|&v| v != 0).map(|v| (i, c, v))));
        }
        Self::new(n, j, trips)
    }

    /// Reads a triplet or dense CSV file.
    #[staticmethod]
    #[pyo3(signature = (path, format = "triplet", header_row = false, label_col = false))]
    fn read(path: std::path::PathBuf, format: &str, header_row: bool, label_col: bool) -> PyResult<Self> {
        let fmt = match format {
            "triplet" => MatrixFormat::Triplet,
            "dense" => MatrixFormat::Dense,
            other => return Err(PyValueError::new_err(format!("unknown format '{other}'"))),
        };
        let inner = parse_matrix(&path, fmt, DenseLabels { header_row, label_col }).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_models(&self) -> usize {
        self.inner.n_models()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn n_observed(&self) -> usize {
        self.inner.n_observed()
    }

    #[getter]
    fn missing_rate(&self) -> f64 {
        self.inner.missing_rate()
    }

    fn get(&self, i: usize, j: usize) -> Option<i8> {
        self.inner.get(i, j).map(|y| y.as_i8())
    }

    fn triplets(&self) -> Vec<(usize, usize, i8)> {
        self.inner.entries().map(|(i, j, y)| (i, j, y.as_i8())).collect()
    }

    /// Mean of `(y + 1) / 2` per model; `None` for models with no observed items.
    fn average_accuracy(&self) -> Vec<Option<f64>> {
        cbmm::metrics::average_accuracy(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "ResponseMatrix(n_models={}, n_items={}, observed={})",
            self.inner.n_models(),
            self.inner.n_items(),
            self.inner.n_observed()
        )
    }
}

/// Output of [`fit`] or [`fit_oracle`].
#[pyclass(name = "FitResult", module = "cbmm_py", frozen)]
pub struct PyFitResult {
    inner: cbmm::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.params.theta.clone()
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.inner.params.a.clone()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.params.b.clone()
    }

    #[getter]
    fn loss_trace(&self) -> Vec<f64> {
        self.inner.loss_trace.clone()
    }

    #[getter]
    fn final_loss(&self) -> f64 {
        self.inner.final_loss()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn degenerate_rows(&self) -> Vec<usize> {
        self.inner.degenerate_rows.clone()
    }

    #[getter]
    fn degenerate_cols(&self) -> Vec<usize> {
        self.inner.degenerate_cols.clone()
    }

    #[getter]
    fn kkt<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let k = &self.inner.kkt;
        let d = PyDict::new(py);
        d.set_item("grad_theta_norm", k.grad_theta_norm)?;
        d.set_item("grad_b_norm", k.grad_b_norm)?;
        d.set_item("min_a", k.min_a)?;
        d.set_item("min_grad_a_on_active", k.min_grad_a_on_active)?;
        d.set_item("complementarity", k.complementarity)?;
        Ok(d)
    }

    /// Scores `a_j θ_i + b_j` as a list of rows.
    fn scores(&self) -> Vec<Vec<f64>> {
        let p = &self.inner.params;
        p.theta.iter().map(|t| p.a.iter().zip(&p.b).map(|(a, b)| a * t + b).collect()).collect()
    }

    fn to_json(&self) -> String {
        fit_result_to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(iterations={}, final_loss={}, converged={})",
            self.inner.iterations,
            self.inner.final_loss(),
            self.inner.converged
        )
    }
}

/// Fits the 2PL model by constrained block MM.
#[pyfunction]
#[pyo3(signature = (matrix, sigma = 1.0, tol = 1e-4, max_iter = 1000, seed = 0, init_sd_log_a = 1.0, init_sd_b = 1.0, clamp_bound = None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    matrix: &PyResponseMatrix,
    sigma: f64,
    tol: f64,
    max_iter: usize,
    seed: u64,
    init_sd_log_a: f64,
    init_sd_b: f64,
    clamp_bound: Option<f64>,
) -> PyResult<PyFitResult> {
    let cfg = FitConfig {
        sigma: temperature(sigma)?,
        tol,
        max_iter,
        seed,
        init_sd_log_a,
        init_sd_b,
        clamp_bound,
    };
    let m = &matrix.inner;
    let inner = py.detach(|| fit_rs(m, &cfg, None)).map_err(fit_err)?;
    Ok(PyFitResult { inner })
}

/// Projected-gradient reference fit from the same initialization `fit` would use for `seed`.
#[pyfunction]
#[pyo3(signature = (matrix, sigma = 1.0, tol = 1e-10, max_iter = 20_000, seed = 0))]
fn fit_oracle(py: Python<'_>, matrix: &PyResponseMatrix, sigma: f64, tol: f64, max_iter: usize, seed: u64) -> PyResult<PyFitResult> {
    let t = temperature(sigma)?;
    let cfg = OracleConfig { tol, max_iter, seed, ..OracleConfig::for_temperature(t) };
    let m = &matrix.inner;
    let init = init_params(m.n_models(), m.n_items(), &FitConfig { sigma: t, seed, ..Default::default() });
    let inner = py.detach(|| oracle_rs(m, t, &cfg, &init)).map_err(fit_err)?;
    Ok(PyFitResult { inner })
}

/// Generates a synthetic dataset. Returns `(matrix, truth)` where `truth`
/// holds `theta`, `a`, `b`, `zero_mask` and the score grid `scores`.
#[pyfunction]
#[pyo3(signature = (n_models = 1000, n_items = 1000, sigma = 1.0, rho = 0.0, pattern = "mcar", mar_beta = 2.0, mnar_col_rate = None, sparsity = 0.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    n_models: usize,
    n_items: usize,
    sigma: f64,
    rho: f64,
    pattern: &str,
    mar_beta: f64,
    mnar_col_rate: Option<f64>,
    sparsity: f64,
    seed: u64,
) -> PyResult<(PyResponseMatrix, Bound<'py, PyDict>)> {
    let spec = SyntheticSpec {
        n_models,
        n_items,
        sigma,
        rho,
        pattern: pattern.parse::<Pattern>().map_err(PyValueError::new_err)?,
        mar_beta,
        mnar_col_rate,
        sparsity,
        seed,
    };
    let g = generate(&spec).map_err(value_err)?;
    let truth = PyDict::new(py);
    truth.set_item("theta", &g.params.theta)?;
    truth.set_item("a", &g.params.a)?;
    truth.set_item("b", &g.params.b)?;
    truth.set_item("zero_mask", &g.zero_mask)?;
    let rows: Vec<&[f64]> = g.scores.chunks(n_items).collect();
    truth.set_item("scores", rows)?;
    Ok((PyResponseMatrix { inner: g.responses }, truth))
}

/// Recovery metrics of a fit against known parameters. Pass `scores`
/// (list of rows) to include the relative error and Hellinger distance.
#[pyfunction]
#[pyo3(signature = (result, theta, a, b, scores = None, sigma = 1.0))]
fn metrics<'py>(
    py: Python<'py>,
    result: &PyFitResult,
    theta: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    scores: Option<Vec<Vec<f64>>>,
    sigma: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let flat: Option<Vec<f64>> = scores.map(|rows| rows.into_iter().flatten().collect());
    let truth = Truth { theta: &theta, a: &a, b: &b, scores: flat.as_deref() };
    let r = cbmm::metrics::evaluate(&truth, &result.inner.params, temperature(sigma)?).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("spearman_theta", r.spearman_theta)?;
    d.set_item("spearman_a", r.spearman_a)?;
    d.set_item("rmse_b", r.rmse_b)?;
    if r.rel_err_x.is_some() {
        d.set_item("rel_err_x", r.rel_err_x)?;
        d.set_item("hellinger", r.hellinger)?;
    }
    d.set_item("recall_a", r.recall_a)?;
    d.set_item("precision_a", r.precision_a)?;
    Ok(d)
}

/// Spearman rank correlation with average ranks for ties.
#[pyfunction]
fn spearman(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    spearman_rs(&u, &v).map_err(value_err)
}

/// Rank agreement `(ρ_θ, ρ_a, ρ_b)` between two fits.
#[pyfunction]
fn equivalence_check(first: &PyFitResult, second: &PyFitResult) -> PyResult<(f64, f64, f64)> {
    equivalence_rs(&first.inner.params, &second.inner.params).map_err(value_err)
}

/// Masked cross-entropy of arbitrary parameters on a matrix.
#[pyfunction]
#[pyo3(signature = (matrix, theta, a, b, sigma = 1.0))]
fn loss(matrix: &PyResponseMatrix, theta: Vec<f64>, a: Vec<f64>, b: Vec<f64>, sigma: f64) -> PyResult<f64> {
    let p = ModelParams::new(theta, a, b);
    p.validate_for(&matrix.inner).map_err(value_err)?;
    Ok(cbmm::bce_loss(&p.scores_on(&matrix.inner), &matrix.inner, temperature(sigma)?))
}

#[pymodule]
fn cbmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyResponseMatrix>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence_check, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    Ok(())
}
