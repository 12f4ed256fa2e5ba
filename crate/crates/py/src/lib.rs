//! Python bindings: fit, predict and serialize models, draw simulation data,
//! and score predictions. Feature matrices are lists of rows.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sgtree::eval::{self, TestKind, TuneGrid};
use sgtree::sgt::SgtConfig;
use sgtree::simlab::{self, DgpKind};
use sgtree::splitcore::{herfindahl as herfindahl_index, WeightVector};
use sgtree::{Dataset, Error, FeatureMatrix, Model, ModelSpec, Regressor};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(rows).map_err(to_py)
}

fn dataset(x: &[Vec<f64>], y: Vec<f64>) -> PyResult<Dataset> {
    Dataset::from_parts(matrix(x)?, y).map_err(to_py)
}

fn rows(x: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..x.n_rows()).map(|i| x.row(i)).collect()
}

/// A fitted model of any kind.
#[pyclass(name = "Model", module = "pysgtree", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    /// Number of leaves for a slow-growing tree or CART, `None` otherwise.
    #[getter]
    fn n_leaves(&self) -> Option<usize> {
        match &self.inner {
            Model::Sgt(m) => Some(m.n_leaves()),
            Model::Cart(t) => Some(t.n_leaves()),
            _ => None,
        }
    }

    fn predict(&self, py: Python<'_>, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix(&x)?;
        py.detach(|| self.inner.predict(&x)).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Model::from_json(text).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path, None).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Model::load(path).map_err(to_py)?.0,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(kind={:?}, n_features={})",
            self.inner.kind(),
            self.inner.n_features()
        )
    }
}

/// Fits a learner by name (`rf`, `cart`, `sgt`, `sgt_0.1_0.25`,
/// `bt_0.1_1500`, `bt_0.25_tuned`, `booging`, `lasso`, ...). Tuned learners
/// pick their hyperparameters by k-fold cross-validation.
#[pyfunction]
#[pyo3(signature = (model, x, y, seed = 0, k_folds = 5))]
fn fit(
    py: Python<'_>,
    model: &str,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    seed: u64,
    k_folds: usize,
) -> PyResult<PyModel> {
    let learner = eval::learner_by_name(model).map_err(to_py)?;
    let data = dataset(&x, y)?;
    let grid = TuneGrid {
        k_folds,
        ..TuneGrid::default()
    };
    let (inner, _) = py
        .detach(|| eval::fit_learner(&data, &learner.learner, &grid, seed))
        .map_err(to_py)?;
    Ok(PyModel { inner })
}

/// Fits one slow-growing tree with explicit settings.
#[pyfunction]
#[pyo3(signature = (x, y, eta = 0.1, h_bar = 0.25, mtry = 0.75, schedule = true, max_leaves = sgtree::sgt::DEFAULT_MAX_LEAVES, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit_sgt(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    eta: f64,
    h_bar: f64,
    mtry: f64,
    schedule: bool,
    max_leaves: usize,
    seed: u64,
) -> PyResult<PyModel> {
    let base = if schedule {
        SgtConfig::new(eta, h_bar)
    } else {
        SgtConfig::constant(eta, h_bar)
    };
    let cfg = SgtConfig {
        mtry_fraction: mtry,
        max_leaves,
        seed,
        ..base
    };
    let data = dataset(&x, y)?;
    let inner = py
        .detach(|| ModelSpec::Sgt(cfg).fit(&data))
        .map_err(to_py)?;
    Ok(PyModel { inner })
}

/// One simulation draw: `x_train`, `y_train`, `x_test`, `y_test` and the
/// test conditional mean `mean_test`.
#[pyfunction]
#[pyo3(signature = (dgp, true_r2, n_train = 100, n_test = 100, n_features = 10, seed = 0))]
fn simulate_draw<'py>(
    py: Python<'py>,
    dgp: &str,
    true_r2: f64,
    n_train: usize,
    n_test: usize,
    n_features: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: DgpKind = dgp.parse().map_err(to_py)?;
    let (train, test, mean) =
        simlab::simulate_draw(kind, n_features, n_train, n_test, true_r2, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("x_train", rows(train.x()))?;
    d.set_item("y_train", train.y().to_vec())?;
    d.set_item("x_test", rows(test.x()))?;
    d.set_item("y_test", test.y().to_vec())?;
    d.set_item("mean_test", mean)?;
    Ok(d)
}

/// `r2` (or `None` for constant targets), `rmse` and `mae`.
#[pyfunction]
fn compute_metrics<'py>(
    py: Python<'py>,
    y_true: Vec<f64>,
    y_pred: Vec<f64>,
    baseline_mean: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = eval::compute_metrics(&y_true, &y_pred, baseline_mean).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("r2", m.r2)?;
    d.set_item("rmse", m.rmse)?;
    d.set_item("mae", m.mae)?;
    Ok(d)
}

/// Squared-error loss-differential test; `kind` is `paired_t` or
/// `diebold_mariano`. Returns `(statistic, p_value)`.
#[pyfunction]
#[pyo3(signature = (e1, e2, kind = "paired_t", hac_lags = None))]
fn loss_differential_test(
    e1: Vec<f64>,
    e2: Vec<f64>,
    kind: &str,
    hac_lags: Option<usize>,
) -> PyResult<(f64, f64)> {
    let kind = match kind {
        "paired_t" => TestKind::PairedT,
        "diebold_mariano" => TestKind::DieboldMariano,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown test kind `{other}`"
            )))
        }
    };
    let t = eval::loss_differential_test(&e1, &e2, kind, hac_lags).map_err(to_py)?;
    Ok((t.statistic, t.p_value))
}

/// Herfindahl index of a weight vector (normalized to sum to one first).
#[pyfunction]
fn herfindahl(weights: Vec<f64>) -> PyResult<f64> {
    Ok(herfindahl_index(
        &WeightVector::from_raw(weights).map_err(to_py)?,
    ))
}

#[pymodule]
fn pysgtree(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sgt, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_draw, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(loss_differential_test, m)?)?;
    m.add_function(wrap_pyfunction!(herfindahl, m)?)?;
    Ok(())
}
