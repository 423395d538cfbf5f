//! Python bindings. Results cross the boundary as JSON-shaped Python
//! objects (dicts, lists, str, int, float), matching the HTTP API shapes.

use std::sync::Mutex;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;
use serde_json::{json, Value};
use tempocurate_core::ingest::{check_consistency, parse_csv as core_parse_csv};
use tempocurate_core::provenance::{
    current_value, first_value, most_updated, rejected_log, update_correlation, update_counts_all, value_range,
};
use tempocurate_core::{CellKey, Curation, Date, Dimension, Predicate, ProvenanceSource, Status, Timestamp, Window};

create_exception!(tempocurate_py, TempocurateError, PyException, "Raised for any failed operation.");

fn err(e: impl std::fmt::Display) -> PyErr {
    TempocurateError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn date(s: &str) -> PyResult<Date> {
    s.parse().map_err(err)
}

fn opt_date(s: Option<&str>) -> PyResult<Option<Date>> {
    s.map(date).transpose()
}

fn cell(s: &str) -> PyResult<CellKey> {
    CellKey::parse_address(s).map_err(err)
}

fn dimension(s: &str) -> PyResult<Dimension> {
    s.parse().map_err(err)
}

fn timestamp(s: Option<&str>) -> PyResult<Timestamp> {
    match s {
        Some(s) => s.parse().map_err(err),
        None => Ok(Timestamp::now()),
    }
}

fn window(from: Option<&str>, to: Option<&str>) -> PyResult<Window> {
    let all = Window::all_time();
    Ok(Window::new(opt_date(from)?.unwrap_or(all.from), opt_date(to)?.unwrap_or(all.to)))
}

/// CSV text or bytes.
fn csv_bytes(data: &Bound<'_, PyAny>) -> PyResult<Vec<u8>> {
    if let Ok(b) = data.cast::<PyBytes>() {
        return Ok(b.as_bytes().to_vec());
    }
    Ok(data.extract::<String>()?.into_bytes())
}

/// A curation database on disk, or in memory when `path` is omitted.
#[pyclass(module = "tempocurate_py")]
struct Database {
    inner: Mutex<tempocurate_core::Database>,
}

impl Database {
    fn with<R>(&self, f: impl FnOnce(&mut tempocurate_core::Database) -> tempocurate_core::Result<R>) -> PyResult<R> {
        let mut db = self.inner.lock().map_err(|_| err("database lock poisoned"))?;
        f(&mut db).map_err(err)
    }
}

#[pymethods]
impl Database {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<&str>) -> PyResult<Self> {
        let db = match path {
            Some(p) => tempocurate_core::Database::open(p),
            None => tempocurate_core::Database::open_in_memory(),
        }
        .map_err(err)?;
        Ok(Database { inner: Mutex::new(db) })
    }

    /// Ingests one release; returns the ingest report.
    fn upload(&self, py: Python<'_>, data: &Bound<'_, PyAny>, file_id: &str, release_date: &str) -> PyResult<Py<PyAny>> {
        let upload = core_parse_csv(&csv_bytes(data)?, file_id, date(release_date)?).map_err(err)?;
        let report = self.with(|db| db.ingest(upload))?;
        to_py(py, &report)
    }

    fn uploads(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.with(|db| db.uploads())?)
    }

    #[pyo3(signature = (status="pending", by_week=false))]
    fn proposals(&self, py: Python<'_>, status: &str, by_week: bool) -> PyResult<Py<PyAny>> {
        let status: Status = status.parse().map_err(err)?;
        to_py(py, &self.with(|db| db.list(status, by_week))?)
    }

    #[pyo3(signature = (ids, effective=None, now=None))]
    fn accept(&self, py: Python<'_>, ids: Vec<i64>, effective: Option<&str>, now: Option<&str>) -> PyResult<Py<PyAny>> {
        let (effective, now) = (opt_date(effective)?, timestamp(now)?);
        to_py(py, &self.with(|db| db.accept(&ids, effective, now))?)
    }

    #[pyo3(signature = (ids, now=None))]
    fn reject(&self, py: Python<'_>, ids: Vec<i64>, now: Option<&str>) -> PyResult<Py<PyAny>> {
        let now = timestamp(now)?;
        to_py(py, &self.with(|db| db.reject(&ids, now))?)
    }

    /// Versions of one cell, addressed as `WEEK/DIMENSION/SUBCATEGORY`.
    fn history(&self, py: Python<'_>, cell_address: &str) -> PyResult<Py<PyAny>> {
        let c = cell(cell_address)?;
        to_py(py, &self.with(|db| db.history(&c))?)
    }

    fn snapshot(&self, py: Python<'_>, asof: &str) -> PyResult<Py<PyAny>> {
        let d = date(asof)?;
        let snap = self.with(|db| db.snapshot(d))?;
        let rows: Vec<Value> = snap
            .into_iter()
            .map(|(k, v)| json!({ "week": k.week, "dimension": k.dimension, "subcategory": k.subcategory, "count": v.count, "file_id": v.file_id }))
            .collect();
        to_py(py, &rows)
    }

    fn first_value(&self, py: Python<'_>, cell_address: &str) -> PyResult<Py<PyAny>> {
        let c = cell(cell_address)?;
        to_py(py, &self.with(|db| first_value(db, &c))?)
    }

    fn current_value(&self, py: Python<'_>, cell_address: &str, asof: &str) -> PyResult<Py<PyAny>> {
        let (c, d) = (cell(cell_address)?, date(asof)?);
        to_py(py, &self.with(|db| current_value(db, &c, d))?)
    }

    fn value_range(&self, py: Python<'_>, cell_address: &str) -> PyResult<Py<PyAny>> {
        let c = cell(cell_address)?;
        to_py(py, &self.with(|db| value_range(db, &c))?)
    }

    #[pyo3(signature = (dimension=None))]
    fn rejected_log(&self, py: Python<'_>, dimension: Option<&str>) -> PyResult<Py<PyAny>> {
        let filter = match dimension {
            Some(d) => Predicate::Dimension(self::dimension(d)?),
            None => Predicate::True,
        };
        to_py(py, &self.with(|db| rejected_log(db, &filter))?)
    }

    #[pyo3(signature = (dimension, from_=None, to=None))]
    fn update_counts(&self, py: Python<'_>, dimension: &str, from_: Option<&str>, to: Option<&str>) -> PyResult<Py<PyAny>> {
        let (dim, w) = (self::dimension(dimension)?, window(from_, to)?);
        to_py(py, &self.with(|db| update_counts_all(db, dim, w))?)
    }

    #[pyo3(signature = (dimension, from_=None, to=None))]
    fn most_updated(&self, py: Python<'_>, dimension: &str, from_: Option<&str>, to: Option<&str>) -> PyResult<Py<PyAny>> {
        let (dim, w) = (self::dimension(dimension)?, window(from_, to)?);
        to_py(py, &self.with(|db| most_updated(db, dim, w))?)
    }

    /// Pearson correlation of per-upload update counts; series are
    /// `DIMENSION/SUBCATEGORY`.
    fn correlation(&self, py: Python<'_>, a: &str, b: &str) -> PyResult<Py<PyAny>> {
        let split = |s: &str| -> PyResult<(Dimension, String)> {
            let (d, sub) = s.split_once('/').ok_or_else(|| err(format!("series {s:?} is not DIMENSION/SUBCATEGORY")))?;
            Ok((dimension(d)?, sub.to_string()))
        };
        let (a, b) = (split(a)?, split(b)?);
        to_py(py, &self.with(|db| update_correlation(db, (a.0, &a.1), (b.0, &b.1)))?)
    }
}

/// The open-ended period sentinel.
#[pyfunction]
fn forever() -> String {
    tempocurate_core::forever().to_string()
}

/// Parses a release without storing it.
#[pyfunction]
fn parse_csv(py: Python<'_>, data: &Bound<'_, PyAny>, file_id: &str, release_date: &str) -> PyResult<Py<PyAny>> {
    let upload = core_parse_csv(&csv_bytes(data)?, file_id, date(release_date)?).map_err(err)?;
    to_py(py, &upload)
}

/// Totals that disagree with a fully reported breakdown.
#[pyfunction(name = "check_consistency")]
fn consistency(py: Python<'_>, data: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let upload = core_parse_csv(&csv_bytes(data)?, "check", Date::today()).map_err(err)?;
    to_py(py, &check_consistency(&upload))
}

#[pymodule]
fn tempocurate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Database>()?;
    m.add_function(wrap_pyfunction!(forever, m)?)?;
    m.add_function(wrap_pyfunction!(parse_csv, m)?)?;
    m.add_function(wrap_pyfunction!(consistency, m)?)?;
    m.add("TempocurateError", m.py().get_type::<TempocurateError>())?;
    Ok(())
}
