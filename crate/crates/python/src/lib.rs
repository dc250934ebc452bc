//! Python bindings.

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hjbounds::bundle_io;
use hjbounds::oracle::{lf_solve, trimmed_reach_oracle};
use hjbounds::{
    bound_interval, grid_eval, precompute, CharacteristicBundle, Error, GridSpec, ReachLabel, RunConfig,
};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn config_from(config: Option<&str>, preset: Option<&str>, seed: Option<u64>) -> PyResult<RunConfig> {
    let mut cfg = match (config, preset) {
        (Some(text), None) => RunConfig::from_json(text),
        (None, Some(name)) => RunConfig::preset(name),
        _ => return Err(PyValueError::new_err("pass exactly one of config or preset")),
    }
    .map_err(py_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Precomputed characteristics and hyperplanes for one game.
#[pyclass(name = "Bundle", module = "hjbounds", frozen)]
struct PyBundle {
    inner: CharacteristicBundle,
}

#[pymethods]
impl PyBundle {
    /// Runs the precompute for a JSON config or a named preset.
    #[staticmethod]
    #[pyo3(signature = (config=None, preset=None, seed=None))]
    fn precompute(py: Python<'_>, config: Option<&str>, preset: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let cfg = config_from(config, preset, seed)?;
        let p = cfg.build().map_err(py_err)?;
        let mut inner = py
            .detach(|| precompute(&p.system, &p.cost, &p.levels, &p.counts, &p.grid, p.seed))
            .map_err(py_err)?;
        inner.config_hash = cfg.hash();
        Ok(PyBundle { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = bundle_io::load_bundle(path.as_ref()).map_err(py_err)?;
        Ok(PyBundle { inner })
    }

    /// Writes the binary bundle and returns its size in bytes.
    fn save(&self, path: &str) -> PyResult<u64> {
        bundle_io::save_bundle(&self.inner, path.as_ref()).map_err(py_err)
    }

    fn to_json(&self) -> String {
        bundle_io::to_json(&self.inner).to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_characteristics(&self) -> usize {
        self.inner.tuples.len()
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.inner.gammas()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.grid.nodes().to_vec()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `(lower, upper)` at one point.
    fn bounds(&self, t: f64, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let iv = bound_interval(&self.inner, t, &DVector::from_vec(x)).map_err(py_err)?;
        Ok((iv.lower, iv.upper))
    }

    /// Full interval record as a dict.
    fn interval<'py>(&self, py: Python<'py>, t: f64, x: Vec<f64>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let iv = bound_interval(&self.inner, t, &DVector::from_vec(x)).map_err(py_err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("lower", iv.lower)?;
        d.set_item("upper", iv.upper)?;
        d.set_item("k_upper", iv.k_upper)?;
        d.set_item("argmax_lower", iv.argmax_lower)?;
        d.set_item("time", iv.time)?;
        d.set_item("snapped", iv.snapped)?;
        d.set_item("qp_converged", iv.qp_converged)?;
        Ok(d)
    }

    /// Bounds on a `"min:max:count,..."` grid as `(points, lower, upper)`.
    fn grid(&self, py: Python<'_>, t: f64, grid: &str) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        let spec: GridSpec = grid.parse().map_err(py_err)?;
        let rows = py.detach(|| grid_eval(&self.inner, t, &spec)).map_err(py_err)?;
        let mut pts = Vec::with_capacity(rows.len());
        let (mut lo, mut up) = (Vec::with_capacity(rows.len()), Vec::with_capacity(rows.len()));
        for r in rows {
            pts.push(r.point.iter().copied().collect());
            match r.result {
                Ok(iv) => {
                    lo.push(iv.lower);
                    up.push(iv.upper);
                }
                Err(_) => {
                    lo.push(f64::NAN);
                    up.push(f64::NAN);
                }
            }
        }
        Ok((pts, lo, up))
    }

    /// 1 inside the reach set, -1 inside the avoid set, 0 unknown.
    fn classify(&self, t: f64, x: Vec<f64>, gamma: f64) -> PyResult<i8> {
        let iv = bound_interval(&self.inner, t, &DVector::from_vec(x)).map_err(py_err)?;
        Ok(ReachLabel::from_interval(&iv, gamma).code())
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(dim={}, characteristics={}, levels={}, nodes={})",
            self.inner.dim(),
            self.inner.tuples.len(),
            self.inner.levels.levels.len(),
            self.inner.grid.len()
        )
    }
}

/// Names of the built-in configurations.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    hjbounds::config::PRESETS.to_vec()
}

/// JSON text of a built-in configuration.
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    Ok(RunConfig::preset(name).map_err(py_err)?.to_json())
}

/// Assumption check on every grid node: `(passed, messages)`.
#[pyfunction]
#[pyo3(signature = (config=None, preset=None))]
fn check(config: Option<&str>, preset: Option<&str>) -> PyResult<(bool, Vec<String>)> {
    let p = config_from(config, preset, None)?.build().map_err(py_err)?;
    let report = p.system.check_assumptions(p.grid.nodes());
    let msgs = report
        .records
        .iter()
        .filter_map(|r| r.message.as_ref().map(|m| format!("t = {}: {m}", r.time)))
        .collect();
    Ok((report.passed(), msgs))
}

/// Grid solution of the HJ equation at time `t`, flattened in grid order.
#[pyfunction]
#[pyo3(signature = (grid, t, config=None, preset=None))]
fn grid_solve(py: Python<'_>, grid: &str, t: f64, config: Option<&str>, preset: Option<&str>) -> PyResult<Vec<f64>> {
    let cfg = config_from(config, preset, None)?;
    let p = cfg.build().map_err(py_err)?;
    let axes = match grid.parse::<GridSpec>().map_err(py_err)? {
        GridSpec::Axes(a) => a,
        GridSpec::Points(_) => unreachable!("grid strings parse to axes"),
    };
    let vg = py
        .detach(|| lf_solve(&p.system, &p.cost, &axes, t, cfg.oracle.lf_options()))
        .map_err(py_err)?;
    Ok(vg.values)
}

/// Value of the single-player trimmed game at `(t, x)`.
#[pyfunction]
#[pyo3(signature = (t, x, steps=200, config=None, preset=None))]
fn reach_oracle(t: f64, x: Vec<f64>, steps: usize, config: Option<&str>, preset: Option<&str>) -> PyResult<f64> {
    let p = config_from(config, preset, None)?.build().map_err(py_err)?;
    let v = trimmed_reach_oracle(&p.system, &p.cost, t, &DVector::from_vec(x), steps).map_err(py_err)?;
    Ok(v.value)
}

#[pymodule]
fn hjbounds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(grid_solve, m)?)?;
    m.add_function(wrap_pyfunction!(reach_oracle, m)?)?;
    Ok(())
}
