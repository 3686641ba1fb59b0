//! Python bindings for `nearfield-core`.
//!
//! Complex vectors and matrices cross the boundary as Python `complex`
//! values in lists (row-major for matrices). Angles are in degrees and ranges
//! in metres on the Python side.

use nearfield_core::clkl::clkl_estimate;
use nearfield_core::crb::{crb_sweep, max_identifiable_paths as core_max_paths};
use nearfield_core::harness::config::HarnessConfig;
use nearfield_core::harness::sweep::{run_sweep, SummaryRow, SweepSpec};
use nearfield_core::metrics::evaluate;
use nearfield_core::psomp::{psomp_estimate, DictionaryParams, PolarDictionary};
use nearfield_core::scene::{draw_scene, SceneRng};
use nearfield_core::{ArrayConfig, CMat, EstimateResult, Error, Scene as CoreScene, C64};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Uniform linear array at half-wavelength spacing.
#[pyclass(name = "Array", frozen)]
struct PyArray {
    inner: ArrayConfig,
}

#[pymethods]
impl PyArray {
    #[new]
    #[pyo3(signature = (carrier_hz = 28e9, elements = 64))]
    fn new(carrier_hz: f64, elements: usize) -> PyResult<Self> {
        Ok(Self {
            inner: ArrayConfig::new(carrier_hz, elements).map_err(py_err)?,
        })
    }

    #[getter]
    fn elements(&self) -> usize {
        self.inner.elements()
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    #[getter]
    fn aperture(&self) -> f64 {
        self.inner.aperture()
    }

    #[getter]
    fn rayleigh_distance(&self) -> f64 {
        self.inner.rayleigh_distance()
    }

    /// Effective beamforming Rayleigh distance at angle `theta_deg`.
    fn ebrd(&self, theta_deg: f64) -> f64 {
        self.inner.ebrd(theta_deg.to_radians())
    }

    /// Steering vector; `model` is `"usw"` (exact spherical) or `"fresnel"`.
    #[pyo3(signature = (theta_deg, range_m, model = "usw"))]
    fn steering(&self, theta_deg: f64, range_m: f64, model: &str) -> PyResult<Vec<C64>> {
        let t = theta_deg.to_radians();
        let v = match model {
            "usw" => self.inner.steering_usw(t, range_m),
            "fresnel" => self.inner.steering_fresnel(t, range_m),
            other => return Err(PyValueError::new_err(format!("unknown model '{other}'"))),
        }
        .map_err(py_err)?;
        Ok(v.iter().copied().collect())
    }
}

/// Scenario and estimator settings, written in the harness `key = value`
/// syntax. Keyword arguments are appended as extra lines, so
/// `Scenario(snr_db=5, d=2)` is the same as `Scenario("snr_db = 5\nd = 2")`.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    cfg: HarnessConfig,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (text = "", **overrides))]
    fn new(text: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut full = text.to_string();
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                full.push_str(&format!("\n{} = {}", k.str()?, v.str()?));
            }
        }
        Ok(Self {
            cfg: HarnessConfig::parse(&full).map_err(py_err)?,
        })
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.cfg.scenario.snr_db
    }

    #[getter]
    fn paths(&self) -> usize {
        self.cfg.scenario.paths
    }

    #[getter]
    fn rf_chains(&self) -> usize {
        self.cfg.scenario.rf_chains
    }

    #[getter]
    fn snapshots(&self) -> usize {
        self.cfg.scenario.snapshots
    }

    #[getter]
    fn array(&self) -> PyArray {
        PyArray {
            inner: self.cfg.scenario.array.clone(),
        }
    }

    #[getter]
    fn range_bounds(&self) -> (f64, f64) {
        (self.cfg.scenario.range_min(), self.cfg.scenario.range_max())
    }

    /// Draws one trial with the harness seeding (`seed` plays the role of
    /// `base + k`).
    fn draw(&self, seed: u64) -> PyResult<PyScene> {
        let scene = draw_scene(&self.cfg.scenario, &mut SceneRng::new(seed)).map_err(py_err)?;
        Ok(PyScene {
            cfg: self.cfg.clone(),
            scene,
        })
    }

    /// Median root-CRB over `trials` random geometries at this scenario.
    #[pyo3(signature = (trials = 50, seed = 42))]
    fn crb<'py>(&self, py: Python<'py>, trials: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let s = crb_sweep(&self.cfg.scenario, trials, seed).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("paths", s.paths)?;
        d.set_item("trials", s.trials)?;
        d.set_item("valid_trials", s.valid_trials)?;
        d.set_item("theta_deg", s.median_theta_deg)?;
        d.set_item("range_m", s.median_range_m)?;
        d.set_item("condition", s.median_condition)?;
        Ok(d)
    }
}

/// One simulated trial: true paths, combiner and compressed covariance.
#[pyclass(name = "Scene", frozen)]
struct PyScene {
    cfg: HarnessConfig,
    scene: CoreScene,
}

#[pymethods]
impl PyScene {
    /// True paths as `(theta_deg, range_m, power)`.
    #[getter]
    fn paths(&self) -> Vec<(f64, f64, f64)> {
        self.scene
            .paths
            .iter()
            .map(|p| (p.theta_deg(), p.range, p.power))
            .collect()
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.scene.noise_power
    }

    #[getter]
    fn sample_cov(&self) -> Vec<Vec<C64>> {
        rows(&self.scene.sample_cov)
    }

    #[getter]
    fn combiner(&self) -> Vec<Vec<C64>> {
        rows(&self.scene.combiner)
    }

    #[getter]
    fn channel(&self) -> Vec<Vec<C64>> {
        rows(&self.scene.channel)
    }

    fn clkl(&self) -> PyResult<PyEstimate> {
        let sc = &self.cfg.scenario;
        let cfg = self.cfg.clkl.apply(sc);
        let est = clkl_estimate(&self.scene.observation(), &sc.array, sc.paths, &cfg).map_err(py_err)?;
        PyEstimate::new(est, &self.scene)
    }

    fn psomp(&self) -> PyResult<PyEstimate> {
        let sc = &self.cfg.scenario;
        let dict = PolarDictionary::build(&sc.array, &DictionaryParams::new(sc.range_min(), sc.range_max()))
            .map_err(py_err)?;
        let est = psomp_estimate(&self.scene.observation(), &sc.array, sc.paths, &dict, sc.range_max())
            .map_err(py_err)?;
        PyEstimate::new(est, &self.scene)
    }
}

/// Estimator output scored against the scene it came from.
#[pyclass(name = "Estimate", frozen, get_all)]
struct PyEstimate {
    /// `(theta_deg, range_m, power)` per estimated path.
    paths: Vec<(f64, f64, f64)>,
    noise_estimate: f64,
    nmse: f64,
    nmse_db: f64,
    rmse_theta_deg: f64,
    rmse_range_m: f64,
    failed: bool,
    rank_deficient: bool,
    /// CL-KL only: index of the winning start, or `None`.
    winning_start: Option<usize>,
    /// CL-KL only: objective trace of each start.
    traces: Vec<Vec<f64>>,
    iterations: Vec<usize>,
    converged: Vec<bool>,
}

impl PyEstimate {
    fn new(est: EstimateResult, scene: &CoreScene) -> PyResult<Self> {
        let m = evaluate(&est, &scene.paths, &scene.channel).map_err(py_err)?;
        let starts = est.clkl.as_ref().map(|d| d.starts.as_slice()).unwrap_or(&[]);
        Ok(Self {
            paths: est.paths.iter().map(|p| (p.theta_deg(), p.range, p.power)).collect(),
            noise_estimate: est.noise_estimate,
            nmse: m.nmse,
            nmse_db: m.nmse_db,
            rmse_theta_deg: m.rmse_theta_deg,
            rmse_range_m: m.rmse_range_m,
            failed: m.failed,
            rank_deficient: est.rank_deficient,
            winning_start: est.clkl.as_ref().map(|d| d.winning_start),
            traces: starts.iter().map(|s| s.trace.clone()).collect(),
            iterations: starts.iter().map(|s| s.iterations).collect(),
            converged: starts.iter().map(|s| s.converged).collect(),
        })
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "Estimate(paths={}, nmse_db={:.2}, failed={})",
            self.paths.len(),
            self.nmse_db,
            self.failed
        )
    }
}

fn summary_dict<'py>(py: Python<'py>, r: &SummaryRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", &r.value)?;
    d.set_item("variant", &r.variant)?;
    d.set_item("method", &r.method)?;
    d.set_item("trials", r.trials)?;
    d.set_item("errors", r.errors)?;
    d.set_item("mean_nmse_db", r.mean_nmse_db)?;
    d.set_item("median_nmse_db", r.median_nmse_db)?;
    d.set_item("rmse_theta_deg", r.rmse_theta_deg)?;
    d.set_item("rmse_range_m", r.rmse_range_m)?;
    d.set_item("failure_rate", r.failure_rate)?;
    d.set_item("median_noise_ratio", r.median_noise_ratio)?;
    d.set_item("convergence_rate", r.convergence_rate)?;
    d.set_item("median_iterations", r.median_iterations)?;
    Ok(d)
}

/// Runs a Monte-Carlo sweep from harness config text and returns the
/// per-cell summary. Writes the per-trial CSV when `out` is given.
#[pyfunction]
#[pyo3(signature = (config = "", out = None))]
fn sweep<'py>(py: Python<'py>, config: &str, out: Option<std::path::PathBuf>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = HarnessConfig::parse(config).map_err(py_err)?;
    let spec = SweepSpec::from_config(&cfg).map_err(py_err)?;
    let outcome = py.detach(|| run_sweep(&spec, out.as_deref())).map_err(py_err)?;
    outcome.summary.iter().map(|r| summary_dict(py, r)).collect()
}

/// Largest path count the compressed covariance can identify.
#[pyfunction]
fn max_identifiable_paths(n_rf: usize) -> usize {
    core_max_paths(n_rf)
}

#[pymodule]
fn nearfield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyArray>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(max_identifiable_paths, m)?)?;
    Ok(())
}
