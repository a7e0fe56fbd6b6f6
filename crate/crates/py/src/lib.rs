//! Python bindings: velocity grids, the slab solver, experiments and a few
//! of the verification probes.

use std::path::PathBuf;
use std::sync::Arc;

use bgk_core::collision::CollisionParams;
use bgk_core::config::{parse_config, ExperimentKind};
use bgk_core::cycles::{estimate_survival, normal_speed_ks};
use bgk_core::geometry::Domain;
use bgk_core::linearization::{gamma_direct, gamma_expansion, random_perturbation, ThetaQuadrature};
use bgk_core::solver::{InitialCondition, Mode, RunRow, SolverConfig, TransportOrder};
use bgk_core::velocity::{VelocityGrid, WeightParams};
use bgk_core::BgkError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: BgkError) -> PyErr {
    match e {
        BgkError::Config(_) | BgkError::Parse { .. } | BgkError::Precondition(_) | BgkError::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "VelocityGrid", frozen)]
struct PyVelocityGrid {
    inner: Arc<VelocityGrid>,
}

#[pymethods]
impl PyVelocityGrid {
    #[new]
    #[pyo3(signature = (n_v = 24, v_max = 7.0, beta = 0.0, theta = 0.1))]
    fn new(n_v: usize, v_max: f64, beta: f64, theta: f64) -> PyResult<Self> {
        let wp = WeightParams::new(beta, theta).map_err(err)?;
        Ok(PyVelocityGrid { inner: Arc::new(VelocityGrid::new(n_v, v_max, wp).map_err(err)?) })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn nodes(&self) -> Vec<[f64; 3]> {
        self.inner.nodes().to_vec()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn mu(&self) -> Vec<f64> {
        self.inner.mu().to_vec()
    }

    fn chi(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= 5 {
            return Err(PyValueError::new_err("basis index must be < 5"));
        }
        Ok(self.inner.chi(i).to_vec())
    }

    /// `(rho, U, T)` of an absolute distribution.
    fn moments(&self, f: Vec<f64>) -> PyResult<(f64, [f64; 3], f64)> {
        self.check_len(&f)?;
        let m = self.inner.moments(&f).map_err(err)?;
        Ok((m.rho, m.u, m.temp))
    }

    /// Coefficients `(a, b1, b2, b3, c)` of the projection of a perturbation.
    fn basis_coefficients(&self, f: Vec<f64>) -> PyResult<[f64; 5]> {
        self.check_len(&f)?;
        Ok(self.inner.basis_coefficients(&f))
    }
}

impl PyVelocityGrid {
    fn check_len(&self, f: &[f64]) -> PyResult<()> {
        if f.len() != self.inner.len() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.inner.len(), f.len())));
        }
        Ok(())
    }
}

fn row_dict<'py>(py: Python<'py>, r: &RunRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("linf_w", r.linf_w)?;
    d.set_item("l2", r.l2)?;
    d.set_item("mass", r.mass)?;
    d.set_item("min_f", r.min_f)?;
    d.set_item("flux_residual", r.flux_residual)?;
    d.set_item("perturbation_mass", r.perturbation_mass)?;
    Ok(d)
}

#[pyclass(name = "Solver")]
struct PySolver {
    inner: bgk_core::solver::Solver,
}

#[pymethods]
impl PySolver {
    #[new]
    #[pyo3(signature = (n_x = 64, n_v = 24, v_max = 7.0, delta = 0.0, initial = "cosine-density", eta = 0.0, omega = 0.0, order = 1, linearized = false, t_final = 10.0, dt = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_x: usize,
        n_v: usize,
        v_max: f64,
        delta: f64,
        initial: &str,
        eta: f64,
        omega: f64,
        order: u8,
        linearized: bool,
        t_final: f64,
        dt: Option<f64>,
    ) -> PyResult<Self> {
        let order = match order {
            1 => TransportOrder::First,
            2 => TransportOrder::Second,
            o => return Err(PyValueError::new_err(format!("order must be 1 or 2, got {o}"))),
        };
        let cfg = SolverConfig {
            n_cells: n_x,
            n_v,
            v_max,
            delta,
            initial: InitialCondition::from_name(initial).map_err(err)?,
            collision: CollisionParams::new(eta, omega).map_err(err)?,
            order,
            mode: if linearized { Mode::Linearized } else { Mode::Nonlinear },
            t_final,
            dt,
            ..Default::default()
        };
        Ok(PySolver { inner: bgk_core::solver::Solver::new(cfg).map_err(err)? })
    }

    /// Builds the solver described by the `[grid]`, `[weight]`,
    /// `[collision]` and `[solver]` sections of a configuration text.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        let spec = parse_config(text).map_err(err)?;
        Ok(PySolver { inner: bgk_core::solver::Solver::new(spec.solver).map_err(err)? })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.inner.steps()
    }

    fn step(&mut self) -> PyResult<()> {
        self.inner.step().map_err(err)
    }

    fn advance(&mut self, n: usize) -> PyResult<()> {
        self.inner.advance(n).map_err(err)
    }

    fn row<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.row().map_err(err)?;
        row_dict(py, &r)
    }

    /// Runs to `t_final` and returns one dict per output time.
    fn run<'py>(&mut self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let rec = self.inner.run().map_err(err)?;
        rec.rows.iter().map(|r| row_dict(py, r)).collect()
    }

    /// Flat state `F[cell * N_v^3 + node]` in the evolved representation.
    fn state(&mut self) -> PyResult<Vec<f64>> {
        Ok(self.inner.state().map_err(err)?.data().to_vec())
    }

    /// Per-cell density, velocity and temperature.
    fn macro_fields<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = self.inner.state().map_err(err)?.macro_fields().map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("rho", m.rho)?;
        d.set_item("u", m.u)?;
        d.set_item("temp", m.temp)?;
        Ok(d)
    }
}

#[pyfunction]
fn list_experiments() -> Vec<(&'static str, &'static str)> {
    ExperimentKind::ALL.iter().map(|k| (k.name(), k.description())).collect()
}

/// Runs an experiment from configuration text; returns `(files, failures)`.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed = None))]
fn run_experiment(py: Python<'_>, config: &str, out_dir: PathBuf, seed: Option<u64>) -> PyResult<(Vec<PathBuf>, Vec<String>)> {
    let mut spec = parse_config(config).map_err(err)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.out_dir = Some(out_dir.clone());
    let out = py.detach(|| bgk_core::experiment::run_experiment(&spec, &out_dir)).map_err(err)?;
    Ok((out.files, out.failures))
}

/// Least-squares fit of `log y = log C - lambda t` on `[t_lo, t_hi]`;
/// returns `(lambda, C, R^2)`.
#[pyfunction]
fn fit_decay(t: Vec<f64>, y: Vec<f64>, t_lo: f64, t_hi: f64) -> PyResult<(f64, f64, f64)> {
    if t.len() != y.len() {
        return Err(PyValueError::new_err("t and y differ in length"));
    }
    let series: Vec<(f64, f64)> = t.into_iter().zip(y).collect();
    let f = bgk_core::diagnostics::fit_decay(&series, (t_lo, t_hi)).map_err(err)?;
    Ok((f.lambda, f.c, f.r2))
}

/// Monte Carlo estimate of `P(t_k > 0)`; returns `(p_hat, ci_half_width)`.
#[pyfunction]
#[pyo3(signature = (t0, k, samples = 100_000, seed = 0, domain = "ball", size = 1.0))]
fn survival(py: Python<'_>, t0: f64, k: usize, samples: usize, seed: u64, domain: &str, size: f64) -> PyResult<(f64, f64)> {
    let d = match domain {
        "slab" => Domain::slab(size),
        "disk" => Domain::disk(size),
        "ball" => Domain::ball(size),
        other => return Err(PyValueError::new_err(format!("unknown domain '{other}'"))),
    }
    .map_err(err)?;
    let e = py.detach(|| estimate_survival(&d, t0, k, samples, seed)).map_err(err)?;
    Ok((e.p_hat, e.half_width))
}

/// KS statistic and p-value of the wall-normal speed sampler.
#[pyfunction]
#[pyo3(signature = (n = 100_000, seed = 0))]
fn wall_speed_ks(n: usize, seed: u64) -> (f64, f64) {
    normal_speed_ks(n, seed)
}

/// `||Gamma_direct - sum Gamma_i||_inf / ||w f||_inf` for one random
/// perturbation of amplitude `delta`.
#[pyfunction]
#[pyo3(signature = (delta = 1e-2, eta = 0.0, omega = 0.0, n_v = 16, theta_nodes = 32, seed = 0))]
fn gamma_gap(delta: f64, eta: f64, omega: f64, n_v: usize, theta_nodes: usize, seed: u64) -> PyResult<f64> {
    let params = CollisionParams::new(eta, omega).map_err(err)?;
    let grid = VelocityGrid::new(n_v, 7.0, WeightParams::default()).map_err(err)?;
    let tq = ThetaQuadrature::new(theta_nodes).map_err(err)?;
    let mut rng = bgk_core::cycles::sample_stream(seed, 0);
    let f = random_perturbation(&grid, &mut rng, delta);
    let total = gamma_expansion(&params, &grid, &f, &tq).map_err(err)?.total();
    let direct = gamma_direct(&params, &grid, &f).map_err(err)?;
    let wp = grid.weight_params();
    let wf = grid.nodes().iter().zip(&f).map(|(v, x)| wp.value(v) * x.abs()).fold(0.0, f64::max);
    Ok(total.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / wf)
}

#[pymodule]
fn bgk_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVelocityGrid>()?;
    m.add_class::<PySolver>()?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(survival, m)?)?;
    m.add_function(wrap_pyfunction!(wall_speed_ks, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_gap, m)?)?;
    Ok(())
}
