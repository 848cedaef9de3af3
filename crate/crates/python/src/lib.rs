//! Python bindings for `coupled_risk`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use coupled_risk::analytic;
use coupled_risk::cli::config::ExperimentConfig;
use coupled_risk::error::Error;
use coupled_risk::inversion::{invert_cdf_grid, InversionConfig};
use coupled_risk::model::{self, ExtendedRate, JumpDistribution};
use coupled_risk::queue_sim::{estimate_v_transform, QueueBudget};
use coupled_risk::risk_sim::{sample_u, SimulationBudget};
use coupled_risk::verify::{parse_suite, run_suite, VerifyInput, VerifySettings};
use coupled_risk::wiener_hopf::{QueueTransform, RiskTransform};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::InvalidModel(_)
        | Error::Unstable(_)
        | Error::InfiniteRateWithNonpositiveDrift(_)
        | Error::DegenerateModel(_)
        | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Compound Poisson process `c t - sum of jumps`.
#[pyclass(name = "CompoundPoisson", frozen, from_py_object, module = "coupled_risk_py")]
#[derive(Clone)]
struct PyCompoundPoisson {
    inner: model::CompoundPoissonSpec,
}

impl PyCompoundPoisson {
    fn build(drift: f64, rate: f64, jumps: JumpDistribution) -> PyResult<Self> {
        Ok(PyCompoundPoisson { inner: model::CompoundPoissonSpec::new(drift, rate, jumps).map_err(to_py)? })
    }
}

#[pymethods]
impl PyCompoundPoisson {
    #[staticmethod]
    fn exponential(drift: f64, rate: f64, jump_rate: f64) -> PyResult<Self> {
        Self::build(drift, rate, JumpDistribution::Exponential { rate: jump_rate })
    }

    #[staticmethod]
    fn erlang(drift: f64, rate: f64, shape: u32, jump_rate: f64) -> PyResult<Self> {
        Self::build(drift, rate, JumpDistribution::Erlang { shape, rate: jump_rate })
    }

    #[staticmethod]
    fn hyperexponential(drift: f64, rate: f64, weights: Vec<f64>, rates: Vec<f64>) -> PyResult<Self> {
        Self::build(drift, rate, JumpDistribution::HyperExponential { weights, rates })
    }

    #[staticmethod]
    fn deterministic(drift: f64, rate: f64, size: f64) -> PyResult<Self> {
        Self::build(drift, rate, JumpDistribution::Deterministic { size })
    }

    #[getter]
    fn drift(&self) -> f64 {
        self.inner.drift
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    fn mean_drift(&self) -> f64 {
        self.inner.mean_drift()
    }

    fn laplace_exponent(&self, s: Complex64) -> PyResult<Complex64> {
        analytic::laplace_exponent(&self.inner, s).map_err(to_py)
    }

    /// Right inverse of the Laplace exponent at real `theta >= 0`.
    fn phi(&self, theta: f64) -> PyResult<f64> {
        analytic::phi_real(&self.inner, theta).map_err(to_py)
    }

    fn phi_inverse(&self, theta: Complex64) -> PyResult<Complex64> {
        analytic::phi_inverse(&self.inner, theta).map_err(to_py)
    }

    /// Pollaczek-Khinchine transform of the all-time supremum.
    fn pk_transform(&self, theta: f64) -> PyResult<f64> {
        analytic::pk_transform(&self.inner, theta).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("CompoundPoisson(drift={}, rate={}, jumps={:?})", self.inner.drift, self.inner.rate, self.inner.jumps)
    }
}

/// Two coupled companies with cross-payment rates `r1`, `r2` (`inf` allowed).
#[pyclass(name = "RiskModel", frozen, module = "coupled_risk_py")]
struct PyRiskModel {
    inner: model::RiskModel,
    transform: RiskTransform,
}

#[pymethods]
impl PyRiskModel {
    #[new]
    fn new(company1: &PyCompoundPoisson, company2: &PyCompoundPoisson, r1: f64, r2: f64) -> PyResult<Self> {
        let inner = model::RiskModel::new(
            company1.inner.clone(),
            company2.inner.clone(),
            ExtendedRate::from(r1),
            ExtendedRate::from(r2),
        );
        let transform = RiskTransform::new(&inner).map_err(to_py)?;
        Ok(PyRiskModel { inner, transform })
    }

    fn stability_class(&self) -> PyResult<String> {
        Ok(model::validate_risk(&self.inner).map_err(to_py)?.to_string())
    }

    fn abscissa(&self) -> PyResult<f64> {
        self.transform.abscissa().map_err(to_py)
    }

    /// Laplace transform of the minimal capital `U`.
    fn f1_hat(&self, s: Complex64) -> PyResult<Complex64> {
        self.transform.f1_hat(s).map_err(to_py)
    }

    fn f1(&self, s: Complex64) -> PyResult<Complex64> {
        self.transform.f1(s).map_err(to_py)
    }

    /// CDF of `U` on `u_grid` as `(u, cdf, error_estimate)` triples.
    fn invert_cdf(&self, py: Python<'_>, u_grid: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
        let t = &self.transform;
        let grid = py
            .detach(|| {
                let cfg = InversionConfig { abscissa: t.abscissa()?, ..Default::default() };
                let f = |s: f64| Ok(t.f1_hat(Complex64::new(s, 0.0))?.re);
                invert_cdf_grid(&f, &u_grid, &cfg)
            })
            .map_err(to_py)?;
        Ok(grid.points.iter().map(|p| (p.u, p.cdf, p.error_estimate)).collect())
    }

    /// Simulated draws of `U` in replica order.
    #[pyo3(signature = (replicas, seed=7))]
    fn sample_u(&self, py: Python<'_>, replicas: usize, seed: u64) -> PyResult<Vec<f64>> {
        let budget = SimulationBudget::defaults_for(&self.inner, replicas, seed);
        let s = py.detach(|| sample_u(&self.inner, &budget)).map_err(to_py)?;
        Ok(s.by_replica.into_iter().map(|(_, u)| u).collect())
    }

    /// Runs verification kinds; returns `(all_passed, reports_json)`.
    #[pyo3(signature = (suite="all", seed=7, replicas=20000, queue=None))]
    fn verify(&self, py: Python<'_>, suite: &str, seed: u64, replicas: usize, queue: Option<&PyQueueModel>) -> PyResult<(bool, String)> {
        let kinds = parse_suite(suite).map_err(to_py)?;
        let settings = VerifySettings { replicas, ..Default::default() };
        let input = VerifyInput { risk: self.inner.clone(), queue: queue.map(|q| q.inner.clone()), settings, master_seed: seed };
        let (reports, pass) = py.detach(|| run_suite(&input, &kinds)).map_err(to_py)?;
        Ok((pass, serde_json::to_string(&reports).map_err(|e| PyRuntimeError::new_err(e.to_string()))?))
    }
}

/// Two coupled queues with assistance rates `rho1`, `rho2`.
#[pyclass(name = "QueueModel", frozen, module = "coupled_risk_py")]
struct PyQueueModel {
    inner: model::QueueModel,
    transform: QueueTransform,
}

#[pymethods]
impl PyQueueModel {
    #[new]
    fn new(queue1: &PyCompoundPoisson, queue2: &PyCompoundPoisson, rho1: f64, rho2: f64) -> PyResult<Self> {
        let inner = model::QueueModel::new(queue1.inner.clone(), queue2.inner.clone(), rho1, rho2);
        let transform = QueueTransform::new(&inner).map_err(to_py)?;
        Ok(PyQueueModel { inner, transform })
    }

    fn g1(&self, s: Complex64) -> PyResult<Complex64> {
        self.transform.g1(s).map_err(to_py)
    }

    fn g1_hat(&self, s: Complex64) -> PyResult<Complex64> {
        self.transform.g1_hat(s).map_err(to_py)
    }

    /// Simulated `(s, estimate, std_error)` for the V transform, divided by its value at 0.
    #[pyo3(signature = (s_grid, seed=7, total_time=None))]
    fn estimate_v(&self, py: Python<'_>, s_grid: Vec<f64>, seed: u64, total_time: Option<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
        let mut budget = QueueBudget::defaults_for(&self.inner, seed);
        if let Some(t) = total_time {
            budget.horizon = t / budget.replicas as f64;
        }
        let est = py.detach(|| estimate_v_transform(&self.inner, &s_grid, &budget)).map_err(to_py)?;
        let norm = est.normalization.estimate;
        Ok(est.points.iter().map(|p| (p.s, p.estimate / norm, p.std_error / norm)).collect())
    }
}

/// Runs a suite for a JSON experiment config; returns `(all_passed, reports_json)`.
#[pyfunction]
#[pyo3(signature = (config_json, suite="all"))]
fn verify_config(py: Python<'_>, config_json: &str, suite: &str) -> PyResult<(bool, String)> {
    let config = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let kinds = parse_suite(suite).map_err(to_py)?;
    let input = config.verify_input().map_err(to_py)?;
    let (reports, pass) = py.detach(|| run_suite(&input, &kinds)).map_err(to_py)?;
    Ok((pass, serde_json::to_string(&reports).map_err(|e| PyRuntimeError::new_err(e.to_string()))?))
}

#[pymodule]
fn coupled_risk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCompoundPoisson>()?;
    m.add_class::<PyRiskModel>()?;
    m.add_class::<PyQueueModel>()?;
    m.add_function(wrap_pyfunction!(verify_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
