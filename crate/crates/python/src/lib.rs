//! Python bindings. Matrices travel as lists of rows.

use accelmc::chain::{self, BaseDynamics, EnsembleSpec, GeneratorMatrix, Observable, ProbabilityMeasure};
use accelmc::diffusion::{self, DensityField, MobilitySpec, PeriodicGrid, PotentialSpec, TrigMode};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: accelmc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Generator of a finite-state continuous-time chain.
#[pyclass(name = "Generator", module = "accelmc_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyGenerator {
    inner: GeneratorMatrix,
}

#[pymethods]
impl PyGenerator {
    /// Builds from full rows; the diagonal must make each row sum to zero.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: GeneratorMatrix::from_rows(&rows).map_err(py_err)? })
    }

    /// Builds from off-diagonal rates; the diagonal is filled in.
    #[staticmethod]
    fn from_rates(rates: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rates.len();
        let mut rows = rates;
        for (i, row) in rows.iter_mut().enumerate() {
            if row.len() != n {
                return Err(PyValueError::new_err("rate matrix must be square"));
            }
            row[i] = 0.0;
            row[i] = -row.iter().sum::<f64>();
        }
        Self::new(rows)
    }

    #[staticmethod]
    fn two_state(a: f64, b: f64) -> PyResult<Self> {
        Ok(Self { inner: GeneratorMatrix::two_state(a, b).map_err(py_err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        let m = self.inner.matrix();
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        Ok(chain::stationary_measure(&self.inner).map_err(py_err)?.weights().to_vec())
    }

    fn spectral_gap(&self) -> PyResult<f64> {
        Ok(chain::spectral_gap(&self.inner).map_err(py_err)?.gap)
    }

    /// Asymptotic variance of the ergodic average of `f` under `pi` (default: stationary).
    #[pyo3(signature = (f, pi=None))]
    fn asymptotic_variance(&self, f: Vec<f64>, pi: Option<Vec<f64>>) -> PyResult<f64> {
        let pi = self.measure(pi)?;
        chain::asymptotic_variance(&self.inner, &pi, &Observable::new(f).map_err(py_err)?).map_err(py_err)
    }

    /// Donsker-Varadhan rate of the empirical measure `mu`.
    fn dv_rate(&self, mu: Vec<f64>) -> PyResult<f64> {
        let mu = ProbabilityMeasure::new(mu).map_err(py_err)?;
        Ok(chain::dv_rate_chain(&self.inner, &mu).map_err(py_err)?.value)
    }

    /// Rate of the ergodic average of `f` at level `ell`.
    fn observable_rate(&self, f: Vec<f64>, ell: f64) -> PyResult<f64> {
        let f = Observable::new(f).map_err(py_err)?;
        Ok(chain::observable_rate(&self.inner, &f, ell).map_err(py_err)?.value)
    }

    /// `(lambda, lambda', lambda'')` of the tilted generator at `beta`.
    fn tilted_eigenvalue(&self, f: Vec<f64>, beta: f64) -> PyResult<(f64, f64, f64)> {
        let f = Observable::new(f).map_err(py_err)?;
        let r = chain::tilted_eigenvalue(&self.inner, &f, beta).map_err(py_err)?;
        Ok((r.lambda, r.derivative, r.second_derivative))
    }

    /// Replicated Gillespie estimate: `(mean, scaled_variance, std_error)`.
    fn simulate_variance(&self, f: Vec<f64>, t: f64, replicas: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
        let pi = self.measure(None)?;
        let f = Observable::new(f).map_err(py_err)?;
        let e = chain::replicated_variance(&self.inner, &pi, &f, t, replicas, seed).map_err(py_err)?;
        Ok((e.mean, e.scaled_variance, e.std_error))
    }

    /// Adds a perturbation matrix given as rows.
    fn perturb(&self, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let p = chain::Perturbation::from_rows(&rows).map_err(py_err)?;
        Ok(Self { inner: self.inner.perturb(&p).map_err(py_err)? })
    }

    fn __repr__(&self) -> String {
        format!("Generator(n={})", self.inner.n())
    }
}

impl PyGenerator {
    fn measure(&self, pi: Option<Vec<f64>>) -> PyResult<ProbabilityMeasure> {
        match pi {
            Some(w) => ProbabilityMeasure::new(w).map_err(py_err),
            None => chain::stationary_measure(&self.inner).map_err(py_err),
        }
    }
}

/// Random comparison instance: dict with generators `base`, `peskun`, `cycle`, `combined`,
/// plus `pi` and `observable`.
#[pyfunction]
#[pyo3(signature = (seed, dynamics="glauber"))]
fn random_instance<'py>(py: Python<'py>, seed: u64, dynamics: &str) -> PyResult<Bound<'py, PyDict>> {
    let dyn_ = match dynamics {
        "glauber" => BaseDynamics::Glauber,
        "metropolis" => BaseDynamics::Metropolis,
        other => return Err(PyValueError::new_err(format!("unknown dynamics {other:?}"))),
    };
    let inst = chain::random_instance(seed, dyn_, &EnsembleSpec::default()).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("base", PyGenerator { inner: inst.base.clone() })?;
    d.set_item("peskun", PyGenerator { inner: inst.reversible().map_err(py_err)? })?;
    d.set_item("cycle", PyGenerator { inner: inst.irreversible().map_err(py_err)? })?;
    d.set_item("combined", PyGenerator { inner: inst.combined().map_err(py_err)? })?;
    d.set_item("pi", inst.pi.weights().to_vec())?;
    d.set_item("observable", inst.observable.values().to_vec())?;
    Ok(d)
}

fn potential(name: &str, temperature: f64) -> PyResult<PotentialSpec> {
    match name {
        "cosine-1d" => PotentialSpec::cosine_1d(temperature),
        "cosine-2d" => PotentialSpec::cosine_2d(temperature),
        "two-well-2d" => PotentialSpec::two_well_2d(temperature),
        other => return Err(PyValueError::new_err(format!("unknown potential {other:?}"))),
    }
    .map_err(py_err)
}

fn mobility(name: &str, param: f64) -> PyResult<MobilitySpec> {
    match name {
        "identity" => Ok(MobilitySpec::identity()),
        "constant" => MobilitySpec::constant(param).map_err(py_err),
        "sin-squared" => Ok(MobilitySpec::sin_squared(param)),
        other => Err(PyValueError::new_err(format!("unknown mobility {other:?}"))),
    }
}

fn drift(pot: &PotentialSpec, delta: f64) -> PyResult<Option<diffusion::IrreversibleDrift>> {
    if delta == 0.0 {
        return Ok(None);
    }
    diffusion::solenoidal_drift(pot, diffusion::rotation(delta)).map(Some).map_err(py_err)
}

/// Grid rates of the density `1 + amplitude sin(x1)` under the baseline, mobility-perturbed and
/// fully perturbed diffusions, with the two correction integrals.
#[pyfunction]
#[pyo3(signature = (potential_name="cosine-2d", temperature=1.0, mobility_name="identity", mobility_param=1.0, delta=0.0, nodes=32, amplitude=0.3))]
#[allow(clippy::too_many_arguments)]
fn compare_rates<'py>(
    py: Python<'py>,
    potential_name: &str,
    temperature: f64,
    mobility_name: &str,
    mobility_param: f64,
    delta: f64,
    nodes: usize,
    amplitude: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let pot = potential(potential_name, temperature)?;
    let mob = mobility(mobility_name, mobility_param)?;
    let irr = drift(&pot, delta)?;
    let g = PeriodicGrid::uniform(*pot.domain(), nodes).map_err(py_err)?;
    let dens = DensityField::trigonometric(&g, &[TrigMode::sin([1, 0], amplitude)]).map_err(py_err)?;
    let r = diffusion::compare_rates(&g, &pot, &mob, irr.as_ref(), &dens).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("baseline", r.baseline.value)?;
    d.set_item("reversible", r.reversible.value)?;
    d.set_item("full", r.full.value)?;
    d.set_item("correction_reversible", r.correction_reversible)?;
    d.set_item("correction_irreversible", r.correction_irreversible)?;
    Ok(d)
}

/// Replicated Euler-Maruyama estimate for `f = sin(x1)`: `(mean, scaled_variance, std_error)`.
#[pyfunction]
#[pyo3(signature = (t, dt, replicas, seed, potential_name="cosine-1d", temperature=1.0, mobility_name="identity", mobility_param=1.0, delta=0.0))]
#[allow(clippy::too_many_arguments)]
fn simulate_diffusion_variance(
    t: f64,
    dt: f64,
    replicas: usize,
    seed: u64,
    potential_name: &str,
    temperature: f64,
    mobility_name: &str,
    mobility_param: f64,
    delta: f64,
) -> PyResult<(f64, f64, f64)> {
    let pot = potential(potential_name, temperature)?;
    let mob = mobility(mobility_name, mobility_param)?;
    let irr = drift(&pot, delta)?;
    let f = |x: &diffusion::Point| x[0].sin();
    let e = diffusion::replicated_variance_sde(&pot, &mob, irr.as_ref(), &f, t, dt, replicas, seed).map_err(py_err)?;
    Ok((e.mean, e.scaled_variance, e.std_error))
}

#[pymodule]
fn accelmc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenerator>()?;
    m.add_function(wrap_pyfunction!(random_instance, m)?)?;
    m.add_function(wrap_pyfunction!(compare_rates, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_diffusion_variance, m)?)?;
    Ok(())
}
