use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use plasmode::geometry::{self, BoundaryMesh, Shape};
use plasmode::resonance::{self, DrudeMaterial, LogBranch};
use plasmode::{cli, kernels, spectral, specfun, timedomain, Error};

create_exception!(plasmode_py, NumericalError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) => NumericalError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn shape_from(kind: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Shape> {
    let get = |key: &str, default: f64| -> PyResult<f64> {
        match params.map(|p| p.get_item(key)).transpose()?.flatten() {
            Some(v) => v.extract(),
            None => Ok(default),
        }
    };
    Ok(match kind {
        "ellipse" => Shape::Ellipse { a: get("a", 1.0)?, b: get("b", 5.0)? },
        "diamond" => Shape::Diamond { scale: get("scale", 2.0)?, amp: get("amp", 0.066)? },
        "flower" => Shape::Flower { base: get("base", 2.0)?, amp: get("amp", 0.6)?, petals: get("petals", 5.0)? as u32 },
        "disk" => Shape::Disk { radius: get("radius", 1.0)? },
        other => return Err(PyValueError::new_err(format!("unknown shape `{other}`"))),
    })
}

/// Drude metal in a homogeneous background; defaults are the reference constants.
#[pyclass(name = "Material")]
#[derive(Clone)]
struct PyMaterial {
    inner: DrudeMaterial,
}

#[pymethods]
impl PyMaterial {
    #[new]
    #[pyo3(signature = (omega_p=None, collision_time=None, eps0=None, mu0=None, eps_m=None))]
    fn new(
        omega_p: Option<f64>,
        collision_time: Option<f64>,
        eps0: Option<f64>,
        mu0: Option<f64>,
        eps_m: Option<f64>,
    ) -> PyResult<Self> {
        let d = DrudeMaterial::default();
        let inner = DrudeMaterial {
            omega_p: omega_p.unwrap_or(d.omega_p),
            t_collision: collision_time.unwrap_or(d.t_collision),
            eps0: eps0.unwrap_or(d.eps0),
            mu0: mu0.unwrap_or(d.mu0),
            eps_m: eps_m.or(eps0).unwrap_or(d.eps_m),
        };
        inner.validate().map_err(to_py)?;
        Ok(PyMaterial { inner })
    }

    #[getter]
    fn omega_p(&self) -> f64 {
        self.inner.omega_p
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c()
    }

    fn permittivity(&self, omega: Complex64) -> PyResult<Complex64> {
        resonance::permittivity(&self.inner, omega).map_err(to_py)
    }

    fn contrast(&self, omega: Complex64) -> PyResult<Complex64> {
        resonance::contrast(&self.inner, omega).map_err(to_py)
    }

    fn static_resonances(&self, lam: f64) -> PyResult<(Complex64, Complex64)> {
        let r = resonance::static_resonances(&self.inner, lam).map_err(to_py)?;
        Ok((r.plus, r.minus))
    }
}

/// Discretised boundary of a reference-domain particle.
#[pyclass(name = "Mesh")]
struct PyMesh {
    inner: BoundaryMesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (shape, n=256, params=None))]
    fn new(shape: &str, n: usize, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let curve = geometry::build_shape(shape_from(shape, params)?).map_err(to_py)?;
        Ok(PyMesh { inner: geometry::discretize(&curve, n).map_err(to_py)? })
    }

    /// Mesh from a file of `x1 x2` lines sampled counterclockwise.
    #[staticmethod]
    #[pyo3(signature = (path, n=256))]
    fn from_curve_file(path: PathBuf, n: usize) -> PyResult<Self> {
        let pts = geometry::load_custom_curve(&path).map_err(to_py)?;
        let curve = geometry::build_shape(Shape::Custom { points: pts }).map_err(to_py)?;
        Ok(PyMesh { inner: geometry::discretize(&curve, n).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes.iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn normals(&self) -> Vec<(f64, f64)> {
        self.inner.normals.iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn hash(&self) -> String {
        self.inner.hash().to_string()
    }

    fn perimeter(&self) -> f64 {
        self.inner.perimeter()
    }

    fn contains(&self, x: (f64, f64)) -> bool {
        self.inner.contains([x.0, x.1])
    }
}

/// Neumann-Poincare eigenpairs, H*-normalised.
#[pyclass(name = "Spectrum")]
struct PySpectrum {
    inner: spectral::NPSpectrum,
    alphas: Vec<f64>,
}

#[pymethods]
impl PySpectrum {
    #[new]
    #[pyo3(signature = (mesh, j=30))]
    fn new(mesh: &PyMesh, j: usize) -> PyResult<Self> {
        let inner = spectral::spectrum_for_mesh(&mesh.inner, j).map_err(to_py)?;
        let alphas = spectral::alpha_coefficients(&inner, &kernels::assemble_s_b11(&mesh.inner)).map_err(to_py)?;
        Ok(PySpectrum { inner, alphas })
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambdas.clone()
    }

    /// alpha_j for j = 1..=J.
    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.alphas.clone()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    fn density(&self, j: usize) -> PyResult<Vec<f64>> {
        if j > self.inner.mode_count() {
            return Err(PyValueError::new_err(format!("mode {j} beyond J = {}", self.inner.mode_count())));
        }
        Ok(self.inner.density(j))
    }

    /// <d.nu, phi_j>_{H*} for j = 0..=J.
    fn coefficients(&self, d: (f64, f64)) -> Vec<f64> {
        spectral::mode_coefficients(&self.inner, [d.0, d.1])
    }

    /// Corrected resonances as a list of dicts, one per mode.
    #[pyo3(signature = (material, delta=1e-8, branch="mirror", polish=false))]
    fn resonances<'py>(
        &self,
        py: Python<'py>,
        material: &PyMaterial,
        delta: f64,
        branch: &str,
        polish: bool,
    ) -> PyResult<(f64, f64, Vec<Bound<'py, PyDict>>)> {
        let branch = match branch {
            "mirror" => LogBranch::Mirror,
            "principal" => LogBranch::Principal,
            b => return Err(PyValueError::new_err(format!("branch must be mirror or principal, got {b}"))),
        };
        let set = resonance::resonance_set_2d(&material.inner, &self.inner.lambdas[1..], &self.alphas, delta, branch, polish)
            .map_err(to_py)?;
        let rows = set
            .modes
            .iter()
            .map(|m| {
                let d = PyDict::new(py);
                d.set_item("j", m.j)?;
                d.set_item("lambda", m.lambda)?;
                d.set_item("alpha", m.alpha)?;
                d.set_item("omega_plus", m.corrected.plus.omega)?;
                d.set_item("omega_minus", m.corrected.minus.omega)?;
                d.set_item("c_plus", m.c_plus)?;
                d.set_item("c_minus", m.c_minus)?;
                Ok(d)
            })
            .collect::<PyResult<_>>()?;
        Ok((set.radius, set.ratio, rows))
    }
}

#[pyclass(name = "Pulse")]
struct PyPulse {
    inner: timedomain::Pulse,
}

#[pymethods]
impl PyPulse {
    #[new]
    #[pyo3(signature = (c1=timedomain::DEFAULT_C1))]
    fn new(c1: f64) -> PyResult<Self> {
        Ok(PyPulse { inner: timedomain::Pulse::new(c1).map_err(to_py)? })
    }

    fn value(&self, t: f64) -> f64 {
        self.inner.value(t)
    }

    fn spectrum(&self, omega: Complex64) -> PyResult<Complex64> {
        self.inner.spectrum(omega).map_err(to_py)
    }
}

/// Full boundary solve for one incidence; fields are in reference-domain units.
#[pyclass(name = "BoundarySolver")]
struct PyBoundarySolver {
    inner: timedomain::BoundarySolver,
}

#[pymethods]
impl PyBoundarySolver {
    #[new]
    #[pyo3(signature = (mesh, material, delta=1e-8, d=(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2), z=(0.0, 0.0)))]
    fn new(mesh: &PyMesh, material: &PyMaterial, delta: f64, d: (f64, f64), z: (f64, f64)) -> PyResult<Self> {
        let inner = timedomain::BoundarySolver::new(&mesh.inner, material.inner, delta, [d.0, d.1], [z.0, z.1]).map_err(to_py)?;
        Ok(PyBoundarySolver { inner })
    }

    /// Scattered field at exterior points for unit incident amplitude.
    fn scattered_field(&self, py: Python<'_>, omega: f64, points: Vec<(f64, f64)>) -> PyResult<Vec<Complex64>> {
        let pts: Vec<[f64; 2]> = points.iter().map(|p| [p.0, p.1]).collect();
        py.allow_threads(|| {
            let sol = self.inner.solve(omega, Complex64::new(1.0, 0.0))?;
            self.inner.scattered_field(omega, &sol.psi, &pts)
        })
        .map_err(to_py)
    }
}

#[pyfunction]
fn hankel1_0(z: Complex64) -> PyResult<Complex64> {
    Ok(specfun::hankel1_0(z).map_err(to_py)?.value)
}

/// Runs a scenario config; returns the list of files written.
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn run_config(py: Python<'_>, config: PathBuf, out: Option<PathBuf>) -> PyResult<Vec<String>> {
    py.allow_threads(|| {
        let cfg = cli::parse_config(&config)?;
        cli::run(&cfg, &cli::RunOptions { out_dir: out, ..Default::default() })
    })
    .map(|m| m.outputs)
    .map_err(to_py)
}

#[pymodule]
fn plasmode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMaterial>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyPulse>()?;
    m.add_class::<PyBoundarySolver>()?;
    m.add_function(wrap_pyfunction!(hankel1_0, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_parameters() {
        assert_eq!(shape_from("ellipse", None).unwrap(), Shape::ellipse());
        assert_eq!(shape_from("diamond", None).unwrap(), Shape::diamond());
        assert_eq!(shape_from("flower", None).unwrap(), Shape::flower());
    }
}
