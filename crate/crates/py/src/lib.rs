//! Python bindings: grids, measures, potentials, the elliptic and parabolic
//! solvers, the source iteration and the command-line entry point.
//!
//! Fields cross the boundary as flat lists in cell order; structured
//! reports come back as dicts.

use plaplab::elliptic::{check_enca, solve_elliptic, EllipticProblem};
use plaplab::parabolic::{levelset_decay_check, solve_parabolic, ParabolicProblem, Perturbation};
use plaplab::pipelines::{self, iterate_power_source, smallness_constants};
use plaplab::potential::{self, maximal_field, wolff_field, RadialQuadrature, DEFAULT_NODES};
use plaplab::{Error, Field, GridSpec, Nonlinearity};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Invalid { .. } => PyValueError::new_err(e.to_string()),
        Error::BlowUp { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(x: &[f64]) -> PyResult<[f64; 2]> {
    match x {
        [a] => Ok([*a, 0.0]),
        [a, b] => Ok([*a, *b]),
        _ => Err(PyValueError::new_err("points need 1 or 2 coordinates")),
    }
}

/// Cell-centred space-time grid on an interval or rectangle.
#[pyclass(frozen, skip_from_py_object, module = "plaplab")]
#[derive(Clone, Copy)]
struct Grid(plaplab::Grid);

#[pymethods]
impl Grid {
    #[staticmethod]
    #[pyo3(signature = (lo, hi, cells, t_final = 1.0, steps = 1))]
    fn interval(lo: f64, hi: f64, cells: usize, t_final: f64, steps: usize) -> PyResult<Self> {
        GridSpec::interval(lo, hi, cells, t_final, steps).build().map(Grid).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (bounds, cells, t_final = 1.0, steps = 1))]
    fn rectangle(bounds: [[f64; 2]; 2], cells: [usize; 2], t_final: f64, steps: usize) -> PyResult<Self> {
        GridSpec::rectangle(bounds, cells, t_final, steps).build().map(Grid).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.0.n_cells()
    }

    #[getter]
    fn diameter(&self) -> f64 {
        self.0.diameter()
    }

    /// Cell centres; 1D grids give `[x]`, 2D grids `[x, y]`.
    fn centers(&self) -> Vec<Vec<f64>> {
        let d = self.0.dim();
        self.0.centers().map(|c| c[..d].to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, cells={}, steps={})", self.0.dim(), self.0.n_cells(), self.0.steps())
    }
}

impl Grid {
    fn field(&self, values: Vec<f64>) -> PyResult<Field> {
        Field::new(self.0, values).map_err(err)
    }
}

/// Finite measure on the grid domain: atoms plus a cellwise density.
#[pyclass(frozen, skip_from_py_object, module = "plaplab")]
#[derive(Clone)]
struct SpatialMeasure(plaplab::SpatialMeasure);

#[pymethods]
impl SpatialMeasure {
    #[new]
    #[pyo3(signature = (grid, density = None))]
    fn new(grid: &Grid, density: Option<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(match density {
            Some(d) => plaplab::SpatialMeasure::from_density(&grid.field(d)?),
            None => plaplab::SpatialMeasure::zero(grid.0),
        }))
    }

    #[staticmethod]
    fn dirac(grid: &Grid, x: Vec<f64>, mass: f64) -> PyResult<Self> {
        plaplab::SpatialMeasure::dirac(grid.0, point(&x)?, mass).map(Self).map_err(err)
    }

    /// New measure with an extra atom.
    fn with_atom(&self, x: Vec<f64>, mass: f64) -> PyResult<Self> {
        let mut m = self.0.clone();
        m.push_atom(point(&x)?, mass).map_err(err)?;
        Ok(Self(m))
    }

    fn scale(&self, c: f64) -> Self {
        Self(self.0.scale(c))
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.0.add(&other.0).map(Self).map_err(err)
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    #[getter]
    fn total_variation(&self) -> f64 {
        self.0.total_variation()
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid(*self.0.grid())
    }

    /// Density after mollification at level `n` (radius `max(2h, D/n)`).
    fn mollified_density(&self, n: usize) -> Vec<f64> {
        self.0.mollify(n).density().to_vec()
    }
}

/// Finite measure on the space-time cylinder.
#[pyclass(frozen, skip_from_py_object, module = "plaplab")]
#[derive(Clone)]
struct SpaceTimeMeasure(plaplab::SpaceTimeMeasure);

#[pymethods]
impl SpaceTimeMeasure {
    #[new]
    #[pyo3(signature = (grid, density = None))]
    fn new(grid: &Grid, density: Option<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(match density {
            Some(d) => {
                let f = plaplab::SpaceTimeField::new(grid.0, d).map_err(err)?;
                plaplab::SpaceTimeMeasure::from_density(&f)
            }
            None => plaplab::SpaceTimeMeasure::zero(grid.0),
        }))
    }

    #[staticmethod]
    fn dirac(grid: &Grid, x: Vec<f64>, t: f64, mass: f64) -> PyResult<Self> {
        plaplab::SpaceTimeMeasure::dirac(grid.0, point(&x)?, t, mass).map(Self).map_err(err)
    }

    /// `ω ⊗ F` with one profile value per time step.
    #[staticmethod]
    fn product(omega: &SpatialMeasure, profile: Vec<f64>) -> PyResult<Self> {
        plaplab::SpaceTimeMeasure::product(&omega.0, &profile).map(Self).map_err(err)
    }

    fn with_atom(&self, x: Vec<f64>, t: f64, mass: f64) -> PyResult<Self> {
        let mut m = self.0.clone();
        m.push_atom(point(&x)?, t, mass).map_err(err)?;
        Ok(Self(m))
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    #[getter]
    fn total_variation(&self) -> f64 {
        self.0.total_variation()
    }
}

/// Parabolic solution: per-step fields and diagnostics.
#[pyclass(frozen, skip_from_py_object, module = "plaplab")]
struct Solution(plaplab::parabolic::Solution);

#[pymethods]
impl Solution {
    /// Field at the end of step `n` (0-based).
    fn step(&self, n: usize) -> PyResult<Vec<f64>> {
        if n >= self.0.grid().steps() {
            return Err(PyValueError::new_err(format!("step {n} out of range")));
        }
        Ok(self.0.u.step(n).to_vec())
    }

    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        (0..self.0.grid().steps()).map(|n| self.0.u.step(n).to_vec()).collect()
    }

    #[getter]
    fn sup(&self) -> f64 {
        self.0.u.norm_inf()
    }

    /// `∫_Q |c G(u)|`.
    #[getter]
    fn g_mass(&self) -> f64 {
        self.0.g_mass()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.steps)
    }

    /// Level-set decay fit against the given data mass.
    fn decay_fit<'py>(&self, py: Python<'py>, data_mass: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &levelset_decay_check(&self.0, data_mass).map_err(err)?)
    }
}

#[pyfunction]
fn exponents<'py>(py: Python<'py>, n: usize, p: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &potential::exponents(n, p).map_err(err)?)
}

#[pyfunction]
fn delta0(p: f64, beta: f64) -> PyResult<f64> {
    potential::delta0(p, beta).map_err(err)
}

/// Truncated exponential `E(s) = e^s − Σ_{j<l} s^j/j!`.
#[pyfunction]
fn e_function(s: f64, l: u32) -> PyResult<f64> {
    pipelines::e_function(s, l).map_err(err)
}

#[pyfunction]
fn smallness<'py>(py: Python<'py>, n: usize, p: f64, q: f64, k: f64, d: f64, m_hat: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &smallness_constants(n, p, q, k, d, m_hat).map_err(err)?)
}

fn quadrature(omega: &plaplab::SpatialMeasure, nodes: Option<usize>) -> RadialQuadrature {
    let g = omega.grid();
    RadialQuadrature::for_grid(g, 2.0 * g.diameter()).with_nodes(nodes.unwrap_or(DEFAULT_NODES))
}

/// `W^{2D}_{1,p}[ω]` at every cell centre.
#[pyfunction]
#[pyo3(signature = (omega, p, nodes = None))]
fn wolff(py: Python<'_>, omega: &SpatialMeasure, p: f64, nodes: Option<usize>) -> PyResult<Vec<f64>> {
    let om = omega.0.clone();
    py.detach(move || wolff_field(&om, p, &quadrature(&om, nodes)))
        .map(|f| f.values().to_vec())
        .map_err(err)
}

/// `M^η_{p,2D}[ω]` at every cell centre.
#[pyfunction]
#[pyo3(signature = (omega, p, eta, nodes = None))]
fn maximal(py: Python<'_>, omega: &SpatialMeasure, p: f64, eta: f64, nodes: Option<usize>) -> PyResult<Vec<f64>> {
    let om = omega.0.clone();
    py.detach(move || maximal_field(&om, p, eta, &quadrature(&om, nodes)))
        .map(|f| f.values().to_vec())
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (omega, p, tol = 1e-9))]
fn elliptic(py: Python<'_>, omega: &SpatialMeasure, p: f64, tol: f64) -> PyResult<Vec<f64>> {
    let prob = EllipticProblem::new(omega.0.clone(), p);
    py.detach(move || solve_elliptic(&prob, tol)).map(Field::into_values).map_err(err)
}

/// `(holds, κ̂)` for the two-sided Wolff bound.
#[pyfunction]
#[pyo3(signature = (u, omega, p, kappa_cap = f64::INFINITY))]
fn enca(u: Vec<f64>, omega: &SpatialMeasure, p: f64, kappa_cap: f64) -> PyResult<(bool, f64)> {
    let u = Field::new(*omega.0.grid(), u).map_err(err)?;
    let c = check_enca(&u, &omega.0, p, kappa_cap).map_err(err)?;
    Ok((c.holds, c.kappa))
}

/// Solves the parabolic problem; `absorption` / `source` take a power `q`
/// and coefficient `coef`.
#[pyfunction]
#[pyo3(signature = (mu, p, u0 = None, absorption = None, source = None, coef = 1.0, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn parabolic(
    py: Python<'_>,
    mu: &SpaceTimeMeasure,
    p: f64,
    u0: Option<Vec<f64>>,
    absorption: Option<f64>,
    source: Option<f64>,
    coef: f64,
    tol: f64,
) -> PyResult<Solution> {
    let g = *mu.0.grid();
    let u0 = match u0 {
        Some(v) => Field::new(g, v).map_err(err)?,
        None => Field::zeros(g),
    };
    let perturbation = match (absorption, source) {
        (None, None) => Perturbation::None,
        (Some(q), None) => Perturbation::Absorption { g: Nonlinearity::Power { q }, coef },
        (None, Some(q)) => Perturbation::Source { g: Nonlinearity::Power { q }, coef },
        _ => return Err(PyValueError::new_err("give at most one of absorption and source")),
    };
    let prob = ParabolicProblem::new(mu.0.clone(), u0, p).with_perturbation(perturbation);
    py.detach(move || solve_parabolic(&prob, tol)).map(Solution).map_err(err)
}

/// Monotone iteration for the power source with data `ω ⊗ χ_(0,T)`.
#[pyfunction]
#[pyo3(signature = (omega, p, q, lambda_, kappa, m_hat, m_max = 30, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn power_source<'py>(
    py: Python<'py>,
    omega: &SpatialMeasure,
    p: f64,
    q: f64,
    lambda_: f64,
    kappa: f64,
    m_hat: f64,
    m_max: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let om = omega.0.clone();
    let run = py
        .detach(move || -> plaplab::Result<_> {
            let g = *om.grid();
            let c = smallness_constants(g.dim(), p, q, kappa, g.diameter(), m_hat)?;
            let mu = plaplab::SpaceTimeMeasure::product(&om, &vec![1.0; g.steps()])?;
            iterate_power_source(&om, &mu, &Field::zeros(g), p, &c, lambda_, m_max, tol)
        })
        .map_err(err)?;
    to_py(py, &run.trace)
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(move || plaplab::cli::main(std::iter::once("plaplab".to_string()).chain(args)))
}

#[pymodule]
fn plaplab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<SpatialMeasure>()?;
    m.add_class::<SpaceTimeMeasure>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(exponents, m)?)?;
    m.add_function(wrap_pyfunction!(delta0, m)?)?;
    m.add_function(wrap_pyfunction!(e_function, m)?)?;
    m.add_function(wrap_pyfunction!(smallness, m)?)?;
    m.add_function(wrap_pyfunction!(wolff, m)?)?;
    m.add_function(wrap_pyfunction!(maximal, m)?)?;
    m.add_function(wrap_pyfunction!(elliptic, m)?)?;
    m.add_function(wrap_pyfunction!(enca, m)?)?;
    m.add_function(wrap_pyfunction!(parabolic, m)?)?;
    m.add_function(wrap_pyfunction!(power_source, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
