//! Python bindings: curves, problems, direct and reflection solves, the
//! kappa criterion, projection-lab helpers and the experiment driver.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::reflect2d::bvp::{BoundaryCondition, Discretization, DirectSolution, ProblemSpec};
use ::reflect2d::config::{ConfigFile, ExperimentKind};
use ::reflect2d::experiments::{run_config as run_experiment, ExperimentConfig, FormChoice, Overrides};
use ::reflect2d::geometry::{make_circle, make_cshape, BoundaryCurve, GeometryLayout, Point};
use ::reflect2d::potentials::{evaluate_field, Want};
use ::reflect2d::projection::{self, IterationKind, SubspaceBasis};
use ::reflect2d::reflections::{kappa_from_metrics, run_reflections, ReflectionOptions};
use ::reflect2d::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Singular(_) | Error::Subproblem { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Closed boundary curve sampled at equispaced parameter nodes.
#[pyclass(name = "Curve", frozen, from_py_object)]
#[derive(Clone)]
struct PyCurve(Arc<BoundaryCurve>);

#[pymethods]
impl PyCurve {
    #[staticmethod]
    fn circle(cx: f64, cy: f64, radius: f64, n_nodes: usize) -> PyResult<Self> {
        Ok(Self(Arc::new(make_circle(Point::new(cx, cy), radius, n_nodes).map_err(py_err)?)))
    }

    /// Annular sector with the opening of half-angle `half_angle` facing +x.
    #[staticmethod]
    fn cshape(cx: f64, cy: f64, r_inner: f64, r_outer: f64, half_angle: f64, n_nodes: usize) -> PyResult<Self> {
        Ok(Self(Arc::new(
            make_cshape(Point::new(cx, cy), r_inner, r_outer, half_angle, n_nodes).map_err(py_err)?,
        )))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.0.nodes().iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn normals(&self) -> Vec<(f64, f64)> {
        self.0.normals().iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn perimeter(&self) -> f64 {
        self.0.perimeter()
    }
}

fn condition(kind: &str, data: &Bound<'_, PyAny>) -> PyResult<BoundaryCondition> {
    Ok(match kind {
        "dirichlet" => BoundaryCondition::Dirichlet(data.extract()?),
        "neumann" => BoundaryCondition::Neumann(data.extract()?),
        "fourth" => BoundaryCondition::FourthType { flux: data.extract()? },
        other => return Err(PyValueError::new_err(format!("unknown boundary condition `{other}`"))),
    })
}

/// Discretised boundary value problem.
///
/// `conditions` is a list of `(kind, data)` with kind `"dirichlet"` or
/// `"neumann"` (data: one value per node) or `"fourth"` (data: flux).
#[pyclass(name = "Problem", frozen)]
struct PyProblem(Discretization);

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (objects, conditions, container=None))]
    fn new(
        objects: Vec<PyCurve>,
        conditions: Vec<(String, Bound<'_, PyAny>)>,
        container: Option<PyCurve>,
    ) -> PyResult<Self> {
        let conds = conditions
            .iter()
            .map(|(k, d)| condition(k, d))
            .collect::<PyResult<Vec<_>>>()?;
        let layout = GeometryLayout {
            container: container.map(|c| c.0),
            objects: objects.into_iter().map(|c| c.0).collect(),
        };
        let spec = ProblemSpec::new(layout, conds).map_err(py_err)?;
        Ok(Self(Discretization::new(spec).map_err(py_err)?))
    }

    fn solve_direct(&self) -> PyResult<PySolution> {
        Ok(PySolution(self.0.solve_direct().map_err(py_err)?))
    }

    /// Run one reflection form (`"seq"`, `"par"`, `"avg"`) against the
    /// direct solution; returns a dict summarising the convergence report.
    #[pyo3(signature = (form, max_cycles=100, tol=1e-8, seed=0))]
    fn reflect<'py>(
        &self,
        py: Python<'py>,
        form: &str,
        max_cycles: usize,
        tol: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let choice: FormChoice = form.parse().map_err(PyValueError::new_err)?;
        let direct = self.0.solve_direct().map_err(py_err)?;
        let opts = ReflectionOptions {
            max_cycles,
            tol,
            seed,
            ..Default::default()
        };
        let (_, report) = run_reflections(&self.0, choice.form(self.0.object_count()), &opts, Some(&direct.field))
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("status", report.status.to_string())?;
        d.set_item("cycles", report.cycles)?;
        d.set_item("final_error", report.final_error)?;
        d.set_item("errors", report.errors)?;
        d.set_item("contraction", report.contraction.map(|c| c.k))?;
        d.set_item("max_correction_residual", report.max_correction_residual)?;
        Ok(d)
    }
}

#[pyclass(name = "Solution", frozen)]
struct PySolution(DirectSolution);

#[pymethods]
impl PySolution {
    /// Field values at off-curve points.
    fn evaluate(&self, points: Vec<(f64, f64)>) -> PyResult<Vec<f64>> {
        let pts: Vec<Point> = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        Ok(evaluate_field(&self.0.field, &pts, Want::Value).map_err(py_err)?.values)
    }

    /// Unknown boundary constants of fourth-type objects (`None` otherwise).
    #[getter]
    fn constants(&self) -> Vec<Option<f64>> {
        self.0.constants.clone()
    }

    #[getter]
    fn relative_residual(&self) -> f64 {
        self.0.relative_residual
    }

    #[getter]
    fn condition(&self) -> f64 {
        self.0.condition
    }
}

/// Returns `(kappa, n(n-1)kappa, satisfied)`.
#[pyfunction]
#[pyo3(signature = (perimeters, distances, c=None))]
fn kappa_criterion(perimeters: Vec<f64>, distances: Vec<Vec<f64>>, c: Option<Vec<f64>>) -> PyResult<(f64, f64, bool)> {
    let n = perimeters.len();
    let c = c.unwrap_or_else(|| vec![1.0; n]);
    let r = kappa_from_metrics(&perimeters, &distances, &c, n).map_err(py_err)?;
    Ok((r.kappa, r.product, r.satisfied))
}

fn basis(columns: Vec<Vec<f64>>) -> PyResult<SubspaceBasis> {
    let cols: Vec<nalgebra::DVector<f64>> = columns.into_iter().map(nalgebra::DVector::from_vec).collect();
    SubspaceBasis::from_columns(&cols).map_err(py_err)
}

/// Cosine of the Friedrichs angle between two spans (lists of columns).
#[pyfunction]
fn friedrichs_cosine(m1: Vec<Vec<f64>>, m2: Vec<Vec<f64>>) -> PyResult<f64> {
    projection::friedrichs_cosine(&basis(m1)?, &basis(m2)?).map_err(py_err)
}

/// `‖T^j − P_∩‖` for `j = 1..k`, with `kind` `"alternating"` or
/// `"averaged"` (equal weights).
#[pyfunction]
fn error_operator_norms(kind: &str, subspaces: Vec<Vec<Vec<f64>>>, k: usize) -> PyResult<Vec<f64>> {
    let ps = subspaces
        .into_iter()
        .map(|s| basis(s).map(|b| projection::orth_projector(&b)))
        .collect::<PyResult<Vec<_>>>()?;
    let kind = match kind {
        "alternating" => IterationKind::Alternating,
        "averaged" => IterationKind::Averaged(vec![1.0 / ps.len() as f64; ps.len()]),
        other => return Err(PyValueError::new_err(format!("unknown iteration `{other}`"))),
    };
    projection::error_operator_norms(&kind, &ps, k).map_err(py_err)
}

/// Projector onto the intersection of the given spans, as a nested list.
#[pyfunction]
fn intersection_projector(subspaces: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let bases = subspaces.into_iter().map(basis).collect::<PyResult<Vec<_>>>()?;
    let p: DMatrix<f64> = projection::intersection_projector(&bases).map_err(py_err)?.0;
    Ok(p.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Run an experiment from config text; returns `(exit_code, files, lines)`.
#[pyfunction]
#[pyo3(signature = (kind, out_dir, config_text="", seed=None, max_cycles=None))]
fn run_config(
    kind: &str,
    out_dir: PathBuf,
    config_text: &str,
    seed: Option<u64>,
    max_cycles: Option<usize>,
) -> PyResult<(i32, Vec<String>, Vec<String>)> {
    let kind: ExperimentKind = kind.parse().map_err(PyValueError::new_err)?;
    let file = ConfigFile::parse(config_text).map_err(py_err)?;
    let overrides = Overrides {
        seed,
        max_cycles,
        ..Default::default()
    };
    let cfg = ExperimentConfig::new(Some(kind), file, overrides).map_err(py_err)?;
    let out = run_experiment(&cfg, &out_dir).map_err(py_err)?;
    Ok((
        out.exit_code(false),
        out.files.iter().map(|p| p.display().to_string()).collect(),
        out.lines,
    ))
}

#[pymodule(name = "reflect2d")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCurve>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(kappa_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(friedrichs_cosine, m)?)?;
    m.add_function(wrap_pyfunction!(error_operator_norms, m)?)?;
    m.add_function(wrap_pyfunction!(intersection_projector, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
