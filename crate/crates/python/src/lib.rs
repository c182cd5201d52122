//! Python bindings: archive access, metrics, checkpoint reconstruction and the CLI.

use std::collections::HashMap;

use h4d::dataio::read_archive;
use h4d::objectives::{chamfer as chamfer_rs, mpjpe_family};
use h4d::pipeline::{reconstruct, Checkpoint};
use h4d::tensorcore::Tensor;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: h4d::Error) -> PyErr {
    match e {
        h4d::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn cloud(points: Vec<[f32; 3]>) -> PyResult<Tensor> {
    let n = points.len();
    Tensor::new(&[n, 3], points.into_iter().flatten().collect()).map_err(py_err)
}

fn frames(frames: Vec<Vec<[f32; 3]>>) -> PyResult<Tensor> {
    let (t, j) = (frames.len(), frames.first().map_or(0, Vec::len));
    if frames.iter().any(|f| f.len() != j) {
        return Err(PyValueError::new_err("frames must have equal length"));
    }
    Tensor::new(&[t, j, 3], frames.into_iter().flatten().flatten().collect()).map_err(py_err)
}

/// `(shape, flat row-major data)`
type Flat = (Vec<usize>, Vec<f32>);

fn flat(t: &Tensor) -> Flat {
    (t.shape().to_vec(), t.data().to_vec())
}

/// Reads a tensor archive as `{name: (shape, data)}`.
#[pyfunction]
fn load_archive(path: &str) -> PyResult<HashMap<String, Flat>> {
    let a = read_archive(path).map_err(py_err)?;
    Ok(a.entries().iter().map(|(n, t)| (n.clone(), flat(t))).collect())
}

/// Symmetric Chamfer distance between two point lists.
#[pyfunction]
fn chamfer(a: Vec<[f32; 3]>, b: Vec<[f32; 3]>) -> PyResult<f64> {
    chamfer_rs(&cloud(a)?, &cloud(b)?).map_err(py_err)
}

/// `(mpjpe, pa_mpjpe, accel)` for `[T][J][3]` joint sequences.
#[pyfunction]
fn joint_errors(pred: Vec<Vec<[f32; 3]>>, gt: Vec<Vec<[f32; 3]>>) -> PyResult<(f64, f64, Option<f64>)> {
    let e = mpjpe_family(&frames(pred)?, &frames(gt)?).map_err(py_err)?;
    Ok((e.mpjpe, e.pa_mpjpe, e.accel))
}

/// Runs the command line with `args` (without the program name); returns `(code, stdout, stderr)`.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    py.detach(|| {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = h4d::cli::run(std::iter::once("h4d".to_string()).chain(args), &mut out, &mut err);
        (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
    })
}

#[pyclass(name = "Checkpoint", frozen)]
struct PyCheckpoint(Checkpoint);

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Checkpoint::load(path).map(Self).map_err(py_err)
    }

    #[getter]
    fn stage(&self) -> u8 {
        self.0.stage
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.0.model.template.shape()[0]
    }

    /// Encodes per-frame point clouds and decodes them; returns `{name: (shape, data)}`.
    fn reconstruct(&self, py: Python<'_>, points: Vec<Vec<[f32; 3]>>) -> PyResult<HashMap<String, Flat>> {
        let clouds = points.into_iter().map(cloud).collect::<PyResult<Vec<_>>>()?;
        let r = py.detach(|| reconstruct(&clouds, &self.0)).map_err(py_err)?;
        Ok([("poses", &r.poses), ("body", &r.body), ("clothed", &r.clothed), ("offsets", &r.offsets), ("joints", &r.joints)]
            .into_iter()
            .map(|(n, t)| (n.to_string(), flat(t)))
            .collect())
    }
}

#[pymodule]
fn h4d_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(load_archive, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(joint_errors, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_class::<PyCheckpoint>()?;
    Ok(())
}
