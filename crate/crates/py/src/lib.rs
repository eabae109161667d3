//! Python bindings: case parsing, both solvers, dataset generation,
//! training and evaluation.

use std::path::PathBuf;

use gridnewton::acopf::{cost, StateVector};
use gridnewton::dataset::{generate_dataset, read_dataset, write_dataset, DatasetConfig};
use gridnewton::eval::{evaluate as eval_model, write_metrics_csv, Backend, Learned, Reference};
use gridnewton::grid::{derive_seeds, parse_case, perturb_loads, Feasibility, Network, Scenario};
use gridnewton::learned::{
    contraction_modulus, fit, load_model, project_contraction, save_model, CompiledMlp, FitConfig,
    TrainingConfig,
};
use gridnewton::solver::{IterationTrace, SolverOptions};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: gridnewton::Error) -> PyErr {
    match e {
        gridnewton::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    net: Network,
}

impl PyNetwork {
    fn scenario(&self, pd: Option<Vec<f64>>, qd: Option<Vec<f64>>) -> PyResult<Scenario> {
        let base = self.net.base_scenario();
        let sc = Scenario {
            pd: pd.unwrap_or(base.pd),
            qd: qd.unwrap_or(base.qd),
            seed: 0,
            feasible: Feasibility::Unknown,
        };
        sc.check_dims(&self.net).map_err(err)?;
        Ok(sc)
    }
}

#[pymethods]
impl PyNetwork {
    /// Parse a MATPOWER-style case file.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            net: parse_case(text).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.net.name.clone()
    }

    #[getter]
    fn n_bus(&self) -> usize {
        self.net.n_bus()
    }

    #[getter]
    fn n_gen(&self) -> usize {
        self.net.n_gen()
    }

    #[getter]
    fn n_load(&self) -> usize {
        self.net.n_load()
    }

    #[getter]
    fn n_state(&self) -> usize {
        self.net.n_state()
    }

    #[getter]
    fn case_hash(&self) -> String {
        self.net.case_hash().to_string()
    }

    /// `(pd, qd)` in MW/MVAr with every component drawn within `±range`.
    fn perturb(&self, seed: u64, range: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let sc = perturb_loads(&self.net, seed, range).map_err(err)?;
        Ok((sc.pd, sc.qd))
    }

    /// Reference interior-point solve from flat start; loads default to the case.
    #[pyo3(signature = (pd=None, qd=None, tol=1e-4, max_iter=200))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        pd: Option<Vec<f64>>,
        qd: Option<Vec<f64>>,
        tol: f64,
        max_iter: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sc = self.scenario(pd, qd)?;
        let r = Reference::new(SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        });
        let (x, trace) = py.detach(|| r.solve(&self.net, &sc)).map_err(err)?;
        result(py, r.name(), &self.net, &x, &trace)
    }
}

fn result<'py>(
    py: Python<'py>,
    backend: &str,
    net: &Network,
    x: &StateVector,
    t: &IterationTrace,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("backend", backend)?;
    d.set_item("status", format!("{:?}", t.status))?;
    d.set_item("iterations", t.iterations())?;
    d.set_item("cost", cost(net, x))?;
    d.set_item("v", x.v.clone())?;
    d.set_item("theta", x.theta.clone())?;
    d.set_item("pg", x.pg.clone())?;
    d.set_item("qg", x.qg.clone())?;
    d.set_item("step_norms", t.step_norms.clone())?;
    Ok(d)
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    model: CompiledMlp,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            model: CompiledMlp::new(load_model(&path).map_err(err)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(self.model.params(), &path).map_err(err)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.model.params().dims;
        (d.inputs, d.hidden, d.outputs)
    }

    /// Lipschitz bound of the iteration map.
    fn contraction<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = contraction_modulus(self.model.params());
        let d = PyDict::new(py);
        d.set_item("c", r.c)?;
        d.set_item("c_star", r.c_star)?;
        d.set_item("n_nodes", r.n_nodes)?;
        d.set_item("is_contraction", r.is_contraction)?;
        Ok(d)
    }

    /// Copy with weights clipped so the map contracts with modulus ≤ `margin`.
    fn project(&self, margin: f64) -> PyResult<Self> {
        if !(margin > 0.0 && margin < 1.0) {
            return Err(PyValueError::new_err("margin must lie in (0, 1)"));
        }
        Ok(PyModel {
            model: CompiledMlp::new(project_contraction(self.model.params(), margin)),
        })
    }

    /// Fixed-point iteration from flat start; loads default to the case.
    #[pyo3(signature = (net, pd=None, qd=None, tol=1e-4, max_iter=200))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        net: &PyNetwork,
        pd: Option<Vec<f64>>,
        qd: Option<Vec<f64>>,
        tol: f64,
        max_iter: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sc = net.scenario(pd, qd)?;
        let l = Learned::new(&self.model, tol, max_iter);
        let (x, trace) = py.detach(|| l.solve(&net.net, &sc)).map_err(err)?;
        result(py, l.name(), &net.net, &x, &trace)
    }
}

/// Harvest iteration pairs into `out_dir/<name>.pairs.bin` and its manifest.
#[pyfunction]
#[pyo3(signature = (net, out_dir, n_scenarios=1000, seed=0, range=0.4, tol=1e-9, name="train"))]
fn generate<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    out_dir: PathBuf,
    n_scenarios: usize,
    seed: u64,
    range: f64,
    tol: f64,
    name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = DatasetConfig {
        n_scenarios,
        seed,
        range,
        solver: SolverOptions::with_tol(tol),
    };
    let data = py
        .detach(|| generate_dataset(&net.net, &cfg))
        .map_err(err)?;
    write_dataset(&data, &out_dir, name).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n_pairs", data.len())?;
    d.set_item("n_feasible", data.manifest.n_feasible)?;
    d.set_item("n_scenarios", n_scenarios)?;
    Ok(d)
}

/// Train on a harvested dataset and return the best-validation model.
#[pyfunction]
#[pyo3(signature = (net, data_dir, name="train", epochs=100, seed=0, hidden=None, learning_rate=1e-3, batch_size=64, project=None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    net: &PyNetwork,
    data_dir: PathBuf,
    name: &str,
    epochs: usize,
    seed: u64,
    hidden: Option<usize>,
    learning_rate: f64,
    batch_size: usize,
    project: Option<f64>,
) -> PyResult<PyModel> {
    let data = read_dataset(&data_dir, name).map_err(err)?;
    let cfg = FitConfig {
        hidden,
        project,
        training: TrainingConfig {
            epochs,
            seed,
            learning_rate,
            batch_size,
            ..TrainingConfig::default()
        },
        ..FitConfig::default()
    };
    let out = py.detach(|| fit(&net.net, &data, &cfg)).map_err(err)?;
    Ok(PyModel {
        model: CompiledMlp::new(out.params),
    })
}

/// Metrics on `count` fresh scenarios; writes `metrics.csv` when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (model, net, count=100, seed=1, range=0.4, tol=1e-4, max_iter=200, out_dir=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    model: &PyModel,
    net: &PyNetwork,
    count: usize,
    seed: u64,
    range: f64,
    tol: f64,
    max_iter: usize,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let scs = derive_seeds(seed, count)
        .into_iter()
        .map(|s| perturb_loads(&net.net, s, range))
        .collect::<gridnewton::Result<Vec<_>>>()
        .map_err(err)?;
    let rep = py
        .detach(|| eval_model(&model.model, &net.net, &scs, tol, max_iter))
        .map_err(err)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        write_metrics_csv(&rep, &dir.join("metrics.csv")).map_err(err)?;
    }
    let d = PyDict::new(py);
    d.set_item("mape_cost", rep.mape_cost)?;
    d.set_item("mae_v", rep.mae_v)?;
    d.set_item("mae_p", rep.mae_p)?;
    d.set_item("mean_violation", rep.mean_violation)?;
    d.set_item("convergence_rate", rep.convergence_rate)?;
    d.set_item("clamp_violations", rep.clamp_violations)?;
    d.set_item("n_ref_failed", rep.n_ref_failed)?;
    Ok(d)
}

#[pymodule]
fn gridnewton_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
