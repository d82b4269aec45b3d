//! Python bindings. Genotypes cross the boundary as lists of 0/1 integers.

use std::path::PathBuf;

use edalab::dae::{DaeConfig, DaeModel};
use edalab::eda::{run_eda, EdaConfig, ModelSpec};
use edalab::gan::{GanConfig, GanModel};
use edalab::harness::{parse_config, run_sweep};
use edalab::nn::gradcheck;
use edalab::problems::{
    generate_nk_instance, load_nk_instance, save_nk_instance, Genotype, ProblemInstance,
};
use edalab::umda::MarginalModel;
use edalab::EdaRng;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn genotype(bits: Vec<u8>) -> PyResult<Genotype> {
    Genotype::new(bits).map_err(value_error)
}

fn genotypes(rows: Vec<Vec<u8>>) -> PyResult<Vec<Genotype>> {
    rows.into_iter().map(genotype).collect()
}

/// `Vec<u8>` would surface as `bytes` in Python.
fn to_list(g: Genotype) -> Vec<u32> {
    g.bits().iter().map(|&b| b as u32).collect()
}

fn to_lists(gs: Vec<Genotype>) -> Vec<Vec<u32>> {
    gs.into_iter().map(to_list).collect()
}

/// A benchmark problem instance.
#[pyclass(name = "Problem", module = "edalab_py", frozen)]
struct PyProblem {
    inner: ProblemInstance,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn onemax(n: usize) -> PyResult<Self> {
        Ok(PyProblem {
            inner: ProblemInstance::onemax(n).map_err(value_error)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, k=5))]
    fn trap(n: usize, k: usize) -> PyResult<Self> {
        Ok(PyProblem {
            inner: ProblemInstance::concat_trap(n, k).map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn hiff(n: usize) -> PyResult<Self> {
        Ok(PyProblem {
            inner: ProblemInstance::hiff(n).map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn nk(n: usize, k: usize, seed: u64) -> PyResult<Self> {
        Ok(PyProblem {
            inner: generate_nk_instance(n, k, seed).map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn load_nk(path: PathBuf) -> PyResult<Self> {
        Ok(PyProblem {
            inner: load_nk_instance(&path).map_err(value_error)?,
        })
    }

    fn save_nk(&self, path: PathBuf) -> PyResult<()> {
        save_nk_instance(&self.inner, &path).map_err(value_error)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn known_optimum(&self) -> Option<f64> {
        self.inner.known_optimum()
    }

    fn evaluate(&self, bits: Vec<u8>) -> PyResult<f64> {
        self.inner.evaluate(&genotype(bits)?).map_err(value_error)
    }

    /// Exhaustive optimum and its lowest-valued argmax (n <= 24).
    fn brute_force(&self) -> PyResult<(f64, Vec<u32>)> {
        let (best, arg) = self.inner.brute_force_optimum().map_err(value_error)?;
        Ok((best, to_list(arg)))
    }

    fn __repr__(&self) -> String {
        format!("Problem({}, n={})", self.inner.kind(), self.inner.n())
    }
}

/// Outcome of one EDA run.
#[pyclass(name = "RunRecord", module = "edalab_py", frozen, get_all)]
struct PyRunRecord {
    seed: u64,
    best_fitness: f64,
    best_fitness_per_generation: Vec<f64>,
    best_genotype: Vec<u32>,
    unique_evaluations: usize,
    generations_run: usize,
    optimum_found: bool,
    cpu_seconds: f64,
}

#[pymethods]
impl PyRunRecord {
    fn __repr__(&self) -> String {
        format!(
            "RunRecord(best_fitness={}, generations_run={}, unique_evaluations={}, optimum_found={})",
            self.best_fitness, self.generations_run, self.unique_evaluations, self.optimum_found
        )
    }
}

/// Runs one EDA. `model` is "umda", "gan" or "dae" with default hyper-parameters.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(name = "run_eda", signature = (problem, model="umda", population_size=100, truncation=0.5, max_generations=200, stall_generations=30, seed=0))]
fn py_run_eda(
    py: Python<'_>,
    problem: &PyProblem,
    model: &str,
    population_size: usize,
    truncation: f64,
    max_generations: usize,
    stall_generations: usize,
    seed: u64,
) -> PyResult<PyRunRecord> {
    let model = match model {
        "umda" => ModelSpec::Umda,
        "gan" => ModelSpec::Gan(GanConfig::default()),
        "dae" => ModelSpec::Dae(DaeConfig::default()),
        other => {
            return Err(value_error(format!(
                "unknown model '{other}', expected umda, gan or dae"
            )))
        }
    };
    let config = EdaConfig {
        population_size,
        truncation,
        max_generations,
        stall_generations,
        model,
        seed,
    };
    let instance = &problem.inner;
    let record = py
        .detach(|| run_eda(instance, &config))
        .map_err(value_error)?;
    Ok(PyRunRecord {
        seed: record.seed,
        best_fitness: record.best_fitness(),
        best_fitness_per_generation: record.best_fitness_per_generation,
        best_genotype: to_list(record.best_genotype),
        unique_evaluations: record.unique_evaluations,
        generations_run: record.generations_run,
        optimum_found: record.optimum_found,
        cpu_seconds: record.cpu_seconds,
    })
}

/// Univariate marginal model.
#[pyclass(name = "Umda", module = "edalab_py")]
struct PyUmda {
    inner: MarginalModel,
    rng: EdaRng,
}

#[pymethods]
impl PyUmda {
    #[new]
    #[pyo3(signature = (n, seed=0))]
    fn new(n: usize, seed: u64) -> PyResult<Self> {
        Ok(PyUmda {
            inner: MarginalModel::new(n).map_err(value_error)?,
            rng: EdaRng::seed_from_u64(seed),
        })
    }

    fn fit(&mut self, data: Vec<Vec<u8>>) -> PyResult<()> {
        self.inner.fit(&genotypes(data)?).map_err(value_error)
    }

    fn sample(&mut self, count: usize) -> Vec<Vec<u32>> {
        to_lists(self.inner.sample(count, &mut self.rng))
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities().to_vec()
    }
}

/// GAN model with default hyper-parameters apart from `epochs`.
#[pyclass(name = "Gan", module = "edalab_py")]
struct PyGan {
    inner: GanModel,
    rng: EdaRng,
}

#[pymethods]
impl PyGan {
    #[new]
    #[pyo3(signature = (n, epochs=None, seed=0))]
    fn new(n: usize, epochs: Option<usize>, seed: u64) -> PyResult<Self> {
        let mut config = GanConfig::default();
        if let Some(e) = epochs {
            config.epochs = e;
        }
        let mut rng = EdaRng::seed_from_u64(seed);
        Ok(PyGan {
            inner: GanModel::new(n, config, &mut rng).map_err(value_error)?,
            rng,
        })
    }

    /// Trains on the rows and returns the per-epoch discriminator and generator losses.
    fn fit(&mut self, data: Vec<Vec<u8>>) -> PyResult<Vec<(f64, f64)>> {
        let trace = self
            .inner
            .fit(&genotypes(data)?, &mut self.rng)
            .map_err(value_error)?;
        Ok(trace
            .epochs
            .iter()
            .map(|e| (e.mean_loss_d, e.mean_loss_g))
            .collect())
    }

    fn sample(&mut self, count: usize) -> PyResult<Vec<Vec<u32>>> {
        Ok(to_lists(
            self.inner
                .sample(count, &mut self.rng)
                .map_err(value_error)?,
        ))
    }

    fn discriminator_score(&self, bits: Vec<u8>) -> PyResult<f64> {
        self.inner
            .discriminator_score(&genotype(bits)?)
            .map_err(value_error)
    }
}

/// Denoising autoencoder model with default hyper-parameters apart from `epochs`.
#[pyclass(name = "Dae", module = "edalab_py")]
struct PyDae {
    inner: DaeModel,
    rng: EdaRng,
}

#[pymethods]
impl PyDae {
    #[new]
    #[pyo3(signature = (n, epochs=None, seed=0))]
    fn new(n: usize, epochs: Option<usize>, seed: u64) -> PyResult<Self> {
        let mut config = DaeConfig::default();
        if let Some(e) = epochs {
            config.epochs = e;
        }
        let mut rng = EdaRng::seed_from_u64(seed);
        Ok(PyDae {
            inner: DaeModel::new(n, config, &mut rng).map_err(value_error)?,
            rng,
        })
    }

    /// Trains on the rows and returns the per-epoch reconstruction loss.
    fn fit(&mut self, data: Vec<Vec<u8>>) -> PyResult<Vec<f64>> {
        let trace = self
            .inner
            .fit(&genotypes(data)?, &mut self.rng)
            .map_err(value_error)?;
        Ok(trace
            .epochs
            .iter()
            .map(|e| e.mean_reconstruction_loss)
            .collect())
    }

    fn reconstruct(&self, bits: Vec<u8>) -> PyResult<Vec<f64>> {
        self.inner
            .reconstruct(&genotype(bits)?)
            .map_err(value_error)
    }

    /// `count` chains started from `seeds` (cycled).
    fn sample(&mut self, count: usize, seeds: Vec<Vec<u8>>) -> PyResult<Vec<Vec<u32>>> {
        let seeds = genotypes(seeds)?;
        Ok(to_lists(
            self.inner
                .sample(count, &seeds, &mut self.rng)
                .map_err(value_error)?,
        ))
    }
}

/// Runs a sweep from configuration text and returns one dict per population size.
#[pyfunction]
#[pyo3(signature = (config_text, jobs=1))]
fn sweep<'py>(
    py: Python<'py>,
    config_text: &str,
    jobs: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = parse_config(config_text).map_err(value_error)?;
    let result = py
        .detach(|| run_sweep(&config, jobs))
        .map_err(value_error)?;
    result
        .aggregates
        .iter()
        .map(|a| {
            let d = PyDict::new(py);
            d.set_item("pop_size", a.pop_size)?;
            d.set_item("mean_best_fitness", a.mean_best_fitness)?;
            d.set_item("std_best_fitness", a.std_best_fitness)?;
            d.set_item("mean_unique_evals", a.mean_unique_evals)?;
            d.set_item("mean_cpu_seconds", a.mean_cpu_seconds)?;
            d.set_item("success_fraction", a.success_fraction)?;
            Ok(d)
        })
        .collect()
}

/// Largest backprop vs. finite-difference relative error over random networks.
#[pyfunction]
#[pyo3(name = "gradcheck", signature = (configurations=100, seed=1))]
fn py_gradcheck(configurations: usize, seed: u64) -> PyResult<f64> {
    Ok(gradcheck::run_suite(configurations, seed)
        .map_err(value_error)?
        .max_relative_error)
}

#[pymodule]
fn edalab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_class::<PyUmda>()?;
    m.add_class::<PyGan>()?;
    m.add_class::<PyDae>()?;
    m.add_function(wrap_pyfunction!(py_run_eda, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(py_gradcheck, m)?)?;
    Ok(())
}
