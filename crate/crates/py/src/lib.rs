//! Python bindings: programs, the interpreter, the cart-pole environment,
//! evaluation, analysis and a serial RegEvo driver.

use adaptctl::analysis::{self, Arch, LinearRecurrentModel};
use adaptctl::environment::{self as env, EnvConfig, ScheduleMode, Task};
use adaptctl::evaluation;
use adaptctl::search::{self, ConstraintSpec, RegEvo, RegEvoConfig};
use adaptctl::text;
use adaptctl::variation::{self, MutationWeights, Mutator};
use adaptctl::{Address, GenConfig, MemoryLayout, Runtime};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: adaptctl::Error) -> PyErr {
    match e {
        adaptctl::Error::StepAfterDone => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<ScheduleMode> {
    match mode.to_ascii_lowercase().as_str() {
        "stationary" => Ok(ScheduleMode::Stationary),
        "sudden" => Ok(ScheduleMode::Sudden),
        "continuous" => Ok(ScheduleMode::Continuous),
        _ => Err(PyValueError::new_err(format!("unknown mode `{mode}`"))),
    }
}

fn env_config(task: &str, mode: &str, po: bool, noise: bool) -> PyResult<EnvConfig> {
    let task: Task = task.parse().map_err(err)?;
    let mut cfg = task.config(parse_mode(mode)?);
    cfg.po = po;
    cfg.actuator_noise = noise;
    Ok(cfg)
}

/// Layout with `slots` registers per bank and 4-dimensional vectors.
fn layout(slots: usize) -> MemoryLayout {
    MemoryLayout {
        n_scalar: slots,
        n_vector: slots,
        n_matrix: slots,
        n_index: slots,
        ..MemoryLayout::default()
    }
}

/// A control program in canonical text form.
#[pyclass(name = "Program", module = "adaptctl", frozen, skip_from_py_object)]
#[derive(Clone, Debug)]
pub struct PyProgram {
    inner: adaptctl::Program,
}

#[pymethods]
impl PyProgram {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyProgram {
            inner: text::deserialize(text).map_err(err)?,
        })
    }

    /// The hand-written linear recurrent cart-pole controller.
    #[staticmethod]
    fn golden() -> Self {
        PyProgram {
            inner: adaptctl::golden_program(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (seed, slots = 16))]
    fn random(seed: u64, slots: usize) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = adaptctl::program::random_program(layout(slots), &GenConfig::default(), &mut rng).map_err(err)?;
        Ok(PyProgram { inner })
    }

    fn to_text(&self) -> String {
        text::serialize(&self.inner)
    }

    fn __str__(&self) -> String {
        self.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Program(instructions={}, cadfs={})",
            self.inner.instruction_count(),
            self.inner.cadfs.len()
        )
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    #[getter]
    fn instruction_count(&self) -> usize {
        self.inner.instruction_count()
    }

    /// Messages for every static problem; empty when the program is valid.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(ToString::to_string).collect()
    }

    /// `(parameter_count, flops_per_step)`.
    #[pyo3(signature = (obs_dim = 4, act_dim = 1))]
    fn complexity(&self, obs_dim: usize, act_dim: usize) -> (u64, u64) {
        let c = analysis::count_complexity(&self.inner, obs_dim, act_dim);
        (c.parameter_count, c.flops_per_step)
    }

    fn hash(&self) -> String {
        search::program_hash(&self.inner)
    }

    fn mutate(&self, seed: u64) -> PyResult<Self> {
        let m = Mutator::new(MutationWeights::default(), GenConfig::default(), None).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyProgram {
            inner: m.mutate(&self.inner, &mut rng),
        })
    }

    fn crossover(&self, other: &Self, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyProgram {
            inner: variation::crossover(&self.inner, &other.inner, &mut rng).map_err(err)?,
        })
    }
}

/// Interpreter state for one program across the steps of an episode.
#[pyclass(name = "Policy", module = "adaptctl")]
pub struct PyPolicy {
    runtime: Runtime<'static>,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (program, seed = 0))]
    fn new(program: &PyProgram, seed: u64) -> Self {
        PyPolicy {
            runtime: Runtime::owned(program.inner.clone(), seed),
        }
    }

    /// Runs `GetAction` on `obs` and returns the raw `s3`.
    fn action(&mut self, obs: Vec<f64>) -> f64 {
        self.runtime.get_action_scalar(&obs)
    }

    fn restart(&mut self, seed: u64) {
        self.runtime.restart(seed);
    }

    /// Contents of a main-memory register such as `"s0"` or `"v2"`.
    fn read(&self, register: &str) -> PyResult<Vec<f64>> {
        let a: Address = register.parse().map_err(PyValueError::new_err)?;
        if a.slot >= self.runtime.program().layout.count(a.bank) {
            return Err(PyValueError::new_err(format!("{register} is outside the layout")));
        }
        Ok(self.runtime.read(a))
    }

    #[getter]
    fn timestep(&self) -> u64 {
        self.runtime.timestep()
    }
}

/// One episode of the non-stationary cart-pole.
#[pyclass(name = "Cartpole", module = "adaptctl")]
pub struct PyCartpole {
    inner: env::Cartpole,
}

#[pymethods]
impl PyCartpole {
    #[new]
    #[pyo3(signature = (task = "Stationary", mode = "sudden", seed = 0, po = false, noise = false))]
    fn new(task: &str, mode: &str, seed: u64, po: bool, noise: bool) -> PyResult<Self> {
        let cfg = env_config(task, mode, po, noise)?;
        Ok(PyCartpole {
            inner: env::Cartpole::reset(&cfg, seed),
        })
    }

    fn observe(&self) -> Vec<f64> {
        self.inner.observe().to_vec()
    }

    /// Applies `action` (after actuator noise, if enabled) and returns
    /// `(reward, done)`.
    fn step(&mut self, action: f64) -> PyResult<(f64, bool)> {
        let a = self.inner.perturb(action.clamp(-1.0, 1.0));
        let out = self.inner.step(a).map_err(err)?;
        Ok((out.reward, out.done))
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn t(&self) -> u32 {
        self.inner.state.t
    }

    /// `(x, x_dot, theta, theta_dot)`.
    #[getter]
    fn state(&self) -> (f64, f64, f64, f64) {
        let s = &self.inner.state;
        (s.x, s.x_dot, s.theta, s.theta_dot)
    }

    /// `(track_angle_deg, force_mult, damping)` at the current step.
    #[getter]
    fn params(&self) -> (f64, f64, f64) {
        let p = self.inner.params();
        (p.track_angle, p.force_mult, p.damping)
    }
}

/// Mean reward and steps of `program` over `episodes` seeded episodes.
#[pyfunction]
#[pyo3(signature = (program, task = "Stationary", mode = "sudden", episodes = 100, seed = 0, po = false, noise = false))]
fn evaluate<'py>(
    py: Python<'py>,
    program: &PyProgram,
    task: &str,
    mode: &str,
    episodes: usize,
    seed: u64,
    po: bool,
    noise: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = env_config(task, mode, po, noise)?;
    let r = py
        .detach(|| evaluation::evaluate_fitness(&program.inner, &cfg, episodes, seed))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mean_reward", r.mean_reward)?;
    d.set_item("mean_steps", r.mean_steps)?;
    d.set_item("rewards", r.per_episode.iter().map(|e| e.reward).collect::<Vec<_>>())?;
    d.set_item("steps", r.per_episode.iter().map(|e| e.steps).collect::<Vec<_>>())?;
    Ok(d)
}

/// `(parameter_count, flops_per_step)` of an `"mlp"` or `"lstm"` baseline.
#[pyfunction]
fn baseline_complexity(arch: &str, d_in: u64, d: u64, d_out: u64) -> PyResult<(u64, u64)> {
    let arch = match arch.to_ascii_lowercase().as_str() {
        "mlp" => Arch::Mlp,
        "lstm" => Arch::Lstm,
        _ => return Err(PyValueError::new_err(format!("unknown architecture `{arch}`"))),
    };
    let r = analysis::baseline_complexity(arch, d_in, d, d_out).map_err(err)?;
    Ok((r.parameter_count, r.flops_per_step))
}

/// Eigenvalues `(re, im)` of the golden controller's state matrix.
#[pyfunction]
fn golden_eigenvalues() -> Vec<(f64, f64)> {
    LinearRecurrentModel::golden()
        .eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

#[pyfunction]
fn apply_fitness_constraint(reward: f64, steps: f64) -> (f64, f64) {
    search::apply_fitness_constraint(reward, steps, &ConstraintSpec::default())
}

/// Fronts of indices into `points`, best first (all objectives maximized).
#[pyfunction]
fn nondominated_sort(points: Vec<Vec<f64>>) -> Vec<Vec<usize>> {
    search::nondominated_sort(&points)
}

#[pyfunction]
fn crowding_distance(front: Vec<Vec<f64>>) -> Vec<f64> {
    search::crowding_distance(&front)
}

/// Serial RegEvo on a cart-pole task. Returns the champion and the
/// best-so-far curve as `(evaluations, best_reward)` pairs.
#[pyfunction]
#[pyo3(signature = (budget, seed = 0, task = "Stationary", mode = "sudden", population_size = 100, tournament_size = 10, episodes = 10, slots = 16))]
#[allow(clippy::too_many_arguments)]
fn evolve(
    py: Python<'_>,
    budget: u64,
    seed: u64,
    task: &str,
    mode: &str,
    population_size: usize,
    tournament_size: usize,
    episodes: usize,
    slots: usize,
) -> PyResult<(PyProgram, Vec<(u64, f64)>)> {
    let cfg = env_config(task, mode, false, false)?;
    let config = RegEvoConfig {
        population_size,
        tournament_size,
        episodes,
        ..RegEvoConfig::default()
    };
    py.detach(|| {
        let objective = search::reward_objective(cfg, episodes);
        let mutator = Mutator::new(MutationWeights::default(), GenConfig::default(), None)?;
        let mut e = RegEvo::new(config, mutator, &objective, layout(slots), seed)?;
        let mut curve = Vec::new();
        e.run(budget, |r| {
            curve.push((r.evaluations_so_far, r.best_fitness[0]));
            Ok(())
        })?;
        let champion = e.champion().map(|c| c.program.clone());
        Ok((champion, curve))
    })
    .map_err(err)
    .and_then(|(champion, curve)| match champion {
        Some(inner) => Ok((PyProgram { inner }, curve)),
        None => Err(PyRuntimeError::new_err("search produced no champion")),
    })
}

#[pymodule]
#[pyo3(name = "adaptctl")]
fn adaptctl_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProgram>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyCartpole>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(golden_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(apply_fitness_constraint, m)?)?;
    m.add_function(wrap_pyfunction!(nondominated_sort, m)?)?;
    m.add_function(wrap_pyfunction!(crowding_distance, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
