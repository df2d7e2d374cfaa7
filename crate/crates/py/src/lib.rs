//! Python bindings: kernels, environments, exact planning, beliefs and the
//! experiment runner. Config errors raise `ValueError`, everything else
//! `RuntimeError`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use steering_core::harness::{self, ExperimentConfig, ResultsBundle};
use steering_core::kernels::{
    self as k, CategoricalPmf, ConditionalModel, KernelScales, SamplePoint, StateAction,
    SteinContext,
};
use steering_core::mdp::{self, Policy, TabularMdp, WideNarrowParams};
use steering_core::posterior::{Belief as CoreBelief, NormalGamma};
use steering_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for steering_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn point((s, a, y): (usize, usize, usize)) -> SamplePoint {
    SamplePoint::new(s, a, y)
}

/// Conditional transition model `P(s' | s, a)` with rows indexed `s * A + a`.
#[pyclass(name = "Model", module = "steering", frozen)]
struct PyModel {
    inner: ConditionalModel,
}

impl PyModel {
    fn ctx(&self, x_scale: f64, y_scale: f64) -> PyResult<SteinContext<'_>> {
        SteinContext::new(
            &self.inner,
            KernelScales {
                x: x_scale,
                y: y_scale,
            },
        )
        .py()
    }
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(num_states: usize, num_actions: usize, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let rows = rows
            .into_iter()
            .map(CategoricalPmf::new)
            .collect::<steering_core::Result<Vec<_>>>()
            .py()?;
        Ok(Self {
            inner: ConditionalModel::new(num_states, num_actions, rows).py()?,
        })
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn row(&self, state: usize, action: usize) -> PyResult<Vec<f64>> {
        if state >= self.inner.num_states() || action >= self.inner.num_actions() {
            return Err(PyValueError::new_err("pair outside the model"));
        }
        Ok(self
            .inner
            .row(StateAction::new(state, action))
            .probs()
            .to_vec())
    }

    /// Stein kernel between two `(s, a, s')` points.
    #[pyo3(signature = (p, q, x_scale = 1.0, y_scale = 1.0))]
    fn stein_kernel(
        &self,
        p: (usize, usize, usize),
        q: (usize, usize, usize),
        x_scale: f64,
        y_scale: f64,
    ) -> PyResult<f64> {
        k::stein_kernel(&self.ctx(x_scale, y_scale)?, point(p), point(q)).py()
    }

    /// V-statistic DSD² of a sample list.
    #[pyo3(signature = (samples, x_scale = 1.0, y_scale = 1.0))]
    fn dsd_vstat(
        &self,
        samples: Vec<(usize, usize, usize)>,
        x_scale: f64,
        y_scale: f64,
    ) -> PyResult<f64> {
        let samples: Vec<SamplePoint> = samples.into_iter().map(point).collect();
        k::dsd_vstat(&self.ctx(x_scale, y_scale)?, &samples).py()
    }

    /// Population DSD² at `(state, action)` against a true next-state pmf.
    #[pyo3(signature = (truth, state, action, x_scale = 1.0, y_scale = 1.0))]
    fn dsd_population(
        &self,
        truth: Vec<f64>,
        state: usize,
        action: usize,
        x_scale: f64,
        y_scale: f64,
    ) -> PyResult<f64> {
        let truth = CategoricalPmf::new(truth).py()?;
        k::dsd_population_at_x(
            &self.ctx(x_scale, y_scale)?,
            &truth,
            StateAction::new(state, action),
        )
        .py()
    }

    /// Row-major Gram matrix as a list of rows.
    #[pyo3(signature = (samples, x_scale = 1.0, y_scale = 1.0))]
    fn gram(
        &self,
        samples: Vec<(usize, usize, usize)>,
        x_scale: f64,
        y_scale: f64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let samples: Vec<SamplePoint> = samples.into_iter().map(point).collect();
        let flat = k::gram_matrix(&self.ctx(x_scale, y_scale)?, &samples).py()?;
        Ok(flat
            .chunks(samples.len().max(1))
            .map(<[f64]>::to_vec)
            .collect())
    }
}

/// A finite-horizon tabular MDP.
#[pyclass(name = "Mdp", module = "steering", frozen)]
struct PyMdp {
    inner: TabularMdp,
}

/// A policy as `[h][s]` action rows.
type PolicyRows = Vec<Vec<usize>>;

fn policy_rows(p: &Policy, num_states: usize) -> PolicyRows {
    p.actions()
        .chunks(num_states)
        .map(<[usize]>::to_vec)
        .collect()
}

#[pymethods]
impl PyMdp {
    #[staticmethod]
    #[pyo3(signature = (n, delta = 0.01, horizon = None))]
    fn deepsea(n: usize, delta: f64, horizon: Option<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: mdp::deepsea(n, delta, horizon).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n = 5, w = 5, mu_h = 0.5, mu_l = 0.0, sigma = 1.0, horizon = None))]
    fn widenarrow(
        n: usize,
        w: usize,
        mu_h: f64,
        mu_l: f64,
        sigma: f64,
        horizon: Option<usize>,
    ) -> PyResult<Self> {
        let params = WideNarrowParams {
            n,
            w,
            mu_h,
            mu_l,
            sigma,
        };
        Ok(Self {
            inner: mdp::widenarrow(params, horizon).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (num_states, num_actions, horizon = None, seed = 0))]
    fn priormdp(
        num_states: usize,
        num_actions: usize,
        horizon: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: mdp::priormdp(num_states, num_actions, horizon, &mut rng).py()?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TabularMdp::from_json(text).py()?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn transition(&self) -> PyModel {
        PyModel {
            inner: self.inner.transition().clone(),
        }
    }

    fn reward_means(&self) -> Vec<f64> {
        self.inner.reward_means().to_vec()
    }

    /// Optimal policy `[h][s]` and value table `V*[h][s]`.
    fn solve(&self) -> PyResult<(PolicyRows, Vec<Vec<f64>>)> {
        let (policy, values) = mdp::dp_solve(&self.inner, None).py()?;
        let ns = self.inner.num_states();
        let v = (0..self.inner.horizon())
            .map(|h| (0..ns).map(|s| values.v(h, s)).collect())
            .collect();
        Ok((policy_rows(&policy, ns), v))
    }

    /// `E_ρ[V*_1(s)]`.
    fn optimal_value(&self) -> PyResult<f64> {
        let (_, values) = mdp::dp_solve(&self.inner, None).py()?;
        Ok(values.expected_initial_value(self.inner.init_dist()))
    }

    /// Exact expected return of a deterministic policy given as `[h][s]`,
    /// optionally mixed with uniform exploration at rate `epsilon`.
    #[pyo3(signature = (policy, epsilon = 0.0))]
    fn evaluate(&self, policy: Vec<Vec<usize>>, epsilon: f64) -> PyResult<f64> {
        let (h, ns, na) = (
            self.inner.horizon(),
            self.inner.num_states(),
            self.inner.num_actions(),
        );
        if policy.iter().any(|row| row.len() != ns) {
            return Err(PyValueError::new_err(
                "every policy row needs one action per state",
            ));
        }
        let policy = Policy::new(h, ns, na, policy.concat()).py()?;
        let values = mdp::policy_eval_epsilon(&self.inner, &policy, epsilon).py()?;
        Ok(values.expected_initial_value(self.inner.init_dist()))
    }
}

/// Dirichlet / Normal-Gamma posterior over an unknown MDP.
#[pyclass(name = "Belief", module = "steering")]
struct PyBelief {
    inner: CoreBelief,
}

#[pymethods]
impl PyBelief {
    #[new]
    #[pyo3(signature = (num_states, num_actions, eta = 1.0, mu = 0.0, lam = 4.0, alpha = 3.0, beta = 3.0))]
    fn new(
        num_states: usize,
        num_actions: usize,
        eta: f64,
        mu: f64,
        lam: f64,
        alpha: f64,
        beta: f64,
    ) -> PyResult<Self> {
        let prior = NormalGamma::new(mu, lam, alpha, beta).py()?;
        Ok(Self {
            inner: CoreBelief::new(num_states, num_actions, eta, prior).py()?,
        })
    }

    fn observe(
        &mut self,
        state: usize,
        action: usize,
        next_state: usize,
        reward: f64,
    ) -> PyResult<()> {
        self.inner.observe(state, action, next_state, reward).py()
    }

    fn counts(&self, state: usize, action: usize) -> PyResult<Vec<f64>> {
        if state >= self.inner.num_states() || action >= self.inner.num_actions() {
            return Err(PyValueError::new_err("pair outside the belief"));
        }
        Ok(self.inner.transitions().counts(state, action).to_vec())
    }

    /// `(mu, lambda, alpha, beta)` of the reward posterior at a pair.
    fn reward_params(&self, state: usize, action: usize) -> PyResult<(f64, f64, f64, f64)> {
        if state >= self.inner.num_states() || action >= self.inner.num_actions() {
            return Err(PyValueError::new_err("pair outside the belief"));
        }
        let p = self.inner.reward_params(state, action);
        Ok((p.mu, p.lambda, p.alpha, p.beta))
    }

    fn transition_variance(&self, state: usize, action: usize) -> PyResult<Vec<f64>> {
        self.inner.transition_variance(state, action).py()
    }

    #[getter]
    fn observations(&self) -> u64 {
        self.inner.observations()
    }

    fn mean_model(&self) -> PyResult<PyModel> {
        Ok(PyModel {
            inner: self.inner.mean_model().py()?,
        })
    }

    /// One posterior draw, with horizon and initial distribution from `template`.
    #[pyo3(signature = (template, seed = 0))]
    fn sample_mdp(&self, template: &PyMdp, seed: u64) -> PyResult<PyMdp> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyMdp {
            inner: self.inner.sample_mdp(&template.inner, &mut rng).py()?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreBelief::from_json(text).py()?,
        })
    }
}

/// The result of `run_experiment`.
#[pyclass(name = "Bundle", module = "steering", frozen)]
struct PyBundle {
    inner: ResultsBundle,
}

#[pymethods]
impl PyBundle {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ResultsBundle = serde_json::from_str(text).map_err(|e| py_err(e.into()))?;
        inner.check().py()?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| py_err(e.into()))
    }

    fn regret_csv(&self) -> String {
        harness::regret_csv(&self.inner)
    }

    fn dsd_csv(&self) -> String {
        harness::dsd_csv(&self.inner)
    }

    fn occupancy_csv(&self) -> String {
        harness::occupancy_csv(&self.inner)
    }

    fn qtrace_csv(&self) -> String {
        harness::qtrace_csv(&self.inner)
    }

    /// Agent labels in config order.
    fn agents(&self) -> Vec<String> {
        self.inner
            .aggregates
            .iter()
            .map(|a| a.agent.clone())
            .collect()
    }

    /// Final cumulative regret per seed for one agent.
    fn final_regrets(&self, agent: &str) -> Vec<f64> {
        self.inner
            .runs_for(agent)
            .map(|r| r.final_regret())
            .collect()
    }

    /// Seed-mean cumulative regret curve for one agent.
    fn mean_curve(&self, agent: &str) -> PyResult<Vec<f64>> {
        self.inner
            .aggregates
            .iter()
            .find(|a| a.agent == agent)
            .map(|a| a.mean_cumulative_regret.clone())
            .ok_or_else(|| PyValueError::new_err(format!("no agent `{agent}` in the bundle")))
    }

    /// Writes the CSV tables and `bundle.json` into `out_dir`.
    fn write(&self, out_dir: std::path::PathBuf) -> PyResult<Vec<std::path::PathBuf>> {
        harness::write_bundle(&self.inner, &out_dir).py()
    }
}

fn load_config(
    text: &str,
    seed: Option<u64>,
    episodes: Option<usize>,
) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::parse(text).py()?;
    cfg.apply_overrides(seed, episodes, None);
    cfg.validate().py()?;
    Ok(cfg)
}

/// Parses and validates a config in the flat `key = value` format.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<()> {
    load_config(text, None, None).map(|_| ())
}

/// Runs every `(agent, seed)` pair of a config. The GIL is released while
/// the experiment runs.
#[pyfunction]
#[pyo3(signature = (config, seed = None, episodes = None))]
fn run_experiment(
    py: Python<'_>,
    config: &str,
    seed: Option<u64>,
    episodes: Option<usize>,
) -> PyResult<PyBundle> {
    let cfg = load_config(config, seed, episodes)?;
    let inner = py.detach(|| harness::run_experiment(&cfg)).py()?;
    Ok(PyBundle { inner })
}

/// The `oracle` table: `h,s,v_star` rows and the expected initial value.
#[pyfunction]
fn oracle_table(config: &str) -> PyResult<String> {
    harness::oracle_table(&load_config(config, None, None)?).py()
}

#[pymodule]
fn steering(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyMdp>()?;
    m.add_class::<PyBelief>()?;
    m.add_class::<PyBundle>()?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_table, m)?)?;
    m.add("PMF_FLOOR", k::PMF_FLOOR)?;
    Ok(())
}
