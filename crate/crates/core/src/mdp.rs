//! Finite-horizon tabular MDPs, the benchmark environments, and exact planning.
//!
//! Step indices are zero-based throughout: `h = 0` is the first decision of an
//! episode and `h = horizon - 1` the last. Values past the horizon are zero.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CategoricalPmf, ConditionalModel, StateAction};
use crate::posterior::{sample_dirichlet, NormalGamma};

pub const MDP_SCHEMA_VERSION: u32 = 1;

/// Noise added to a pair's mean reward when the environment is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardNoise {
    PointMass,
    Gaussian { std: f64 },
}

impl RewardNoise {
    /// Gaussian with the given std, or a point mass when `std == 0`.
    pub fn gaussian_or_point(std: f64) -> Self {
        if std > 0.0 {
            RewardNoise::Gaussian { std }
        } else {
            RewardNoise::PointMass
        }
    }
}

/// A complete, time-homogeneous tabular MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    horizon: usize,
    transition: ConditionalModel,
    reward_mean: Vec<f64>,
    reward_noise: Vec<RewardNoise>,
    init_dist: CategoricalPmf,
    r_max: f64,
}

impl TabularMdp {
    /// `reward_mean` and `reward_noise` are indexed `state * num_actions + action`.
    /// `r_max = None` declares the bound as the largest absolute mean reward.
    pub fn new(
        horizon: usize,
        transition: ConditionalModel,
        reward_mean: Vec<f64>,
        reward_noise: Vec<RewardNoise>,
        init_dist: CategoricalPmf,
        r_max: Option<f64>,
    ) -> Result<Self> {
        let pairs = transition.num_states() * transition.num_actions();
        if horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if reward_mean.len() != pairs || reward_noise.len() != pairs {
            return Err(Error::contract(format!(
                "reward tables must have {pairs} entries"
            )));
        }
        if init_dist.len() != transition.num_states() {
            return Err(Error::contract("initial distribution has the wrong length"));
        }
        if reward_mean.iter().any(|r| !r.is_finite()) {
            return Err(Error::contract("reward means must be finite"));
        }
        if let Some(RewardNoise::Gaussian { std }) = reward_noise.iter().find(
            |n| matches!(n, RewardNoise::Gaussian { std } if !(std.is_finite() && *std >= 0.0)),
        ) {
            return Err(Error::contract(format!("invalid reward noise std {std}")));
        }
        let observed = reward_mean.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let r_max = match r_max {
            Some(bound) if bound + 1e-12 < observed => {
                return Err(Error::contract(format!(
                    "declared r_max {bound} is below a mean reward of magnitude {observed}"
                )))
            }
            Some(bound) => bound,
            None => observed,
        };
        Ok(Self {
            horizon,
            transition,
            reward_mean,
            reward_noise,
            init_dist,
            r_max,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transition.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.transition.num_actions()
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states() * self.num_actions()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition(&self) -> &ConditionalModel {
        &self.transition
    }

    pub fn reward_means(&self) -> &[f64] {
        &self.reward_mean
    }

    pub fn reward_mean(&self, s: usize, a: usize) -> f64 {
        self.reward_mean[s * self.num_actions() + a]
    }

    pub fn reward_noise(&self, s: usize, a: usize) -> RewardNoise {
        self.reward_noise[s * self.num_actions() + a]
    }

    pub fn init_dist(&self) -> &CategoricalPmf {
        &self.init_dist
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Same horizon and initial distribution, new dynamics and rewards.
    pub fn with_model(
        &self,
        transition: ConditionalModel,
        reward_mean: Vec<f64>,
        reward_noise: Vec<RewardNoise>,
    ) -> Result<Self> {
        if transition.num_states() != self.num_states()
            || transition.num_actions() != self.num_actions()
        {
            return Err(Error::contract("replacement model has a different shape"));
        }
        Self::new(
            self.horizon,
            transition,
            reward_mean,
            reward_noise,
            self.init_dist.clone(),
            None,
        )
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        let mut m = self.clone();
        if horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        m.horizon = horizon;
        Ok(m)
    }

    /// Samples `(next state, reward)` for taking `a` in `s`.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<(usize, f64)> {
        let x = StateAction::new(s, a);
        self.transition.check_x(x)?;
        let u: f64 = rng.random();
        let next = self.transition.row(x).inverse_cdf(u);
        let mean = self.reward_mean(s, a);
        let reward = match self.reward_noise(s, a) {
            RewardNoise::PointMass => mean,
            RewardNoise::Gaussian { std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
        };
        Ok((next, reward))
    }

    pub fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.init_dist.inverse_cdf(rng.random())
    }

    fn expected_next(&self, s: usize, a: usize, next_values: &[f64]) -> f64 {
        self.transition
            .row(StateAction::new(s, a))
            .probs()
            .iter()
            .zip(next_values)
            .map(|(p, v)| p * v)
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MdpDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Flat JSON form of a [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub schema_version: u32,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub r_max: f64,
    /// Row-major `[state][action][next_state]`.
    pub transition: Vec<f64>,
    /// Row-major `[state][action]`.
    pub reward_mean: Vec<f64>,
    pub reward_noise: Vec<RewardNoise>,
    pub init_dist: Vec<f64>,
}

impl From<&TabularMdp> for MdpDocument {
    fn from(m: &TabularMdp) -> Self {
        Self {
            schema_version: MDP_SCHEMA_VERSION,
            num_states: m.num_states(),
            num_actions: m.num_actions(),
            horizon: m.horizon,
            r_max: m.r_max,
            transition: m
                .transition
                .rows()
                .iter()
                .flat_map(|r| r.probs().iter().copied())
                .collect(),
            reward_mean: m.reward_mean.clone(),
            reward_noise: m.reward_noise.clone(),
            init_dist: m.init_dist.probs().to_vec(),
        }
    }
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        if doc.schema_version != MDP_SCHEMA_VERSION {
            return Err(Error::contract(format!(
                "unsupported mdp schema version {}",
                doc.schema_version
            )));
        }
        let (s, a) = (doc.num_states, doc.num_actions);
        if doc.transition.len() != s * a * s {
            return Err(Error::contract("transition table has the wrong length"));
        }
        let rows = doc
            .transition
            .chunks(s.max(1))
            .map(|c| CategoricalPmf::try_from(c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let model = ConditionalModel::new(s, a, rows)?;
        TabularMdp::new(
            doc.horizon,
            model,
            doc.reward_mean,
            doc.reward_noise,
            CategoricalPmf::try_from(doc.init_dist)?,
            Some(doc.r_max),
        )
    }
}

pub const DEEPSEA_LEFT: usize = 0;
pub const DEEPSEA_RIGHT: usize = 1;

/// DeepSea chain with `n` states: swimming right succeeds with probability
/// `1 - 1/n` and otherwise drifts left. State `n - 1` is the goal; swimming
/// right there pays 1 and a success returns the agent to state 0. Every other
/// right move costs `delta` in expectation with `N(-delta, delta²)` noise.
/// Left moves are free and move one state left (state 0 loops on itself).
pub fn deepsea(n: usize, delta: f64, horizon: Option<usize>) -> Result<TabularMdp> {
    if n < 2 {
        return Err(Error::config(
            "env.N",
            format!("DeepSea needs N >= 2, got {n}"),
        ));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::config(
            "env.delta",
            format!("must be >= 0, got {delta}"),
        ));
    }
    let success = 1.0 - 1.0 / n as f64;
    let fail = 1.0 / n as f64;
    let mut rows = Vec::with_capacity(2 * n);
    let mut reward_mean = Vec::with_capacity(2 * n);
    let mut reward_noise = Vec::with_capacity(2 * n);
    for s in 0..n {
        let left_of = s.saturating_sub(1);

        let mut left = vec![0.0; n];
        left[left_of] = 1.0;
        rows.push(CategoricalPmf::new(left)?);
        reward_mean.push(0.0);
        reward_noise.push(RewardNoise::PointMass);

        let mut right = vec![0.0; n];
        if s + 1 < n {
            right[s + 1] += success;
            right[left_of] += fail;
            reward_mean.push(-delta);
            reward_noise.push(RewardNoise::gaussian_or_point(delta));
        } else {
            right[0] += success;
            right[left_of] += fail;
            reward_mean.push(1.0);
            reward_noise.push(RewardNoise::PointMass);
        }
        rows.push(CategoricalPmf::new(right)?);
    }
    let model = ConditionalModel::new(n, 2, rows)?;
    TabularMdp::new(
        horizon.unwrap_or(n),
        model,
        reward_mean,
        reward_noise,
        CategoricalPmf::point_mass(n, 0)?,
        None,
    )
}

/// Parameters of the WideNarrow chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WideNarrowParams {
    pub n: usize,
    pub w: usize,
    pub mu_h: f64,
    pub mu_l: f64,
    pub sigma: f64,
}

impl Default for WideNarrowParams {
    fn default() -> Self {
        Self {
            n: 5,
            w: 5,
            mu_h: 0.5,
            mu_l: 0.0,
            sigma: 1.0,
        }
    }
}

/// WideNarrow chain of `2n + 1` states with deterministic forward moves.
///
/// Wide states (even ids, except the last state) offer `w` actions; action 0
/// pays `N(mu_l, sigma²)` and the rest `N(mu_h, sigma²)`. Narrow states (odd ids
/// and the last state) have a single effective action: all `w` action slots are
/// identical copies paying `N(mu_h, sigma²)`. The last state wraps to state 0.
pub fn widenarrow(p: WideNarrowParams, horizon: Option<usize>) -> Result<TabularMdp> {
    if p.n < 1 {
        return Err(Error::config("env.N", "WideNarrow needs N >= 1"));
    }
    if p.w < 2 {
        return Err(Error::config("env.W", "WideNarrow needs W >= 2"));
    }
    if !(p.sigma.is_finite() && p.sigma >= 0.0) {
        return Err(Error::config("env.sigma", "must be >= 0"));
    }
    if !(p.mu_h.is_finite() && p.mu_l.is_finite()) {
        return Err(Error::config("env.mu_h", "reward means must be finite"));
    }
    let num_states = 2 * p.n + 1;
    let mut rows = Vec::with_capacity(num_states * p.w);
    let mut reward_mean = Vec::with_capacity(num_states * p.w);
    for s in 0..num_states {
        let wide = s % 2 == 0 && s + 1 < num_states;
        let next = (s + 1) % num_states;
        for a in 0..p.w {
            rows.push(CategoricalPmf::point_mass(num_states, next)?);
            reward_mean.push(if wide && a == 0 { p.mu_l } else { p.mu_h });
        }
    }
    let model = ConditionalModel::new(num_states, p.w, rows)?;
    let noise = vec![RewardNoise::gaussian_or_point(p.sigma); num_states * p.w];
    TabularMdp::new(
        horizon.unwrap_or(num_states),
        model,
        reward_mean,
        noise,
        CategoricalPmf::point_mass(num_states, 0)?,
        None,
    )
}

/// Concentration of the PriorMDP transition prior.
pub const PRIOR_MDP_CONCENTRATION: f64 = 1.0;

/// Normal-Gamma prior of the PriorMDP reward model.
pub const PRIOR_MDP_REWARD_PRIOR: NormalGamma = NormalGamma {
    mu: 0.0,
    lambda: 1.0,
    alpha: 1.0,
    beta: 4.0,
};

/// Random MDP: each row ~ Dirichlet(1, ..., 1); each pair's reward mean and
/// precision drawn from NormalGamma(0, 1, 1, 4). Pairs are drawn in row-major
/// order, row first, then precision, then mean.
pub fn priormdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: Option<usize>,
    rng: &mut R,
) -> Result<TabularMdp> {
    if num_states < 2 {
        return Err(Error::config("env.S", "PriorMDP needs S >= 2"));
    }
    if num_actions < 2 {
        return Err(Error::config("env.A", "PriorMDP needs A >= 2"));
    }
    let pairs = num_states * num_actions;
    let alpha = vec![PRIOR_MDP_CONCENTRATION; num_states];
    let mut rows = Vec::with_capacity(pairs);
    let mut reward_mean = Vec::with_capacity(pairs);
    let mut reward_noise = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        rows.push(sample_dirichlet(&alpha, rng)?);
        let (mean, precision) = PRIOR_MDP_REWARD_PRIOR.sample(rng)?;
        reward_mean.push(mean);
        reward_noise.push(RewardNoise::gaussian_or_point(1.0 / precision.sqrt()));
    }
    let model = ConditionalModel::new(num_states, num_actions, rows)?;
    TabularMdp::new(
        horizon.unwrap_or(num_states),
        model,
        reward_mean,
        reward_noise,
        CategoricalPmf::point_mass(num_states, 0)?,
        None,
    )
}

/// Deterministic non-stationary policy: one action per `(step, state)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: Vec<usize>,
    ) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::contract("policy table has the wrong length"));
        }
        if let Some(a) = actions.iter().find(|a| **a >= num_actions) {
            return Err(Error::contract(format!(
                "policy action {a} outside [0, {num_actions})"
            )));
        }
        Ok(Self {
            horizon,
            num_states,
            actions,
        })
    }

    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            horizon,
            num_states,
            actions: vec![action; horizon * num_states],
        }
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// `V[h][s]` and `Q[h][s][a]` for `h` in `0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTables {
    fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            v: vec![0.0; horizon * num_states],
            q: vec![0.0; horizon * num_states * num_actions],
        }
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Values at the first step.
    pub fn initial_values(&self) -> &[f64] {
        &self.v[..self.num_states]
    }

    /// `E_{s ~ init}[V_0(s)]`.
    pub fn expected_initial_value(&self, init: &CategoricalPmf) -> f64 {
        self.initial_values()
            .iter()
            .zip(init.probs())
            .map(|(v, p)| v * p)
            .sum()
    }

    fn v_row(&self, h: usize) -> &[f64] {
        &self.v[h * self.num_states..(h + 1) * self.num_states]
    }
}

fn check_bonus(mdp: &TabularMdp, bonus: Option<&[f64]>) -> Result<()> {
    if let Some(b) = bonus {
        if b.len() != mdp.num_pairs() {
            return Err(Error::contract(format!(
                "bonus has {} entries, expected {}",
                b.len(),
                mdp.num_pairs()
            )));
        }
    }
    Ok(())
}

/// Backward induction on `r(s,a) + bonus(s,a) + Σ P(s'|s,a) V_{h+1}(s')`.
/// Ties go to the lowest action id.
pub fn dp_solve(mdp: &TabularMdp, bonus: Option<&[f64]>) -> Result<(Policy, ValueTables)> {
    check_bonus(mdp, bonus)?;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut tables = ValueTables::zeros(horizon, ns, na);
    let mut actions = vec![0usize; horizon * ns];
    let terminal = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let next: Vec<f64> = if h + 1 < horizon {
            tables.v_row(h + 1).to_vec()
        } else {
            terminal.clone()
        };
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let pair = s * na + a;
                let mut q = mdp.reward_mean[pair];
                if let Some(b) = bonus {
                    q += b[pair];
                }
                q += mdp.expected_next(s, a, &next);
                tables.q[(h * ns + s) * na + a] = q;
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            tables.v[h * ns + s] = best;
            actions[h * ns + s] = best_a;
        }
    }
    Ok((
        Policy {
            horizon,
            num_states: ns,
            actions,
        },
        tables,
    ))
}

fn check_policy(mdp: &TabularMdp, policy: &Policy) -> Result<()> {
    if policy.horizon != mdp.horizon() || policy.num_states != mdp.num_states() {
        return Err(Error::contract("policy shape does not match the MDP"));
    }
    if policy.actions.iter().any(|a| *a >= mdp.num_actions()) {
        return Err(Error::contract("policy uses an action the MDP lacks"));
    }
    Ok(())
}

/// Exact value of a deterministic policy.
pub fn policy_eval(mdp: &TabularMdp, policy: &Policy) -> Result<ValueTables> {
    policy_eval_epsilon(mdp, policy, 0.0)
}

/// Exact value of the ε-greedy mixture around `policy`: with probability ε the
/// action is uniform over all actions, otherwise the policy's action.
pub fn policy_eval_epsilon(mdp: &TabularMdp, policy: &Policy, epsilon: f64) -> Result<ValueTables> {
    check_policy(mdp, policy)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::contract(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut tables = ValueTables::zeros(horizon, ns, na);
    let terminal = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let next: Vec<f64> = if h + 1 < horizon {
            tables.v_row(h + 1).to_vec()
        } else {
            terminal.clone()
        };
        for s in 0..ns {
            let mut mean_q = 0.0;
            for a in 0..na {
                let q = mdp.reward_mean[s * na + a] + mdp.expected_next(s, a, &next);
                tables.q[(h * ns + s) * na + a] = q;
                mean_q += q;
            }
            let greedy = tables.q[(h * ns + s) * na + policy.action(h, s)];
            tables.v[h * ns + s] = if epsilon == 0.0 {
                greedy
            } else {
                (1.0 - epsilon) * greedy + epsilon * mean_q / na as f64
            };
        }
    }
    Ok(tables)
}

/// Probability of visiting each `(s, a)` at each step under `policy`,
/// indexed `[h][s][a]`, starting from the initial distribution.
pub fn occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut out = vec![0.0; horizon * ns * na];
    let mut dist = mdp.init_dist().probs().to_vec();
    for h in 0..horizon {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let a = policy.action(h, s);
            out[(h * ns + s) * na + a] = dist[s];
            for (sp, p) in mdp
                .transition
                .row(StateAction::new(s, a))
                .probs()
                .iter()
                .enumerate()
            {
                next[sp] += dist[s] * p;
            }
        }
        dist = next;
    }
    Ok(out)
}
