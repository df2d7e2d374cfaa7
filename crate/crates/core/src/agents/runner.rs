use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    psrl_plan, qlearning_step, spmcmc_select, steering_plan, var_ids_plan, AgentConfig, AgentKind,
    Dictionary, Plan, QTable,
};
use crate::error::{Error, Result};
use crate::kernels::SamplePoint;
use crate::mdp::{dp_solve, Policy, TabularMdp};
use crate::posterior::Belief;

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

impl Transition {
    pub fn point(&self) -> SamplePoint {
        SamplePoint::new(self.state, self.action, self.next_state)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    /// Zero-based episode index; doubles as the id of the sampled model.
    pub episode: usize,
    pub trajectory: Vec<Transition>,
    /// The policy the agent committed to at the start of the episode.
    pub policy: Policy,
    /// Exploration rate mixed into `policy` during the rollout.
    pub epsilon: f64,
    pub sampled: Option<TabularMdp>,
    /// Points added to the dictionary after the episode.
    pub selected: Vec<SamplePoint>,
}

/// One agent's learning state for a single run.
///
/// Posterior sampling and ε-greedy draws come from the agent's own RNG;
/// environment randomness is supplied by the caller, so agents sharing a seed
/// face identical environment noise.
#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    template: TabularMdp,
    belief: Belief,
    dictionary: Dictionary,
    qtable: QTable,
    rng: ChaCha8Rng,
    episode: usize,
    optimal: Option<Policy>,
}

impl Agent {
    /// `template` fixes the shape, horizon and initial distribution; its
    /// dynamics and rewards are never read by learning agents.
    pub fn new(cfg: AgentConfig, template: &TabularMdp, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let belief = Belief::new(
            template.num_states(),
            template.num_actions(),
            cfg.eta,
            cfg.reward_prior,
        )?;
        let dictionary = Dictionary::new(cfg.dictionary_capacity)?;
        let qtable = QTable::zeros(
            template.horizon(),
            template.num_states(),
            template.num_actions(),
        );
        Ok(Self {
            cfg,
            template: template.clone(),
            belief,
            dictionary,
            qtable,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode: 0,
            optimal: None,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn qtable(&self) -> &QTable {
        &self.qtable
    }

    pub fn template(&self) -> &TabularMdp {
        &self.template
    }

    pub fn episodes_run(&self) -> usize {
        self.episode
    }

    /// The planning step for Bayesian agents (consumes agent randomness).
    pub fn plan(&mut self) -> Result<Plan> {
        match self.cfg.kind {
            AgentKind::Psrl => psrl_plan(&self.belief, &self.template, &mut self.rng),
            AgentKind::Steering => steering_plan(
                &self.belief,
                &self.template,
                &self.dictionary,
                &self.cfg,
                &mut self.rng,
            ),
            AgentKind::VarIds => {
                var_ids_plan(&self.belief, &self.template, &self.cfg, &mut self.rng)
            }
            kind => Err(Error::contract(format!(
                "{} does not plan on a posterior sample",
                kind.name()
            ))),
        }
    }

    /// Plays one episode in `env`, then updates the agent.
    pub fn run_episode<R: Rng + ?Sized>(
        &mut self,
        env: &TabularMdp,
        env_rng: &mut R,
    ) -> Result<EpisodeResult> {
        if env.num_states() != self.template.num_states()
            || env.num_actions() != self.template.num_actions()
            || env.horizon() != self.template.horizon()
        {
            return Err(Error::contract(
                "environment shape differs from the agent's template",
            ));
        }
        let result = match self.cfg.kind {
            AgentKind::Qlearning => self.qlearning_episode(env, env_rng)?,
            AgentKind::Oracle => {
                if self.optimal.is_none() {
                    self.optimal = Some(dp_solve(env, None)?.0);
                }
                let policy = self.optimal.clone().expect("set above");
                let trajectory = rollout(env, &policy, env_rng)?;
                EpisodeResult {
                    episode: self.episode,
                    trajectory,
                    policy,
                    epsilon: 0.0,
                    sampled: None,
                    selected: Vec::new(),
                }
            }
            _ => self.bayesian_episode(env, env_rng)?,
        };
        self.episode += 1;
        Ok(result)
    }

    fn bayesian_episode<R: Rng + ?Sized>(
        &mut self,
        env: &TabularMdp,
        env_rng: &mut R,
    ) -> Result<EpisodeResult> {
        let plan = self.plan()?;
        let trajectory = rollout(env, &plan.policy, env_rng)?;
        let candidates: Vec<SamplePoint> = trajectory.iter().map(Transition::point).collect();
        let selected = match self.cfg.kind {
            AgentKind::Steering => spmcmc_select(
                &candidates,
                &self.dictionary,
                plan.sampled.transition(),
                self.cfg.scales,
                self.cfg.batch_size,
            )?,
            _ => candidates.clone(),
        };
        let steering_subset =
            self.cfg.kind == AgentKind::Steering && !self.cfg.full_posterior_updates;
        if steering_subset {
            // rewards travel with the selected step; walk in time order
            let mut remaining = selected.clone();
            for t in &trajectory {
                if let Some(pos) = remaining.iter().position(|p| *p == t.point()) {
                    remaining.remove(pos);
                    self.belief
                        .observe(t.state, t.action, t.next_state, t.reward)?;
                }
            }
        } else {
            for t in &trajectory {
                self.belief
                    .observe(t.state, t.action, t.next_state, t.reward)?;
            }
        }
        for p in &selected {
            self.dictionary.push(*p);
        }
        Ok(EpisodeResult {
            episode: self.episode,
            trajectory,
            policy: plan.policy,
            epsilon: 0.0,
            sampled: Some(plan.sampled),
            selected,
        })
    }

    fn qlearning_episode<R: Rng + ?Sized>(
        &mut self,
        env: &TabularMdp,
        env_rng: &mut R,
    ) -> Result<EpisodeResult> {
        let policy = self.qtable.greedy_policy();
        let mut trajectory = Vec::with_capacity(env.horizon());
        let mut s = env.sample_initial_state(env_rng);
        for h in 0..env.horizon() {
            let a = self
                .qtable
                .epsilon_greedy(h, s, self.cfg.epsilon, &mut self.rng);
            let (next, r) = env.step(s, a, env_rng)?;
            qlearning_step(&mut self.qtable, h, s, a, r, next, self.cfg.learning_rate)?;
            trajectory.push(Transition {
                step: h,
                state: s,
                action: a,
                reward: r,
                next_state: next,
            });
            s = next;
        }
        let selected: Vec<SamplePoint> = trajectory.iter().map(Transition::point).collect();
        for p in &selected {
            self.dictionary.push(*p);
        }
        Ok(EpisodeResult {
            episode: self.episode,
            trajectory,
            policy,
            epsilon: self.cfg.epsilon,
            sampled: None,
            selected,
        })
    }
}

/// Rolls a deterministic policy for one full horizon.
pub(crate) fn rollout<R: Rng + ?Sized>(
    env: &TabularMdp,
    policy: &Policy,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    let mut trajectory = Vec::with_capacity(env.horizon());
    let mut s = env.sample_initial_state(rng);
    for h in 0..env.horizon() {
        let a = policy.action(h, s);
        let (next, reward) = env.step(s, a, rng)?;
        trajectory.push(Transition {
            step: h,
            state: s,
            action: a,
            reward,
            next_state: next,
        });
        s = next;
    }
    Ok(trajectory)
}
