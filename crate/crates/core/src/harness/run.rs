use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentConfig};
use crate::error::{Error, Result};
use crate::harness::config::{
    stream_rng, ExperimentConfig, MetricsConfig, STREAM_ENV_NOISE, STREAM_METRICS,
};
use crate::kernels::{
    dsd_population_at_x, ConditionalModel, KernelScales, StateAction, SteinContext,
};
use crate::mdp::{dp_solve, policy_eval, policy_eval_epsilon, TabularMdp};
use crate::posterior::Belief;

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsdRow {
    pub episode: usize,
    pub s: usize,
    pub a: usize,
    pub dsd2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub window_start: usize,
    pub window_end: usize,
    pub s: usize,
    pub a: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTraceRow {
    pub episode: usize,
    pub s: usize,
    pub a: usize,
    pub q_mean: f64,
    pub q_std: f64,
    pub q_star: f64,
}

/// Everything measured in one `(agent, seed)` run.
///
/// Episodes are numbered from 1 in every table. Trace rows at episode `e`
/// describe the belief after `e` episodes of data; episode 0 is the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub agent: String,
    pub seed: u64,
    /// `E_ρ[V*_1 − V_{π_k,1}]` before clipping; may dip to about −1e-15.
    pub raw_regret: Vec<f64>,
    pub per_episode_regret: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub dsd: Vec<DsdRow>,
    pub occupancy: Vec<OccupancyRow>,
    pub qtrace: Vec<QTraceRow>,
}

impl RunMetrics {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// Mean and standard deviation of cumulative regret over seeds, per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub agent: String,
    pub mean_cumulative_regret: Vec<f64>,
    pub std_cumulative_regret: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub runs: Vec<RunMetrics>,
    pub aggregates: Vec<Aggregate>,
}

impl ResultsBundle {
    pub fn runs_for<'a>(&'a self, agent: &'a str) -> impl Iterator<Item = &'a RunMetrics> + 'a {
        self.runs.iter().filter(move |r| r.agent == agent)
    }

    /// Recomputes the aggregates from the per-seed runs and compares them
    /// with the stored ones.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::Bundle(format!(
                "schema version {} (this build reads {BUNDLE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let fresh = aggregate(&self.config, &self.runs)?;
        if fresh.len() != self.aggregates.len() {
            return Err(Error::Bundle(
                "aggregate count does not match the runs".into(),
            ));
        }
        for (a, b) in fresh.iter().zip(&self.aggregates) {
            let close = |x: &[f64], y: &[f64]| {
                x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-12)
            };
            if a.agent != b.agent
                || !close(&a.mean_cumulative_regret, &b.mean_cumulative_regret)
                || !close(&a.std_cumulative_regret, &b.std_cumulative_regret)
            {
                return Err(Error::Bundle(format!(
                    "aggregates for `{}` differ from the runs",
                    b.agent
                )));
            }
        }
        Ok(())
    }
}

fn aggregate(cfg: &ExperimentConfig, runs: &[RunMetrics]) -> Result<Vec<Aggregate>> {
    let mut out = Vec::with_capacity(cfg.agents.len());
    for spec in &cfg.agents {
        let curves: Vec<&[f64]> = runs
            .iter()
            .filter(|r| r.agent == spec.label)
            .map(|r| r.cumulative_regret.as_slice())
            .collect();
        let k = curves.first().map_or(0, |c| c.len());
        if curves.is_empty() || curves.iter().any(|c| c.len() != k) {
            return Err(Error::Bundle(format!(
                "runs for `{}` are missing or uneven",
                spec.label
            )));
        }
        let n = curves.len() as f64;
        let mut mean = Vec::with_capacity(k);
        let mut std = Vec::with_capacity(k);
        for e in 0..k {
            let m = curves.iter().map(|c| c[e]).sum::<f64>() / n;
            let var = curves.iter().map(|c| (c[e] - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt());
        }
        out.push(Aggregate {
            agent: spec.label.clone(),
            mean_cumulative_regret: mean,
            std_cumulative_regret: std,
        });
    }
    Ok(out)
}

/// Runs every `(agent, seed)` pair and collects the metrics in config order.
///
/// Nothing is written to disk; see [`crate::harness::write_bundle`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsBundle> {
    cfg.validate()?;
    let items: Vec<(usize, u64)> = (0..cfg.agents.len())
        .flat_map(|a| cfg.seeds.iter().map(move |s| (a, *s)))
        .collect();
    let work = || {
        items
            .par_iter()
            .map(|(a, s)| run_one(cfg, *a, *s))
            .collect::<Result<Vec<_>>>()
    };
    let runs = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::contract(format!("worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let aggregates = aggregate(cfg, &runs)?;
    Ok(ResultsBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        config: cfg.clone(),
        runs,
        aggregates,
    })
}

/// One agent on one seed.
pub fn run_one(cfg: &ExperimentConfig, agent_index: usize, seed: u64) -> Result<RunMetrics> {
    let spec = cfg
        .agents
        .get(agent_index)
        .ok_or_else(|| Error::contract(format!("no agent at index {agent_index}")))?;
    let env = cfg.env.build(cfg.horizon, seed)?;
    let episodes = cfg.episodes_for(env.horizon());
    let agent_cfg = spec.resolved(cfg.kernel, env.num_states(), env.horizon());
    let mut agent = Agent::new(agent_cfg.clone(), &env, seed)?;
    let mut env_rng = stream_rng(seed, STREAM_ENV_NOISE);
    let mut tracer = Tracer::new(&cfg.metrics, &agent_cfg, &env, seed, episodes)?;

    let (optimal, _) = dp_solve(&env, None)?;
    let v_star = policy_eval(&env, &optimal)?.expected_initial_value(env.init_dist());

    let mut raw = Vec::with_capacity(episodes);
    let mut clipped = Vec::with_capacity(episodes);
    let mut cumulative = Vec::with_capacity(episodes);
    let mut total = 0.0;
    tracer.beliefs(0, agent.belief())?;
    for e in 1..=episodes {
        let result = agent.run_episode(&env, &mut env_rng)?;
        let value = policy_eval_epsilon(&env, &result.policy, result.epsilon)?
            .expected_initial_value(env.init_dist());
        let gap = v_star - value;
        total += gap.max(0.0);
        raw.push(gap);
        clipped.push(gap.max(0.0));
        cumulative.push(total);
        tracer.visits(e, &result.trajectory);
        tracer.beliefs(e, agent.belief())?;
    }
    let (dsd, occupancy, qtrace) = tracer.finish();
    Ok(RunMetrics {
        agent: spec.label.clone(),
        seed,
        raw_regret: raw,
        per_episode_regret: clipped,
        cumulative_regret: cumulative,
        dsd,
        occupancy,
        qtrace,
    })
}

/// Collects the optional per-episode traces of a run.
struct Tracer<'a> {
    metrics: &'a MetricsConfig,
    env: &'a TabularMdp,
    scales: KernelScales,
    bayesian: bool,
    pairs: Vec<StateAction>,
    window: usize,
    episodes: usize,
    q_star: Vec<f64>,
    rng: rand_chacha::ChaCha8Rng,
    counts: Vec<u64>,
    window_start: usize,
    dsd: Vec<DsdRow>,
    occupancy: Vec<OccupancyRow>,
    qtrace: Vec<QTraceRow>,
}

impl<'a> Tracer<'a> {
    fn new(
        metrics: &'a MetricsConfig,
        agent: &AgentConfig,
        env: &'a TabularMdp,
        seed: u64,
        episodes: usize,
    ) -> Result<Self> {
        let pairs = metrics.pairs.clone().unwrap_or_else(|| {
            (0..env.num_states())
                .flat_map(|s| (0..env.num_actions()).map(move |a| StateAction::new(s, a)))
                .collect()
        });
        let (_, star) = dp_solve(env, None)?;
        let q_star = pairs.iter().map(|p| star.q(0, p.state, p.action)).collect();
        Ok(Self {
            metrics,
            env,
            scales: agent.scales,
            bayesian: agent.kind.is_bayesian(),
            pairs,
            window: metrics
                .occupancy_window
                .unwrap_or(episodes.div_ceil(10))
                .max(1),
            episodes,
            q_star,
            rng: stream_rng(seed, STREAM_METRICS),
            counts: vec![0; env.num_pairs()],
            window_start: 1,
            dsd: Vec::new(),
            occupancy: Vec::new(),
            qtrace: Vec::new(),
        })
    }

    fn beliefs(&mut self, episode: usize, belief: &Belief) -> Result<()> {
        if !self.bayesian {
            return Ok(());
        }
        if self.metrics.dsd {
            let mean = belief.mean_model()?;
            self.dsd_rows(episode, &mean)?;
        }
        if self.metrics.qtrace {
            let m = self.metrics.qtrace_samples;
            let mut samples = vec![Vec::with_capacity(m); self.pairs.len()];
            for _ in 0..m {
                let sampled = belief.sample_mdp(self.env, &mut self.rng)?;
                let (_, values) = dp_solve(&sampled, None)?;
                for (slot, p) in samples.iter_mut().zip(&self.pairs) {
                    slot.push(values.q(0, p.state, p.action));
                }
            }
            for ((p, qs), q_star) in self.pairs.iter().zip(samples).zip(&self.q_star) {
                let mean = qs.iter().sum::<f64>() / m as f64;
                let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / m as f64;
                self.qtrace.push(QTraceRow {
                    episode,
                    s: p.state,
                    a: p.action,
                    q_mean: mean,
                    q_std: var.sqrt(),
                    q_star: *q_star,
                });
            }
        }
        Ok(())
    }

    fn dsd_rows(&mut self, episode: usize, model: &ConditionalModel) -> Result<()> {
        let ctx = SteinContext::new(model, self.scales)?;
        for p in &self.pairs {
            let truth = self.env.transition().row(*p);
            self.dsd.push(DsdRow {
                episode,
                s: p.state,
                a: p.action,
                dsd2: dsd_population_at_x(&ctx, truth, *p)?,
            });
        }
        Ok(())
    }

    fn visits(&mut self, episode: usize, trajectory: &[crate::agents::Transition]) {
        if !self.metrics.occupancy {
            return;
        }
        for t in trajectory {
            self.counts[t.state * self.env.num_actions() + t.action] += 1;
        }
        if episode - self.window_start + 1 == self.window || episode == self.episodes {
            for s in 0..self.env.num_states() {
                for a in 0..self.env.num_actions() {
                    self.occupancy.push(OccupancyRow {
                        window_start: self.window_start,
                        window_end: episode,
                        s,
                        a,
                        count: self.counts[s * self.env.num_actions() + a],
                    });
                }
            }
            self.counts.iter_mut().for_each(|c| *c = 0);
            self.window_start = episode + 1;
        }
    }

    fn finish(self) -> (Vec<DsdRow>, Vec<OccupancyRow>, Vec<QTraceRow>) {
        (self.dsd, self.occupancy, self.qtrace)
    }
}
