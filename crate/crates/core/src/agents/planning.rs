use rand::Rng;

use crate::agents::{dsd_bonus, variance_bonus, AgentConfig, Dictionary};
use crate::error::Result;
use crate::mdp::{dp_solve, Policy, TabularMdp, ValueTables};
use crate::posterior::Belief;

/// A policy together with the posterior sample it was planned on.
#[derive(Debug, Clone)]
pub struct Plan {
    pub policy: Policy,
    pub sampled: TabularMdp,
    /// Unscaled bonus per pair, when the planner used one.
    pub bonus: Option<Vec<f64>>,
    pub values: ValueTables,
}

fn shaped(sampled: TabularMdp, bonus: Vec<f64>, lambda: f64) -> Result<Plan> {
    let scaled: Vec<f64> = bonus.iter().map(|b| lambda * b).collect();
    let (policy, values) = dp_solve(&sampled, Some(&scaled))?;
    Ok(Plan {
        policy,
        sampled,
        bonus: Some(bonus),
        values,
    })
}

/// Posterior sampling: act optimally for one sampled MDP.
pub fn psrl_plan<R: Rng + ?Sized>(
    belief: &Belief,
    template: &TabularMdp,
    rng: &mut R,
) -> Result<Plan> {
    let sampled = belief.sample_mdp(template, rng)?;
    let (policy, values) = dp_solve(&sampled, None)?;
    Ok(Plan {
        policy,
        sampled,
        bonus: None,
        values,
    })
}

/// Regularized Stein-directed planning: maximize the sampled value plus
/// `λ` times the DSD² bonus of the dictionary under the sampled dynamics.
pub fn steering_plan<R: Rng + ?Sized>(
    belief: &Belief,
    template: &TabularMdp,
    dictionary: &Dictionary,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Plan> {
    let sampled = belief.sample_mdp(template, rng)?;
    let bonus = dsd_bonus(
        dictionary,
        sampled.transition(),
        cfg.scales,
        cfg.unvisited_bonus,
    )?;
    shaped(sampled, bonus, cfg.lambda)
}

/// Variance-IDS surrogate: bonus is the summed Dirichlet variance per pair.
pub fn var_ids_plan<R: Rng + ?Sized>(
    belief: &Belief,
    template: &TabularMdp,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Plan> {
    let sampled = belief.sample_mdp(template, rng)?;
    let bonus = variance_bonus(belief)?;
    shaped(sampled, bonus, cfg.lambda)
}
