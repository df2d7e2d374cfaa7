use crate::agents::{AgentConfig, Dictionary};
use crate::error::Result;
use crate::kernels::{
    weighted_kernel_sum, ConditionalModel, KernelScales, StateAction, SteinContext,
};
use crate::mdp::{dp_solve, occupancy, policy_eval, Policy, TabularMdp};
use crate::posterior::Belief;

/// Per-pair DSD² of the dictionary under `model`, indexed `s * A + a`.
///
/// Each pair only sees its own dictionary points, so the estimate is the
/// conditional V-statistic at that pair. Pairs with no points get
/// `unvisited_bonus`. Values are clipped at zero.
pub fn dsd_bonus(
    dictionary: &Dictionary,
    model: &ConditionalModel,
    scales: KernelScales,
    unvisited_bonus: f64,
) -> Result<Vec<f64>> {
    let ctx = SteinContext::new(model, scales)?;
    let mut bonus = Vec::with_capacity(model.num_states() * model.num_actions());
    for s in 0..model.num_states() {
        for a in 0..model.num_actions() {
            let points = dictionary.points_at(StateAction::new(s, a));
            if points.is_empty() {
                bonus.push(unvisited_bonus);
                continue;
            }
            let n: f64 = points.iter().map(|(_, w)| w).sum();
            let sum = weighted_kernel_sum(&ctx, &points)?;
            bonus.push((sum / (n * n)).max(0.0));
        }
    }
    Ok(bonus)
}

/// Summed Dirichlet marginal variance per pair, indexed `s * A + a`.
pub fn variance_bonus(belief: &Belief) -> Result<Vec<f64>> {
    let mut bonus = Vec::with_capacity(belief.num_states() * belief.num_actions());
    for s in 0..belief.num_states() {
        for a in 0..belief.num_actions() {
            bonus.push(belief.transition_variance(s, a)?.iter().sum());
        }
    }
    Ok(bonus)
}

/// Stein information ratio of `policy`: squared true regret over the
/// occupancy-weighted DSD bonus under the sampled model.
///
/// Uses the simulator's ground truth, so it is a diagnostic only. Returns
/// `f64::INFINITY` when the information term is below 1e-12.
pub fn info_ratio_diagnostic(
    true_env: &TabularMdp,
    policy: &Policy,
    sampled: &TabularMdp,
    dictionary: &Dictionary,
    cfg: &AgentConfig,
) -> Result<f64> {
    let (_, optimal) = dp_solve(true_env, None)?;
    let achieved = policy_eval(true_env, policy)?;
    let init = true_env.init_dist();
    let gap = optimal.expected_initial_value(init) - achieved.expected_initial_value(init);

    let bonus = dsd_bonus(
        dictionary,
        sampled.transition(),
        cfg.scales,
        cfg.unvisited_bonus,
    )?;
    let occ = occupancy(true_env, policy)?;
    let pairs = bonus.len();
    let information: f64 = occ
        .chunks(pairs)
        .map(|step| step.iter().zip(&bonus).map(|(o, b)| o * b).sum::<f64>())
        .sum();
    if information < 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok(gap * gap / information)
}
