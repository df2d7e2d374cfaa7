//! The Stein-directed agent and its baselines.
//!
//! Bayesian agents (STEERING, PSRL, Var-IDS) sample an MDP from their belief
//! each episode and act greedily for it; STEERING and Var-IDS add an
//! exploration bonus `λ · bonus(s, a)` to the sampled rewards before planning.
//! STEERING also thins each episode's transitions into a dictionary with an
//! SPMCMC-style greedy selection, and its bonus is the per-pair DSD² of the
//! dictionary under the sampled model.

mod bonus;
mod dictionary;
mod planning;
mod qlearning;
mod runner;
mod selection;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelScales;
use crate::posterior::NormalGamma;

pub use bonus::{dsd_bonus, info_ratio_diagnostic, variance_bonus};
pub use dictionary::Dictionary;
pub use planning::{psrl_plan, steering_plan, var_ids_plan, Plan};
pub use qlearning::{qlearning_step, QTable};
pub use runner::{Agent, EpisodeResult, Transition};
pub use selection::{selection_criterion, spmcmc_select};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Steering,
    Psrl,
    VarIds,
    Qlearning,
    /// Plays the true optimal policy; a zero-regret reference.
    Oracle,
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Steering => "steering",
            AgentKind::Psrl => "psrl",
            AgentKind::VarIds => "var_ids",
            AgentKind::Qlearning => "qlearning",
            AgentKind::Oracle => "oracle",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Some(match text {
            "steering" => AgentKind::Steering,
            "psrl" => AgentKind::Psrl,
            "var_ids" | "varids" | "var-ids" => AgentKind::VarIds,
            "qlearning" | "q_learning" => AgentKind::Qlearning,
            "oracle" => AgentKind::Oracle,
            _ => return None,
        })
    }

    pub fn is_bayesian(&self) -> bool {
        matches!(
            self,
            AgentKind::Steering | AgentKind::Psrl | AgentKind::VarIds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Weight of the exploration bonus.
    pub lambda: f64,
    /// SPMCMC batch size `Z`: one point is kept per `Z` consecutive transitions.
    pub batch_size: usize,
    pub scales: KernelScales,
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Bonus for pairs with no dictionary points.
    pub unvisited_bonus: f64,
    /// Feed every transition to STEERING's posterior, not just the selected ones.
    pub full_posterior_updates: bool,
    /// FIFO cap on the dictionary size.
    pub dictionary_capacity: Option<usize>,
    /// Dirichlet pseudo-count of the transition prior.
    pub eta: f64,
    pub reward_prior: NormalGamma,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::Steering,
            lambda: 0.5,
            batch_size: 2,
            scales: KernelScales::default(),
            epsilon: 0.1,
            learning_rate: 0.1,
            unvisited_bonus: 1.0,
            full_posterior_updates: false,
            dictionary_capacity: None,
            eta: 1.0,
            reward_prior: NormalGamma::default(),
        }
    }
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(
                "lambda",
                format!("must be >= 0, got {}", self.lambda),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("z", "batch size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(
                "epsilon",
                format!("must lie in [0, 1], got {}", self.epsilon),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(
                "lr",
                format!("must lie in (0, 1], got {}", self.learning_rate),
            ));
        }
        if !(self.unvisited_bonus.is_finite() && self.unvisited_bonus >= 0.0) {
            return Err(Error::config("unvisited_bonus", "must be finite and >= 0"));
        }
        if self.dictionary_capacity == Some(0) {
            return Err(Error::config("dict_cap", "must be positive"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::config("eta", "must be positive"));
        }
        self.scales.validate()?;
        self.reward_prior.validate()
    }
}
