//! Conjugate beliefs over an unknown tabular MDP: Dirichlet-categorical
//! dynamics and Normal-Gamma rewards, one independent factor per `(s, a)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CategoricalPmf, ConditionalModel};
use crate::mdp::{RewardNoise, TabularMdp};

/// Normal-Gamma parameters `(mu, lambda, alpha, beta)`: precision
/// `τ ~ Gamma(alpha, rate = beta)` and mean `~ Normal(mu, 1 / (lambda τ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGamma {
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NormalGamma {
    pub fn new(mu: f64, lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        let ng = Self {
            mu,
            lambda,
            alpha,
            beta,
        };
        ng.validate()?;
        Ok(ng)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::config("prior.mu", "must be finite"));
        }
        for (name, v) in [
            ("prior.lambda", self.lambda),
            ("prior.alpha", self.alpha),
            ("prior.beta", self.beta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Posterior after one scalar observation.
    pub fn update(&self, r: f64) -> Self {
        let lambda = self.lambda + 1.0;
        let dev = r - self.mu;
        Self {
            mu: (self.lambda * self.mu + r) / lambda,
            lambda,
            alpha: self.alpha + 0.5,
            beta: self.beta + self.lambda * dev * dev / (2.0 * lambda),
        }
    }

    /// Draws `(mean, precision)`; precision first, then the mean.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64)> {
        let gamma = Gamma::new(self.alpha, 1.0 / self.beta)
            .map_err(|e| Error::contract(format!("gamma({}, {}): {e}", self.alpha, self.beta)))?;
        let precision = gamma.sample(rng).max(f64::MIN_POSITIVE);
        let std = 1.0 / (self.lambda * precision).sqrt();
        let normal =
            Normal::new(self.mu, std).map_err(|e| Error::contract(format!("normal: {e}")))?;
        Ok((normal.sample(rng), precision))
    }
}

impl Default for NormalGamma {
    fn default() -> Self {
        Self {
            mu: 0.0,
            lambda: 4.0,
            alpha: 3.0,
            beta: 3.0,
        }
    }
}

/// Draws a pmf from Dirichlet(`alpha`) by normalizing independent Gamma(α_i, 1) draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<CategoricalPmf> {
    let mut draws = Vec::with_capacity(alpha.len());
    for a in alpha {
        let g = Gamma::new(*a, 1.0).map_err(|e| Error::contract(format!("gamma({a}, 1): {e}")))?;
        draws.push(g.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        CategoricalPmf::from_weights(&draws)
    } else {
        // every draw underflowed; fall back to the mean
        CategoricalPmf::from_weights(alpha)
    }
}

/// Pseudo-counts `counts[s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletBelief {
    num_states: usize,
    num_actions: usize,
    eta: f64,
    counts: Vec<f64>,
}

impl DirichletBelief {
    pub fn counts(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.counts[start..start + self.num_states]
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn counts_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &mut self.counts[start..start + self.num_states]
    }
}

/// Normal-Gamma parameters per `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaBelief {
    params: Vec<NormalGamma>,
}

impl NormalGammaBelief {
    pub fn params(&self) -> &[NormalGamma] {
        &self.params
    }
}

/// Joint posterior over dynamics and rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    num_states: usize,
    num_actions: usize,
    transitions: DirichletBelief,
    rewards: NormalGammaBelief,
    observations: u64,
}

impl Belief {
    /// Symmetric Dirichlet(`eta`) rows and the same Normal-Gamma prior at every pair.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        eta: f64,
        prior: NormalGamma,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::config(
                "env",
                "belief needs at least one state and action",
            ));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::config(
                "prior.eta",
                format!("must be positive, got {eta}"),
            ));
        }
        prior.validate()?;
        let pairs = num_states * num_actions;
        Ok(Self {
            num_states,
            num_actions,
            transitions: DirichletBelief {
                num_states,
                num_actions,
                eta,
                counts: vec![eta; pairs * num_states],
            },
            rewards: NormalGammaBelief {
                params: vec![prior; pairs],
            },
            observations: 0,
        })
    }

    /// η = 1 and NormalGamma(0, 4, 3, 3).
    pub fn with_default_prior(num_states: usize, num_actions: usize) -> Self {
        Self::new(num_states, num_actions, 1.0, NormalGamma::default())
            .expect("default prior is valid")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn transitions(&self) -> &DirichletBelief {
        &self.transitions
    }

    pub fn rewards(&self) -> &NormalGammaBelief {
        &self.rewards
    }

    pub fn reward_params(&self, s: usize, a: usize) -> NormalGamma {
        self.rewards.params[s * self.num_actions + a]
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    /// Total Dirichlet mass: `S·A·S·η` plus one per observation.
    pub fn total_pseudo_counts(&self) -> f64 {
        self.transitions.counts.iter().sum()
    }

    fn check(&self, s: usize, a: usize, s_next: Option<usize>) -> Result<()> {
        if s >= self.num_states
            || a >= self.num_actions
            || s_next.is_some_and(|n| n >= self.num_states)
        {
            return Err(Error::contract(format!(
                "transition ({s}, {a}, {s_next:?}) outside a {}x{} belief",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    fn check_template(&self, template: &TabularMdp) -> Result<()> {
        if template.num_states() != self.num_states || template.num_actions() != self.num_actions {
            return Err(Error::contract(
                "template MDP shape does not match the belief",
            ));
        }
        Ok(())
    }

    pub fn observe(&mut self, s: usize, a: usize, s_next: usize, r: f64) -> Result<()> {
        self.check(s, a, Some(s_next))?;
        if !r.is_finite() {
            return Err(Error::contract("reward observation must be finite"));
        }
        self.transitions.counts_mut(s, a)[s_next] += 1.0;
        let idx = s * self.num_actions + a;
        self.rewards.params[idx] = self.rewards.params[idx].update(r);
        self.observations += 1;
        Ok(())
    }

    /// Draws an MDP: row-major over pairs, each pair drawing its Dirichlet row,
    /// then reward precision, then reward mean. Horizon and initial
    /// distribution come from `template`.
    pub fn sample_mdp<R: Rng + ?Sized>(
        &self,
        template: &TabularMdp,
        rng: &mut R,
    ) -> Result<TabularMdp> {
        self.check_template(template)?;
        let pairs = self.num_states * self.num_actions;
        let mut rows = Vec::with_capacity(pairs);
        let mut reward_mean = Vec::with_capacity(pairs);
        let mut reward_noise = Vec::with_capacity(pairs);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                rows.push(sample_dirichlet(self.transitions.counts(s, a), rng)?);
                let (mean, precision) = self.reward_params(s, a).sample(rng)?;
                reward_mean.push(mean);
                reward_noise.push(RewardNoise::gaussian_or_point(1.0 / precision.sqrt()));
            }
        }
        let model = ConditionalModel::new(self.num_states, self.num_actions, rows)?;
        template.with_model(model, reward_mean, reward_noise)
    }

    /// Normalized counts and posterior mean rewards.
    pub fn posterior_mean(&self, template: &TabularMdp) -> Result<TabularMdp> {
        self.check_template(template)?;
        template.with_model(
            self.mean_model()?,
            self.rewards.params.iter().map(|p| p.mu).collect(),
            vec![RewardNoise::PointMass; self.num_states * self.num_actions],
        )
    }

    pub fn mean_model(&self) -> Result<ConditionalModel> {
        let rows = (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .map(|(s, a)| CategoricalPmf::from_weights(self.transitions.counts(s, a)))
            .collect::<Result<Vec<_>>>()?;
        ConditionalModel::new(self.num_states, self.num_actions, rows)
    }

    /// Marginal Dirichlet variance of each `P(s'|s,a)`: `c_i (c_0 - c_i) / (c_0² (c_0 + 1))`.
    pub fn transition_variance(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check(s, a, None)?;
        let counts = self.transitions.counts(s, a);
        let c0: f64 = counts.iter().sum();
        Ok(counts
            .iter()
            .map(|ci| ci * (c0 - ci) / (c0 * c0 * (c0 + 1.0)))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: Belief = serde_json::from_str(text)?;
        let pairs = b.num_states * b.num_actions;
        if b.transitions.counts.len() != pairs * b.num_states
            || b.rewards.params.len() != pairs
            || b.transitions.num_states != b.num_states
            || b.transitions.num_actions != b.num_actions
        {
            return Err(Error::contract("belief document has inconsistent shapes"));
        }
        if b.transitions
            .counts
            .iter()
            .any(|c| c.is_nan() || *c < b.transitions.eta)
        {
            return Err(Error::contract(
                "belief counts fall below the prior pseudo-count",
            ));
        }
        for p in &b.rewards.params {
            p.validate()?;
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::deepsea;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_prior_values() {
        let b = Belief::with_default_prior(3, 2);
        for s in 0..3 {
            for a in 0..2 {
                assert_eq!(b.transitions().counts(s, a), &[1.0, 1.0, 1.0]);
                assert_eq!(
                    b.reward_params(s, a),
                    NormalGamma::new(0.0, 4.0, 3.0, 3.0).unwrap()
                );
            }
        }
        let template = deepsea(2, 0.0, None).unwrap();
        let fresh = Belief::with_default_prior(2, 2)
            .posterior_mean(&template)
            .unwrap();
        for row in fresh.transition().rows() {
            assert_eq!(row.probs(), &[0.5, 0.5]);
        }
        assert!(fresh.reward_means().iter().all(|r| *r == 0.0));
    }

    #[test]
    fn rejects_bad_prior() {
        assert!(Belief::new(2, 2, 0.0, NormalGamma::default()).is_err());
        assert!(NormalGamma::new(0.0, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn single_observation_updates() {
        let mut b = Belief::with_default_prior(2, 1);
        b.observe(0, 0, 0, 1.0).unwrap();
        let model = b.mean_model().unwrap();
        assert_abs_diff_eq!(model.rows()[0].prob(0), 2.0 / 3.0, epsilon = 1e-15);
        let ng = b.reward_params(0, 0);
        assert_abs_diff_eq!(ng.mu, 0.2, epsilon = 1e-15);
        assert_eq!(ng.lambda, 5.0);
        assert_eq!(ng.alpha, 3.5);
        assert_abs_diff_eq!(ng.beta, 3.4, epsilon = 1e-15);
        assert!(b.observe(2, 0, 0, 0.0).is_err());
    }

    #[test]
    fn counts_three_to_one_mean() {
        let mut b = Belief::with_default_prior(2, 1);
        b.observe(0, 0, 0, 0.0).unwrap();
        b.observe(0, 0, 0, 0.0).unwrap();
        let row = b.mean_model().unwrap().rows()[0].clone();
        assert_eq!(row.probs(), &[0.75, 0.25]);
    }

    #[test]
    fn dirichlet_variance_formula() {
        let b = Belief::with_default_prior(2, 1);
        for v in b.transition_variance(0, 0).unwrap() {
            assert_abs_diff_eq!(v, 1.0 / 12.0, epsilon = 1e-15);
        }
        // c_i = 1000, c_0 = 2000: 1000 * 1000 / (2000² * 2001)
        let b = Belief::new(2, 1, 1000.0, NormalGamma::default()).unwrap();
        for v in b.transition_variance(0, 0).unwrap() {
            assert_abs_diff_eq!(v, 1.0 / (4.0 * 2001.0), epsilon = 1e-15);
        }
        let b = Belief::new(2, 1, 1e6, NormalGamma::default()).unwrap();
        assert!(b
            .transition_variance(0, 0)
            .unwrap()
            .iter()
            .all(|v| *v < 1e-6 && *v >= 0.0));
    }

    #[test]
    fn dirichlet_variance_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..draws {
            let p = sample_dirichlet(&[1.0, 1.0], &mut rng).unwrap().prob(0);
            sum += p;
            sq += p * p;
        }
        let mean = sum / draws as f64;
        let var = sq / draws as f64 - mean * mean;
        assert_abs_diff_eq!(var, 1.0 / 12.0, epsilon = 2e-3);
    }

    #[test]
    fn sample_mdp_is_deterministic_and_valid() {
        let template = deepsea(4, 0.01, None).unwrap();
        let b = Belief::with_default_prior(4, 2);
        let m1 = b
            .sample_mdp(&template, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let m2 = b
            .sample_mdp(&template, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(m1, m2);
        for row in m1.transition().rows() {
            assert_abs_diff_eq!(row.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(m1.horizon(), template.horizon());
    }

    #[test]
    fn concentrated_counts_concentrate_samples() {
        let template = deepsea(2, 0.0, None).unwrap();
        let mut b = Belief::with_default_prior(2, 2);
        for _ in 0..999 {
            b.observe(0, 0, 0, 0.0).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let close = (0..100)
            .filter(|_| {
                let m = b.sample_mdp(&template, &mut rng).unwrap();
                (m.transition().rows()[0].prob(0) - 0.999).abs() < 0.01
            })
            .count();
        assert!(close >= 99, "{close}");
    }

    #[test]
    fn json_round_trip() {
        let mut b = Belief::with_default_prior(3, 2);
        b.observe(1, 1, 2, 0.3).unwrap();
        let back = Belief::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back, b);
    }
}
