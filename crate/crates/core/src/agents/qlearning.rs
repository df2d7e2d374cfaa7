use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Policy;

/// Per-step action values `Q[h][s][a]`, zero-initialized. `Q[H] ≡ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![0.0; horizon * num_states * num_actions],
        }
    }

    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[self.idx(h, s, a)]
    }

    fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.idx(h, s, 0);
        &self.values[start..start + self.num_actions]
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy_action(&self, h: usize, s: usize) -> usize {
        let mut best = 0;
        for (a, q) in self.row(h, s).iter().enumerate() {
            if *q > self.row(h, s)[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, h: usize, s: usize) -> f64 {
        self.row(h, s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_policy(&self) -> Policy {
        let actions = (0..self.horizon)
            .flat_map(|h| (0..self.num_states).map(move |s| (h, s)))
            .map(|(h, s)| self.greedy_action(h, s))
            .collect();
        Policy::new(self.horizon, self.num_states, self.num_actions, actions)
            .expect("greedy actions are in range")
    }

    /// ε-greedy behavior: draws one uniform to decide, and a second for the
    /// random action only when exploring.
    pub fn epsilon_greedy<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: usize,
        epsilon: f64,
        rng: &mut R,
    ) -> usize {
        let u: f64 = rng.random();
        if u < epsilon {
            rng.random_range(0..self.num_actions)
        } else {
            self.greedy_action(h, s)
        }
    }
}

/// `Q_h(s,a) += lr · (r + max_a' Q_{h+1}(s', a') - Q_h(s,a))`.
pub fn qlearning_step(
    table: &mut QTable,
    h: usize,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    learning_rate: f64,
) -> Result<()> {
    if h >= table.horizon
        || s >= table.num_states
        || a >= table.num_actions
        || s_next >= table.num_states
    {
        return Err(Error::contract(format!(
            "q update ({h}, {s}, {a}, {s_next}) out of range"
        )));
    }
    let future = if h + 1 < table.horizon {
        table.max_value(h + 1, s_next)
    } else {
        0.0
    };
    let i = table.idx(h, s, a);
    table.values[i] += learning_rate * (r + future - table.values[i]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_step_with_unit_rate_stores_reward() {
        let mut q = QTable::zeros(3, 2, 2);
        qlearning_step(&mut q, 2, 1, 0, 0.7, 0, 1.0).unwrap();
        assert_eq!(q.get(2, 1, 0), 0.7);
    }

    #[test]
    fn zero_rewards_keep_zero_table() {
        let mut q = QTable::zeros(2, 2, 2);
        for _ in 0..10 {
            qlearning_step(&mut q, 0, 0, 1, 0.0, 1, 0.1).unwrap();
            qlearning_step(&mut q, 1, 1, 0, 0.0, 0, 0.1).unwrap();
        }
        assert!(q.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_hand_stepped_updates() {
        // horizon 2 chain; lr 0.5
        let mut q = QTable::zeros(2, 2, 2);
        // last step: Q_1(1,0) = 0 + 0.5 (1 - 0) = 0.5
        qlearning_step(&mut q, 1, 1, 0, 1.0, 0, 0.5).unwrap();
        assert_eq!(q.get(1, 1, 0), 0.5);
        // first step: Q_0(0,1) = 0 + 0.5 (0.2 + max(0.5, 0) - 0) = 0.35
        qlearning_step(&mut q, 0, 0, 1, 0.2, 1, 0.5).unwrap();
        assert!((q.get(0, 0, 1) - 0.35).abs() < 1e-15);
        assert_eq!(q.greedy_action(0, 0), 1);
        assert_eq!(q.greedy_action(0, 1), 0);
        assert!(qlearning_step(&mut q, 2, 0, 0, 0.0, 0, 0.5).is_err());
    }
}
