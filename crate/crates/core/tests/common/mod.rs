//! Independent reference implementations shared by the integration tests.
//!
//! The kernel oracle never calls the library's kernel code: it writes the
//! Stein feature of `(x, y)` as a coefficient vector over the basis
//! `{l(j, ·)}` and evaluates inner products through the Gram matrix of `l`.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use steering_core::kernels::{CategoricalPmf, ConditionalModel, SamplePoint, StateAction};
use steering_core::mdp::TabularMdp;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random pmf with every entry at least `min`, from normalized exponentials.
pub fn random_pmf(rng: &mut impl Rng, n: usize, min: f64) -> CategoricalPmf {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw
        .iter()
        .map(|v| min + (1.0 - min * n as f64) * v / total)
        .collect();
    CategoricalPmf::from_weights(&probs).unwrap()
}

pub fn random_model(rng: &mut impl Rng, s: usize, a: usize) -> ConditionalModel {
    let rows = (0..s * a).map(|_| random_pmf(rng, s, 1e-3)).collect();
    ConditionalModel::new(s, a, rows).unwrap()
}

pub fn random_point(rng: &mut impl Rng, s: usize, a: usize) -> SamplePoint {
    SamplePoint::new(
        rng.random_range(0..s),
        rng.random_range(0..a),
        rng.random_range(0..s),
    )
}

pub struct Oracle {
    pub s: usize,
    pub a: usize,
    /// Row probabilities indexed `[state * a + action][y]`.
    pub rows: Vec<Vec<f64>>,
    pub x_scale: f64,
    pub y_scale: f64,
    gram_l: DMatrix<f64>,
}

impl Oracle {
    pub fn new(model: &ConditionalModel, x_scale: f64, y_scale: f64) -> Self {
        let s = model.num_states();
        let gram_l = DMatrix::from_fn(s, s, |i, j| if i == j { 1.0 } else { (-y_scale).exp() });
        Self {
            s,
            a: model.num_actions(),
            rows: model.rows().iter().map(|r| r.probs().to_vec()).collect(),
            x_scale,
            y_scale,
            gram_l,
        }
    }

    fn prob(&self, p: SamplePoint, y: usize) -> f64 {
        self.rows[p.x.state * self.a + p.x.action][y]
    }

    /// Feature coefficients `(s - 1) e_y + e_{y-1 mod S}`.
    pub fn coefficients(&self, p: SamplePoint) -> DVector<f64> {
        let next = (p.y + 1) % self.s;
        let prev = (p.y + self.s - 1) % self.s;
        let score = 1.0 - self.prob(p, next) / self.prob(p, p.y);
        let mut c = DVector::zeros(self.s);
        c[p.y] += score - 1.0;
        c[prev] += 1.0;
        c
    }

    pub fn base_x(&self, p: SamplePoint, q: SamplePoint) -> f64 {
        let d = (p.x.state != q.x.state) as u8 + (p.x.action != q.x.action) as u8;
        (-self.x_scale * f64::from(d) / 2.0).exp()
    }

    pub fn kernel(&self, p: SamplePoint, q: SamplePoint) -> f64 {
        let cp = self.coefficients(p);
        let cq = self.coefficients(q);
        self.base_x(p, q) * (cp.transpose() * &self.gram_l * cq)[(0, 0)]
    }

    /// Naive `(1/n²) Σ_i Σ_j κ`.
    pub fn vstat(&self, samples: &[SamplePoint]) -> f64 {
        let n = samples.len() as f64;
        let mut total = 0.0;
        for p in samples {
            for q in samples {
                total += self.kernel(*p, *q);
            }
        }
        total / (n * n)
    }

    /// `μᵀ L μ` with `μ = Σ_y truth(y) c(x, y)`.
    pub fn population(&self, state: usize, action: usize, truth: &[f64]) -> f64 {
        let mut mu = DVector::zeros(self.s);
        for (y, w) in truth.iter().enumerate() {
            mu += *w * self.coefficients(SamplePoint::new(state, action, y));
        }
        (mu.transpose() * &self.gram_l * &mu)[(0, 0)]
    }
}

pub fn min_eigenvalue(gram: &[f64], n: usize) -> f64 {
    let m = DMatrix::from_row_slice(n, n, gram);
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Forward evaluation by propagating the state distribution; shares no code
/// with the library's backward recursions.
pub fn forward_value(mdp: &TabularMdp, actions: &dyn Fn(usize, usize) -> usize) -> f64 {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut dist = mdp.init_dist().probs().to_vec();
    let mut total = 0.0;
    for h in 0..mdp.horizon() {
        let mut next = vec![0.0; ns];
        for (s, mass) in dist.iter().enumerate() {
            let a = actions(h, s);
            total += mass * mdp.reward_means()[s * na + a];
            for (sp, p) in mdp
                .transition()
                .row(StateAction::new(s, a))
                .probs()
                .iter()
                .enumerate()
            {
                next[sp] += mass * p;
            }
        }
        dist = next;
    }
    total
}

/// Best forward value over every deterministic two-action policy table.
/// Only feasible for `H · S <= 20`.
pub fn best_deterministic_value(mdp: &TabularMdp) -> f64 {
    let (ns, h) = (mdp.num_states(), mdp.horizon());
    assert!(mdp.num_actions() == 2 && ns * h <= 20);
    let mut best = f64::NEG_INFINITY;
    for code in 0u32..(1 << (ns * h)) {
        best = best.max(forward_value(mdp, &|t, s| {
            ((code >> (t * ns + s)) & 1) as usize
        }));
    }
    best
}
