//! Discrete conditional Stein kernel and the discrepancy estimators built on it.
//!
//! Next states are a single categorical coordinate `y ∈ {0, .., S-1}` with the
//! cyclic shift `∨y = (y + 1) mod S` and its inverse `∧y = (y - 1) mod S`.
//! For a conditional model `P(·|x)` the score is
//!
//! ```text
//! s(x, y) = 1 - P(∨y | x) / P(y | x)
//! ```
//!
//! and the Stein feature of a sample `(x, y)` lives in the RKHS of the
//! next-state kernel `l`:
//!
//! ```text
//! ξ(x, y)(·) = s(x, y) l(y, ·) - [l(y, ·) - l(∧y, ·)]
//! ```
//!
//! The Stein kernel is `κ((x,y),(x',y')) = k(x,x') <ξ(x,y), ξ(x',y')>`, with
//! `k` and `l` exponential Hamming kernels. Its expectation under the data
//! distribution is the discrepancy (DSD²); it vanishes exactly when the model
//! agrees with the sampling conditionals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest probability a [`CategoricalPmf`] entry may take.
pub const PMF_FLOOR: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-9;

/// Probability mass function over state ids.
///
/// Entries are clipped to [`PMF_FLOOR`] and renormalized on construction so the
/// score function stays finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CategoricalPmf {
    probs: Vec<f64>,
}

impl CategoricalPmf {
    /// Builds a pmf from probabilities that already sum to one (within 1e-9).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract("pmf must have at least one entry"));
        }
        if let Some(bad) = probs
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0 + SUM_TOLERANCE)
        {
            return Err(Error::contract(format!("pmf entry {bad} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::contract(format!("pmf sums to {total}, expected 1")));
        }
        let mut probs = probs;
        apply_floor(&mut probs);
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights into a pmf.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::contract("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::contract("weights must have positive total mass"));
        }
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        if probs.is_empty() {
            return Err(Error::contract("pmf must have at least one entry"));
        }
        apply_floor(&mut probs);
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize) -> Self {
        assert!(num_states > 0, "uniform pmf over zero states");
        Self {
            probs: vec![1.0 / num_states as f64; num_states],
        }
    }

    /// A point mass on `state` (other entries sit at the floor).
    pub fn point_mass(num_states: usize, state: usize) -> Result<Self> {
        if state >= num_states {
            return Err(Error::contract(format!(
                "point mass at {state} outside [0, {num_states})"
            )));
        }
        let mut probs = vec![0.0; num_states];
        probs[state] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn total_variation(&self, other: &CategoricalPmf) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Inverse-CDF lookup for `u ∈ [0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left the cumulative sum a hair below one
        self.probs
            .iter()
            .rposition(|p| *p > PMF_FLOOR)
            .unwrap_or(self.probs.len() - 1)
    }
}

impl TryFrom<Vec<f64>> for CategoricalPmf {
    type Error = Error;

    /// Rows that already satisfy the floor are kept bit for bit, so a
    /// serialized pmf reads back unchanged.
    fn try_from(value: Vec<f64>) -> Result<Self> {
        let total: f64 = value.iter().sum();
        let valid = !value.is_empty()
            && value
                .iter()
                .all(|p| p.is_finite() && *p >= PMF_FLOOR && *p <= 1.0)
            && (total - 1.0).abs() <= SUM_TOLERANCE;
        if valid {
            Ok(Self { probs: value })
        } else {
            Self::new(value)
        }
    }
}

impl From<CategoricalPmf> for Vec<f64> {
    fn from(value: CategoricalPmf) -> Self {
        value.probs
    }
}

/// Clips entries to the floor, then rescales the unclipped mass so the row sums
/// to one. Repeats until no rescaled entry has dropped under the floor.
fn apply_floor(probs: &mut [f64]) {
    let mut clipped = vec![false; probs.len()];
    let mut normalized = false;
    loop {
        let mut changed = false;
        for (p, c) in probs.iter_mut().zip(clipped.iter_mut()) {
            if !*c && *p < PMF_FLOOR {
                *p = PMF_FLOOR;
                *c = true;
                changed = true;
            }
        }
        if !changed && normalized {
            break;
        }
        let n_clipped = clipped.iter().filter(|c| **c).count();
        let free: f64 = probs
            .iter()
            .zip(&clipped)
            .filter(|(_, c)| !**c)
            .map(|(p, _)| p)
            .sum();
        if free > 0.0 {
            let scale = (1.0 - n_clipped as f64 * PMF_FLOOR) / free;
            for (p, c) in probs.iter_mut().zip(&clipped) {
                if !*c {
                    *p *= scale;
                }
            }
        }
        normalized = true;
    }
}

/// A state-action pair, the conditioning variable `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateAction {
    pub state: usize,
    pub action: usize,
}

impl StateAction {
    pub fn new(state: usize, action: usize) -> Self {
        Self { state, action }
    }
}

/// One observed transition `((s, a), s')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: StateAction,
    pub y: usize,
}

impl SamplePoint {
    pub fn new(state: usize, action: usize, next_state: usize) -> Self {
        Self {
            x: StateAction::new(state, action),
            y: next_state,
        }
    }
}

/// Per-(state, action) categorical next-state distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalModel {
    num_states: usize,
    num_actions: usize,
    rows: Vec<CategoricalPmf>,
}

impl ConditionalModel {
    /// `rows` is indexed `state * num_actions + action`.
    pub fn new(num_states: usize, num_actions: usize, rows: Vec<CategoricalPmf>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::contract(
                "model needs at least one state and one action",
            ));
        }
        if rows.len() != num_states * num_actions {
            return Err(Error::contract(format!(
                "expected {} rows, got {}",
                num_states * num_actions,
                rows.len()
            )));
        }
        if let Some(row) = rows.iter().find(|r| r.len() != num_states) {
            return Err(Error::contract(format!(
                "row over {} states in a model with {num_states} states",
                row.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            rows,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            rows: vec![CategoricalPmf::uniform(num_states); num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, x: StateAction) -> &CategoricalPmf {
        &self.rows[x.state * self.num_actions + x.action]
    }

    pub fn rows(&self) -> &[CategoricalPmf] {
        &self.rows
    }

    pub fn set_row(&mut self, x: StateAction, row: CategoricalPmf) -> Result<()> {
        self.check_x(x)?;
        if row.len() != self.num_states {
            return Err(Error::contract("row length does not match the state count"));
        }
        self.rows[x.state * self.num_actions + x.action] = row;
        Ok(())
    }

    pub(crate) fn check_x(&self, x: StateAction) -> Result<()> {
        if x.state >= self.num_states || x.action >= self.num_actions {
            return Err(Error::contract(format!(
                "pair (s={}, a={}) outside a {}x{} model",
                x.state, x.action, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_point(&self, p: SamplePoint) -> Result<()> {
        self.check_x(p.x)?;
        if p.y >= self.num_states {
            return Err(Error::contract(format!(
                "next state {} outside [0, {})",
                p.y, self.num_states
            )));
        }
        Ok(())
    }
}

/// Bandwidths of the exponential Hamming kernels on `x` and on `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelScales {
    pub x: f64,
    pub y: f64,
}

impl Default for KernelScales {
    fn default() -> Self {
        Self { x: 1.0, y: 1.0 }
    }
}

impl KernelScales {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kernel.x_scale", self.x), ("kernel.y_scale", self.y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// The score model plus kernel bandwidths.
#[derive(Debug, Clone, Copy)]
pub struct SteinContext<'a> {
    model: &'a ConditionalModel,
    scales: KernelScales,
}

impl<'a> SteinContext<'a> {
    pub fn new(model: &'a ConditionalModel, scales: KernelScales) -> Result<Self> {
        scales.validate()?;
        Ok(Self { model, scales })
    }

    pub fn model(&self) -> &'a ConditionalModel {
        self.model
    }

    pub fn scales(&self) -> KernelScales {
        self.scales
    }
}

pub fn cyclic_next(y: usize, num_states: usize) -> Result<usize> {
    if y >= num_states {
        return Err(Error::contract(format!(
            "state {y} outside [0, {num_states})"
        )));
    }
    Ok((y + 1) % num_states)
}

pub fn cyclic_prev(y: usize, num_states: usize) -> Result<usize> {
    if y >= num_states {
        return Err(Error::contract(format!(
            "state {y} outside [0, {num_states})"
        )));
    }
    Ok((y + num_states - 1) % num_states)
}

/// `exp(-scale * H(x, x2))` with H the Hamming distance over `(s, a)` divided by 2.
pub fn hamming_kernel_x(x: StateAction, x2: StateAction, scale: f64) -> f64 {
    let mismatches = (x.state != x2.state) as u8 + (x.action != x2.action) as u8;
    (-scale * f64::from(mismatches) / 2.0).exp()
}

pub fn hamming_kernel_y(y: usize, y2: usize, scale: f64) -> f64 {
    if y == y2 {
        1.0
    } else {
        (-scale).exp()
    }
}

/// Discrete score `1 - P(∨y|x) / P(y|x)` under `model`.
pub fn score(model: &ConditionalModel, x: StateAction, y: usize) -> Result<f64> {
    model.check_point(SamplePoint { x, y })?;
    let row = model.row(x);
    let p = row.prob(y);
    if p.is_nan() || p < PMF_FLOOR {
        return Err(Error::NumericalSupport {
            state: x.state,
            action: x.action,
            next_state: y,
            prob: p,
        });
    }
    let next = cyclic_next(y, model.num_states())?;
    Ok(1.0 - row.prob(next) / p)
}

/// Value of the Stein feature `ξ(x, y)` at the probe state, i.e.
/// `s(x,y) l(y, probe) - [l(y, probe) - l(∧y, probe)]`.
pub fn stein_feature(
    ctx: &SteinContext<'_>,
    x: StateAction,
    y: usize,
    probe: usize,
) -> Result<f64> {
    let s = score(ctx.model, x, y)?;
    let n = ctx.model.num_states();
    let prev = cyclic_prev(y, n)?;
    if probe >= n {
        return Err(Error::contract(format!("probe {probe} outside [0, {n})")));
    }
    let sy = ctx.scales.y;
    let l = hamming_kernel_y(y, probe, sy);
    Ok(s * l - (l - hamming_kernel_y(prev, probe, sy)))
}

/// A sample with its score and `∧y` cached.
#[derive(Debug, Clone, Copy)]
struct ScoredPoint {
    point: SamplePoint,
    score: f64,
    prev: usize,
}

impl ScoredPoint {
    fn new(ctx: &SteinContext<'_>, point: SamplePoint) -> Result<Self> {
        let score = score(ctx.model, point.x, point.y)?;
        let prev = cyclic_prev(point.y, ctx.model.num_states())?;
        Ok(Self { point, score, prev })
    }
}

fn scored_kernel(scales: KernelScales, a: &ScoredPoint, b: &ScoredPoint) -> f64 {
    // canonical argument order makes the result exactly symmetric
    let (p, q) = if a.point <= b.point { (a, b) } else { (b, a) };
    let sy = scales.y;
    let l = |u: usize, v: usize| hamming_kernel_y(u, v, sy);
    let l_pq = l(p.point.y, q.point.y);
    let l_p_qprev = l(p.point.y, q.prev);
    let l_pprev_q = l(p.prev, q.point.y);
    let l_prev_prev = l(p.prev, q.prev);
    let inner =
        p.score * q.score * l_pq - p.score * (l_pq - l_p_qprev) - q.score * (l_pq - l_pprev_q)
            + (l_pq - l_pprev_q - l_p_qprev + l_prev_prev);
    hamming_kernel_x(p.point.x, q.point.x, scales.x) * inner
}

/// Stein kernel `κ(p, q)` under the context's score model.
pub fn stein_kernel(ctx: &SteinContext<'_>, p: SamplePoint, q: SamplePoint) -> Result<f64> {
    let p = ScoredPoint::new(ctx, p)?;
    let q = ScoredPoint::new(ctx, q)?;
    Ok(scored_kernel(ctx.scales, &p, &q))
}

/// Dense Gram matrix of the Stein kernel, row-major `n x n`.
pub fn gram_matrix(ctx: &SteinContext<'_>, samples: &[SamplePoint]) -> Result<Vec<f64>> {
    let scored = samples
        .iter()
        .map(|p| ScoredPoint::new(ctx, *p))
        .collect::<Result<Vec<_>>>()?;
    let n = scored.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = scored_kernel(ctx.scales, &scored[i], &scored[j]);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    Ok(gram)
}

/// Which empirical estimator of DSD² to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    /// Double sum including the diagonal, divided by `n²`.
    #[default]
    V,
    /// Off-diagonal double sum divided by `n(n-1)`; diagnostics only.
    U,
}

/// Weighted double sum `Σ_i Σ_j w_i w_j κ(p_i, p_j)` over distinct points.
///
/// Points are visited in the given order and only the upper triangle is
/// evaluated, so the result is bit-stable for a fixed input.
pub fn weighted_kernel_sum(ctx: &SteinContext<'_>, points: &[(SamplePoint, f64)]) -> Result<f64> {
    let scored = points
        .iter()
        .map(|(p, w)| ScoredPoint::new(ctx, *p).map(|sp| (sp, *w)))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for (i, (pi, wi)) in scored.iter().enumerate() {
        total += wi * wi * scored_kernel(ctx.scales, pi, pi);
        let mut cross = 0.0;
        for (pj, wj) in &scored[i + 1..] {
            cross += wj * scored_kernel(ctx.scales, pi, pj);
        }
        total += 2.0 * wi * cross;
    }
    Ok(total)
}

/// `Σ_d count(d) κ(d, c)` over a multiset of points.
pub(crate) fn multiset_cross_sum(
    ctx: &SteinContext<'_>,
    multiset: &BTreeMap<SamplePoint, usize>,
    candidate: SamplePoint,
) -> Result<f64> {
    let c = ScoredPoint::new(ctx, candidate)?;
    let mut total = 0.0;
    for (point, count) in multiset {
        let d = ScoredPoint::new(ctx, *point)?;
        total += *count as f64 * scored_kernel(ctx.scales, &d, &c);
    }
    Ok(total)
}

fn multiplicities(samples: &[SamplePoint]) -> Vec<(SamplePoint, f64)> {
    let mut counts: BTreeMap<SamplePoint, usize> = BTreeMap::new();
    for p in samples {
        *counts.entry(*p).or_default() += 1;
    }
    counts.into_iter().map(|(p, c)| (p, c as f64)).collect()
}

/// V-statistic estimate of DSD² over `samples`.
///
/// Repeated samples are folded into multiplicities first, which makes the cost
/// quadratic in the number of distinct points instead of the sample count.
pub fn dsd_vstat(ctx: &SteinContext<'_>, samples: &[SamplePoint]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    for p in samples {
        ctx.model.check_point(*p)?;
    }
    let n = samples.len() as f64;
    Ok(weighted_kernel_sum(ctx, &multiplicities(samples))? / (n * n))
}

pub fn dsd_estimate(
    ctx: &SteinContext<'_>,
    samples: &[SamplePoint],
    stat: Statistic,
) -> Result<f64> {
    match stat {
        Statistic::V => dsd_vstat(ctx, samples),
        Statistic::U => {
            if samples.len() < 2 {
                return Err(Error::contract("U-statistic needs at least two samples"));
            }
            let n = samples.len() as f64;
            let full = dsd_vstat(ctx, samples)? * n * n;
            let mut diagonal = 0.0;
            for p in samples {
                diagonal += stein_kernel(ctx, *p, *p)?;
            }
            Ok((full - diagonal) / (n * (n - 1.0)))
        }
    }
}

/// Population DSD² at a single `x`: `Σ_y Σ_y' truth(y) truth(y') κ((x,y),(x,y'))`.
pub fn dsd_population_at_x(
    ctx: &SteinContext<'_>,
    truth: &CategoricalPmf,
    x: StateAction,
) -> Result<f64> {
    ctx.model.check_x(x)?;
    if truth.len() != ctx.model.num_states() {
        return Err(Error::contract(
            "truth pmf does not match the model's state count",
        ));
    }
    let points: Vec<(SamplePoint, f64)> = truth
        .probs()
        .iter()
        .enumerate()
        .map(|(y, w)| (SamplePoint { x, y }, *w))
        .collect();
    weighted_kernel_sum(ctx, &points)
}
