use std::collections::BTreeMap;

use crate::agents::Dictionary;
use crate::error::Result;
use crate::kernels::{
    multiset_cross_sum, stein_kernel, ConditionalModel, KernelScales, SamplePoint, SteinContext,
};

/// `κ(c, c) + 2 Σ_{d ∈ reference} κ(d, c)`: the growth of the dictionary's
/// unnormalized DSD² when `c` is appended.
pub fn selection_criterion(
    ctx: &SteinContext<'_>,
    reference: &[SamplePoint],
    candidate: SamplePoint,
) -> Result<f64> {
    let mut cross = 0.0;
    for d in reference {
        cross += stein_kernel(ctx, *d, candidate)?;
    }
    Ok(stein_kernel(ctx, candidate, candidate)? + 2.0 * cross)
}

/// Greedy SPMCMC-style thinning of one episode's transitions.
///
/// Candidates are split into consecutive batches of `batch_size` (the last may
/// be short). From each batch the point minimizing [`selection_criterion`]
/// against the dictionary plus the points already selected this episode is
/// kept; ties go to the earliest candidate.
pub fn spmcmc_select(
    candidates: &[SamplePoint],
    dictionary: &Dictionary,
    model: &ConditionalModel,
    scales: KernelScales,
    batch_size: usize,
) -> Result<Vec<SamplePoint>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let batch_size = batch_size.max(1);
    if batch_size == 1 {
        return Ok(candidates.to_vec());
    }
    let ctx = SteinContext::new(model, scales)?;
    let mut pool: BTreeMap<SamplePoint, usize> = dictionary.multiset().clone();
    let mut selected = Vec::with_capacity(candidates.len().div_ceil(batch_size));
    for batch in candidates.chunks(batch_size) {
        let mut best: Option<(SamplePoint, f64)> = None;
        for c in batch {
            let value = stein_kernel(&ctx, *c, *c)? + 2.0 * multiset_cross_sum(&ctx, &pool, *c)?;
            if best.is_none_or(|(_, b)| value < b) {
                best = Some((*c, value));
            }
        }
        let (chosen, _) = best.expect("batches are non-empty");
        *pool.entry(chosen).or_default() += 1;
        selected.push(chosen);
    }
    Ok(selected)
}
