//! Proportional stratified subsampling with per-stratum floors.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::seed::rng_for;

use super::TaskDataset;

/// Per-stratum quotas summing to `cap` (when `cap` is below the total):
/// proportional to stratum size, never below `min(min_per_stratum, size)`,
/// never above the size. Rounding uses largest remainders, ties to the
/// earlier stratum.
pub fn allocate(sizes: &[usize], cap: usize, min_per_stratum: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total <= cap {
        return sizes.to_vec();
    }
    let floors: Vec<usize> = sizes.iter().map(|&n| n.min(min_per_stratum)).collect();
    let mut fixed: Vec<Option<usize>> = vec![None; sizes.len()];
    let mut shares = vec![0.0; sizes.len()];
    let mut budget;
    loop {
        budget = cap.saturating_sub(fixed.iter().flatten().sum());
        let free_total: usize = (0..sizes.len()).filter(|&s| fixed[s].is_none()).map(|s| sizes[s]).sum();
        if free_total == 0 {
            break;
        }
        let mut changed = false;
        for s in 0..sizes.len() {
            if fixed[s].is_some() {
                continue;
            }
            let q = budget as f64 * sizes[s] as f64 / free_total as f64;
            shares[s] = q;
            if q < floors[s] as f64 {
                fixed[s] = Some(floors[s]);
                changed = true;
            } else if q > sizes[s] as f64 {
                fixed[s] = Some(sizes[s]);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out: Vec<usize> = (0..sizes.len())
        .map(|s| fixed[s].unwrap_or(shares[s].floor() as usize))
        .collect();
    let assigned: usize = (0..sizes.len()).filter(|&s| fixed[s].is_none()).map(|s| out[s]).sum();
    let mut extra = budget.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..sizes.len()).filter(|&s| fixed[s].is_none()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for s in order {
        if extra == 0 {
            break;
        }
        if out[s] < sizes[s] {
            out[s] += 1;
            extra -= 1;
        }
    }
    out
}

/// Subsamples `dataset` to at most `cap` records, stratified by its strata.
/// Retained records keep their original relative order.
pub fn stratified_subsample(dataset: &TaskDataset, cap: usize, min_per_stratum: usize, seed: u64) -> TaskDataset {
    if dataset.len() <= cap {
        return dataset.clone();
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.strata.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = allocate(&sizes, cap, min_per_stratum);
    let mut keep = Vec::with_capacity(cap);
    for ((stratum, mut idx), quota) in groups.into_iter().zip(quotas) {
        let labels = [dataset.task.name(), dataset.split.as_str(), "subsample", stratum];
        idx.shuffle(&mut rng_for(seed, &labels));
        keep.extend_from_slice(&idx[..quota]);
    }
    keep.sort_unstable();
    dataset.select(&keep)
}
