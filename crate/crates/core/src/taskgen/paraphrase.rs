//! Problem and solution paraphrase pairs.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::domains::{DomainRelation, Split};
use crate::seed::rng_for;

use super::pipeline::BuildContext;
use super::{PairRecord, Records, TaskDataset, TaskId};

/// Positive and negative counts for a split of nominal size `target` when
/// `available` positive pairs exist. The total is recomputed from the
/// positive count so the positive share stays close to `rate` even for
/// tiny splits.
pub fn paraphrase_sizes(target: usize, rate: f64, available: usize) -> (usize, usize) {
    let wanted = (rate * target as f64).round() as usize;
    let pos = wanted.max(1).min(available);
    if pos == 0 {
        return (0, 0);
    }
    let total = (pos as f64 / rate).round() as usize;
    (pos, total - pos)
}

fn segment<'c>(ctx: &'c BuildContext<'_>, task: TaskId, i: usize) -> Option<&'c str> {
    let s = &ctx.segments[i];
    match task {
        TaskId::ParaProblem => s.problem.as_deref(),
        TaskId::ParaSolution => s.solution.as_deref(),
        _ => None,
    }
}

/// Returns the dataset and any warning about unreachable sizes.
pub fn build_paraphrase(ctx: &BuildContext<'_>, task: TaskId, split: Split, target: usize) -> (TaskDataset, Option<String>) {
    let seed = ctx.config.seed;
    let labels = |l: &str| rng_for(seed, &[task.name(), split.as_str(), l]);
    let usable = |i: usize| ctx.splits.split_of(i) == split && segment(ctx, task, i).is_some();

    let mut edges: Vec<(usize, usize)> = ctx
        .graph
        .directed_edges()
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .filter(|&(a, b)| usable(a) && usable(b) && ctx.domains.relation(a, b) == DomainRelation::In)
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let (n_pos, n_neg) = paraphrase_sizes(target, ctx.config.paraphrase_positive_rate, edges.len());
    let mut warning = None;
    let wanted = (ctx.config.paraphrase_positive_rate * target as f64).round() as usize;
    if n_pos < wanted {
        warning = Some(format!(
            "{task}/{split}: only {} positive pairs available (wanted {wanted}); size reduced",
            edges.len()
        ));
    }
    edges.shuffle(&mut labels("positives"));
    edges.truncate(n_pos);

    let pool: Vec<usize> = ctx.splits.members(split).into_iter().filter(|&i| usable(i)).collect();
    let mut negatives = Vec::with_capacity(n_neg);
    let mut seen = HashSet::new();
    let mut rng = labels("negatives");
    let max_attempts = n_neg * 200 + 1000;
    for _ in 0..max_attempts {
        if negatives.len() == n_neg || pool.len() < 2 {
            break;
        }
        let a = pool[rng.gen_range(0..pool.len())];
        let b = pool[rng.gen_range(0..pool.len())];
        if a == b
            || ctx.graph.connected(a, b)
            || ctx.domains.relation(a, b) != DomainRelation::Out
            || !seen.insert((a.min(b), a.max(b)))
        {
            continue;
        }
        negatives.push((a, b));
    }
    if negatives.len() < n_neg {
        warning = Some(format!(
            "{task}/{split}: only {} of {n_neg} negative pairs found",
            negatives.len()
        ));
    }

    let mut pairs: Vec<(usize, usize, u8)> = edges
        .iter()
        .map(|&(a, b)| (a, b, 1))
        .chain(negatives.iter().map(|&(a, b)| (a, b, 0)))
        .collect();
    pairs.shuffle(&mut labels("order"));
    let text = |i: usize| segment(ctx, task, i).expect("usable family").to_string();
    let records = pairs
        .iter()
        .map(|&(a, b, label)| PairRecord {
            text1: text(a),
            text2: text(b),
            label,
        })
        .collect();
    let dataset = TaskDataset {
        task,
        split,
        records: Records::Pairs(records),
        members: pairs.iter().map(|&(a, b, _)| vec![a, b]).collect(),
        strata: pairs.iter().map(|&(_, _, l)| l.to_string()).collect(),
    };
    (dataset, warning)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_keep_rate_within_half_a_point() {
        for target in 1..20_000 {
            let (p, n) = paraphrase_sizes(target, 0.14, usize::MAX);
            let rate = p as f64 / (p + n) as f64;
            assert!((rate - 0.14).abs() <= 0.005, "target {target}: {p}/{}", p + n);
        }
    }

    #[test]
    fn ten_thousand_records_have_about_1400_positives() {
        let (p, n) = paraphrase_sizes(10_000, 0.14, usize::MAX);
        assert_eq!(p, 1400);
        assert_eq!(p + n, 10_000);
    }

    #[test]
    fn scarce_positives_shrink_the_split() {
        let (p, n) = paraphrase_sizes(10_000, 0.14, 70);
        assert_eq!((p, p + n), (70, 500));
        assert_eq!(paraphrase_sizes(100, 0.14, 0), (0, 0));
    }
}
