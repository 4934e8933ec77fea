//! IPC3, bloom and citation-direction classification tasks.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::domains::{DomainIndex, Split};
use crate::seed::rng_for;

use super::pipeline::BuildContext;
use super::{LabeledText, PairRecord, Records, TaskDataset, TaskId};

pub fn build_text2ipc3(ctx: &BuildContext<'_>, split: Split) -> TaskDataset {
    let members = ctx.splits.members(split);
    let labels: Vec<String> = members.iter().map(|&i| ctx.domains.dominant(i).to_string()).collect();
    let records = members
        .iter()
        .zip(&labels)
        .map(|(&i, l)| LabeledText {
            text: ctx.texts[i].clone(),
            label: l.clone(),
        })
        .collect();
    TaskDataset {
        task: TaskId::ClassText2Ipc3,
        split,
        records: Records::Labeled(records),
        members: members.iter().map(|&i| vec![i]).collect(),
        strata: labels,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BloomLabel {
    Early,
    Late,
    Normal,
}

impl BloomLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Early => "early",
            Self::Late => "late",
            Self::Normal => "normal",
        }
    }
}

impl fmt::Display for BloomLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bloom labels for every family filed before `cutoff` (others `None`).
///
/// Within each dominant domain, families are ordered by a count and then by
/// family id; a family is in a decile when its position is at most
/// `ceil(N/10)`. Domains with fewer than ten eligible families are all normal.
pub fn bloom_labels(corpus: &Corpus, domains: &DomainIndex, cutoff: NaiveDate) -> Vec<Option<BloomLabel>> {
    let mut labels = vec![None; corpus.len()];
    let mut by_domain: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in corpus.families().iter().enumerate() {
        if f.filing_date < cutoff {
            by_domain.entry(domains.dominant(i)).or_default().push(i);
        }
    }
    for members in by_domain.values() {
        let n = members.len();
        for &i in members {
            labels[i] = Some(BloomLabel::Normal);
        }
        if n < 10 {
            continue;
        }
        let decile = n.div_ceil(10);
        let id = |i: usize| corpus.get(i).family_id.as_str();
        let ordered = |key: &dyn Fn(usize) -> u64, descending: bool| -> HashSet<usize> {
            let mut v = members.clone();
            v.sort_by(|&a, &b| {
                let c = key(a).cmp(&key(b));
                let c = if descending { c.reverse() } else { c };
                c.then_with(|| id(a).cmp(id(b)))
            });
            v.into_iter().take(decile).collect()
        };
        let five = |i: usize| corpus.get(i).cited_by_count_5y;
        let total = |i: usize| corpus.get(i).cited_by_count_total;
        let top5 = ordered(&five, true);
        let bottom5 = ordered(&five, false);
        let top_total = ordered(&total, true);
        for &i in members {
            if top5.contains(&i) {
                labels[i] = Some(BloomLabel::Early);
            } else if top_total.contains(&i) && bottom5.contains(&i) {
                labels[i] = Some(BloomLabel::Late);
            }
        }
    }
    labels
}

pub fn build_bloom(ctx: &BuildContext<'_>, split: Split) -> TaskDataset {
    let members: Vec<usize> = ctx
        .splits
        .members(split)
        .into_iter()
        .filter(|&i| ctx.bloom[i].is_some())
        .collect();
    let labels: Vec<String> = members
        .iter()
        .map(|&i| ctx.bloom[i].expect("filtered").as_str().to_string())
        .collect();
    let records = members
        .iter()
        .zip(&labels)
        .map(|(&i, l)| LabeledText {
            text: ctx.texts[i].clone(),
            label: l.clone(),
        })
        .collect();
    TaskDataset {
        task: TaskId::ClassBloom,
        split,
        records: Records::Labeled(records),
        members: members.iter().map(|&i| vec![i]).collect(),
        strata: labels,
    }
}

/// Pairs (citing, cited, 1) and (cited, citing, 0) for up to `target / 2`
/// sampled one-way citation edges inside the split.
pub fn build_nli_oldnew(ctx: &BuildContext<'_>, split: Split, target: usize) -> TaskDataset {
    let in_split = |i: usize| ctx.splits.split_of(i) == split;
    let mut edges: Vec<(usize, usize)> = ctx
        .graph
        .directed_edges()
        .iter()
        .copied()
        .filter(|&(a, b)| in_split(a) && in_split(b) && !ctx.graph.cites(b, a))
        .collect();
    edges.shuffle(&mut rng_for(ctx.config.seed, &[TaskId::ClassNliOldnew.name(), split.as_str()]));
    edges.truncate((target / 2).max(1));
    let mut records = Vec::with_capacity(edges.len() * 2);
    let mut members = Vec::with_capacity(edges.len() * 2);
    for &(a, b) in &edges {
        records.push(PairRecord {
            text1: ctx.texts[a].clone(),
            text2: ctx.texts[b].clone(),
            label: 1,
        });
        records.push(PairRecord {
            text1: ctx.texts[b].clone(),
            text2: ctx.texts[a].clone(),
            label: 0,
        });
        members.push(vec![a, b]);
        members.push(vec![b, a]);
    }
    let strata = records.iter().map(|r| r.label.to_string()).collect();
    TaskDataset {
        task: TaskId::ClassNliOldnew,
        split,
        records: Records::Pairs(records),
        members,
        strata,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::family;

    fn corpus(counts: &[(u64, u64)]) -> Corpus {
        let fams = counts
            .iter()
            .enumerate()
            .map(|(i, &(c5, ct))| {
                let mut f = family(&format!("F{i:02}"), &["A01"], &[]);
                f.cited_by_count_5y = c5;
                f.cited_by_count_total = ct;
                f
            })
            .collect();
        Corpus::from_families(fams).unwrap()
    }

    fn cutoff() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 6, 20).unwrap()
    }

    #[test]
    fn decile_of_ten_has_one_early() {
        let c = corpus(&(0..10).map(|i| (i, i)).collect::<Vec<_>>());
        let d = DomainIndex::build(&c).unwrap();
        let l = bloom_labels(&c, &d, cutoff());
        assert_eq!(l.iter().filter(|x| **x == Some(BloomLabel::Early)).count(), 1);
        assert_eq!(l[9], Some(BloomLabel::Early));
    }

    #[test]
    fn late_bloom_is_top_total_and_bottom_five_year() {
        let mut counts: Vec<(u64, u64)> = (1..=10).map(|i| (i, i)).collect();
        counts[0] = (0, 100);
        let c = corpus(&counts);
        let d = DomainIndex::build(&c).unwrap();
        let l = bloom_labels(&c, &d, cutoff());
        assert_eq!(l[0], Some(BloomLabel::Late));
        assert_eq!(l[9], Some(BloomLabel::Early));
    }

    #[test]
    fn small_domain_all_normal_and_post_cutoff_excluded() {
        let mut fams: Vec<_> = (0..9).map(|i| family(&format!("F{i}"), &["A01"], &[])).collect();
        fams[0].filing_date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let c = Corpus::from_families(fams).unwrap();
        let d = DomainIndex::build(&c).unwrap();
        let l = bloom_labels(&c, &d, cutoff());
        assert_eq!(l[0], None);
        assert!(l[1..].iter().all(|x| *x == Some(BloomLabel::Normal)));
    }

    #[test]
    fn ties_resolved_by_family_id() {
        let c = corpus(&[(5, 5); 20]);
        let d = DomainIndex::build(&c).unwrap();
        let l = bloom_labels(&c, &d, cutoff());
        assert_eq!(l[0], Some(BloomLabel::Early));
        assert_eq!(l[1], Some(BloomLabel::Early));
        assert_eq!(l[2], Some(BloomLabel::Normal));
    }
}
