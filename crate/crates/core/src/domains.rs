//! Dominant-IPC3 assignment, domain relations and stratified splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, PatentFamily};
use crate::seed::rng_for;

/// Minimum stratum size that can populate all three splits.
pub const MIN_SPLIT_STRATUM: usize = 10;
/// Default domain retention threshold.
pub const MIN_PER_CLASS: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("family `{0}` has no IPC codes")]
    NoIpcCodes(String),
    #[error("IPC3 set is empty")]
    EmptyIpcSet,
    #[error("split file: {0}")]
    SplitFile(String),
}

/// Relation between two families' IPC3 sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainRelation {
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "OUT")]
    Out,
    #[serde(rename = "FULL_MIX")]
    FullMix,
    #[serde(rename = "PART_MIX")]
    PartMix,
}

impl DomainRelation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::In => "IN",
            Self::Out => "OUT",
            Self::FullMix => "FULL_MIX",
            Self::PartMix => "PART_MIX",
        }
    }
}

impl fmt::Display for DomainRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainRelation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IN" => Ok(Self::In),
            "OUT" => Ok(Self::Out),
            "FULL_MIX" => Ok(Self::FullMix),
            "PART_MIX" => Ok(Self::PartMix),
            other => Err(format!("unknown domain relation `{other}`")),
        }
    }
}

/// Most frequent IPC3 code (duplicates count), smallest code on ties.
pub fn dominant_ipc3(family: &PatentFamily) -> Result<&str, DomainError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for code in &family.ipc_codes {
        *counts.entry(code.as_str()).or_default() += 1;
    }
    // On equal counts the smaller code must compare greater.
    counts
        .into_iter()
        .max_by(|(ka, ca), (kb, cb)| ca.cmp(cb).then_with(|| kb.cmp(ka)))
        .map(|(k, _)| k)
        .ok_or_else(|| DomainError::NoIpcCodes(family.family_id.clone()))
}

/// Classifies two IPC3 sets. Works for any ordered element type.
pub fn classify_relation<T: Ord>(q: &BTreeSet<T>, t: &BTreeSet<T>) -> Result<DomainRelation, DomainError> {
    if q.is_empty() || t.is_empty() {
        return Err(DomainError::EmptyIpcSet);
    }
    let shared = q.intersection(t).count();
    Ok(if shared == 0 {
        DomainRelation::Out
    } else if shared == q.len() && shared == t.len() {
        DomainRelation::In
    } else if shared == q.len() || shared == t.len() {
        DomainRelation::FullMix
    } else {
        DomainRelation::PartMix
    })
}

/// Precomputed per-family domain information, indexed like the corpus.
#[derive(Clone, Debug)]
pub struct DomainIndex {
    dominant: Vec<String>,
    ipc_sets: Vec<BTreeSet<u16>>,
    codes: Vec<String>,
}

impl DomainIndex {
    pub fn build(corpus: &Corpus) -> Result<Self, DomainError> {
        let codes: Vec<String> = corpus
            .families()
            .iter()
            .flat_map(|f| f.ipc_codes.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let code_id: HashMap<&str, u16> = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u16))
            .collect();
        let mut dominant = Vec::with_capacity(corpus.len());
        let mut ipc_sets = Vec::with_capacity(corpus.len());
        for f in corpus.families() {
            dominant.push(dominant_ipc3(f)?.to_string());
            ipc_sets.push(f.ipc_codes.iter().map(|c| code_id[c.as_str()]).collect());
        }
        Ok(Self {
            dominant,
            ipc_sets,
            codes,
        })
    }

    pub fn dominant(&self, idx: usize) -> &str {
        &self.dominant[idx]
    }

    /// IPC3 set of a family as interned code ids.
    pub fn ipc_set(&self, idx: usize) -> &BTreeSet<u16> {
        &self.ipc_sets[idx]
    }

    pub fn relation(&self, a: usize, b: usize) -> DomainRelation {
        classify_relation(&self.ipc_sets[a], &self.ipc_sets[b]).expect("filtered families have IPC codes")
    }

    /// Canonical comma-joined signature of the family's full IPC3 set.
    pub fn signature(&self, idx: usize) -> String {
        self.ipc_sets[idx]
            .iter()
            .map(|&c| self.codes[c as usize].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Keeps families whose dominant stratum has at least `min_per_class`
/// members. Returns the filtered corpus and the retained domain count.
pub fn filter_domains(corpus: &Corpus, min_per_class: usize) -> Result<(Corpus, usize), DomainError> {
    let mut sizes: HashMap<String, usize> = HashMap::new();
    for f in corpus.families() {
        *sizes.entry(dominant_ipc3(f)?.to_string()).or_default() += 1;
    }
    let kept = corpus.filtered(|f| {
        dominant_ipc3(f).map(|d| sizes[d] >= min_per_class).unwrap_or(false)
    });
    let retained = sizes.values().filter(|&&n| n >= min_per_class).count();
    Ok((kept, retained))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "validation" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRow {
    pub family_id: String,
    pub split: Split,
    pub stratum: String,
}

/// Split membership for every family, indexed like the corpus it was built on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAssignment {
    splits: Vec<Split>,
    strata: Vec<String>,
    family_ids: Vec<String>,
    /// Strata too small for three splits, sent entirely to train.
    pub small_strata: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// Validation and test counts for a stratum; the remainder goes to train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let total = self.train + self.validation + self.test;
        let n_val = (n as f64 * self.validation / total + 1e-9).floor() as usize;
        let n_test = (n as f64 * self.test / total + 1e-9).floor() as usize;
        (n - n_val - n_test, n_val, n_test)
    }
}

/// Per dominant-IPC3 stratum: sort by family id, shuffle with a stratum-keyed
/// seed, then cut into validation, test and train (remainder).
pub fn stratified_split(
    corpus: &Corpus,
    domains: &DomainIndex,
    ratios: SplitRatios,
    seed: u64,
) -> SplitAssignment {
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..corpus.len() {
        strata.entry(domains.dominant(i)).or_default().push(i);
    }
    let mut splits = vec![Split::Train; corpus.len()];
    let mut small_strata = Vec::new();
    for (stratum, mut members) in strata {
        if members.len() < MIN_SPLIT_STRATUM {
            log::warn!(
                "stratum {stratum} has {} families (< {MIN_SPLIT_STRATUM}); assigned to train",
                members.len()
            );
            small_strata.push(stratum.to_string());
            continue;
        }
        members.sort_by(|&a, &b| corpus.get(a).family_id.cmp(&corpus.get(b).family_id));
        members.shuffle(&mut rng_for(seed, &["split", stratum]));
        let (_, n_val, n_test) = ratios.counts(members.len());
        for &i in &members[..n_val] {
            splits[i] = Split::Validation;
        }
        for &i in &members[n_val..n_val + n_test] {
            splits[i] = Split::Test;
        }
    }
    SplitAssignment {
        splits,
        strata: (0..corpus.len()).map(|i| domains.dominant(i).to_string()).collect(),
        family_ids: corpus.families().iter().map(|f| f.family_id.clone()).collect(),
        small_strata,
    }
}

impl SplitAssignment {
    pub fn split_of(&self, idx: usize) -> Split {
        self.splits[idx]
    }

    pub fn stratum_of(&self, idx: usize) -> &str {
        &self.strata[idx]
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    /// Corpus indices belonging to `split`, ascending.
    pub fn members(&self, split: Split) -> Vec<usize> {
        (0..self.splits.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = SplitRow> + '_ {
        (0..self.splits.len()).map(|i| SplitRow {
            family_id: self.family_ids[i].clone(),
            split: self.splits[i],
            stratum: self.strata[i].clone(),
        })
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for row in self.rows() {
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn read_split_rows(r: impl BufRead) -> Result<Vec<SplitRow>, DomainError> {
    r.lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| {
            let line = l.map_err(|e| DomainError::SplitFile(e.to_string()))?;
            serde_json::from_str(&line).map_err(|e| DomainError::SplitFile(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::family;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn dominant_examples() {
        assert_eq!(dominant_ipc3(&family("F", &["A01"], &[])).unwrap(), "A01");
        assert_eq!(dominant_ipc3(&family("F", &["B02", "B02", "A01"], &[])).unwrap(), "B02");
        assert_eq!(dominant_ipc3(&family("F", &["B02", "A01"], &[])).unwrap(), "A01");
        assert!(matches!(dominant_ipc3(&family("F", &[], &[])), Err(DomainError::NoIpcCodes(_))));
    }

    #[test]
    fn relation_examples() {
        use DomainRelation::*;
        assert_eq!(classify_relation(&set(&["A01"]), &set(&["A01"])).unwrap(), In);
        assert_eq!(classify_relation(&set(&["A01"]), &set(&["B02"])).unwrap(), Out);
        assert_eq!(classify_relation(&set(&["A01", "B02"]), &set(&["B02", "C03"])).unwrap(), PartMix);
        assert_eq!(classify_relation(&set(&["A01"]), &set(&["A01", "C03"])).unwrap(), FullMix);
        assert_eq!(classify_relation(&set(&[]), &set(&["A01"])), Err(DomainError::EmptyIpcSet));
    }

    #[test]
    fn relations_partition_small_universe() {
        let universe = ["A", "B", "C", "D"];
        let subsets: Vec<BTreeSet<&str>> = (1u32..16)
            .map(|m| (0..4).filter(|b| m & (1 << b) != 0).map(|b| universe[b]).collect())
            .collect();
        for q in &subsets {
            for t in &subsets {
                let is_in = q == t;
                let is_out = q.is_disjoint(t);
                let is_full = q != t && (q.is_subset(t) || t.is_subset(q));
                let is_part = !is_out && !q.is_subset(t) && !t.is_subset(q);
                assert_eq!([is_in, is_out, is_full, is_part].iter().filter(|&&x| x).count(), 1);
                let expected = if is_in {
                    DomainRelation::In
                } else if is_out {
                    DomainRelation::Out
                } else if is_full {
                    DomainRelation::FullMix
                } else {
                    DomainRelation::PartMix
                };
                assert_eq!(classify_relation(q, t).unwrap(), expected);
                assert_eq!(classify_relation(t, q).unwrap(), expected);
            }
        }
    }

    #[test]
    fn filter_keeps_large_domains() {
        let mut fams = Vec::new();
        for i in 0..150 {
            fams.push(family(&format!("A{i}"), &["A01"], &[]));
        }
        for i in 0..40 {
            fams.push(family(&format!("B{i}"), &["B02"], &[]));
        }
        let c = Corpus::from_families(fams).unwrap();
        let (kept, n) = filter_domains(&c, 100).unwrap();
        assert_eq!((kept.len(), n), (150, 1));
        let (all, n) = filter_domains(&c, 40).unwrap();
        assert_eq!((all.len(), n), (190, 2));
    }

    #[test]
    fn split_counts_follow_rounding_rule() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(10), (8, 1, 1));
        assert_eq!(r.counts(100), (80, 10, 10));
        assert_eq!(r.counts(101), (81, 10, 10));
        assert_eq!(r.counts(19), (17, 1, 1));
    }

    fn corpus_with_strata(sizes: &[usize]) -> Corpus {
        let mut fams = Vec::new();
        for (s, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                fams.push(family(&format!("S{s}-{i:04}"), &[&format!("X{s:02}")], &[]));
            }
        }
        Corpus::from_families(fams).unwrap()
    }

    #[test]
    fn small_strata_go_to_train() {
        let c = corpus_with_strata(&[9, 10]);
        let d = DomainIndex::build(&c).unwrap();
        let s = stratified_split(&c, &d, SplitRatios::default(), 42);
        assert_eq!(s.small_strata, vec!["X00".to_string()]);
        assert!((0..9).all(|i| s.split_of(i) == Split::Train));
        assert_eq!(s.members(Split::Test).len(), 1);
    }

    #[test]
    fn split_jsonl_round_trip() {
        let c = corpus_with_strata(&[12]);
        let d = DomainIndex::build(&c).unwrap();
        let s = stratified_split(&c, &d, SplitRatios::default(), 1);
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let rows = read_split_rows(buf.as_slice()).unwrap();
        assert_eq!(rows, s.rows().collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn split_is_partition_and_deterministic(sizes in prop::collection::vec(1usize..60, 1..6), seed: u64) {
            let c = corpus_with_strata(&sizes);
            let d = DomainIndex::build(&c).unwrap();
            let a = stratified_split(&c, &d, SplitRatios::default(), seed);
            let b = stratified_split(&c, &d, SplitRatios::default(), seed);
            prop_assert_eq!(&a, &b);
            let total: usize = Split::ALL.iter().map(|&s| a.members(s).len()).sum();
            prop_assert_eq!(total, c.len());
            let mut offset = 0;
            for &n in &sizes {
                let idx: Vec<usize> = (offset..offset + n).collect();
                offset += n;
                let count = |s| idx.iter().filter(|&&i| a.split_of(i) == s).count() as f64;
                if n >= MIN_SPLIT_STRATUM {
                    prop_assert!((count(Split::Validation) - 0.1 * n as f64).abs() < 2.0);
                    prop_assert!((count(Split::Test) - 0.1 * n as f64).abs() < 2.0);
                    prop_assert!((count(Split::Train) - 0.8 * n as f64).abs() < 2.0);
                }
            }
        }
    }
}
