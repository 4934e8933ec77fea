//! Lexical hard-negative mining.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::corpus::{CitationGraph, Corpus};
use crate::domains::{DomainIndex, DomainRelation};

use super::TaskgenError;

/// Sorted, de-duplicated interned token ids of one text.
pub type TokenSet = Vec<u32>;

/// Interns lowercase alphanumeric tokens.
#[derive(Debug, Default)]
pub struct TokenIndex {
    vocab: HashMap<String, u32>,
}

impl TokenIndex {
    pub fn tokens(&mut self, text: &str) -> TokenSet {
        let mut out: Vec<u32> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| {
                let t = t.to_lowercase();
                let next = self.vocab.len() as u32;
                *self.vocab.entry(t).or_insert(next)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Jaccard similarity of two sorted token sets; 0 when both are empty.
pub fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Retrieval task relation group, used both for positives and to pick the
/// negative category.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeCategory {
    In,
    Out,
    Mixed,
}

impl NegativeCategory {
    /// Whether a (query, positive) relation belongs to this task group.
    pub fn accepts_positive(self, r: DomainRelation) -> bool {
        match self {
            Self::In => r == DomainRelation::In,
            Self::Out => r == DomainRelation::Out,
            Self::Mixed => matches!(r, DomainRelation::FullMix | DomainRelation::PartMix),
        }
    }

    /// Whether a (query, candidate) relation is an admissible negative.
    pub fn accepts_negative(self, r: DomainRelation) -> bool {
        match self {
            Self::In => matches!(r, DomainRelation::FullMix | DomainRelation::PartMix),
            Self::Out => r == DomainRelation::Out,
            Self::Mixed => r == DomainRelation::PartMix,
        }
    }
}

/// Up to `k` candidates not citation-connected to `query`, in the required
/// relation category, ranked by Jaccard similarity (descending) then family
/// id. `candidates` are corpus indices; `candidate_tokens[c]` must be set for
/// every candidate considered.
#[allow(clippy::too_many_arguments)]
pub fn mine_hard_negatives(
    query: usize,
    query_tokens: &[u32],
    category: NegativeCategory,
    candidates: &[usize],
    candidate_tokens: &[Option<TokenSet>],
    graph: &CitationGraph,
    domains: &DomainIndex,
    corpus: &Corpus,
    k: usize,
) -> Result<Vec<usize>, TaskgenError> {
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .copied()
        .filter(|&c| c != query && !graph.connected(query, c))
        .filter(|&c| category.accepts_negative(domains.relation(query, c)))
        .filter_map(|c| candidate_tokens[c].as_ref().map(|t| (jaccard(query_tokens, t), c)))
        .collect();
    if scored.is_empty() {
        return Err(TaskgenError::NoEligibleCandidates(corpus.get(query).family_id.clone()));
    }
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| {
        b.0.total_cmp(&a.0)
            .then_with(|| corpus.get(a.1).family_id.cmp(&corpus.get(b.1).family_id))
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_by(by_rank);
    Ok(scored.into_iter().map(|(_, c)| c).collect())
}
