use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::numeric::{dot, mean, Matrix, Scalar};

use super::{check_len, MetricError};

pub const NDCG_K: usize = 10;

/// One query's ranking over a candidate pool. Candidates are identified by
/// their index in the pool, and pools are ordered by ascending id, so index
/// order is id order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedRetrievalResult {
    pub ranking: Vec<usize>,
    pub relevant: BTreeSet<usize>,
}

impl RankedRetrievalResult {
    pub fn ndcg<T: Scalar>(&self, k: usize) -> Result<T, MetricError> {
        let rel: Vec<bool> = self.ranking.iter().take(k).map(|c| self.relevant.contains(c)).collect();
        ndcg_at_k(&rel, self.relevant.len(), k)
    }
}

fn discount<T: Scalar>(rank0: usize) -> T {
    T::one() / T::of_usize(rank0 + 2).log2()
}

/// NDCG@k of a binary relevance list given in ranked order, with
/// `n_relevant` relevant items in the whole pool.
pub fn ndcg_at_k<T: Scalar>(ranked_relevance: &[bool], n_relevant: usize, k: usize) -> Result<T, MetricError> {
    if n_relevant == 0 {
        return Err(MetricError::EmptyRelevantSet);
    }
    let dcg = ranked_relevance
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &r)| r)
        .fold(T::zero(), |acc, (i, _)| acc + discount::<T>(i));
    let idcg = (0..k.min(n_relevant)).fold(T::zero(), |acc, i| acc + discount::<T>(i));
    Ok(dcg / idcg)
}

/// Candidate indices by descending similarity to `query`, ties by ascending
/// index. Rows are expected to be unit norm, so the dot product is the
/// cosine.
pub fn rank_candidates<T: Scalar>(query: &[T], candidates: &Matrix<T>) -> Vec<usize> {
    let sims: Vec<T> = candidates.iter_rows().map(|c| dot(query, c)).collect();
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Queries, the shared candidate pool (ascending id order) and per-query
/// relevant candidate indices.
pub struct RetrievalPool<T> {
    pub queries: Matrix<T>,
    pub candidates: Matrix<T>,
    pub relevant: Vec<BTreeSet<usize>>,
    /// Per query, a candidate removed from its ranking (the query's own
    /// document in symmetric tasks). Empty means no exclusions.
    pub exclude: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalScore<T> {
    pub mean: T,
    pub n_evaluated: usize,
    /// Queries without any relevant candidate.
    pub n_skipped: usize,
}

/// Mean NDCG@10 over the queries that have at least one relevant candidate.
pub fn retrieval_task_score<T: Scalar>(pool: &RetrievalPool<T>) -> Result<RetrievalScore<T>, MetricError> {
    check_len(pool.queries.rows(), pool.relevant.len())?;
    let per_query: Vec<Option<T>> = (0..pool.queries.rows())
        .into_par_iter()
        .map(|q| {
            let relevant = &pool.relevant[q];
            if relevant.is_empty() {
                return None;
            }
            let skip = pool.exclude.get(q).copied().flatten();
            let ranking = rank_candidates(pool.queries.row(q), &pool.candidates);
            let rel: Vec<bool> = ranking
                .iter()
                .filter(|&&c| Some(c) != skip)
                .take(NDCG_K).map(|c| relevant.contains(c)).collect();
            Some(ndcg_at_k(&rel, relevant.len(), NDCG_K).expect("relevant set checked"))
        })
        .collect();
    let scores: Vec<T> = per_query.iter().flatten().copied().collect();
    let n_skipped = per_query.len() - scores.len();
    let mean = mean(&scores).ok_or(MetricError::NoScorableQueries)?;
    Ok(RetrievalScore {
        mean,
        n_evaluated: scores.len(),
        n_skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        assert_eq!(ndcg_at_k::<f64>(&[true], 1, 10).unwrap(), 1.0);
        let v: f64 = ndcg_at_k(&[false, false, true], 1, 10).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k::<f64>(&[false], 0, 10), Err(MetricError::EmptyRelevantSet));
        let r = RankedRetrievalResult {
            ranking: vec![2, 0, 1],
            relevant: [0].into(),
        };
        assert!((r.ndcg::<f64>(10).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn excluded_candidate_leaves_the_ranking() {
        let pool = RetrievalPool {
            queries: Matrix::from_vec(1, 2, vec![1.0f64, 0.0]),
            candidates: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.6, 0.8]),
            relevant: vec![[1].into()],
            exclude: vec![Some(0)],
        };
        assert_eq!(retrieval_task_score(&pool).unwrap().mean, 1.0);
    }

    #[test]
    fn ties_rank_by_index() {
        let cands = Matrix::from_vec(3, 2, vec![1.0f64, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(rank_candidates(&[1.0, 0.0], &cands), vec![0, 1, 2]);
        assert_eq!(rank_candidates(&[0.0, 1.0], &cands), vec![2, 0, 1]);
    }

    #[test]
    fn perfect_and_skipped_queries() {
        let pool = RetrievalPool {
            queries: Matrix::from_vec(2, 2, vec![1.0f64, 0.0, 0.0, 1.0]),
            candidates: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            relevant: vec![[0].into(), BTreeSet::new()],
            exclude: vec![],
        };
        let s = retrieval_task_score(&pool).unwrap();
        assert_eq!((s.mean, s.n_evaluated, s.n_skipped), (1.0, 1, 1));
    }
}
