//! Task metrics: NDCG@10 for retrieval, Pearson for paraphrase, a linear
//! probe scored by macro-F1 for classification, and V-measure over
//! mini-batch k-means for clustering.

mod kmeans;
mod ndcg;
mod pearson;
mod probe;
mod vmeasure;

use thiserror::Error;

use crate::numeric::{mean, Scalar};
use crate::taskgen::{TaskFamily, TaskId};

pub use kmeans::{kmeans_cluster, KMeansConfig, KMeansResult};
pub use ndcg::{ndcg_at_k, rank_candidates, retrieval_task_score, RankedRetrievalResult, RetrievalPool, RetrievalScore, NDCG_K};
pub use pearson::pearson;
pub use probe::{
    confusion_matrix, macro_f1, macro_f1_probe, probe_on_subset, stratified_subset, ProbeConfig, ProbeOutcome, Solver,
};
pub use vmeasure::{entropy, v_measure, ClusteringScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("relevant set is empty")]
    EmptyRelevantSet,
    #[error("no query has a relevant candidate")]
    NoScorableQueries,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("class {0} has no example in the training subset")]
    ClassMissingFromSubset(usize),
    #[error("solver did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("{points} points cannot form {clusters} clusters")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("expected 15 task scores, got {0}")]
    WrongTaskCount(usize),
}

pub(crate) fn check_len(left: usize, right: usize) -> Result<(), MetricError> {
    if left == right {
        Ok(())
    } else {
        Err(MetricError::LengthMismatch { left, right })
    }
}

/// Unweighted mean of exactly 15 per-task scores.
pub fn overall_score<T: Scalar>(task_scores: &[T]) -> Result<T, MetricError> {
    if task_scores.len() != TaskId::ALL.len() {
        return Err(MetricError::WrongTaskCount(task_scores.len()));
    }
    Ok(mean(task_scores).expect("non-empty"))
}

/// Mean of the tasks of each family, in [`TaskFamily::ALL`] order. Families
/// without any score are omitted.
pub fn family_means<T: Scalar>(scores: &[(TaskId, T)]) -> Vec<(TaskFamily, T)> {
    TaskFamily::ALL
        .iter()
        .filter_map(|&f| {
            let xs: Vec<T> = scores.iter().filter(|(t, _)| t.family() == f).map(|&(_, v)| v).collect();
            mean(&xs).map(|m| (f, m))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_examples() {
        assert_eq!(overall_score(&[1.0f64; 15]).unwrap(), 1.0);
        let mut xs = [0.0f64; 15];
        xs[7] = 1.0;
        assert!((overall_score(&xs).unwrap() - 1.0 / 15.0).abs() < 1e-15);
        assert_eq!(overall_score(&[1.0f64; 14]), Err(MetricError::WrongTaskCount(14)));
    }

    #[test]
    fn family_means_group_by_family() {
        let scores: Vec<(TaskId, f64)> = TaskId::ALL.iter().map(|&t| (t, if t.family() == TaskFamily::Retrieval { 1.0 } else { 0.0 })).collect();
        let fm = family_means(&scores);
        assert_eq!(fm.len(), 4);
        assert_eq!(fm[0], (TaskFamily::Retrieval, 1.0));
        assert!(fm[1..].iter().all(|&(_, v)| v == 0.0));
    }
}
