use std::collections::BTreeMap;
use std::hash::Hash;

use serde::Serialize;

use crate::numeric::{pairwise_sum, Scalar};

use super::{check_len, MetricError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClusteringScore<T> {
    pub homogeneity: T,
    pub completeness: T,
    pub v: T,
    /// H(C|K), H(C), H(K|C), H(K) in nats.
    pub h_c_given_k: T,
    pub h_c: T,
    pub h_k_given_c: T,
    pub h_k: T,
}

/// Shannon entropy (nats) of a count vector.
pub fn entropy<T: Scalar>(counts: &[usize]) -> T {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return T::zero();
    }
    let n = T::of_usize(n);
    let terms: Vec<T> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = T::of_usize(c) / n;
            -p * p.ln()
        })
        .collect();
    pairwise_sum(&terms)
}

/// Conditional entropy H(A|B) from a contingency table `joint[(a, b)]`.
fn conditional<T: Scalar, A: Ord, B: Ord + Copy>(joint: &BTreeMap<(A, B), usize>, b_counts: &BTreeMap<B, usize>, n: usize) -> T {
    let n = T::of_usize(n);
    let terms: Vec<T> = joint
        .iter()
        .map(|((_, b), &nab)| {
            let nab_t = T::of_usize(nab);
            -(nab_t / n) * (nab_t / T::of_usize(b_counts[b])).ln()
        })
        .collect();
    pairwise_sum(&terms)
}

/// Homogeneity, completeness and V-measure of `assignment` (clusters K)
/// against `truth` (classes C).
pub fn v_measure<T: Scalar, K: Ord + Hash + Copy, C: Ord + Hash + Copy>(
    assignment: &[K],
    truth: &[C],
) -> Result<ClusteringScore<T>, MetricError> {
    check_len(assignment.len(), truth.len())?;
    if truth.is_empty() {
        return Err(MetricError::DegenerateInput("no points".into()));
    }
    let n = truth.len();
    let mut ck: BTreeMap<(C, K), usize> = BTreeMap::new();
    let mut kc: BTreeMap<(K, C), usize> = BTreeMap::new();
    let mut c_counts: BTreeMap<C, usize> = BTreeMap::new();
    let mut k_counts: BTreeMap<K, usize> = BTreeMap::new();
    for (&k, &c) in assignment.iter().zip(truth) {
        *ck.entry((c, k)).or_default() += 1;
        *kc.entry((k, c)).or_default() += 1;
        *c_counts.entry(c).or_default() += 1;
        *k_counts.entry(k).or_default() += 1;
    }
    let h_c: T = entropy(&c_counts.values().copied().collect::<Vec<_>>());
    let h_k: T = entropy(&k_counts.values().copied().collect::<Vec<_>>());
    let h_c_given_k: T = conditional(&ck, &k_counts, n);
    let h_k_given_c: T = conditional(&kc, &c_counts, n);
    let homogeneity = if h_c == T::zero() { T::one() } else { T::one() - h_c_given_k / h_c };
    let completeness = if h_k == T::zero() { T::one() } else { T::one() - h_k_given_c / h_k };
    let sum = homogeneity + completeness;
    let v = if sum > T::zero() {
        T::of(2.0) * homogeneity * completeness / sum
    } else {
        T::zero()
    };
    Ok(ClusteringScore {
        homogeneity,
        completeness,
        v,
        h_c_given_k,
        h_c,
        h_k_given_c,
        h_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s: ClusteringScore<f64> = v_measure(&[5, 5, 9, 9], &[0, 0, 1, 1]).unwrap();
        assert!((s.v - 1.0).abs() < 1e-15);
        let s: ClusteringScore<f64> = v_measure(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert!(s.homogeneity.abs() < 1e-15 && s.v.abs() < 1e-15);
        let s: ClusteringScore<f64> = v_measure(&[0, 0, 0], &[1, 1, 1]).unwrap();
        assert_eq!((s.homogeneity, s.completeness, s.v), (1.0, 1.0, 1.0));
        assert!(v_measure::<f64, _, _>(&[0, 1], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn relabel_invariant_and_symmetric(pairs in prop::collection::vec((0u8..5, 0u8..4), 1..50)) {
            let (k, c): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let s: ClusteringScore<f64> = v_measure(&k, &c).unwrap();
            let relabeled: Vec<u8> = k.iter().map(|x| 10 - x).collect();
            let r: ClusteringScore<f64> = v_measure(&relabeled, &c).unwrap();
            prop_assert!((s.v - r.v).abs() < 1e-12);
            let swapped: ClusteringScore<f64> = v_measure(&c, &k).unwrap();
            prop_assert!((s.homogeneity - swapped.completeness).abs() < 1e-12);
            prop_assert!((s.v - swapped.v).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s.v));
        }
    }
}
