//! Mini-batch k-means with greedy k-means++ seeding and restarts.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::numeric::{pairwise_sum, Matrix, Scalar};
use crate::seed::{rng_for, DeterministicRng};

use super::MetricError;

#[derive(Clone, Debug)]
pub struct KMeansConfig {
    pub batch_size: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Passes over the data, measured in points seen.
    pub max_epochs: usize,
    /// Consecutive steps without inertia improvement before stopping.
    pub patience: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            batch_size: 16_384,
            seed: 42,
            restarts: 3,
            max_epochs: 100,
            patience: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult<T> {
    pub labels: Vec<usize>,
    pub centers: Matrix<T>,
    pub inertia: T,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Nearest center (lowest index on ties) and squared distance.
fn nearest<T: Scalar>(x: &[T], centers: &Matrix<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, center) in centers.iter_rows().enumerate() {
        let d = sq_dist(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign<T: Scalar>(x: &Matrix<T>, idx: &[usize], centers: &Matrix<T>) -> Vec<(usize, T)> {
    idx.par_iter().map(|&i| nearest(x.row(i), centers)).collect()
}

/// Greedy k-means++: each new center is the best of `2 + ln k` candidates
/// drawn proportionally to squared distance.
fn seed_centers<T: Scalar>(x: &Matrix<T>, idx: &[usize], k: usize, rng: &mut DeterministicRng) -> Matrix<T> {
    let d = x.cols();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = Matrix::zeros(k, d);
    let first = idx[rng.gen_range(0..idx.len())];
    centers.row_mut(0).copy_from_slice(x.row(first));
    let mut closest: Vec<T> = idx.iter().map(|&i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total = pairwise_sum(&closest);
        let candidates: Vec<usize> = (0..trials)
            .map(|_| {
                if total <= T::zero() {
                    return rng.gen_range(0..idx.len());
                }
                let target = T::of(rng.gen::<f64>()) * total;
                let mut acc = T::zero();
                for (j, &v) in closest.iter().enumerate() {
                    acc = acc + v;
                    if acc > target {
                        return j;
                    }
                }
                closest.iter().rposition(|&v| v > T::zero()).unwrap_or(idx.len() - 1)
            })
            .collect();
        let mut best: Option<(T, usize, Vec<T>)> = None;
        for &j in &candidates {
            let cand = x.row(idx[j]);
            let updated: Vec<T> = idx
                .par_iter()
                .zip(&closest)
                .map(|(&i, &cur)| cur.min(sq_dist(x.row(i), cand)))
                .collect();
            let pot = pairwise_sum(&updated);
            if best.as_ref().map_or(true, |b| pot < b.0) {
                best = Some((pot, j, updated));
            }
        }
        let (_, j, updated) = best.expect("at least two trials");
        centers.row_mut(c).copy_from_slice(x.row(idx[j]));
        closest = updated;
    }
    centers
}

fn run_once<T: Scalar>(x: &Matrix<T>, k: usize, cfg: &KMeansConfig, rng: &mut DeterministicRng) -> KMeansResult<T> {
    let n = x.rows();
    let all: Vec<usize> = (0..n).collect();
    let init_size = (3 * cfg.batch_size).max(k).min(n);
    let init_idx: Vec<usize> = if init_size == n {
        all.clone()
    } else {
        let mut v = sample(rng, n, init_size).into_vec();
        v.sort_unstable();
        v
    };
    let mut centers = seed_centers(x, &init_idx, k, rng);
    let mut counts = vec![0usize; k];
    let batch = cfg.batch_size.min(n);
    let steps = (cfg.max_epochs * n).div_ceil(batch);
    let mut best_ewa: Option<T> = None;
    let mut ewa: Option<T> = None;
    let mut stale = 0;
    let alpha = T::of((2.0 * batch as f64 / (n as f64 + 1.0)).min(1.0));
    for _ in 0..steps {
        let idx: Vec<usize> = if batch == n {
            all.clone()
        } else {
            let mut v = sample(rng, n, batch).into_vec();
            v.sort_unstable();
            v
        };
        let assigned = assign(x, &idx, &centers);
        let batch_inertia = pairwise_sum(&assigned.iter().map(|a| a.1).collect::<Vec<_>>()) / T::of_usize(batch);
        // Per-center learning rate 1/count, applied point by point in index order.
        let mut moved = T::zero();
        for (&i, &(c, _)) in idx.iter().zip(&assigned) {
            counts[c] += 1;
            let eta = T::one() / T::of_usize(counts[c]);
            for (cj, &xj) in centers.row_mut(c).iter_mut().zip(x.row(i)) {
                let delta = eta * (xj - *cj);
                moved = moved.max(delta.abs());
                *cj = *cj + delta;
            }
        }
        let e = match ewa {
            None => batch_inertia,
            Some(prev) => prev * (T::one() - alpha) + batch_inertia * alpha,
        };
        ewa = Some(e);
        if best_ewa.map_or(true, |b| e < b) {
            best_ewa = Some(e);
            stale = 0;
        } else {
            stale += 1;
        }
        if moved == T::zero() || stale >= cfg.patience {
            break;
        }
    }
    let final_assign = assign(x, &all, &centers);
    let inertia = pairwise_sum(&final_assign.iter().map(|a| a.1).collect::<Vec<_>>());
    KMeansResult {
        labels: final_assign.into_iter().map(|a| a.0).collect(),
        centers,
        inertia,
    }
}

/// Clusters the rows of `x` into `n_clusters` groups; the restart with the
/// lowest inertia wins, earlier restarts on ties.
pub fn kmeans_cluster<T: Scalar>(x: &Matrix<T>, n_clusters: usize, cfg: &KMeansConfig) -> Result<KMeansResult<T>, MetricError> {
    if n_clusters == 0 || x.rows() < n_clusters {
        return Err(MetricError::TooFewPoints {
            points: x.rows(),
            clusters: n_clusters,
        });
    }
    let mut best: Option<KMeansResult<T>> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut rng = rng_for(cfg.seed, &["kmeans", &r.to_string()]);
        let res = run_once(x, n_clusters, cfg, &mut rng);
        if best.as_ref().map_or(true, |b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{v_measure, ClusteringScore};

    fn blobs(k: usize, per: usize, seed: u64) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = rng_for(seed, &["blobs"]);
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for c in 0..k {
            for _ in 0..per {
                data.push(20.0 * c as f64 + rng.gen_range(-1.0..1.0));
                data.push(-15.0 * (c % 3) as f64 + rng.gen_range(-1.0..1.0));
                truth.push(c);
            }
        }
        (Matrix::from_vec(truth.len(), 2, data), truth)
    }

    #[test]
    fn separable_blobs_recovered() {
        let (x, truth) = blobs(5, 40, 1);
        let res = kmeans_cluster(&x, 5, &KMeansConfig::default()).unwrap();
        let s: ClusteringScore<f64> = v_measure(&res.labels, &truth).unwrap();
        assert!((s.v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_batches_also_recover_blobs() {
        let (x, truth) = blobs(4, 100, 2);
        let cfg = KMeansConfig {
            batch_size: 64,
            ..Default::default()
        };
        let res = kmeans_cluster(&x, 4, &cfg).unwrap();
        let s: ClusteringScore<f64> = v_measure(&res.labels, &truth).unwrap();
        assert!((s.v - 1.0).abs() < 1e-12);
        assert_eq!(res, kmeans_cluster(&x, 4, &cfg).unwrap());
    }

    #[test]
    fn one_cluster_per_point() {
        let (x, _) = blobs(2, 4, 3);
        let res = kmeans_cluster(&x, 8, &KMeansConfig::default()).unwrap();
        let mut labels = res.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 8);
        assert!(res.inertia.abs() < 1e-20);
    }

    #[test]
    fn too_few_points() {
        let x = Matrix::from_vec(2, 1, vec![0.0f64, 1.0]);
        assert!(matches!(kmeans_cluster(&x, 3, &KMeansConfig::default()), Err(MetricError::TooFewPoints { .. })));
    }
}
