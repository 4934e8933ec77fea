use crate::numeric::{mean, pairwise_sum, Scalar};

use super::{check_len, MetricError};

/// Product-moment correlation, computed in two passes with pairwise sums.
pub fn pearson<T: Scalar>(scores: &[T], labels: &[T]) -> Result<T, MetricError> {
    check_len(scores.len(), labels.len())?;
    if scores.len() < 2 {
        return Err(MetricError::DegenerateInput(format!("{} values", scores.len())));
    }
    let mx = mean(scores).expect("non-empty");
    let my = mean(labels).expect("non-empty");
    let dx: Vec<T> = scores.iter().map(|&x| x - mx).collect();
    let dy: Vec<T> = labels.iter().map(|&y| y - my).collect();
    let sxx = pairwise_sum(&dx.iter().map(|&a| a * a).collect::<Vec<_>>());
    let syy = pairwise_sum(&dy.iter().map(|&b| b * b).collect::<Vec<_>>());
    let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(&a, &b)| a * b).collect::<Vec<_>>());
    if scores.iter().all(|&x| x == scores[0]) || sxx == T::zero() {
        return Err(MetricError::DegenerateInput("scores are constant".into()));
    }
    if labels.iter().all(|&y| y == labels[0]) || syy == T::zero() {
        return Err(MetricError::DegenerateInput("labels are constant".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let l = [0.0f64, 1.0, 1.0, 0.0, 1.0];
        assert!((pearson(&l, &l).unwrap() - 1.0).abs() < 1e-15);
        let anti: Vec<f64> = l.iter().map(|x| 1.0 - x).collect();
        assert!((pearson(&anti, &l).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0f64, 1.0], &[0.0, 1.0]), Err(MetricError::DegenerateInput(_))));
        assert!(matches!(pearson(&[1.0f64], &[0.0]), Err(MetricError::DegenerateInput(_))));
    }

    proptest! {
        #[test]
        fn affine_invariance(xs in prop::collection::vec(-5.0f64..5.0, 3..40), a in 0.1f64..10.0, b in -3.0f64..3.0) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x + i as f64).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                let xt: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                prop_assert!((pearson(&xt, &ys).unwrap() - r).abs() < 1e-9);
            }
        }
    }
}
