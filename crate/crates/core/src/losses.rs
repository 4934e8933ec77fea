//! Value-and-gradient kernels for the training losses. Similarities are
//! cosines of the raw rows, so gradients are exact for any row norm.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::numeric::{add_cosine_grad, cosine, dot, pairwise_sum, Matrix, Scalar};
use crate::taskgen::TaskId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("batch of {0} rows is too small (need at least 2)")]
    BatchTooSmall(usize),
    #[error("no anchor has both a positive and a negative in the batch")]
    NoValidAnchors,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid loss configuration: {0}")]
    BadConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig<T> {
    pub temperature: T,
    pub margin: T,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            temperature: T::of(0.05),
            margin: T::of(0.5),
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.temperature > T::zero()) {
            return Err(LossError::BadConfig(format!("temperature {} must be positive", self.temperature)));
        }
        if !(self.margin > T::zero() && self.margin < T::one()) {
            return Err(LossError::BadConfig(format!("margin {} must lie in (0, 1)", self.margin)));
        }
        Ok(())
    }
}

/// Loss value with gradients for two embedding batches.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGrad<T> {
    pub value: T,
    pub grad_a: Matrix<T>,
    pub grad_b: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletGrad<T> {
    pub value: T,
    pub grad: Matrix<T>,
    pub n_valid: usize,
    pub n_skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxGrad<T> {
    pub value: T,
    pub grad_a: Matrix<T>,
    pub grad_b: Matrix<T>,
    pub grad_weights: Matrix<T>,
}

fn same_shape<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<(), LossError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(LossError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn labels_match(rows: usize, labels: usize) -> Result<(), LossError> {
    if rows != labels {
        return Err(LossError::ShapeMismatch(format!("{rows} rows but {labels} labels")));
    }
    Ok(())
}

fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let m = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let terms: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    m + pairwise_sum(&terms).ln()
}

/// `log(1 + exp(x))` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-batch softmax ranking: anchor `i` should pick positive `i` among all
/// positives, with logits `cos(a_i, p_j) / temperature`.
pub fn mnr_loss<T: Scalar>(anchors: &Matrix<T>, positives: &Matrix<T>, cfg: &LossConfig<T>) -> Result<PairGrad<T>, LossError> {
    cfg.validate()?;
    same_shape(anchors, positives)?;
    let b = anchors.rows();
    if b < 2 {
        return Err(LossError::BatchTooSmall(b));
    }
    let inv_b = T::one() / T::of_usize(b);
    let mut grad_a = Matrix::zeros(b, anchors.cols());
    let mut grad_b = Matrix::zeros(b, anchors.cols());
    let mut losses = Vec::with_capacity(b);
    for i in 0..b {
        let logits: Vec<T> = (0..b)
            .map(|j| cosine(anchors.row(i), positives.row(j)) / cfg.temperature)
            .collect();
        let lse = log_sum_exp(&logits);
        losses.push(lse - logits[i]);
        for j in 0..b {
            let p = (logits[j] - lse).exp();
            let target = if i == j { T::one() } else { T::zero() };
            let coeff = (p - target) * inv_b / cfg.temperature;
            add_cosine_grad(anchors.row(i), positives.row(j), coeff, grad_a.row_mut(i));
            add_cosine_grad(positives.row(j), anchors.row(i), coeff, grad_b.row_mut(j));
        }
    }
    Ok(PairGrad {
        value: pairwise_sum(&losses) * inv_b,
        grad_a,
        grad_b,
    })
}

/// `y (1 - cos)^2 + (1 - y) max(0, cos - margin)^2`, averaged over pairs.
pub fn online_contrastive_loss<T: Scalar>(
    e1: &Matrix<T>,
    e2: &Matrix<T>,
    labels: &[u8],
    cfg: &LossConfig<T>,
) -> Result<PairGrad<T>, LossError> {
    cfg.validate()?;
    same_shape(e1, e2)?;
    labels_match(e1.rows(), labels.len())?;
    let n = e1.rows();
    let mut grad_a = Matrix::zeros(n, e1.cols());
    let mut grad_b = Matrix::zeros(n, e1.cols());
    if n == 0 {
        return Ok(PairGrad {
            value: T::zero(),
            grad_a,
            grad_b,
        });
    }
    let inv_n = T::one() / T::of_usize(n);
    let two = T::of(2.0);
    let mut losses = Vec::with_capacity(n);
    for (i, &y) in labels.iter().enumerate() {
        let c = cosine(e1.row(i), e2.row(i));
        let (loss, dloss) = if y == 1 {
            ((T::one() - c).powi(2), -two * (T::one() - c))
        } else if c > cfg.margin {
            ((c - cfg.margin).powi(2), two * (c - cfg.margin))
        } else {
            (T::zero(), T::zero())
        };
        losses.push(loss);
        if dloss != T::zero() {
            add_cosine_grad(e1.row(i), e2.row(i), dloss * inv_n, grad_a.row_mut(i));
            add_cosine_grad(e2.row(i), e1.row(i), dloss * inv_n, grad_b.row_mut(i));
        }
    }
    Ok(PairGrad {
        value: pairwise_sum(&losses) * inv_n,
        grad_a,
        grad_b,
    })
}

/// Batch-hard soft-margin triplet loss over labelled embeddings. Each anchor
/// uses its least similar same-class row and most similar other-class row
/// (lowest index on ties); anchors lacking either are skipped.
pub fn batch_hard_triplet_loss<T: Scalar>(emb: &Matrix<T>, labels: &[usize], _cfg: &LossConfig<T>) -> Result<TripletGrad<T>, LossError> {
    labels_match(emb.rows(), labels.len())?;
    let n = emb.rows();
    if n < 2 {
        return Err(LossError::BatchTooSmall(n));
    }
    let sims: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| cosine(emb.row(i), emb.row(j))).collect())
        .collect();
    let mut picks = Vec::new();
    for a in 0..n {
        let mut pos: Option<usize> = None;
        let mut neg: Option<usize> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                if pos.map_or(true, |p| sims[a][j] < sims[a][p]) {
                    pos = Some(j);
                }
            } else if neg.map_or(true, |q| sims[a][j] > sims[a][q]) {
                neg = Some(j);
            }
        }
        if let (Some(p), Some(q)) = (pos, neg) {
            picks.push((a, p, q));
        }
    }
    if picks.is_empty() {
        return Err(LossError::NoValidAnchors);
    }
    let inv = T::one() / T::of_usize(picks.len());
    let mut grad = Matrix::zeros(n, emb.cols());
    let mut losses = Vec::with_capacity(picks.len());
    for &(a, p, q) in &picks {
        let gap = sims[a][q] - sims[a][p];
        losses.push(softplus(gap));
        let s = sigmoid(gap) * inv;
        add_cosine_grad(emb.row(a), emb.row(q), s, grad.row_mut(a));
        add_cosine_grad(emb.row(a), emb.row(p), -s, grad.row_mut(a));
        add_cosine_grad(emb.row(q), emb.row(a), s, grad.row_mut(q));
        add_cosine_grad(emb.row(p), emb.row(a), -s, grad.row_mut(p));
    }
    Ok(TripletGrad {
        value: pairwise_sum(&losses) * inv,
        grad,
        n_valid: picks.len(),
        n_skipped: n - picks.len(),
    })
}

/// Two-class cross-entropy on `logits_k = w_k . [e1; e2]`; `weights` is
/// 2 x 2d.
pub fn pair_softmax_loss<T: Scalar>(
    e1: &Matrix<T>,
    e2: &Matrix<T>,
    labels: &[u8],
    weights: &Matrix<T>,
) -> Result<SoftmaxGrad<T>, LossError> {
    same_shape(e1, e2)?;
    labels_match(e1.rows(), labels.len())?;
    let d = e1.cols();
    if weights.rows() != 2 || weights.cols() != 2 * d {
        return Err(LossError::ShapeMismatch(format!(
            "weights are {}x{}, expected 2x{}",
            weights.rows(),
            weights.cols(),
            2 * d
        )));
    }
    let n = e1.rows();
    let mut grad_a = Matrix::zeros(n, d);
    let mut grad_b = Matrix::zeros(n, d);
    let mut grad_w = Matrix::zeros(2, 2 * d);
    if n == 0 {
        return Ok(SoftmaxGrad {
            value: T::zero(),
            grad_a,
            grad_b,
            grad_weights: grad_w,
        });
    }
    let inv_n = T::one() / T::of_usize(n);
    let mut losses = Vec::with_capacity(n);
    for (i, &y) in labels.iter().enumerate() {
        let (u, v) = (e1.row(i), e2.row(i));
        let logit = |k: usize| dot(&weights.row(k)[..d], u) + dot(&weights.row(k)[d..], v);
        let z = [logit(0), logit(1)];
        let y = usize::from(y == 1);
        let lse = log_sum_exp(&z);
        losses.push(lse - z[y]);
        for k in 0..2 {
            let coeff = ((z[k] - lse).exp() - if k == y { T::one() } else { T::zero() }) * inv_n;
            let wk = weights.row(k);
            for j in 0..d {
                grad_a.row_mut(i)[j] = grad_a.row(i)[j] + coeff * wk[j];
                grad_b.row_mut(i)[j] = grad_b.row(i)[j] + coeff * wk[d + j];
            }
            let gw = grad_w.row_mut(k);
            for j in 0..d {
                gw[j] = gw[j] + coeff * u[j];
                gw[d + j] = gw[d + j] + coeff * v[j];
            }
        }
    }
    Ok(SoftmaxGrad {
        value: pairwise_sum(&losses) * inv_n,
        grad_a,
        grad_b,
        grad_weights: grad_w,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultitaskSum<T> {
    pub total: T,
    /// Training tasks without a loss entry.
    pub missing: Vec<TaskId>,
    /// Entries for tasks that have no training split; not summed.
    pub ignored: Vec<TaskId>,
}

/// Unit-weight sum of the per-task losses over the training tasks.
pub fn multitask_sum<T: Scalar>(task_losses: &BTreeMap<TaskId, T>) -> MultitaskSum<T> {
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for t in TaskId::training() {
        match task_losses.get(&t) {
            Some(&v) => values.push(v),
            None => missing.push(t),
        }
    }
    let ignored: Vec<TaskId> = task_losses.keys().copied().filter(|t| !t.has_training_split()).collect();
    if !missing.is_empty() {
        log::warn!("multitask sum is missing {} training task(s): {missing:?}", missing.len());
    }
    MultitaskSum {
        total: pairwise_sum(&values),
        missing,
        ignored,
    }
}
