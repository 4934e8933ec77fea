//! Linear probe: multinomial logistic regression with L2 penalty, fitted by
//! L-BFGS with a stochastic-average-gradient fallback, scored by macro-F1.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::numeric::{dot, pairwise_sum, Matrix, Scalar};
use crate::seed::rng_for;
use crate::taskgen::allocate;

use super::{check_len, MetricError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Lbfgs,
    Sag,
}

#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub subset_fraction: f64,
    pub seed: u64,
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    /// Bound on the largest gradient component (L-BFGS) or relative weight
    /// change per epoch (SAG).
    pub tol: f64,
    pub memory: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            subset_fraction: 0.2,
            seed: 0,
            c: 1.0,
            max_iter: 10_000,
            tol: 1e-4,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome<T> {
    pub macro_f1: T,
    pub solver: Solver,
    pub iterations: usize,
    pub converged: bool,
    pub n_train: usize,
    pub predictions: Vec<usize>,
}

/// Indices of a class-stratified subset holding `round(fraction * n)`
/// examples, at least one per class. Indices come back sorted.
pub fn stratified_subset(labels: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    let cap = (fraction * labels.len() as f64).round() as usize;
    let quotas = allocate(&sizes, cap, 1);
    let mut out = Vec::with_capacity(cap);
    for ((class, mut members), q) in by_class.into_iter().zip(quotas) {
        let mut rng = rng_for(seed, &["probe-subset", &class.to_string()]);
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..q]);
    }
    out.sort_unstable();
    out
}

/// `counts[t][p]`: examples of true class `t` predicted as `p`.
pub fn confusion_matrix(truth: &[usize], pred: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t][p] += 1;
    }
    m
}

/// Unweighted mean over `n_classes` of per-class F1; a class with no true
/// and no predicted example scores 0.
pub fn macro_f1<T: Scalar>(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<T, MetricError> {
    check_len(truth.len(), pred.len())?;
    if n_classes == 0 {
        return Err(MetricError::DegenerateInput("no classes".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fneg = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let f1: Vec<T> = (0..n_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                T::zero()
            } else {
                T::of_usize(2 * tp[c]) / T::of_usize(denom)
            }
        })
        .collect();
    Ok(pairwise_sum(&f1) / T::of_usize(n_classes))
}

/// Multinomial logistic regression; weights are `k` rows of `d + 1`
/// (last entry is the unpenalized intercept).
struct Problem<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [usize],
    k: usize,
    lambda: T,
}

const CHUNKS: usize = 64;

impl<T: Scalar> Problem<'_, T> {
    fn width(&self) -> usize {
        self.x.cols() + 1
    }

    fn logits(&self, w: &[T], row: &[T], out: &mut [T]) {
        let width = self.width();
        for (c, o) in out.iter_mut().enumerate() {
            let wc = &w[c * width..(c + 1) * width];
            *o = dot(&wc[..width - 1], row) + wc[width - 1];
        }
    }

    /// Softmax probabilities in place; returns log-sum-exp.
    fn softmax(z: &mut [T]) -> T {
        let m = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut s = T::zero();
        for v in z.iter_mut() {
            *v = (*v - m).exp();
            s = s + *v;
        }
        for v in z.iter_mut() {
            *v = *v / s;
        }
        m + s.ln()
    }

    fn penalty(&self, w: &[T]) -> T {
        let width = self.width();
        let sq: Vec<T> = (0..self.k).map(|c| {
            let wc = &w[c * width..(c + 1) * width - 1];
            dot(wc, wc)
        }).collect();
        self.lambda * T::of(0.5) * pairwise_sum(&sq)
    }

    /// Mean loss plus penalty, and its gradient.
    fn value_grad(&self, w: &[T]) -> (T, Vec<T>) {
        let n = self.x.rows();
        let width = self.width();
        let chunk = n.div_ceil(CHUNKS).max(1);
        let parts: Vec<(T, Vec<T>)> = (0..n)
            .step_by(chunk)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let mut g = vec![T::zero(); w.len()];
                let mut loss = T::zero();
                let mut z = vec![T::zero(); self.k];
                for i in start..(start + chunk).min(n) {
                    let row = self.x.row(i);
                    self.logits(w, row, &mut z);
                    let zy = z[self.y[i]];
                    loss = loss + Self::softmax(&mut z) - zy;
                    z[self.y[i]] = z[self.y[i]] - T::one();
                    for c in 0..self.k {
                        let gc = &mut g[c * width..(c + 1) * width];
                        for (gj, &xj) in gc.iter_mut().zip(row) {
                            *gj = *gj + z[c] * xj;
                        }
                        gc[width - 1] = gc[width - 1] + z[c];
                    }
                }
                (loss, g)
            })
            .collect();
        let inv_n = T::one() / T::of_usize(n);
        let losses: Vec<T> = parts.iter().map(|p| p.0).collect();
        let value = pairwise_sum(&losses) * inv_n + self.penalty(w);
        let mut grad = vec![T::zero(); w.len()];
        let mut column = vec![T::zero(); parts.len()];
        for (j, gj) in grad.iter_mut().enumerate() {
            for (slot, p) in column.iter_mut().zip(&parts) {
                *slot = p.1[j];
            }
            *gj = pairwise_sum(&column) * inv_n;
            if j % width != width - 1 {
                *gj = *gj + self.lambda * w[j];
            }
        }
        (value, grad)
    }

    fn predict(&self, w: &[T], x: &Matrix<T>) -> Vec<usize> {
        let mut z = vec![T::zero(); self.k];
        x.iter_rows()
            .map(|row| {
                self.logits(w, row, &mut z);
                let mut best = 0;
                for c in 1..self.k {
                    if z[c] > z[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

struct Fit<T> {
    w: Vec<T>,
    iterations: usize,
    converged: bool,
}

fn lbfgs<T: Scalar>(p: &Problem<'_, T>, cfg: &ProbeConfig) -> Fit<T> {
    let tol = T::of(cfg.tol);
    let mut w = vec![T::zero(); p.k * p.width()];
    let (mut f, mut g) = p.value_grad(&w);
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::new();
    for it in 0..cfg.max_iter {
        if max_abs(&g) <= tol {
            return Fit { w, iterations: it, converged: true };
        }
        // Two-loop recursion.
        let mut d: Vec<T> = g.iter().map(|&x| -x).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * dot(s, &d);
            for (di, &yi) in d.iter_mut().zip(y) {
                *di = *di - a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|x| *x = *x * gamma);
        } else {
            let scale = T::one() / max_abs(&g).max(T::one());
            d.iter_mut().for_each(|x| *x = *x * scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &d);
            for (di, &si) in d.iter_mut().zip(s) {
                *di = *di + (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= T::zero() {
            history.clear();
            d = g.iter().map(|&x| -x).collect();
            slope = dot(&g, &d);
        }
        // Backtracking line search with the Armijo condition.
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<T> = w.iter().zip(&d).map(|(&wi, &di)| wi + step * di).collect();
            let (fc, gc) = p.value_grad(&cand);
            if fc <= f + T::of(1e-4) * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step = step * T::of(0.5);
        }
        let Some((cand, fc, gc)) = accepted else {
            return Fit { w, iterations: it, converged: false };
        };
        let s: Vec<T> = cand.iter().zip(&w).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gc.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y) {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, T::one() / sy));
        }
        w = cand;
        f = fc;
        g = gc;
    }
    let converged = max_abs(&g) <= tol;
    Fit { w, iterations: cfg.max_iter, converged }
}

fn sag<T: Scalar>(p: &Problem<'_, T>, cfg: &ProbeConfig) -> Fit<T> {
    let n = p.x.rows();
    let width = p.width();
    let max_sq = p.x.iter_rows().map(|r| dot(r, r)).fold(T::zero(), T::max) + T::one();
    let step = T::one() / (T::of(0.5) * max_sq + p.lambda);
    let mut w = vec![T::zero(); p.k * width];
    let mut memory = vec![T::zero(); n * p.k];
    let mut sum = vec![T::zero(); p.k * width];
    let mut seen = vec![false; n];
    let mut n_seen = 0usize;
    let mut rng = rng_for(cfg.seed, &["probe-sag"]);
    let mut z = vec![T::zero(); p.k];
    for epoch in 0..cfg.max_iter {
        let before = w.clone();
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            if !seen[i] {
                seen[i] = true;
                n_seen += 1;
            }
            let row = p.x.row(i);
            p.logits(&w, row, &mut z);
            Problem::<T>::softmax(&mut z);
            z[p.y[i]] = z[p.y[i]] - T::one();
            for c in 0..p.k {
                let delta = z[c] - memory[i * p.k + c];
                memory[i * p.k + c] = z[c];
                let sc = &mut sum[c * width..(c + 1) * width];
                for (sj, &xj) in sc.iter_mut().zip(row) {
                    *sj = *sj + delta * xj;
                }
                sc[width - 1] = sc[width - 1] + delta;
            }
            let inv = T::one() / T::of_usize(n_seen);
            for (j, wj) in w.iter_mut().enumerate() {
                let reg = if j % width == width - 1 { T::zero() } else { p.lambda * *wj };
                *wj = *wj - step * (sum[j] * inv + reg);
            }
        }
        let change = w.iter().zip(&before).fold(T::zero(), |a, (&x, &y)| a.max((x - y).abs()));
        let scale = max_abs(&w);
        if scale > T::zero() && change / scale <= T::of(cfg.tol) {
            return Fit { w, iterations: epoch + 1, converged: true };
        }
    }
    Fit { w, iterations: cfg.max_iter, converged: false }
}

/// Fits the probe on the given training rows and scores macro-F1 on the
/// test rows. Labels are class indices below `n_classes`; every class that
/// can be predicted must occur in the training rows.
pub fn probe_on_subset<T: Scalar>(
    train_x: &Matrix<T>,
    train_y: &[usize],
    test_x: &Matrix<T>,
    test_y: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeOutcome<T>, MetricError> {
    check_len(train_x.rows(), train_y.len())?;
    check_len(test_x.rows(), test_y.len())?;
    check_len(train_x.cols(), test_x.cols())?;
    let mut present = vec![false; n_classes];
    for &l in train_y {
        present[l] = true;
    }
    let train_classes = present.iter().rposition(|&p| p).map_or(0, |c| c + 1);
    if let Some(missing) = present[..train_classes].iter().position(|&p| !p) {
        return Err(MetricError::ClassMissingFromSubset(missing));
    }
    let problem = Problem {
        x: train_x,
        y: train_y,
        k: train_classes.max(1),
        lambda: T::one() / (T::of(cfg.c) * T::of_usize(train_x.rows().max(1))),
    };
    let mut fit = lbfgs(&problem, cfg);
    let mut solver = Solver::Lbfgs;
    if !fit.converged {
        log::warn!("L-BFGS did not converge in {} iterations; falling back to SAG", fit.iterations);
        fit = sag(&problem, cfg);
        solver = Solver::Sag;
        if !fit.converged {
            log::warn!("SAG did not converge in {} epochs", fit.iterations);
        }
    }
    let predictions = problem.predict(&fit.w, test_x);
    let macro_f1 = macro_f1(test_y, &predictions, n_classes)?;
    Ok(ProbeOutcome {
        macro_f1,
        solver,
        iterations: fit.iterations,
        converged: fit.converged,
        n_train: train_y.len(),
        predictions,
    })
}

/// Draws the stratified training subset, then fits and scores the probe.
pub fn macro_f1_probe<T: Scalar>(
    train_x: &Matrix<T>,
    train_y: &[usize],
    test_x: &Matrix<T>,
    test_y: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeOutcome<T>, MetricError> {
    check_len(train_x.rows(), train_y.len())?;
    let subset = stratified_subset(train_y, cfg.subset_fraction, cfg.seed);
    let cols = train_x.cols();
    let mut data = Vec::with_capacity(subset.len() * cols);
    for &i in &subset {
        data.extend_from_slice(train_x.row(i));
    }
    let sub_x = Matrix::from_vec(subset.len(), cols, data);
    let sub_y: Vec<usize> = subset.iter().map(|&i| train_y[i]).collect();
    probe_on_subset(&sub_x, &sub_y, test_x, test_y, n_classes, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n_per: usize, centers: &[[f64; 2]], spread: f64, seed: u64) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = rng_for(seed, &["blobs"]);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..n_per {
                data.push(center[0] + spread * rng.gen_range(-1.0..1.0));
                data.push(center[1] + spread * rng.gen_range(-1.0..1.0));
                y.push(c);
            }
        }
        (Matrix::from_vec(y.len(), 2, data), y)
    }

    #[test]
    fn one_class_predictor_on_balanced_pair() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 0, 0, 0];
        let v: f64 = macro_f1(&truth, &pred, 2).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        let absent: f64 = macro_f1(&[0, 0], &[0, 0], 2).unwrap();
        assert_eq!(absent, 0.5);
    }

    #[test]
    fn separable_blobs_score_one() {
        let centers = [[0.0, 5.0], [5.0, 0.0], [-5.0, -5.0]];
        let (x, y) = blobs(100, &centers, 1.0, 1);
        let (tx, ty) = blobs(30, &centers, 1.0, 2);
        let out = macro_f1_probe(&x, &y, &tx, &ty, 3, &ProbeConfig::default()).unwrap();
        assert_eq!(out.macro_f1, 1.0);
        assert_eq!(out.n_train, 60);
        assert!(out.converged && out.solver == Solver::Lbfgs);
    }

    #[test]
    fn sag_reaches_the_lbfgs_solution() {
        let (x, y) = blobs(40, &[[0.0, 1.0], [1.0, 0.0]], 1.5, 3);
        let p = Problem {
            x: &x,
            y: &y,
            k: 2,
            lambda: 1.0 / 80.0,
        };
        let cfg = ProbeConfig::default();
        let a = lbfgs(&p, &cfg);
        let b = sag(&p, &ProbeConfig { tol: 1e-8, ..cfg.clone() });
        assert!(a.converged && b.converged);
        let (fa, _) = p.value_grad(&a.w);
        let (fb, _) = p.value_grad(&b.w);
        assert!((fa - fb).abs() < 1e-6, "{fa} vs {fb}");
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let (x, y) = blobs(5, &[[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], 1.0, 4);
        let p = Problem {
            x: &x,
            y: &y,
            k: 3,
            lambda: 0.3,
        };
        let mut rng = rng_for(5, &["w"]);
        let w: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, g) = p.value_grad(&w);
        for j in 0..w.len() {
            let mut hi = w.clone();
            let mut lo = w.clone();
            hi[j] += 1e-5;
            lo[j] -= 1e-5;
            let fd = (p.value_grad(&hi).0 - p.value_grad(&lo).0) / 2e-5;
            assert!((fd - g[j]).abs() < 1e-7, "component {j}");
        }
    }

    #[test]
    fn subset_is_stratified_and_exact() {
        let labels: Vec<usize> = (0..1000).map(|i| if i < 900 { 0 } else { 1 + i % 3 }).collect();
        let s = stratified_subset(&labels, 0.2, 0);
        assert_eq!(s.len(), 200);
        let zeros = s.iter().filter(|&&i| labels[i] == 0).count();
        assert_eq!(zeros, 180);
        assert_eq!(s, stratified_subset(&labels, 0.2, 0));
        let tiny = stratified_subset(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 1], 0.2, 0);
        assert!(tiny.contains(&9));
    }

    #[test]
    fn missing_class_is_reported() {
        let x = Matrix::from_vec(2, 1, vec![0.0f64, 1.0]);
        let err = probe_on_subset(&x, &[0, 2], &x, &[0, 2], 3, &ProbeConfig::default());
        assert_eq!(err, Err(MetricError::ClassMissingFromSubset(1)));
    }
}
