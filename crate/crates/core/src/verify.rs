//! Self-check suite run by `patenteb verify`: metric oracles, gradient
//! checks, a PCA oracle and soundness scans of a build on the synthetic
//! fixture.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::time::Instant;

use rand::Rng;

use crate::distill::{fit_incremental_pca, PcaConfig};
use crate::domains::{classify_relation, DomainRelation, Split};
use crate::fixture::{generate_corpus, FixtureConfig};
use crate::losses::{batch_hard_triplet_loss, mnr_loss, online_contrastive_loss, pair_softmax_loss, LossConfig};
use crate::metrics::{macro_f1, ndcg_at_k, pearson, rank_candidates, v_measure, NDCG_K};
use crate::numeric::Matrix;
use crate::seed::{rng_for, DeterministicRng};
use crate::taskgen::{build_all, BuildConfig, BuildOutput, Records, TaskId};

/// Deliberate defects for checking that the suite notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Ranks only nine positions when computing NDCG.
    Ndcg,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub fixture: FixtureConfig,
    pub mutation: Option<Mutation>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: crate::seed::DEFAULT_SEED,
            fixture: FixtureConfig::default(),
            mutation: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = Result<String, String>;

fn row(name: &str, f: impl FnOnce() -> Check) -> CheckRow {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckRow {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn within(name: &str, worst: f64, tol: f64) -> Check {
    if worst <= tol {
        Ok(format!("max error {worst:.2e} <= {tol:.0e}"))
    } else {
        Err(format!("{name}: max error {worst:.3e} > {tol:.0e}"))
    }
}

fn rng(seed: u64, label: &str) -> DeterministicRng {
    rng_for(seed, &["verify", label])
}

/// Runs every check and returns one row per check.
pub fn run_verify(opts: &VerifyOptions) -> Vec<CheckRow> {
    let s = opts.seed;
    let mut rows = vec![
        row("ndcg@10 oracle", || check_ndcg(s, opts.mutation == Some(Mutation::Ndcg))),
        row("pearson oracle", || check_pearson(s)),
        row("v-measure oracle", || check_v_measure(s)),
        row("macro-f1 oracle", || check_macro_f1(s)),
        row("loss gradients", || check_gradients(s)),
        row("pca oracle", || check_pca(s)),
    ];
    let start = Instant::now();
    let corpus = generate_corpus(&opts.fixture);
    let built = build_all(&corpus, BuildConfig::desk());
    let build_secs = start.elapsed().as_secs_f64();
    match built {
        Ok(out) => {
            rows.push(row("split leakage", || check_leakage(&out)));
            rows.push(row("negative soundness", || check_negatives(&out)));
            rows.push(row("positive and triplet caps", || check_caps(&out)));
            rows.push(row("paraphrase positive rate", || check_paraphrase_rate(&out)));
            if let Some(r) = rows.iter_mut().find(|r| r.name == "split leakage") {
                r.seconds += build_secs;
            }
        }
        Err(e) => rows.push(CheckRow {
            name: "fixture build".into(),
            passed: false,
            detail: e.to_string(),
            seconds: build_secs,
        }),
    }
    rows
}

pub fn all_passed(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.passed)
}

pub fn render(rows: &[CheckRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{:<28} {:<6} {:>8}  detail", "check", "result", "seconds")?;
    for r in rows {
        let status = if r.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{:<28} {:<6} {:>8.2}  {}", r.name, status, r.seconds, r.detail)?;
    }
    Ok(())
}

fn check_ndcg(seed: u64, mutated: bool) -> Check {
    let mut rng = rng(seed, "ndcg");
    let mut worst = 0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let n_rel = rng.gen_range(1..=n.min(5));
        // Coarse scores so ties occur.
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8u8))).collect();
        let mut relevant = HashSet::new();
        while relevant.len() < n_rel {
            relevant.insert(rng.gen_range(0..n));
        }
        let cands = Matrix::from_vec(n, 1, scores.clone());
        let ranking = rank_candidates(&[1.0], &cands);
        let rel: Vec<bool> = ranking.iter().map(|c| relevant.contains(c)).collect();
        let k = if mutated { NDCG_K - 1 } else { NDCG_K };
        let got: f64 = ndcg_at_k(&rel, n_rel, k).map_err(|e| e.to_string())?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
        let dcg: f64 = order.iter().take(10).enumerate().filter(|(_, c)| relevant.contains(c)).map(|(p, _)| gain(p)).sum();
        let idcg: f64 = (0..n_rel.min(10)).map(gain).sum();
        worst = worst.max((got - dcg / idcg).abs());
    }
    within("ndcg", worst, 1e-12)
}

fn check_pearson(seed: u64) -> Check {
    let mut rng = rng(seed, "pearson");
    let mut worst = 0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.gen_range(-3.0..3.0)).collect();
        let got = pearson(&x, &y).map_err(|e| e.to_string())?;
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        worst = worst.max((got - sxy / (sxx * syy).sqrt()).abs());
    }
    within("pearson", worst, 1e-12)
}

fn check_v_measure(seed: u64) -> Check {
    let mut rng = rng(seed, "vmeasure");
    let mut worst = 0f64;
    for _ in 0..500 {
        let n = rng.gen_range(2..=50);
        let kc = rng.gen_range(1..6);
        let kk = rng.gen_range(1..6);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kc)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kk)).collect();
        let got = v_measure::<f64, _, _>(&pred, &truth).map_err(|e| e.to_string())?.v;

        let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&c, &k) in truth.iter().zip(&pred) {
            *table.entry((c, k)).or_default() += 1.0;
        }
        let nf = n as f64;
        let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
        let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
        for (&(c, k), &v) in &table {
            *rows.entry(c).or_default() += v;
            *cols.entry(k).or_default() += v;
        }
        let h = |m: &BTreeMap<usize, f64>| -m.values().map(|&v| v / nf * (v / nf).ln()).sum::<f64>();
        let (hc, hk) = (h(&rows), h(&cols));
        let hc_k: f64 = -table.iter().map(|(&(_, k), &v)| v / nf * (v / cols[&k]).ln()).sum::<f64>();
        let hk_c: f64 = -table.iter().map(|(&(c, _), &v)| v / nf * (v / rows[&c]).ln()).sum::<f64>();
        let hom = if hc == 0.0 { 1.0 } else { 1.0 - hc_k / hc };
        let com = if hk == 0.0 { 1.0 } else { 1.0 - hk_c / hk };
        let want = if hom + com == 0.0 { 0.0 } else { 2.0 * hom * com / (hom + com) };
        worst = worst.max((got - want).abs());
    }
    within("v-measure", worst, 1e-10)
}

fn f1_oracle(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    let mut m = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t][p] += 1;
    }
    let mut total = 0.0;
    for c in 0..k {
        let tp = m[c][c] as f64;
        let fp = (0..k).map(|r| m[r][c]).sum::<usize>() as f64 - tp;
        let fn_ = m[c].iter().sum::<usize>() as f64 - tp;
        let denom = 2.0 * tp + fp + fn_;
        total += if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
    }
    total / k as f64
}

fn check_macro_f1(seed: u64) -> Check {
    let mut rng = rng(seed, "f1");
    let mut worst = 0f64;
    for case in 0..1000 {
        let k = if case == 0 { 109 } else { rng.gen_range(2..12) };
        let n = if case == 0 { 2000 } else { rng.gen_range(1..80) };
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.gen_bool(0.6) { t } else { rng.gen_range(0..k) })
            .collect();
        let got: f64 = macro_f1(&truth, &pred, k).map_err(|e| e.to_string())?;
        worst = worst.max((got - f1_oracle(&truth, &pred, k)).abs());
    }
    within("macro-f1", worst, 1e-12)
}

fn random_matrix(rng: &mut DeterministicRng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Relative infinity-norm error between an analytic gradient and central
/// differences of `f` with step 1e-4.
fn fd_error(x: &Matrix<f64>, grad: &Matrix<f64>, f: impl Fn(&Matrix<f64>) -> f64) -> f64 {
    let h = 1e-4;
    let mut fd = vec![0.0; x.as_slice().len()];
    let mut probe = x.clone();
    for (i, slot) in fd.iter_mut().enumerate() {
        let orig = x.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        *slot = (up - down) / (2.0 * h);
    }
    let inf = |v: &mut dyn Iterator<Item = f64>| v.fold(0f64, |m, x| m.max(x.abs()));
    let diff = inf(&mut grad.as_slice().iter().zip(&fd).map(|(a, b)| a - b));
    let scale = inf(&mut grad.as_slice().iter().copied()).max(inf(&mut fd.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn check_gradients(seed: u64) -> Check {
    let mut rng = rng(seed, "gradients");
    let cfg = LossConfig::<f64> {
        temperature: 0.5,
        margin: 0.5,
    };
    let mut worst = BTreeMap::new();
    let mut record = |name: &'static str, e: f64| {
        let w = worst.entry(name).or_insert(0f64);
        *w = w.max(e);
    };
    for _ in 0..100 {
        let b = rng.gen_range(2..=8);
        let d = rng.gen_range(2..=16);
        let a = random_matrix(&mut rng, b, d);
        let p = random_matrix(&mut rng, b, d);

        let g = mnr_loss(&a, &p, &cfg).map_err(|e| e.to_string())?;
        record("mnr", fd_error(&a, &g.grad_a, |x| mnr_loss(x, &p, &cfg).unwrap().value));
        record("mnr", fd_error(&p, &g.grad_b, |x| mnr_loss(&a, x, &cfg).unwrap().value));

        let labels: Vec<u8> = (0..b).map(|_| rng.gen_range(0..2)).collect();
        let g = online_contrastive_loss(&a, &p, &labels, &cfg).map_err(|e| e.to_string())?;
        let near_margin = (0..b).any(|i| {
            let c = crate::numeric::cosine(a.row(i), p.row(i));
            labels[i] == 0 && (c - cfg.margin).abs() < 1e-3
        });
        if !near_margin {
            record(
                "contrastive",
                fd_error(&a, &g.grad_a, |x| online_contrastive_loss(x, &p, &labels, &cfg).unwrap().value),
            );
        }

        if b >= 4 {
            let classes: Vec<usize> = (0..b).map(|i| i % 2).collect();
            let g = batch_hard_triplet_loss(&a, &classes, &cfg).map_err(|e| e.to_string())?;
            record(
                "triplet",
                fd_error(&a, &g.grad, |x| batch_hard_triplet_loss(x, &classes, &cfg).unwrap().value),
            );
        }

        let w = random_matrix(&mut rng, 2, 2 * d);
        let g = pair_softmax_loss(&a, &p, &labels, &w).map_err(|e| e.to_string())?;
        record("softmax", fd_error(&a, &g.grad_a, |x| pair_softmax_loss(x, &p, &labels, &w).unwrap().value));
        record(
            "softmax",
            fd_error(&w, &g.grad_weights, |x| pair_softmax_loss(&a, &p, &labels, x).unwrap().value),
        );
    }
    let max = worst.values().copied().fold(0f64, f64::max);
    let detail: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    if max <= 1e-5 {
        Ok(detail.join(", "))
    } else {
        Err(detail.join(", "))
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and eigenvectors as rows.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

fn check_pca(seed: u64) -> Check {
    let mut rng = rng(seed, "pca");
    let (n, d, k) = (10_000, 16, 6);
    // Anisotropic data: independent coordinates with distinct scales, then
    // mixed by a random rotation from the oracle itself.
    let scales: Vec<f64> = (0..d).map(|i| 3.0 * 0.8f64.powi(i as i32)).collect();
    let mut mix = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let x: f64 = rng.gen_range(-1.0..1.0);
            mix[i][j] = x;
            mix[j][i] = x;
        }
    }
    let (_, rot) = jacobi_eigen(mix);
    let data: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = scales.iter().map(|s| s * rng.gen_range(-1.0..1.0)).collect();
            (0..d).map(|j| (0..d).map(|i| z[i] * rot[i][j]).sum::<f64>() + 0.5).collect()
        })
        .collect();
    let p = fit_incremental_pca(data.clone(), k, &PcaConfig::default()).map_err(|e| e.to_string())?;

    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &data {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|c| *c /= (n - 1) as f64);
    let (values, vectors) = jacobi_eigen(cov);

    let mut angle = 0f64;
    let mut var_err = 0f64;
    let mut ortho = 0f64;
    for i in 0..k {
        let w = p.components.row(i);
        let cos: f64 = w.iter().zip(&vectors[i]).map(|(a, b)| a * b).sum();
        angle = angle.max(cos.abs().min(1.0).acos());
        var_err = var_err.max((p.explained_variance[i] - values[i]).abs() / values[i]);
        for j in 0..k {
            let g: f64 = w.iter().zip(p.components.row(j)).map(|(a, b)| a * b).sum();
            ortho = ortho.max((g - f64::from(u8::from(i == j))).abs());
        }
    }
    if angle <= 1e-4 && var_err <= 1e-6 && ortho <= 1e-6 {
        Ok(format!("angle {angle:.1e} rad, variance {var_err:.1e}, orthonormality {ortho:.1e}"))
    } else {
        Err(format!("angle {angle:.2e} rad, variance {var_err:.2e}, orthonormality {ortho:.2e}"))
    }
}

fn families_of(out: &BuildOutput, task: TaskId) -> impl Iterator<Item = (Split, &Vec<usize>)> {
    out.datasets
        .iter()
        .filter(move |d| d.task == task)
        .flat_map(|d| d.members.iter().map(move |m| (d.split, m)))
}

fn check_leakage(out: &BuildOutput) -> Check {
    let mut leaks = 0;
    let mut checked = 0;
    for t in TaskId::ALL {
        for (split, members) in families_of(out, t) {
            checked += 1;
            if members.iter().any(|&i| out.splits.split_of(i) != split) {
                leaks += 1;
            }
        }
    }
    if leaks == 0 {
        Ok(format!("{checked} records, 0 cross-split"))
    } else {
        Err(format!("{leaks} of {checked} records mix splits"))
    }
}

fn expected_negative(task: TaskId, rel: DomainRelation) -> bool {
    match task {
        TaskId::RetrievalIn => matches!(rel, DomainRelation::FullMix | DomainRelation::PartMix),
        TaskId::RetrievalOut => rel == DomainRelation::Out,
        TaskId::RetrievalMixed => rel == DomainRelation::PartMix,
        _ => rel == DomainRelation::PartMix,
    }
}

fn check_negatives(out: &BuildOutput) -> Check {
    let ids: HashMap<&str, usize> = out.corpus.families().iter().enumerate().map(|(i, f)| (f.family_id.as_str(), i)).collect();
    let cited: HashSet<(usize, usize)> = out
        .corpus
        .families()
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.cites.iter().filter_map(|c| ids.get(c.as_str())).map(move |&j| (i.min(j), i.max(j))))
        .collect();
    let mut bad = 0;
    let mut checked = 0;
    for d in out.datasets.iter().filter(|d| matches!(d.records, Records::Retrieval(_))) {
        for m in &d.members {
            let (q, n) = (m[0], m[2]);
            checked += 1;
            let rel = classify_relation(&out.corpus.get(q).ipc3_set(), &out.corpus.get(n).ipc3_set());
            let connected = q == n || cited.contains(&(q.min(n), q.max(n)));
            if connected || !rel.is_ok_and(|r| expected_negative(d.task, r)) {
                bad += 1;
            }
        }
    }
    if bad == 0 && checked > 0 {
        Ok(format!("{checked} negatives disconnected and in category"))
    } else {
        Err(format!("{bad} of {checked} negatives unsound"))
    }
}

fn check_caps(out: &BuildOutput) -> Check {
    let mut max_pos = 0;
    let mut max_trip = 0;
    for d in out.datasets.iter().filter(|d| matches!(d.records, Records::Retrieval(_))) {
        let mut per_query: HashMap<usize, (HashSet<usize>, usize)> = HashMap::new();
        for m in &d.members {
            let e = per_query.entry(m[0]).or_default();
            e.0.insert(m[1]);
            e.1 += 1;
        }
        for (pos, trips) in per_query.values() {
            max_pos = max_pos.max(pos.len());
            max_trip = max_trip.max(*trips);
        }
    }
    if max_pos <= 100 && max_trip <= 10 {
        Ok(format!("max positives {max_pos}, max triplets per query {max_trip}"))
    } else {
        Err(format!("max positives {max_pos} (cap 100), max triplets {max_trip} (cap 10)"))
    }
}

fn check_paraphrase_rate(out: &BuildOutput) -> Check {
    let mut worst = 0f64;
    let mut parts = Vec::new();
    for d in &out.datasets {
        if let Records::Pairs(p) = &d.records {
            if !matches!(d.task, TaskId::ParaProblem | TaskId::ParaSolution) {
                continue;
            }
            let rate = p.iter().filter(|r| r.label == 1).count() as f64 / p.len().max(1) as f64;
            worst = worst.max((rate - 0.14).abs());
            parts.push(format!("{}/{} {:.3}", d.task, d.split, rate));
        }
    }
    if worst <= 0.005 {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes() {
        let (vals, vecs) = jacobi_eigen(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((vecs[0][0].abs() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn oracles_pass_and_mutation_is_caught() {
        assert!(check_ndcg(1, false).is_ok());
        assert!(check_ndcg(1, true).is_err());
        assert!(check_pearson(1).is_ok());
        assert!(check_v_measure(1).is_ok());
        assert!(check_macro_f1(1).is_ok());
    }
}
