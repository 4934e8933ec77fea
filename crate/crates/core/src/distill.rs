//! Student layer plans, incremental PCA projections of teacher embeddings,
//! and the MSE distillation objective.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{dot, pairwise_sum, Matrix, Scalar};
use crate::seed::rng_for;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistillError {
    #[error("unknown student `{0}`")]
    UnknownStudent(String),
    #[error("{n} samples are not enough for a {d}-dimensional projection")]
    InsufficientData { n: usize, d: usize },
    #[error("target dimension {d} must be in 1..{dim}")]
    BadDimension { d: usize, dim: usize },
    #[error("vector has dimension {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("projection file {path}: {detail}")]
    BadFile { path: String, detail: String },
}

/// Teacher layers kept by a student and its output dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerPlan {
    pub student: String,
    pub teacher_layers: Vec<usize>,
    pub target_dim: usize,
}

pub const TEACHER_LAYERS: usize = 24;
pub const TEACHER_DIM: usize = 1024;

pub const STUDENTS: [&str; 5] = ["patembed-base", "patembed-base_small", "patembed-small", "patembed-mini", "patembed-nano"];

impl LayerPlan {
    /// Indices form an arithmetic progression starting at layer 0.
    pub fn is_regular_stride(&self) -> bool {
        let l = &self.teacher_layers;
        if l.first() != Some(&0) || l.iter().any(|&i| i >= TEACHER_LAYERS) {
            return false;
        }
        l.len() < 2 || l.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] == l[1] - l[0])
    }
}

pub fn layer_plan(student: &str) -> Result<LayerPlan, DistillError> {
    let (stride, count, dim) = match student {
        "patembed-base" => (2, 12, 768),
        "patembed-base_small" => (3, 8, 512),
        "patembed-small" => (4, 6, 384),
        "patembed-mini" => (6, 4, 256),
        "patembed-nano" => (12, 2, 128),
        other => return Err(DistillError::UnknownStudent(other.to_string())),
    };
    Ok(LayerPlan {
        student: student.to_string(),
        teacher_layers: (0..count).map(|i| i * stride).collect(),
        target_dim: dim,
    })
}

#[derive(Clone, Debug)]
pub struct PcaConfig {
    pub sample_cap: usize,
    pub batch: usize,
    pub seed: u64,
    /// Subtract the fitted mean before projecting. When false the
    /// projection is the bare `W x`.
    pub centered: bool,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            sample_cap: 200_000,
            batch: 8192,
            seed: 42,
            centered: true,
        }
    }
}

/// Rows of `components` are orthonormal principal axes, by descending
/// explained variance.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix<T> {
    pub mean: Vec<T>,
    pub components: Matrix<T>,
    pub explained_variance: Vec<T>,
    pub centered: bool,
}

/// Running mean and scatter matrix, merged batch by batch.
struct Moments {
    n: usize,
    mean: nalgebra::DVector<f64>,
    scatter: DMatrix<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: nalgebra::DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    fn absorb(&mut self, batch: &[Vec<f64>]) {
        let dim = self.mean.len();
        let nb = batch.len();
        if nb == 0 {
            return;
        }
        let x = DMatrix::from_fn(nb, dim, |i, j| batch[i][j]);
        let mb = nalgebra::DVector::from_fn(dim, |j, _| pairwise_sum(&batch.iter().map(|r| r[j]).collect::<Vec<_>>()) / nb as f64);
        let centered = DMatrix::from_fn(nb, dim, |i, j| x[(i, j)] - mb[j]);
        let sb = centered.transpose() * &centered;
        let na = self.n as f64;
        let total = na + nb as f64;
        let delta = &mb - &self.mean;
        self.scatter += sb + (&delta * delta.transpose()) * (na * nb as f64 / total);
        self.mean += delta * (nb as f64 / total);
        self.n += nb;
    }
}

/// Reservoir sample of at most `cap` rows, in stream order of acceptance.
fn reservoir<T: Scalar, I: IntoIterator<Item = Vec<T>>>(stream: I, cap: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, &["pca-reservoir"]);
    let mut sample: Vec<Vec<f64>> = Vec::new();
    for (seen, row) in stream.into_iter().enumerate() {
        let row: Vec<f64> = row.into_iter().map(Scalar::as_f64).collect();
        if sample.len() < cap {
            sample.push(row);
        } else {
            let j = rng.gen_range(0..=seen);
            if j < cap {
                sample[j] = row;
            }
        }
    }
    sample
}

/// Fits a `d`-row projection from a stream of teacher vectors.
pub fn fit_incremental_pca<T: Scalar, I: IntoIterator<Item = Vec<T>>>(
    stream: I,
    d: usize,
    cfg: &PcaConfig,
) -> Result<ProjectionMatrix<T>, DistillError> {
    let sample = reservoir(stream, cfg.sample_cap, cfg.seed);
    let Some(dim) = sample.first().map(Vec::len) else {
        return Err(DistillError::InsufficientData { n: 0, d });
    };
    if d == 0 || d >= dim {
        return Err(DistillError::BadDimension { d, dim });
    }
    if let Some(bad) = sample.iter().find(|r| r.len() != dim) {
        return Err(DistillError::DimMismatch { expected: dim, got: bad.len() });
    }
    if sample.len() <= d {
        return Err(DistillError::InsufficientData { n: sample.len(), d });
    }
    let mut moments = Moments::new(dim);
    for batch in sample.chunks(cfg.batch.max(1)) {
        moments.absorb(batch);
    }
    let cov = &moments.scatter / (moments.n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Matrix::zeros(d, dim);
    let mut explained_variance = Vec::with_capacity(d);
    for (r, &k) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for j in 1..dim {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (j, c) in components.row_mut(r).iter_mut().enumerate() {
            *c = T::of(sign * v[j]);
        }
        explained_variance.push(T::of(eig.eigenvalues[k].max(0.0)));
    }
    Ok(ProjectionMatrix {
        mean: moments.mean.iter().map(|&m| T::of(m)).collect(),
        components,
        explained_variance,
        centered: cfg.centered,
    })
}

impl<T: Scalar> ProjectionMatrix<T> {
    pub fn input_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// `W (x - mean)`, or `W x` for an uncentered projection.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>, DistillError> {
        if x.len() != self.input_dim() {
            return Err(DistillError::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let shifted: Vec<T> = if self.centered {
            x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect()
        } else {
            x.to_vec()
        };
        Ok(self.components.iter_rows().map(|w| dot(w, &shifted)).collect())
    }

    pub fn project_rows(&self, x: &Matrix<T>) -> Result<Matrix<T>, DistillError> {
        let rows: Vec<Vec<T>> = (0..x.rows())
            .into_par_iter()
            .map(|i| self.project(x.row(i)))
            .collect::<Result<_, _>>()?;
        let mut data = Vec::with_capacity(x.rows() * self.output_dim());
        rows.into_iter().for_each(|r| data.extend(r));
        Ok(Matrix::from_vec(x.rows(), self.output_dim(), data))
    }
}

/// `(1/N) sum ||s_i - W t_i||^2` and its gradient with respect to the
/// student rows.
pub fn mse_distill_objective<T: Scalar>(
    student: &Matrix<T>,
    teacher: &Matrix<T>,
    w: &ProjectionMatrix<T>,
) -> Result<(T, Matrix<T>), DistillError> {
    if student.rows() != teacher.rows() || student.cols() != w.output_dim() || teacher.cols() != w.input_dim() {
        return Err(DistillError::ShapeMismatch(format!(
            "student {}x{}, teacher {}x{}, projection {}x{}",
            student.rows(),
            student.cols(),
            teacher.rows(),
            teacher.cols(),
            w.output_dim(),
            w.input_dim()
        )));
    }
    let n = student.rows();
    let target = w.project_rows(teacher)?;
    let mut grad = Matrix::zeros(n, student.cols());
    if n == 0 {
        return Ok((T::zero(), grad));
    }
    let scale = T::of(2.0) / T::of_usize(n);
    let mut per_row = Vec::with_capacity(n);
    for i in 0..n {
        let diff: Vec<T> = student.row(i).iter().zip(target.row(i)).map(|(&s, &t)| s - t).collect();
        per_row.push(dot(&diff, &diff));
        for (g, &e) in grad.row_mut(i).iter_mut().zip(&diff) {
            *g = scale * e;
        }
    }
    Ok((pairwise_sum(&per_row) / T::of_usize(n), grad))
}

#[derive(Serialize, Deserialize)]
struct ProjectionHeader {
    d: usize,
    dim: usize,
    centered: bool,
    explained_variance: Vec<f64>,
}

fn bad_file(path: &Path, detail: impl ToString) -> DistillError {
    DistillError::BadFile {
        path: path.display().to_string(),
        detail: detail.to_string(),
    }
}

/// JSON header line, then little-endian `f32` mean followed by the rows of W.
pub fn store_projection<T: Scalar>(p: &ProjectionMatrix<T>, path: &Path) -> Result<(), DistillError> {
    let header = ProjectionHeader {
        d: p.output_dim(),
        dim: p.input_dim(),
        centered: p.centered,
        explained_variance: p.explained_variance.iter().map(|v| v.as_f64()).collect(),
    };
    let file = File::create(path).map_err(|e| bad_file(path, e))?;
    let mut w = BufWriter::new(file);
    let json = serde_json::to_string(&header).expect("header serializes");
    writeln!(w, "{json}").map_err(|e| bad_file(path, e))?;
    for &x in p.mean.iter().chain(p.components.as_slice()) {
        w.write_all(&(x.as_f64() as f32).to_le_bytes()).map_err(|e| bad_file(path, e))?;
    }
    w.flush().map_err(|e| bad_file(path, e))
}

pub fn load_projection<T: Scalar>(path: &Path) -> Result<ProjectionMatrix<T>, DistillError> {
    let file = File::open(path).map_err(|e| bad_file(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| bad_file(path, e))?;
    let header: ProjectionHeader = serde_json::from_str(line.trim_end()).map_err(|e| bad_file(path, e))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| bad_file(path, e))?;
    let expected = 4 * header.dim * (header.d + 1);
    if bytes.len() != expected || header.explained_variance.len() != header.d {
        return Err(bad_file(path, format!("payload is {} bytes, expected {expected}", bytes.len())));
    }
    let values: Vec<T> = bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    Ok(ProjectionMatrix {
        mean: values[..header.dim].to_vec(),
        components: Matrix::from_vec(header.d, header.dim, values[header.dim..].to_vec()),
        explained_variance: header.explained_variance.into_iter().map(T::of).collect(),
        centered: header.centered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_plans() {
        let base = layer_plan("patembed-base").unwrap();
        assert_eq!(base.teacher_layers, (0..12).map(|i| 2 * i).collect::<Vec<_>>());
        assert_eq!(base.target_dim, 768);
        let nano = layer_plan("patembed-nano").unwrap();
        assert_eq!((nano.teacher_layers, nano.target_dim), (vec![0, 12], 128));
        assert_eq!(layer_plan("patembed-mini").unwrap().teacher_layers, vec![0, 6, 12, 18]);
        assert!(STUDENTS.iter().all(|s| layer_plan(s).unwrap().is_regular_stride()));
        assert!(matches!(layer_plan("patembed-huge"), Err(DistillError::UnknownStudent(_))));
    }

    fn subspace_data(n: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_for(7, &["subspace"]);
        (0..n)
            .map(|_| {
                let a: f64 = rng.gen_range(-3.0..3.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                vec![a + 1.0, b, 0.5, a - b]
            })
            .collect()
    }

    #[test]
    fn exact_subspace_has_no_residual_variance() {
        let data = subspace_data(500);
        let cfg = PcaConfig {
            batch: 64,
            ..Default::default()
        };
        let p = fit_incremental_pca(data.clone(), 3, &cfg).unwrap();
        assert!(p.explained_variance[2] <= 1e-10);
        for row in &data {
            let y = p.project(row).unwrap();
            let centered: Vec<f64> = row.iter().zip(&p.mean).map(|(a, m)| a - m).collect();
            let ny = dot(&y, &y).sqrt();
            let nx = dot(&centered, &centered).sqrt();
            assert!((ny - nx).abs() < 1e-9);
        }
        assert_eq!(p.project(&p.mean.clone()).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn batching_does_not_change_the_fit() {
        let data = subspace_data(300);
        let a: ProjectionMatrix<f64> = fit_incremental_pca(data.clone(), 2, &PcaConfig { batch: 7, ..Default::default() }).unwrap();
        let b: ProjectionMatrix<f64> = fit_incremental_pca(data, 2, &PcaConfig { batch: 1000, ..Default::default() }).unwrap();
        for (x, y) in a.components.as_slice().iter().zip(b.components.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let data = subspace_data(3);
        assert!(matches!(
            fit_incremental_pca(data.clone(), 3, &PcaConfig::default()),
            Err(DistillError::InsufficientData { .. })
        ));
        assert!(matches!(
            fit_incremental_pca(data, 4, &PcaConfig::default()),
            Err(DistillError::BadDimension { .. })
        ));
    }

    #[test]
    fn mse_examples() {
        let p: ProjectionMatrix<f64> = fit_incremental_pca(subspace_data(100), 2, &PcaConfig::default()).unwrap();
        let teacher = Matrix::from_vec(1, 4, vec![1.0, 0.3, 0.5, 0.2]);
        let target = p.project_rows(&teacher).unwrap();
        assert_eq!(mse_distill_objective(&target, &teacher, &p).unwrap().0, 0.0);
        let mut off = target.clone();
        off.set(0, 0, off.get(0, 0) + 0.25);
        let (v, g) = mse_distill_objective(&off, &teacher, &p).unwrap();
        assert!((v - 0.0625).abs() < 1e-15);
        assert!((g.get(0, 0) - 0.5).abs() < 1e-15);
        assert!(mse_distill_objective(&teacher, &teacher, &p).is_err());
    }

    #[test]
    fn uncentered_mode_skips_the_mean() {
        let cfg = PcaConfig {
            centered: false,
            ..Default::default()
        };
        let p: ProjectionMatrix<f64> = fit_incremental_pca(subspace_data(100), 2, &cfg).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let expected: Vec<f64> = p.components.iter_rows().map(|w| dot(w, &x)).collect();
        assert_eq!(p.project(&x).unwrap(), expected);
    }

    #[test]
    fn projection_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.proj");
        let p: ProjectionMatrix<f32> = fit_incremental_pca(
            subspace_data(50).into_iter().map(|r| r.into_iter().map(|x| x as f32).collect::<Vec<f32>>()),
            2,
            &PcaConfig::default(),
        )
        .unwrap();
        store_projection(&p, &path).unwrap();
        let q: ProjectionMatrix<f32> = load_projection(&path).unwrap();
        assert_eq!(q.components, p.components);
        assert_eq!(q.mean, p.mean);
        assert!(q.centered);
        let bytes = std::fs::read(&path).unwrap();
        let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        assert_eq!(bytes.len() - header_len, 4 * 4 * 3);
    }
}
