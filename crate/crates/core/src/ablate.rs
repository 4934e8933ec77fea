//! Deployment and robustness ablations: embedding truncation, layer pruning,
//! structural trims and the FP16 storage model.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ingest_corpus, CorpusFormat, StructuralVariant};
use crate::embed_io::{EmbedOptions, EmbeddingMatrix, Provider};
use crate::eval::{embed_suite, evaluate_suite, score_suite, EvalOptions, TaskSuite};
use crate::report::EvalReport;
use crate::taskgen::{build_all, BuildManifest};
use crate::Error;

#[derive(Debug, Error)]
pub enum AblateError {
    #[error("truncation dimension {d} outside 1..={dim}")]
    BadDimension { d: usize, dim: usize },
    #[error("provider `{0}` does not advertise the layer capping capability (max_layers in /info)")]
    ProviderLacksLayerCap(String),
    #[error("layer {layer} outside 1..={max}")]
    BadLayer { layer: usize, max: usize },
    #[error("build manifest records no corpus path; structural variants need the source corpus")]
    MissingCorpus,
    #[error("corpus at {0} no longer matches the build it came from")]
    CorpusChanged(String),
    #[error("invalid ablation grid: {0}")]
    BadGrid(String),
}

/// Bytes per stored value at half precision.
pub const FP16_BYTES: usize = 2;

/// Keeps the first `d` coordinates of every row and renormalizes.
pub fn truncate_embeddings(m: &EmbeddingMatrix, d: usize) -> Result<EmbeddingMatrix, AblateError> {
    if d == 0 || d > m.dim() {
        return Err(AblateError::BadDimension { d, dim: m.dim() });
    }
    let mut out = m.first_columns(d);
    out.normalize();
    out.provenance.truncate_dim = Some(d);
    Ok(out)
}

/// Storage in megabytes (10^6 bytes) for `count` vectors of dimension `d`.
pub fn storage_estimate(d: usize, count: usize, bytes_per_value: usize) -> f64 {
    (d as f64) * (bytes_per_value as f64) * (count as f64) / 1e6
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationGrid {
    pub truncate: Vec<usize>,
    pub layers: Vec<usize>,
    pub structural: Vec<StructuralVariant>,
}

impl AblationGrid {
    pub fn preset() -> Self {
        Self {
            truncate: vec![32, 64, 128, 256, 512, 768, 1024],
            layers: vec![8, 12, 16, 20, 23, 24],
            structural: StructuralVariant::ALL.to_vec(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.truncate.len() + self.layers.len() + self.structural.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point labels in run order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.truncate.iter().map(|d| format!("truncate-{d}")).collect();
        out.extend(self.layers.iter().map(|l| format!("layers-{l}")));
        out.extend(self.structural.iter().map(|v| format!("structural-{}", v.name())));
        out
    }
}

/// The provider's layer count, or an error naming the missing capability.
pub fn max_layers(provider: &dyn Provider) -> Result<usize, Error> {
    provider
        .info()?
        .max_layers
        .ok_or_else(|| AblateError::ProviderLacksLayerCap(provider.id()).into())
}

fn seconds_per_text(r: &EvalReport) -> Option<f64> {
    r.timing.as_ref().filter(|t| t.texts > 0).map(|t| t.embed_seconds / t.texts as f64)
}

/// Evaluates with only the first `layer` layers of the provider's model.
/// `baseline` is a full-depth report used for the speed ratio.
pub fn layer_prune_eval(
    suite: &TaskSuite,
    provider: &dyn Provider,
    opts: &EvalOptions,
    layer: usize,
    baseline: Option<&EvalReport>,
) -> Result<EvalReport, Error> {
    let max = max_layers(provider)?;
    if layer == 0 || layer > max {
        return Err(AblateError::BadLayer { layer, max }.into());
    }
    let opts = EvalOptions {
        embed: EmbedOptions {
            layer_cap: Some(layer),
            ..opts.embed.clone()
        },
        record_timing: true,
        ..opts.clone()
    };
    let mut report = evaluate_suite(suite, provider, &opts)?;
    let ratio = baseline.and_then(seconds_per_text).zip(seconds_per_text(&report));
    if let (Some(t), Some((full, this))) = (report.timing.as_mut(), ratio) {
        t.speed_ratio = (this > 0.0).then(|| full / this);
    }
    Ok(report)
}

/// Rebuilds the tasks of the build at `dir` under `variant` and evaluates
/// them. The build's own variant reuses the exported task files.
pub fn structural_trim_eval(
    dir: &Path,
    variant: StructuralVariant,
    provider: &dyn Provider,
    opts: &EvalOptions,
) -> Result<EvalReport, Error> {
    let suite = suite_for_variant(dir, variant)?;
    evaluate_suite(&suite, provider, opts)
}

pub fn suite_for_variant(dir: &Path, variant: StructuralVariant) -> Result<TaskSuite, Error> {
    let manifest = BuildManifest::read(dir)?;
    if manifest.config.variant == variant {
        return TaskSuite::load(dir);
    }
    let path = PathBuf::from(manifest.corpus.path.as_deref().ok_or(AblateError::MissingCorpus)?);
    let format = CorpusFormat::from_path(&path)
        .ok_or_else(|| Error::Config(format!("cannot infer corpus format of {}", path.display())))?;
    let (corpus, _) = ingest_corpus(&path, format)?;
    let mut config = manifest.config.clone();
    config.variant = variant;
    let out = build_all(&corpus, config)?;
    if out.manifest.corpus.content_hash != manifest.corpus.content_hash {
        return Err(AblateError::CorpusChanged(path.display().to_string()).into());
    }
    Ok(TaskSuite::from_build(&out))
}

/// One evaluated grid point.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub label: String,
    pub report: EvalReport,
}

/// Runs every grid point. Truncations share a single full-width embedding
/// pass; layer points are timed against a full-depth run.
pub fn run_grid(dir: &Path, provider: &dyn Provider, grid: &AblationGrid, opts: &EvalOptions) -> Result<Vec<GridPoint>, Error> {
    if grid.is_empty() {
        return Err(AblateError::BadGrid("no grid points".into()).into());
    }
    let max = if grid.layers.is_empty() { None } else { Some(max_layers(provider)?) };
    let mut labels = grid.labels().into_iter();
    let mut points = Vec::with_capacity(grid.len());

    if !grid.truncate.is_empty() {
        let suite = TaskSuite::load(dir)?;
        let (full, _) = embed_suite(&suite, provider, opts)?;
        for &d in &grid.truncate {
            let opts = EvalOptions {
                truncate_dim: Some(d),
                ..opts.clone()
            };
            let report = score_suite(&suite, full.clone(), &opts)?;
            points.push(GridPoint {
                label: labels.next().expect("one label per point"),
                report,
            });
        }
    }

    if let Some(max) = max {
        let suite = TaskSuite::load(dir)?;
        // Timing needs real embedding work, so the cache is bypassed here.
        let timed = EvalOptions {
            cache: None,
            ..opts.clone()
        };
        let start = Instant::now();
        let baseline = layer_prune_eval(&suite, provider, &timed, max, None)?;
        log::info!("full-depth baseline embedded in {:.2}s", start.elapsed().as_secs_f64());
        for &l in &grid.layers {
            let report = layer_prune_eval(&suite, provider, &timed, l, Some(&baseline))?;
            points.push(GridPoint {
                label: labels.next().expect("one label per point"),
                report,
            });
        }
    }

    for &v in &grid.structural {
        let report = structural_trim_eval(dir, v, provider, opts)?;
        points.push(GridPoint {
            label: labels.next().expect("one label per point"),
            report,
        });
    }
    Ok(points)
}

/// Long-format CSV: one row per grid point and task.
pub fn write_grid_csv(points: &[GridPoint], path: &Path) -> Result<usize, Error> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Config(format!("writing {}: {e}", path.display()));
    w.write_record(["variant", "task", "metric", "value"]).map_err(csv_err)?;
    let mut rows = 0;
    for p in points {
        for t in &p.report.tasks {
            w.write_record([p.label.as_str(), t.task_id.name(), t.metric_name.as_str(), &t.value.to_string()])
                .map_err(csv_err)?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::Provenance;
    use crate::metrics::rank_candidates;
    use crate::numeric::Matrix;
    use proptest::prelude::*;

    fn matrix(rows: usize, dim: usize, data: Vec<f32>) -> EmbeddingMatrix {
        EmbeddingMatrix::new(dim, data, (0..rows as u64).collect(), false, Provenance::default()).unwrap()
    }

    #[test]
    fn storage_table_values() {
        assert_eq!(storage_estimate(1024, 1_000_000, FP16_BYTES), 2048.0);
        assert_eq!(storage_estimate(256, 1_000_000, FP16_BYTES), 512.0);
        assert_eq!(storage_estimate(32, 1_000_000, FP16_BYTES), 64.0);
    }

    #[test]
    fn one_dimension_gives_signs() {
        let m = matrix(3, 2, vec![0.3, 1.0, -2.0, 0.5, 5.0, -1.0]);
        let t = truncate_embeddings(&m, 1).unwrap();
        assert_eq!(t.as_slice(), &[1.0, -1.0, 1.0]);
        assert_eq!(t.provenance.truncate_dim, Some(1));
        assert!(matches!(truncate_embeddings(&m, 3), Err(AblateError::BadDimension { d: 3, dim: 2 })));
        assert!(truncate_embeddings(&m, 0).is_err());
    }

    #[test]
    fn preset_grid_parses_from_json() {
        let json = r#"{"truncate":[32,64,128,256,512,768,1024],"layers":[8,12,16,20,23,24],
            "structural":["full","noSEP","trim1","trimLast","trim1Last","noSEP+trim1","noSEP+trimLast","noSEP+trim1Last"]}"#;
        let g: AblationGrid = serde_json::from_str(json).unwrap();
        assert_eq!(g, AblationGrid::preset());
        assert_eq!(g.len(), 21);
        assert_eq!(g.labels()[20], "structural-noSEP+trim1Last");
    }

    fn rows_strategy() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
        (1usize..6, 2usize..10).prop_flat_map(|(n, dim)| {
            (Just(n), Just(dim), prop::collection::vec(0.1f32..1.0, n * dim))
        })
    }

    proptest! {
        #[test]
        fn truncation_nests((n, dim, data) in rows_strategy(), a in 1usize..10, b in 1usize..10) {
            let m = matrix(n, dim, data);
            let (small, big) = (a.min(b).min(dim), a.max(b).min(dim));
            let direct = truncate_embeddings(&m, small).unwrap();
            let nested = truncate_embeddings(&truncate_embeddings(&m, big).unwrap(), small).unwrap();
            for (x, y) in direct.as_slice().iter().zip(nested.as_slice()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn renormalizing_keeps_rankings((n, dim, data) in rows_strategy(), d in 1usize..10) {
            let d = d.min(dim);
            let m = matrix(n, dim, data);
            let t = truncate_embeddings(&m, d).unwrap();
            // Second path: cosine on the raw truncated rows.
            let raw: Vec<Vec<f64>> = m.rows().map(|r| r[..d].iter().map(|&x| x as f64).collect()).collect();
            let unit: Matrix<f64> = t.to_matrix();
            let q = unit.row(0).to_vec();
            let by_unit = rank_candidates(&q, &unit);
            let cos = |a: &[f64], b: &[f64]| crate::numeric::cosine(a, b);
            let sims: Vec<f64> = raw.iter().map(|r| cos(&raw[0], r)).collect();
            for w in by_unit.windows(2) {
                prop_assert!(sims[w[0]] >= sims[w[1]] - 1e-6);
            }
        }

        #[test]
        fn storage_is_monotone_and_linear(d in 1usize..2048, count in 1usize..10_000_000) {
            prop_assert!(storage_estimate(d + 1, count, 2) > storage_estimate(d, count, 2));
            let two = storage_estimate(d, 2 * count, 2);
            prop_assert!((two - 2.0 * storage_estimate(d, count, 2)).abs() <= 1e-9 * two);
        }
    }
}
