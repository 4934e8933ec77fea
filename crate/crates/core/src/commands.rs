//! The four top-level commands, independent of argument parsing.

use std::fs;
use std::path::{Path, PathBuf};

use crate::ablate::{run_grid, write_grid_csv, AblationGrid};
use crate::corpus::{ingest_corpus, CorpusFormat};
use crate::embed_io::{FileProvider, HashingProvider, HttpProvider, Provider};
use crate::eval::{evaluate_suite, EvalOptions, TaskSuite};
use crate::report::EvalReport;
use crate::taskgen::{build_all, write_build, BuildConfig, BuildManifest};
use crate::verify::{run_verify, CheckRow, VerifyOptions};
use crate::Error;

/// Where embeddings come from.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingSource {
    Url(String),
    File(PathBuf),
    /// Offline lexical baseline of the given dimension.
    Hashing(usize),
}

impl EmbeddingSource {
    pub fn open(&self) -> Result<Box<dyn Provider>, Error> {
        Ok(match self {
            Self::Url(u) => Box::new(HttpProvider::new(u)),
            Self::File(p) => Box::new(FileProvider::open(p)?),
            Self::Hashing(d) => Box::new(HashingProvider::new(*d)),
        })
    }
}

/// Ingests a corpus, builds all tasks and writes them to `out_dir`.
pub fn cmd_build(corpus: &Path, format: Option<CorpusFormat>, config: BuildConfig, out_dir: &Path) -> Result<BuildManifest, Error> {
    let format = match format.or_else(|| CorpusFormat::from_path(corpus)) {
        Some(f) => f,
        None => return Err(Error::Config(format!("cannot infer corpus format of {}; pass --format", corpus.display()))),
    };
    let (raw, report) = ingest_corpus(corpus, format)?;
    for r in &report.rejected {
        log::warn!("rejected corpus row {} ({}): {}", r.row, r.family_id, r.reason);
    }
    let mut out = build_all(&raw, config)?;
    let path = fs::canonicalize(corpus).map_err(|e| Error::io(corpus, e))?;
    out.manifest.corpus.path = Some(path.display().to_string());
    out.manifest.corpus.rows_rejected = report.rejected.len();
    write_build(&out, out_dir)?;
    Ok(out.manifest)
}

/// Leaderboard CSV written next to a JSON report.
pub fn leaderboard_path(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

/// Evaluates the build in `task_dir` and writes the JSON report and its
/// leaderboard row.
pub fn cmd_eval(task_dir: &Path, source: &EmbeddingSource, opts: &EvalOptions, out: &Path) -> Result<EvalReport, Error> {
    let provider = source.open()?;
    let suite = TaskSuite::load(task_dir)?;
    let report = evaluate_suite(&suite, provider.as_ref(), opts)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    report.write_json(out)?;
    report.write_leaderboard_csv(&leaderboard_path(out))?;
    Ok(report)
}

/// Runs an ablation grid: one report per point plus `grid.csv`. Returns the
/// CSV path and its data row count.
pub fn cmd_ablate(
    task_dir: &Path,
    source: &EmbeddingSource,
    grid: &AblationGrid,
    opts: &EvalOptions,
    out_dir: &Path,
) -> Result<(PathBuf, usize), Error> {
    let provider = source.open()?;
    let points = run_grid(task_dir, provider.as_ref(), grid, opts)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for p in &points {
        p.report.write_json(&out_dir.join(format!("{}.json", p.label)))?;
    }
    let csv = out_dir.join("grid.csv");
    let rows = write_grid_csv(&points, &csv)?;
    Ok((csv, rows))
}

pub fn cmd_verify(opts: &VerifyOptions) -> Vec<CheckRow> {
    run_verify(opts)
}
