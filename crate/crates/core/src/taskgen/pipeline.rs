//! End-to-end construction: filtering, splitting, segmenting and all task
//! builders, plus the on-disk layout of a build.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{assemble_sections, CitationGraph, Corpus, StructuralVariant};
use crate::domains::{filter_domains, stratified_split, DomainIndex, Split, SplitAssignment};
use crate::fragments::{extract_segments, SegmentRow, SegmentSet};
use crate::Error;

use super::classification::{bloom_labels, build_bloom, build_nli_oldnew, build_text2ipc3, BloomLabel};
use super::clustering::build_clustering;
use super::export::{export_task, task_file_name};
use super::negatives::{TokenIndex, TokenSet};
use super::paraphrase::build_paraphrase;
use super::retrieval::{build_asymmetric_retrieval, build_symmetric_retrieval, RetrievalStats};
use super::subsample::stratified_subsample;
use super::{BuildConfig, TaskDataset, TaskId, TaskgenError};

pub const MANIFEST_FILE: &str = "build_manifest.json";
pub const SPLITS_FILE: &str = "splits.jsonl";
pub const SEGMENTS_FILE: &str = "segments.jsonl";

/// Shared, read-only state for the task builders.
pub struct BuildContext<'a> {
    pub corpus: &'a Corpus,
    pub graph: CitationGraph,
    pub domains: DomainIndex,
    pub splits: SplitAssignment,
    pub segments: Vec<SegmentSet>,
    pub bloom: Vec<Option<BloomLabel>>,
    /// Assembled text per family under the configured variant.
    pub texts: Vec<String>,
    /// Tokens of the full-variant text, used for negative mining so that
    /// every variant yields the same record identities.
    pub full_tokens: Vec<TokenSet>,
    pub config: BuildConfig,
}

impl<'a> BuildContext<'a> {
    /// `corpus` must already be quality- and domain-filtered.
    pub fn new(corpus: &'a Corpus, config: BuildConfig) -> Result<Self, Error> {
        let graph = CitationGraph::build(corpus);
        let domains = DomainIndex::build(corpus)?;
        let splits = stratified_split(corpus, &domains, config.split_ratios, config.seed);
        let segments: Vec<SegmentSet> = corpus
            .families()
            .par_iter()
            .map(|f| extract_segments(&f.abstract_text))
            .collect();
        let bloom = bloom_labels(corpus, &domains, config.bloom_cutoff);
        let assemble = |v: StructuralVariant| -> Vec<String> {
            corpus
                .families()
                .par_iter()
                .map(|f| assemble_sections(f.sections(), v).unwrap_or_default())
                .collect()
        };
        let full = assemble(StructuralVariant::Full);
        let texts = if config.variant == StructuralVariant::Full {
            full.clone()
        } else {
            assemble(config.variant)
        };
        let mut index = TokenIndex::default();
        let full_tokens = full.iter().map(|t| index.tokens(t)).collect();
        Ok(Self {
            corpus,
            graph,
            domains,
            splits,
            segments,
            bloom,
            texts,
            full_tokens,
            config,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    /// Source path as given to the build, used to rebuild ablation variants.
    pub path: Option<String>,
    pub content_hash: String,
    pub families_ingested: usize,
    pub rows_rejected: usize,
    pub families_after_quality_filter: usize,
    pub families_retained: usize,
    pub retained_domains: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub nodes: usize,
    pub edges: usize,
    pub dangling_citations: usize,
    pub self_citations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub toolkit_version: String,
    pub corpus: CorpusInfo,
    pub graph: GraphInfo,
    pub seed: u64,
    pub config: BuildConfig,
    /// Record counts per task and split.
    pub counts: BTreeMap<TaskId, BTreeMap<Split, usize>>,
    /// Pre-subsampling counters of the retrieval builders, keyed `task/split`.
    pub retrieval: BTreeMap<String, RetrievalStats>,
    /// Families per matched fragment pattern ("none" for no match).
    pub segment_patterns: BTreeMap<String, usize>,
    pub small_strata: Vec<String>,
    pub warnings: Vec<String>,
}

impl BuildManifest {
    pub fn read(dir: &Path) -> Result<Self, Error> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Everything produced by a build, with the state needed to audit it.
pub struct BuildOutput {
    pub corpus: Corpus,
    pub graph: CitationGraph,
    pub domains: DomainIndex,
    pub splits: SplitAssignment,
    pub segments: Vec<SegmentSet>,
    pub datasets: Vec<TaskDataset>,
    pub manifest: BuildManifest,
}

impl BuildOutput {
    pub fn dataset(&self, task: TaskId, split: Split) -> Option<&TaskDataset> {
        self.datasets.iter().find(|d| d.task == task && d.split == split)
    }
}

enum Job {
    Plain(TaskDataset),
    Retrieval(TaskDataset, RetrievalStats),
    Warned(TaskDataset, Option<String>),
}

fn run_job(ctx: &BuildContext<'_>, task: TaskId, split: Split) -> Job {
    let cfg = &ctx.config;
    let target = cfg.target(task, split);
    let sub = |d: TaskDataset| stratified_subsample(&d, target, cfg.min_per_stratum, cfg.seed);
    match task {
        TaskId::RetrievalIn | TaskId::RetrievalMixed | TaskId::RetrievalOut => {
            let (d, s) = build_symmetric_retrieval(ctx, task, split);
            Job::Retrieval(sub(d), s)
        }
        t if t.is_asymmetric() => {
            let (d, s) = build_asymmetric_retrieval(ctx, task, split);
            Job::Retrieval(sub(d), s)
        }
        TaskId::ClassText2Ipc3 => Job::Plain(sub(build_text2ipc3(ctx, split))),
        TaskId::ClassBloom => Job::Plain(sub(build_bloom(ctx, split))),
        TaskId::ClassNliOldnew => Job::Plain(build_nli_oldnew(ctx, split, target)),
        TaskId::ParaProblem | TaskId::ParaSolution => {
            let (d, w) = build_paraphrase(ctx, task, split, target);
            Job::Warned(d, w)
        }
        TaskId::ClustersExtFullIpc => Job::Plain(build_clustering(ctx, task, cfg.ipc_cluster_bounds)),
        TaskId::ClustersInventor => Job::Plain(build_clustering(ctx, task, cfg.inventor_cluster_bounds)),
        _ => unreachable!("all tasks covered"),
    }
}

/// Runs the whole construction on an ingested corpus.
pub fn build_all(raw: &Corpus, config: BuildConfig) -> Result<BuildOutput, Error> {
    let (quality, _) = raw.apply_quality_filters();
    let (corpus, retained_domains) = filter_domains(&quality, config.min_per_class)?;
    let ctx = BuildContext::new(&corpus, config)?;

    let jobs: Vec<(TaskId, Split)> = TaskId::ALL
        .iter()
        .flat_map(|&t| t.splits().iter().map(move |&s| (t, s)))
        .collect();
    let results: Vec<Job> = jobs.par_iter().map(|&(t, s)| run_job(&ctx, t, s)).collect();

    let mut datasets = Vec::with_capacity(results.len());
    let mut retrieval = BTreeMap::new();
    let mut warnings = Vec::new();
    for job in results {
        let d = match job {
            Job::Plain(d) => d,
            Job::Retrieval(d, s) => {
                retrieval.insert(format!("{}/{}", d.task, d.split), s);
                d
            }
            Job::Warned(d, w) => {
                warnings.extend(w);
                d
            }
        };
        if d.is_empty() {
            warnings.push(format!("{}/{}: no records", d.task, d.split));
        }
        datasets.push(d);
    }
    for s in &ctx.splits.small_strata {
        warnings.push(format!("stratum {s} smaller than 10 families; assigned to train"));
    }
    let mut counts: BTreeMap<TaskId, BTreeMap<Split, usize>> = BTreeMap::new();
    for d in &datasets {
        counts.entry(d.task).or_default().insert(d.split, d.len());
    }
    let mut segment_patterns = BTreeMap::new();
    for s in &ctx.segments {
        let key = s.matched_pattern.map_or_else(|| "none".to_string(), |p| p.to_string());
        *segment_patterns.entry(key).or_insert(0) += 1;
    }
    let manifest = BuildManifest {
        toolkit_version: crate::VERSION.to_string(),
        corpus: CorpusInfo {
            path: None,
            content_hash: raw.content_hash(),
            families_ingested: raw.len(),
            rows_rejected: 0,
            families_after_quality_filter: quality.len(),
            families_retained: corpus.len(),
            retained_domains,
        },
        graph: GraphInfo {
            nodes: ctx.graph.node_count(),
            edges: ctx.graph.edge_count(),
            dangling_citations: ctx.graph.dangling(),
            self_citations: ctx.graph.self_loops(),
        },
        seed: ctx.config.seed,
        config: ctx.config.clone(),
        counts,
        retrieval,
        segment_patterns,
        small_strata: ctx.splits.small_strata.clone(),
        warnings,
    };
    let BuildContext {
        graph,
        domains,
        splits,
        segments,
        ..
    } = ctx;
    Ok(BuildOutput {
        corpus,
        graph,
        domains,
        splits,
        segments,
        datasets,
        manifest,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<(), Error> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the 41 task files, split and segment dumps, and the manifest.
pub fn write_build(out: &BuildOutput, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.datasets
        .par_iter()
        .map(|d| export_task(&d.records, &dir.join(task_file_name(d.task, d.split))))
        .collect::<Result<Vec<()>, TaskgenError>>()?;
    write_jsonl(&dir.join(SPLITS_FILE), out.splits.rows())?;
    let segments = out.corpus.families().iter().zip(&out.segments).map(|(f, s)| SegmentRow {
        family_id: f.family_id.clone(),
        segments: s.clone(),
    });
    write_jsonl(&dir.join(SEGMENTS_FILE), segments)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&out.manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))
}
