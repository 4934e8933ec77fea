//! Runs the fifteen tasks against one embedding source and assembles the
//! report.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::StructuralVariant;
use crate::domains::Split;
use crate::embed_io::{
    apply_prompt, content_key, doc_role, embed_texts, query_role, EmbedOptions, EmbeddingCache, EmbeddingMatrix,
    FieldRole, PromptMode, Provider,
};
use crate::metrics::{
    kmeans_cluster, pearson, probe_on_subset, retrieval_task_score, stratified_subset, v_measure, ClusteringScore,
    KMeansConfig, MetricError, ProbeConfig, RetrievalPool, Solver,
};
use crate::numeric::{dot, Matrix};
use crate::report::{EvalReport, RunConfig, TaskResult, Timing};
use crate::taskgen::{
    read_task, task_file_name, BuildManifest, BuildOutput, ClusterMember, LabeledText, PairRecord, Records,
    RetrievalTriplet, TaskId,
};
use crate::{ablate, Error};

/// Records needed to score one task: the test split, plus the training
/// split for probe tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub test: Records,
    pub train: Option<Records>,
}

/// The evaluation side of a build.
#[derive(Clone, Debug)]
pub struct TaskSuite {
    pub tasks: BTreeMap<TaskId, TaskData>,
    pub seed: u64,
    pub variant: StructuralVariant,
    pub corpus_hash: String,
}

fn needs_train(task: TaskId) -> bool {
    matches!(task, TaskId::ClassText2Ipc3 | TaskId::ClassBloom | TaskId::ClassNliOldnew)
}

impl TaskSuite {
    /// Reads the exported task files and manifest from a build directory.
    pub fn load(dir: &Path) -> Result<Self, Error> {
        let manifest = BuildManifest::read(dir)?;
        let loaded: Vec<(TaskId, TaskData)> = TaskId::ALL
            .par_iter()
            .map(|&t| -> Result<_, Error> {
                let test = read_task(t, &dir.join(task_file_name(t, Split::Test)))?;
                let train = if needs_train(t) {
                    Some(read_task(t, &dir.join(task_file_name(t, Split::Train)))?)
                } else {
                    None
                };
                Ok((t, TaskData { test, train }))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            tasks: loaded.into_iter().collect(),
            seed: manifest.seed,
            variant: manifest.config.variant,
            corpus_hash: manifest.corpus.content_hash,
        })
    }

    pub fn from_build(out: &BuildOutput) -> Self {
        let records = |t: TaskId, s: Split| out.dataset(t, s).map(|d| d.records.clone());
        let tasks = TaskId::ALL
            .iter()
            .filter_map(|&t| {
                let test = records(t, Split::Test)?;
                let train = if needs_train(t) { records(t, Split::Train) } else { None };
                Some((t, TaskData { test, train }))
            })
            .collect();
        Self {
            tasks,
            seed: out.manifest.seed,
            variant: out.manifest.config.variant,
            corpus_hash: out.manifest.corpus.content_hash.clone(),
        }
    }

    /// SHA-256 over every record, in task order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let feed = |h: &mut Sha256, r: &Records| {
            let bytes = match r {
                Records::Retrieval(v) => serde_json::to_vec(v),
                Records::Pairs(v) => serde_json::to_vec(v),
                Records::Labeled(v) => serde_json::to_vec(v),
                Records::Clustering(v) => serde_json::to_vec(v),
            }
            .expect("records serialize");
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        for (t, d) in &self.tasks {
            h.update(t.name().as_bytes());
            feed(&mut h, &d.test);
            if let Some(train) = &d.train {
                feed(&mut h, train);
            }
        }
        crate::corpus::hex_digest(&h.finalize())
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub prompt_mode: PromptMode,
    pub embed: EmbedOptions,
    /// Worker threads for scoring; output does not depend on it.
    pub jobs: usize,
    pub truncate_dim: Option<usize>,
    pub cache: Option<EmbeddingCache>,
    pub record_timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            prompt_mode: PromptMode::Table,
            embed: EmbedOptions::default(),
            jobs: 1,
            truncate_dim: None,
            cache: None,
            record_timing: false,
        }
    }
}

/// Unit-norm vectors for prompted texts.
pub struct EmbeddingLookup {
    matrix: EmbeddingMatrix,
    index: HashMap<u64, usize>,
}

impl EmbeddingLookup {
    pub fn new(matrix: EmbeddingMatrix) -> Self {
        let index = matrix.row_keys().iter().enumerate().map(|(i, &k)| (k, i)).collect();
        Self { matrix, index }
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn vector(&self, prompted: &str) -> Vec<f64> {
        let i = self.index[&content_key(prompted)];
        self.matrix.row(i).iter().map(|&x| x as f64).collect()
    }

    fn rows<'a>(&self, texts: impl IntoIterator<Item = &'a String>) -> Matrix<f64> {
        let rows: Vec<Vec<f64>> = texts.into_iter().map(|t| self.vector(t)).collect();
        let cols = self.matrix.dim();
        let mut data = Vec::with_capacity(rows.len() * cols);
        rows.into_iter().for_each(|r| data.extend(r));
        Matrix::from_vec(data.len() / cols.max(1), cols, data)
    }
}

struct Prompter {
    mode: PromptMode,
    task: TaskId,
}

impl Prompter {
    fn apply(&self, role: FieldRole, text: &str) -> String {
        apply_prompt(self.mode, self.task, role, text).expect("task roles have prompts")
    }

    fn query(&self, text: &str) -> String {
        self.apply(query_role(self.task), text)
    }

    fn doc(&self, text: &str) -> String {
        self.apply(doc_role(self.task).expect("pair task has a document role"), text)
    }
}

/// Class indices: training labels in sorted order, then labels seen only in
/// the test split.
fn class_index<'a>(train: impl Iterator<Item = &'a str>, test: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let train: BTreeSet<&str> = train.collect();
    let mut index: BTreeMap<&str, usize> = train.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let extra: BTreeSet<&str> = test.filter(|l| !train.contains(l)).collect();
    for l in extra {
        let next = index.len();
        index.insert(l, next);
    }
    index
}

/// Training rows kept by the probe, as (record position, class).
fn probe_subset(train_labels: &[&str], classes: &BTreeMap<&str, usize>, probe: &ProbeConfig) -> Vec<usize> {
    let y: Vec<usize> = train_labels.iter().map(|l| classes[l]).collect();
    stratified_subset(&y, probe.subset_fraction, probe.seed)
}

fn labeled(r: &Records) -> &[LabeledText] {
    match r {
        Records::Labeled(v) => v,
        _ => &[],
    }
}

fn pairs(r: &Records) -> &[PairRecord] {
    match r {
        Records::Pairs(v) => v,
        _ => &[],
    }
}

fn pair_label(p: &PairRecord) -> &'static str {
    if p.label == 1 {
        "1"
    } else {
        "0"
    }
}

/// Every prompted text a task's scoring will look up.
fn task_texts(task: TaskId, data: &TaskData, mode: PromptMode, probe: &ProbeConfig) -> Vec<String> {
    let p = Prompter { mode, task };
    let mut out = Vec::new();
    match (&data.test, &data.train) {
        (Records::Retrieval(r), _) => {
            for t in r {
                out.push(p.query(&t.query_text));
                out.push(p.doc(&t.positive_text));
                out.push(p.doc(&t.negative_text));
            }
        }
        (Records::Pairs(test), None) => {
            for r in test {
                out.push(p.query(&r.text1));
                out.push(p.doc(&r.text2));
            }
        }
        (Records::Pairs(test), Some(train)) => {
            let train = pairs(train);
            let labels: Vec<&str> = train.iter().map(pair_label).collect();
            let classes = class_index(labels.iter().copied(), test.iter().map(pair_label));
            for i in probe_subset(&labels, &classes, probe) {
                out.push(p.query(&train[i].text1));
                out.push(p.doc(&train[i].text2));
            }
            for r in test {
                out.push(p.query(&r.text1));
                out.push(p.doc(&r.text2));
            }
        }
        (Records::Labeled(test), train) => {
            let train = train.as_ref().map(labeled).unwrap_or_default();
            let labels: Vec<&str> = train.iter().map(|r| r.label.as_str()).collect();
            let classes = class_index(labels.iter().copied(), test.iter().map(|r| r.label.as_str()));
            for i in probe_subset(&labels, &classes, probe) {
                out.push(p.query(&train[i].text));
            }
            out.extend(test.iter().map(|r| p.query(&r.text)));
        }
        (Records::Clustering(c), _) => out.extend(c.iter().map(|m| p.query(&m.text))),
    }
    out
}

fn result(task: TaskId, value: f64, n_evaluated: usize, n_skipped: usize, flags: Vec<String>) -> TaskResult {
    TaskResult {
        task_id: task,
        metric_name: task.metric_name().to_string(),
        value,
        n_evaluated,
        n_skipped,
        flags,
    }
}

fn failed(task: TaskId, n: usize, e: MetricError) -> TaskResult {
    let flag = match e {
        MetricError::DegenerateInput(_) => "degenerate_input",
        MetricError::NoScorableQueries => "no_scorable_queries",
        MetricError::TooFewPoints { .. } => "too_few_points",
        MetricError::ClassMissingFromSubset(_) => "class_missing_from_subset",
        _ => "metric_error",
    };
    log::warn!("{task}: {e}; scored as 0");
    result(task, 0.0, 0, n, vec![flag.to_string()])
}

fn score_retrieval(task: TaskId, triplets: &[RetrievalTriplet], p: &Prompter, emb: &EmbeddingLookup) -> TaskResult {
    let mut queries: BTreeMap<&str, &str> = BTreeMap::new();
    let mut docs: BTreeMap<&str, &str> = BTreeMap::new();
    let mut positives: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in triplets {
        queries.entry(&t.query_id).or_insert(&t.query_text);
        docs.entry(&t.positive_id).or_insert(&t.positive_text);
        docs.entry(&t.negative_id).or_insert(&t.negative_text);
        positives.entry(&t.query_id).or_default().insert(&t.positive_id);
    }
    let doc_index: HashMap<&str, usize> = docs.keys().enumerate().map(|(i, &id)| (id, i)).collect();
    let symmetric = task.symmetric_relation().is_some();
    let pool = RetrievalPool {
        queries: emb.rows(&queries.values().map(|t| p.query(t)).collect::<Vec<_>>()),
        candidates: emb.rows(&docs.values().map(|t| p.doc(t)).collect::<Vec<_>>()),
        relevant: queries
            .keys()
            .map(|q| positives[q].iter().map(|d| doc_index[d]).collect())
            .collect(),
        exclude: if symmetric {
            queries.keys().map(|q| doc_index.get(q).copied()).collect()
        } else {
            Vec::new()
        },
    };
    match retrieval_task_score(&pool) {
        Ok(s) => result(task, s.mean, s.n_evaluated, s.n_skipped, vec![]),
        Err(e) => failed(task, queries.len(), e),
    }
}

fn score_paraphrase(task: TaskId, test: &[PairRecord], p: &Prompter, emb: &EmbeddingLookup) -> TaskResult {
    let sims: Vec<f64> = test
        .iter()
        .map(|r| dot(&emb.vector(&p.query(&r.text1)), &emb.vector(&p.doc(&r.text2))))
        .collect();
    let labels: Vec<f64> = test.iter().map(|r| f64::from(r.label)).collect();
    match pearson(&sims, &labels) {
        Ok(v) => result(task, v, test.len(), 0, vec![]),
        Err(e) => failed(task, test.len(), e),
    }
}

fn probe_flags(solver: Solver, converged: bool) -> Vec<String> {
    let mut flags = Vec::new();
    if solver == Solver::Sag {
        flags.push("solver_fallback_sag".to_string());
    }
    if !converged {
        flags.push("not_converged".to_string());
    }
    flags
}

fn score_probe(
    task: TaskId,
    train_x: Matrix<f64>,
    train_y: Vec<usize>,
    test_x: Matrix<f64>,
    test_y: Vec<usize>,
    n_classes: usize,
    probe: &ProbeConfig,
) -> TaskResult {
    if train_y.is_empty() || test_y.is_empty() {
        return failed(task, test_y.len(), MetricError::DegenerateInput("empty split".into()));
    }
    match probe_on_subset(&train_x, &train_y, &test_x, &test_y, n_classes, probe) {
        Ok(o) => result(task, o.macro_f1, test_y.len(), 0, probe_flags(o.solver, o.converged)),
        Err(e) => failed(task, test_y.len(), e),
    }
}

fn score_labeled(task: TaskId, data: &TaskData, p: &Prompter, emb: &EmbeddingLookup, probe: &ProbeConfig) -> TaskResult {
    let test = labeled(&data.test);
    let train = data.train.as_ref().map(labeled).unwrap_or_default();
    let labels: Vec<&str> = train.iter().map(|r| r.label.as_str()).collect();
    let classes = class_index(labels.iter().copied(), test.iter().map(|r| r.label.as_str()));
    let subset = probe_subset(&labels, &classes, probe);
    let train_x = emb.rows(&subset.iter().map(|&i| p.query(&train[i].text)).collect::<Vec<_>>());
    let train_y = subset.iter().map(|&i| classes[labels[i]]).collect();
    let test_x = emb.rows(&test.iter().map(|r| p.query(&r.text)).collect::<Vec<_>>());
    let test_y = test.iter().map(|r| classes[r.label.as_str()]).collect();
    score_probe(task, train_x, train_y, test_x, test_y, classes.len(), probe)
}

/// Pair features are the two embeddings concatenated.
fn pair_features(rows: &[&PairRecord], p: &Prompter, emb: &EmbeddingLookup) -> Matrix<f64> {
    let dim = emb.matrix().dim();
    let mut data = Vec::with_capacity(rows.len() * 2 * dim);
    for r in rows {
        data.extend(emb.vector(&p.query(&r.text1)));
        data.extend(emb.vector(&p.doc(&r.text2)));
    }
    Matrix::from_vec(rows.len(), 2 * dim, data)
}

fn score_pair_probe(task: TaskId, data: &TaskData, p: &Prompter, emb: &EmbeddingLookup, probe: &ProbeConfig) -> TaskResult {
    let test = pairs(&data.test);
    let train = data.train.as_ref().map(pairs).unwrap_or_default();
    let labels: Vec<&str> = train.iter().map(pair_label).collect();
    let classes = class_index(labels.iter().copied(), test.iter().map(pair_label));
    let subset = probe_subset(&labels, &classes, probe);
    let sub_rows: Vec<&PairRecord> = subset.iter().map(|&i| &train[i]).collect();
    let train_y = subset.iter().map(|&i| classes[labels[i]]).collect();
    let test_rows: Vec<&PairRecord> = test.iter().collect();
    let test_y = test.iter().map(|r| classes[pair_label(r)]).collect();
    score_probe(
        task,
        pair_features(&sub_rows, p, emb),
        train_y,
        pair_features(&test_rows, p, emb),
        test_y,
        classes.len(),
        probe,
    )
}

fn score_clustering(task: TaskId, members: &[ClusterMember], p: &Prompter, emb: &EmbeddingLookup, km: &KMeansConfig) -> TaskResult {
    let truth_index: BTreeMap<&str, usize> = members
        .iter()
        .map(|m| m.cluster_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    let truth: Vec<usize> = members.iter().map(|m| truth_index[m.cluster_id.as_str()]).collect();
    let x = emb.rows(&members.iter().map(|m| p.query(&m.text)).collect::<Vec<_>>());
    let scored = kmeans_cluster(&x, truth_index.len(), km)
        .and_then(|res| v_measure::<f64, _, _>(&res.labels, &truth));
    match scored {
        Ok(ClusteringScore { v, .. }) => result(task, v, members.len(), 0, vec![]),
        Err(e) => failed(task, members.len(), e),
    }
}

fn score_task(task: TaskId, data: &TaskData, mode: PromptMode, emb: &EmbeddingLookup) -> TaskResult {
    let p = Prompter { mode, task };
    let probe = ProbeConfig::default();
    match &data.test {
        Records::Retrieval(r) => score_retrieval(task, r, &p, emb),
        Records::Pairs(r) if data.train.is_none() => score_paraphrase(task, r, &p, emb),
        Records::Pairs(_) => score_pair_probe(task, data, &p, emb, &probe),
        Records::Labeled(_) => score_labeled(task, data, &p, emb, &probe),
        Records::Clustering(m) => score_clustering(task, m, &p, emb, &KMeansConfig::default()),
    }
}

/// All distinct prompted texts of a suite, in first-use order.
pub fn suite_texts(suite: &TaskSuite, mode: PromptMode) -> Vec<String> {
    let probe = ProbeConfig::default();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (&t, d) in &suite.tasks {
        for s in task_texts(t, d, mode, &probe) {
            if seen.insert(content_key(&s)) {
                out.push(s);
            }
        }
    }
    out
}

/// Embeds every text of the suite, through the cache when one is set.
pub fn embed_suite(suite: &TaskSuite, provider: &dyn Provider, opts: &EvalOptions) -> Result<(EmbeddingMatrix, Timing), Error> {
    let texts = suite_texts(suite, opts.prompt_mode);
    let start = Instant::now();
    let mut m = match &opts.cache {
        Some(c) => c.embed(provider, &texts, &opts.embed)?,
        None => embed_texts(provider, &texts, &opts.embed)?,
    };
    let timing = Timing {
        embed_seconds: start.elapsed().as_secs_f64(),
        texts: texts.len(),
        speed_ratio: None,
    };
    m.provenance.prompt_mode = opts.prompt_mode;
    m.provenance.variant = suite.variant;
    Ok((m, timing))
}

/// Scores a suite from precomputed embeddings.
pub fn score_suite(suite: &TaskSuite, embeddings: EmbeddingMatrix, opts: &EvalOptions) -> Result<EvalReport, Error> {
    let embeddings = match opts.truncate_dim {
        Some(d) => ablate::truncate_embeddings(&embeddings, d)?,
        None => embeddings,
    };
    let config = RunConfig {
        toolkit_version: crate::VERSION.to_string(),
        provider: embeddings.provenance.provider.clone(),
        prompt_mode: opts.prompt_mode,
        seed: suite.seed,
        variant: suite.variant,
        layer_cap: embeddings.provenance.layer_cap,
        truncate_dim: opts.truncate_dim,
        corpus_hash: suite.corpus_hash.clone(),
        tasks_hash: suite.content_hash(),
        probe_seed: ProbeConfig::default().seed,
        kmeans_seed: KMeansConfig::default().seed,
    };
    let lookup = EmbeddingLookup::new(embeddings);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let tasks: Vec<(&TaskId, &TaskData)> = suite.tasks.iter().collect();
    let results: Vec<TaskResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(&t, d)| score_task(t, d, opts.prompt_mode, &lookup))
            .collect()
    });
    Ok(EvalReport::new(results, config))
}

/// Embeds and scores a suite.
pub fn evaluate_suite(suite: &TaskSuite, provider: &dyn Provider, opts: &EvalOptions) -> Result<EvalReport, Error> {
    let (m, timing) = embed_suite(suite, provider, opts)?;
    let mut report = score_suite(suite, m, opts)?;
    if opts.record_timing {
        report.timing = Some(timing);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_index_puts_test_only_labels_last() {
        let idx = class_index(["b", "a", "b"].into_iter(), ["c", "a"].into_iter());
        assert_eq!(idx.into_iter().collect::<Vec<_>>(), vec![("a", 0), ("b", 1), ("c", 2)]);
    }
}
