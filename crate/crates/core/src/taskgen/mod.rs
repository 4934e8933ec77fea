//! Construction of the fifteen benchmark tasks from a split corpus.

mod classification;
mod clustering;
mod export;
mod negatives;
mod paraphrase;
mod pipeline;
mod retrieval;
mod subsample;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::StructuralVariant;
use crate::domains::{DomainRelation, Split, SplitRatios, MIN_PER_CLASS};

pub use classification::{bloom_labels, build_bloom, build_nli_oldnew, build_text2ipc3, BloomLabel};
pub use clustering::build_clustering;
pub use export::{export_task, read_task, task_file_name};
pub use negatives::{jaccard, mine_hard_negatives, NegativeCategory, TokenIndex, TokenSet};
pub use paraphrase::{build_paraphrase, paraphrase_sizes};
pub use pipeline::{build_all, write_build, BuildContext, BuildManifest, BuildOutput, MANIFEST_FILE, SEGMENTS_FILE, SPLITS_FILE};
pub use retrieval::{build_asymmetric_retrieval, build_symmetric_retrieval, select_positives, RetrievalStats};
pub use subsample::{allocate, stratified_subsample};

#[derive(Debug, Error)]
pub enum TaskgenError {
    #[error("no eligible negative candidates for query `{0}`")]
    NoEligibleCandidates(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("task file {path}: {detail}")]
    BadTaskFile { path: String, detail: String },
}

/// The fifteen tasks, in canonical report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskId {
    RetrievalIn,
    RetrievalMixed,
    RetrievalOut,
    Title2Full,
    Problem2Full,
    Problem2Solution,
    Effect2Full,
    Effect2Substance,
    ClassText2Ipc3,
    ClassBloom,
    ClassNliOldnew,
    ParaProblem,
    ParaSolution,
    ClustersExtFullIpc,
    ClustersInventor,
}

/// Task family, matching the four aggregate columns of a leaderboard row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskFamily {
    Retrieval,
    Paraphrase,
    Classification,
    Clustering,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 4] = [
        TaskFamily::Retrieval,
        TaskFamily::Paraphrase,
        TaskFamily::Classification,
        TaskFamily::Clustering,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Retrieval => "retrieval",
            Self::Paraphrase => "paraphrase",
            Self::Classification => "classification",
            Self::Clustering => "clustering",
        }
    }
}

/// Record layout of a task's files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordKind {
    Retrieval,
    Pairs,
    Labeled,
    Clustering,
}

impl TaskId {
    pub const ALL: [TaskId; 15] = [
        TaskId::RetrievalIn,
        TaskId::RetrievalMixed,
        TaskId::RetrievalOut,
        TaskId::Title2Full,
        TaskId::Problem2Full,
        TaskId::Problem2Solution,
        TaskId::Effect2Full,
        TaskId::Effect2Substance,
        TaskId::ClassText2Ipc3,
        TaskId::ClassBloom,
        TaskId::ClassNliOldnew,
        TaskId::ParaProblem,
        TaskId::ParaSolution,
        TaskId::ClustersExtFullIpc,
        TaskId::ClustersInventor,
    ];

    /// The thirteen tasks with a training split.
    pub fn training() -> impl Iterator<Item = TaskId> {
        Self::ALL.into_iter().filter(|t| t.has_training_split())
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RetrievalIn => "retrieval_IN",
            Self::RetrievalMixed => "retrieval_MIXED",
            Self::RetrievalOut => "retrieval_OUT",
            Self::Title2Full => "title2full",
            Self::Problem2Full => "problem2full",
            Self::Problem2Solution => "problem2solution",
            Self::Effect2Full => "effect2full",
            Self::Effect2Substance => "effect2substance",
            Self::ClassText2Ipc3 => "class_text2ipc3",
            Self::ClassBloom => "class_bloom",
            Self::ClassNliOldnew => "class_nli_oldnew",
            Self::ParaProblem => "para_problem",
            Self::ParaSolution => "para_solution",
            Self::ClustersExtFullIpc => "clusters_ext_full_ipc",
            Self::ClustersInventor => "clusters_inventor",
        }
    }

    pub fn family(self) -> TaskFamily {
        match self.record_kind() {
            RecordKind::Retrieval => TaskFamily::Retrieval,
            RecordKind::Clustering => TaskFamily::Clustering,
            RecordKind::Labeled => TaskFamily::Classification,
            RecordKind::Pairs if self == Self::ClassNliOldnew => TaskFamily::Classification,
            RecordKind::Pairs => TaskFamily::Paraphrase,
        }
    }

    pub fn record_kind(self) -> RecordKind {
        match self {
            Self::RetrievalIn
            | Self::RetrievalMixed
            | Self::RetrievalOut
            | Self::Title2Full
            | Self::Problem2Full
            | Self::Problem2Solution
            | Self::Effect2Full
            | Self::Effect2Substance => RecordKind::Retrieval,
            Self::ClassText2Ipc3 | Self::ClassBloom => RecordKind::Labeled,
            Self::ClassNliOldnew | Self::ParaProblem | Self::ParaSolution => RecordKind::Pairs,
            Self::ClustersExtFullIpc | Self::ClustersInventor => RecordKind::Clustering,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self.family() {
            TaskFamily::Retrieval => "ndcg@10",
            TaskFamily::Paraphrase => "pearson",
            TaskFamily::Classification => "macro_f1",
            TaskFamily::Clustering => "v_measure",
        }
    }

    pub fn has_training_split(self) -> bool {
        self.record_kind() != RecordKind::Clustering
    }

    pub fn splits(self) -> &'static [Split] {
        if self.has_training_split() {
            &Split::ALL
        } else {
            &[Split::Test]
        }
    }

    /// Target relation of the (query, positive) pair for symmetric retrieval.
    pub fn symmetric_relation(self) -> Option<NegativeCategory> {
        match self {
            Self::RetrievalIn => Some(NegativeCategory::In),
            Self::RetrievalOut => Some(NegativeCategory::Out),
            Self::RetrievalMixed => Some(NegativeCategory::Mixed),
            _ => None,
        }
    }

    pub fn is_asymmetric(self) -> bool {
        matches!(
            self,
            Self::Title2Full | Self::Problem2Full | Self::Problem2Solution | Self::Effect2Full | Self::Effect2Substance
        )
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = TaskgenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TaskgenError::UnknownTask(s.to_string()))
    }
}

impl TryFrom<String> for TaskId {
    type Error = TaskgenError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TaskId> for String {
    fn from(t: TaskId) -> String {
        t.name().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalTriplet {
    pub query_id: String,
    pub positive_id: String,
    pub negative_id: String,
    pub query_text: String,
    pub positive_text: String,
    pub negative_text: String,
    pub relation: DomainRelation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub text1: String,
    pub text2: String,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub text: String,
    pub cluster_id: String,
}

/// Records of one task split, exactly as exported.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Records {
    Retrieval(Vec<RetrievalTriplet>),
    Pairs(Vec<PairRecord>),
    Labeled(Vec<LabeledText>),
    Clustering(Vec<ClusterMember>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Self::Retrieval(r) => r.len(),
            Self::Pairs(r) => r.len(),
            Self::Labeled(r) => r.len(),
            Self::Clustering(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> RecordKind {
        match self {
            Self::Retrieval(_) => RecordKind::Retrieval,
            Self::Pairs(_) => RecordKind::Pairs,
            Self::Labeled(_) => RecordKind::Labeled,
            Self::Clustering(_) => RecordKind::Clustering,
        }
    }
}

/// One task split. `members` lists, per record, the corpus indices of the
/// families it draws text from; `strata` the subsampling stratum.
#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub task: TaskId,
    pub split: Split,
    pub records: Records,
    pub members: Vec<Vec<usize>>,
    pub strata: Vec<String>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keeps records at the given ascending positions.
    pub fn select(&self, keep: &[usize]) -> TaskDataset {
        fn pick<T: Clone>(v: &[T], keep: &[usize]) -> Vec<T> {
            keep.iter().map(|&i| v[i].clone()).collect()
        }
        let records = match &self.records {
            Records::Retrieval(r) => Records::Retrieval(pick(r, keep)),
            Records::Pairs(r) => Records::Pairs(pick(r, keep)),
            Records::Labeled(r) => Records::Labeled(pick(r, keep)),
            Records::Clustering(r) => Records::Clustering(pick(r, keep)),
        };
        TaskDataset {
            task: self.task,
            split: self.split,
            records,
            members: pick(&self.members, keep),
            strata: pick(&self.strata, keep),
        }
    }
}

/// Size bounds for retained clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterBounds {
    pub min: usize,
    pub max: usize,
}

/// Construction parameters. [`BuildConfig::default`] mirrors the full-size
/// benchmark; [`BuildConfig::desk`] scales targets down for small corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub seed: u64,
    pub variant: StructuralVariant,
    /// Multiplier applied to the per-task target sizes.
    pub scale: f64,
    pub min_per_class: usize,
    pub min_per_stratum: usize,
    pub max_positives: usize,
    pub max_triplets: usize,
    pub paraphrase_positive_rate: f64,
    pub bloom_cutoff: NaiveDate,
    pub ipc_cluster_bounds: ClusterBounds,
    pub inventor_cluster_bounds: ClusterBounds,
    #[serde(with = "ratios_serde")]
    pub split_ratios: SplitRatios,
}

mod ratios_serde {
    use super::SplitRatios;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &SplitRatios, s: S) -> Result<S::Ok, S::Error> {
        [r.train, r.validation, r.test].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SplitRatios, D::Error> {
        let [train, validation, test] = <[f64; 3]>::deserialize(d)?;
        Ok(SplitRatios { train, validation, test })
    }
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            seed: crate::seed::DEFAULT_SEED,
            variant: StructuralVariant::Full,
            scale: 1.0,
            min_per_class: MIN_PER_CLASS,
            min_per_stratum: 5,
            max_positives: 100,
            max_triplets: 10,
            paraphrase_positive_rate: 0.14,
            bloom_cutoff: NaiveDate::from_ymd_opt(2023, 6, 20).expect("valid date"),
            ipc_cluster_bounds: ClusterBounds { min: 200, max: 1000 },
            inventor_cluster_bounds: ClusterBounds { min: 100, max: 1000 },
            split_ratios: SplitRatios::default(),
        }
    }
}

impl BuildConfig {
    /// Preset for corpora of a few thousand families.
    pub fn desk() -> Self {
        Self {
            scale: 0.001,
            min_per_class: 50,
            min_per_stratum: 2,
            ipc_cluster_bounds: ClusterBounds { min: 8, max: 1000 },
            inventor_cluster_bounds: ClusterBounds { min: 4, max: 1000 },
            ..Self::default()
        }
    }

    /// Target record count for a task split, at least 1.
    pub fn target(&self, task: TaskId, split: Split) -> usize {
        let base = full_size(task, split) as f64;
        ((base * self.scale).round() as usize).max(1)
    }
}

/// Full-size record counts per task and split.
pub fn full_size(task: TaskId, split: Split) -> usize {
    use TaskId::*;
    let (train, val, test) = match task {
        RetrievalIn => (150_000, 15_806, 15_809),
        RetrievalMixed => (150_000, 15_580, 15_574),
        RetrievalOut => (150_000, 11_625, 15_462),
        Title2Full => (150_000, 18_729, 18_727),
        Problem2Full => (150_000, 18_735, 18_729),
        Problem2Solution => (150_000, 18_735, 18_729),
        Effect2Full => (16_297, 2_034, 2_043),
        Effect2Substance => (16_197, 2_018, 2_037),
        ClassText2Ipc3 => (150_000, 18_729, 18_727),
        ClassBloom => (58_181, 7_303, 7_347),
        ClassNliOldnew => (116_076, 14_554, 14_690),
        ParaProblem => (150_000, 18_719, 18_726),
        ParaSolution => (150_000, 18_648, 18_656),
        ClustersExtFullIpc => (0, 0, 47_230),
        ClustersInventor => (0, 0, 86_834),
    };
    match split {
        Split::Train => train,
        Split::Validation => val,
        Split::Test => test,
    }
}
