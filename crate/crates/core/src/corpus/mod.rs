//! Patent-family data model, corpus ingestion, citation graph and evaluation
//! text assembly.

mod graph;
mod ingest;
mod text;

use std::collections::{BTreeSet, HashMap};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use graph::CitationGraph;
pub use ingest::{
    ingest_corpus, write_corpus_jsonl, write_corpus_parquet, CorpusFormat, IngestReport,
    RejectedRow,
};
pub use text::{assemble_sections, assemble_text, cap_tokens, Sections, StructuralVariant};

/// Canonical section separator used when assembling evaluation texts.
pub const SEPARATOR: &str = "[SEP]";
/// Whitespace-token cap applied to every assembled text.
pub const MAX_TOKENS: usize = 8192;
/// Families filed before this year are dropped by [`Corpus::apply_quality_filters`].
pub const MIN_FILING_YEAR: i32 = 1980;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    MissingFile(String),
    #[error("schema mismatch in column `{column}`: {detail}")]
    SchemaMismatch { column: String, detail: String },
    #[error("duplicate family_id `{0}`")]
    DuplicateFamilyId(String),
    #[error("assembled text is empty for family `{0}`")]
    EmptyText(String),
    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
}

/// One simple patent family, the atomic document unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentFamily {
    pub family_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub first_claim: String,
    /// IPC3 codes as listed by the source, duplicates preserved.
    pub ipc_codes: Vec<String>,
    pub inventors: Vec<String>,
    pub filing_date: NaiveDate,
    /// Outgoing citations (family ids, possibly dangling).
    pub cites: Vec<String>,
    pub cited_by_count_5y: u64,
    pub cited_by_count_total: u64,
}

impl PatentFamily {
    /// Distinct IPC3 codes.
    pub fn ipc3_set(&self) -> BTreeSet<&str> {
        self.ipc_codes.iter().map(String::as_str).collect()
    }

    pub fn sections(&self) -> Sections<'_> {
        Sections {
            title: &self.title,
            abstract_text: &self.abstract_text,
            first_claim: &self.first_claim,
        }
    }
}

/// Immutable collection of families with a unique id index.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    families: Vec<PatentFamily>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_families(families: Vec<PatentFamily>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(families.len());
        for (i, f) in families.iter().enumerate() {
            if index.insert(f.family_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateFamilyId(f.family_id.clone()));
            }
        }
        Ok(Self { families, index })
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn families(&self) -> &[PatentFamily] {
        &self.families
    }

    pub fn get(&self, idx: usize) -> &PatentFamily {
        &self.families[idx]
    }

    pub fn index_of(&self, family_id: &str) -> Option<usize> {
        self.index.get(family_id).copied()
    }

    pub fn by_id(&self, family_id: &str) -> Option<&PatentFamily> {
        self.index_of(family_id).map(|i| &self.families[i])
    }

    /// Keeps the families matching `keep`, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&PatentFamily) -> bool) -> Corpus {
        let families: Vec<_> = self.families.iter().filter(|f| keep(f)).cloned().collect();
        Corpus::from_families(families).expect("subset of a unique corpus is unique")
    }

    /// Drops families filed before 1980 or without IPC codes.
    /// Returns the filtered corpus and the number of dropped families.
    pub fn apply_quality_filters(&self) -> (Corpus, usize) {
        let kept = self.filtered(|f| {
            f.filing_date.year() >= MIN_FILING_YEAR && !f.ipc_codes.is_empty()
        });
        let dropped = self.len() - kept.len();
        (kept, dropped)
    }

    /// SHA-256 over the canonical JSONL serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.families {
            h.update(serde_json::to_vec(f).expect("family serializes"));
            h.update(b"\n");
        }
        hex_digest(&h.finalize())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}


#[cfg(test)]
mod tests {
    use super::test_support::family;
    use super::*;

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::from_families(vec![family("F1", &["A01"], &[]), family("F1", &["B02"], &[])])
            .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateFamilyId(id) if id == "F1"));
    }

    #[test]
    fn quality_filters_drop_old_and_unclassified() {
        let mut old = family("OLD", &["A01"], &[]);
        old.filing_date = NaiveDate::from_ymd_opt(1979, 12, 31).unwrap();
        let none = family("NONE", &[], &[]);
        let ok = family("OK", &["A01"], &[]);
        let c = Corpus::from_families(vec![old, none, ok]).unwrap();
        let (kept, dropped) = c.apply_quality_filters();
        assert_eq!(dropped, 2);
        assert_eq!(kept.families()[0].family_id, "OK");
        assert_eq!(kept.index_of("OK"), Some(0));
    }

    #[test]
    fn content_hash_is_order_sensitive() {
        let a = Corpus::from_families(vec![family("A", &["A01"], &[]), family("B", &["A01"], &[])]).unwrap();
        let b = Corpus::from_families(vec![family("B", &["A01"], &[]), family("A", &["A01"], &[])]).unwrap();
        assert_eq!(a.content_hash(), a.content_hash());
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
