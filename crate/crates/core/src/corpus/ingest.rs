//! Corpus ingestion from JSONL or Parquet, one record per family.
//!
//! Structural problems (missing column, wrong column type) abort with
//! [`CorpusError::SchemaMismatch`]. Value-level problems (malformed date,
//! IPC code not three characters, inconsistent citation counts) reject the
//! row and are listed in the [`IngestReport`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use arrow_array::builder::{ListBuilder, StringBuilder};
use arrow_array::{Array, ArrayRef, Int64Array, ListArray, RecordBatch, StringArray};
use arrow_schema::{DataType, Field, Schema};
use chrono::NaiveDate;
use parquet::arrow::arrow_reader::ParquetRecordBatchReaderBuilder;
use parquet::arrow::ArrowWriter;
use serde_json::Value;

use super::{Corpus, CorpusError, PatentFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Parquet,
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "parquet" => Some(Self::Parquet),
            "jsonl" | "json" | "ndjson" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parquet" => Ok(Self::Parquet),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RejectedRow {
    pub row: usize,
    pub family_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
}

const COLUMNS: [&str; 10] = [
    "family_id",
    "title",
    "abstract",
    "first_claim",
    "ipc_codes",
    "inventors",
    "filing_date",
    "cites",
    "cited_by_count_5y",
    "cited_by_count_total",
];

/// Untyped row as read from either format, before value validation.
struct RawRow {
    family_id: String,
    title: String,
    abstract_text: String,
    first_claim: String,
    ipc_codes: Vec<String>,
    inventors: Vec<String>,
    filing_date: String,
    cites: Vec<String>,
    cited_by_count_5y: i64,
    cited_by_count_total: i64,
}

impl RawRow {
    fn validate(self) -> Result<PatentFamily, (String, String)> {
        let reject = |reason: String| Err((self.family_id.clone(), reason));
        if self.family_id.trim().is_empty() {
            return reject("empty family_id".into());
        }
        if let Some(bad) = self.ipc_codes.iter().find(|c| c.chars().count() != 3) {
            return reject(format!("IPC3 code `{bad}` is not 3 characters"));
        }
        let Ok(filing_date) = NaiveDate::parse_from_str(&self.filing_date, "%Y-%m-%d") else {
            return reject(format!("filing_date `{}` is not YYYY-MM-DD", self.filing_date));
        };
        if self.cited_by_count_5y < 0 || self.cited_by_count_total < 0 {
            return reject("negative citation count".into());
        }
        if self.cited_by_count_5y > self.cited_by_count_total {
            return reject("cited_by_count_5y exceeds cited_by_count_total".into());
        }
        Ok(PatentFamily {
            family_id: self.family_id,
            title: self.title,
            abstract_text: self.abstract_text,
            first_claim: self.first_claim,
            ipc_codes: self.ipc_codes,
            inventors: self.inventors,
            filing_date,
            cites: self.cites,
            cited_by_count_5y: self.cited_by_count_5y as u64,
            cited_by_count_total: self.cited_by_count_total as u64,
        })
    }
}

/// Reads a corpus file. Rows failing value checks are rejected and reported.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<(Corpus, IngestReport), CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.display().to_string()));
    }
    let rows = match format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::Parquet => read_parquet(path)?,
    };
    let mut report = IngestReport::default();
    let mut families = Vec::with_capacity(rows.len());
    for (i, raw) in rows.into_iter().enumerate() {
        match raw.validate() {
            Ok(f) => families.push(f),
            Err((family_id, reason)) => report.rejected.push(RejectedRow {
                row: i,
                family_id,
                reason,
            }),
        }
    }
    report.accepted = families.len();
    let corpus = Corpus::from_families(families)?;
    Ok((corpus, report))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

fn mismatch(column: &str, detail: impl Into<String>) -> CorpusError {
    CorpusError::SchemaMismatch {
        column: column.to_string(),
        detail: detail.into(),
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| mismatch("<record>", format!("line {}: {e}", lineno + 1)))?;
        let obj = v
            .as_object()
            .ok_or_else(|| mismatch("<record>", format!("line {}: not a JSON object", lineno + 1)))?;
        let field = |name: &str| {
            obj.get(name)
                .ok_or_else(|| mismatch(name, format!("line {}: missing", lineno + 1)))
        };
        let string = |name: &str| -> Result<String, CorpusError> {
            field(name)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| mismatch(name, format!("line {}: expected string", lineno + 1)))
        };
        let list = |name: &str| -> Result<Vec<String>, CorpusError> {
            let arr = field(name)?
                .as_array()
                .ok_or_else(|| mismatch(name, format!("line {}: expected list<string>", lineno + 1)))?;
            arr.iter()
                .map(|x| {
                    x.as_str().map(str::to_string).ok_or_else(|| {
                        mismatch(name, format!("line {}: expected list<string>", lineno + 1))
                    })
                })
                .collect()
        };
        let int = |name: &str| -> Result<i64, CorpusError> {
            field(name)?
                .as_i64()
                .ok_or_else(|| mismatch(name, format!("line {}: expected int64", lineno + 1)))
        };
        rows.push(RawRow {
            family_id: string("family_id")?,
            title: string("title")?,
            abstract_text: string("abstract")?,
            first_claim: string("first_claim")?,
            ipc_codes: list("ipc_codes")?,
            inventors: list("inventors")?,
            filing_date: string("filing_date")?,
            cites: list("cites")?,
            cited_by_count_5y: int("cited_by_count_5y")?,
            cited_by_count_total: int("cited_by_count_total")?,
        });
    }
    Ok(rows)
}

fn column<'a>(batch: &'a RecordBatch, name: &str) -> Result<&'a ArrayRef, CorpusError> {
    batch.column_by_name(name).ok_or_else(|| mismatch(name, "missing column"))
}

fn string_column<'a>(batch: &'a RecordBatch, name: &str) -> Result<&'a StringArray, CorpusError> {
    column(batch, name)?
        .as_any()
        .downcast_ref::<StringArray>()
        .ok_or_else(|| mismatch(name, "expected utf8 string column"))
}

fn int_column<'a>(batch: &'a RecordBatch, name: &str) -> Result<&'a Int64Array, CorpusError> {
    column(batch, name)?
        .as_any()
        .downcast_ref::<Int64Array>()
        .ok_or_else(|| mismatch(name, "expected int64 column"))
}

fn list_value(batch: &RecordBatch, name: &str, row: usize) -> Result<Vec<String>, CorpusError> {
    let list = column(batch, name)?
        .as_any()
        .downcast_ref::<ListArray>()
        .ok_or_else(|| mismatch(name, "expected list<string> column"))?;
    if list.is_null(row) {
        return Ok(Vec::new());
    }
    let values = list.value(row);
    let strings = values
        .as_any()
        .downcast_ref::<StringArray>()
        .ok_or_else(|| mismatch(name, "expected list<string> column"))?;
    Ok((0..strings.len())
        .filter(|&i| !strings.is_null(i))
        .map(|i| strings.value(i).to_string())
        .collect())
}

fn read_parquet(path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = ParquetRecordBatchReaderBuilder::try_new(file)
        .map_err(|e| io_err(path, e))?
        .build()
        .map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for batch in reader {
        let batch = batch.map_err(|e| io_err(path, e))?;
        for name in COLUMNS {
            column(&batch, name)?;
        }
        let s = |name: &str, i: usize| -> Result<String, CorpusError> {
            let col = string_column(&batch, name)?;
            Ok(if col.is_null(i) { String::new() } else { col.value(i).to_string() })
        };
        let n = |name: &str, i: usize| -> Result<i64, CorpusError> {
            let col = int_column(&batch, name)?;
            if col.is_null(i) {
                return Err(mismatch(name, format!("null value at row {i}")));
            }
            Ok(col.value(i))
        };
        for i in 0..batch.num_rows() {
            rows.push(RawRow {
                family_id: s("family_id", i)?,
                title: s("title", i)?,
                abstract_text: s("abstract", i)?,
                first_claim: s("first_claim", i)?,
                ipc_codes: list_value(&batch, "ipc_codes", i)?,
                inventors: list_value(&batch, "inventors", i)?,
                filing_date: s("filing_date", i)?,
                cites: list_value(&batch, "cites", i)?,
                cited_by_count_5y: n("cited_by_count_5y", i)?,
                cited_by_count_total: n("cited_by_count_total", i)?,
            });
        }
    }
    Ok(rows)
}

/// Writes the corpus as JSONL in the ingestion schema.
pub fn write_corpus_jsonl(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for f in corpus.families() {
        serde_json::to_writer(&mut w, f).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn string_list<'a>(values: impl Iterator<Item = &'a Vec<String>>) -> ArrayRef {
    let mut b = ListBuilder::new(StringBuilder::new());
    for list in values {
        for v in list {
            b.values().append_value(v);
        }
        b.append(true);
    }
    Arc::new(b.finish())
}

/// Writes the corpus as Parquet in the ingestion schema.
pub fn write_corpus_parquet(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let fams = corpus.families();
    let list_type = DataType::List(Arc::new(Field::new("item", DataType::Utf8, true)));
    let schema = Arc::new(Schema::new(vec![
        Field::new("family_id", DataType::Utf8, false),
        Field::new("title", DataType::Utf8, false),
        Field::new("abstract", DataType::Utf8, false),
        Field::new("first_claim", DataType::Utf8, false),
        Field::new("ipc_codes", list_type.clone(), false),
        Field::new("inventors", list_type.clone(), false),
        Field::new("filing_date", DataType::Utf8, false),
        Field::new("cites", list_type, false),
        Field::new("cited_by_count_5y", DataType::Int64, false),
        Field::new("cited_by_count_total", DataType::Int64, false),
    ]));
    let strs = |f: fn(&PatentFamily) -> &str| -> ArrayRef {
        Arc::new(StringArray::from_iter_values(fams.iter().map(f)))
    };
    let dates: Vec<String> = fams.iter().map(|f| f.filing_date.format("%Y-%m-%d").to_string()).collect();
    let columns: Vec<ArrayRef> = vec![
        strs(|f| &f.family_id),
        strs(|f| &f.title),
        strs(|f| &f.abstract_text),
        strs(|f| &f.first_claim),
        string_list(fams.iter().map(|f| &f.ipc_codes)),
        string_list(fams.iter().map(|f| &f.inventors)),
        Arc::new(StringArray::from_iter_values(dates.iter())),
        string_list(fams.iter().map(|f| &f.cites)),
        Arc::new(Int64Array::from_iter_values(fams.iter().map(|f| f.cited_by_count_5y as i64))),
        Arc::new(Int64Array::from_iter_values(fams.iter().map(|f| f.cited_by_count_total as i64))),
    ];
    let batch = RecordBatch::try_new(schema.clone(), columns).map_err(|e| io_err(path, e))?;
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = ArrowWriter::try_new(file, schema, None).map_err(|e| io_err(path, e))?;
    writer.write(&batch).map_err(|e| io_err(path, e))?;
    writer.close().map_err(|e| io_err(path, e))?;
    Ok(())
}
