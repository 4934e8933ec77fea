//! Parquet serialization of task records.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use arrow_array::{Array, ArrayRef, Int8Array, RecordBatch, StringArray};
use arrow_schema::{DataType, Field, Schema};
use parquet::arrow::arrow_reader::ParquetRecordBatchReaderBuilder;
use parquet::arrow::ArrowWriter;

use crate::domains::{DomainRelation, Split};

use super::{ClusterMember, LabeledText, PairRecord, RecordKind, Records, RetrievalTriplet, TaskId, TaskgenError};

pub fn task_file_name(task: TaskId, split: Split) -> String {
    format!("{}__{}.parquet", task.name(), split.as_str())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TaskgenError {
    TaskgenError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

fn strings<'a>(it: impl Iterator<Item = &'a str>) -> ArrayRef {
    Arc::new(StringArray::from_iter_values(it))
}

fn utf8(name: &str) -> Field {
    Field::new(name, DataType::Utf8, false)
}

fn to_batch(records: &Records) -> Result<RecordBatch, arrow_schema::ArrowError> {
    let (fields, columns): (Vec<Field>, Vec<ArrayRef>) = match records {
        Records::Retrieval(r) => (
            ["query_id", "positive_id", "negative_id", "query_text", "positive_text", "negative_text", "relation"]
                .map(utf8)
                .to_vec(),
            vec![
                strings(r.iter().map(|t| t.query_id.as_str())),
                strings(r.iter().map(|t| t.positive_id.as_str())),
                strings(r.iter().map(|t| t.negative_id.as_str())),
                strings(r.iter().map(|t| t.query_text.as_str())),
                strings(r.iter().map(|t| t.positive_text.as_str())),
                strings(r.iter().map(|t| t.negative_text.as_str())),
                strings(r.iter().map(|t| t.relation.as_str())),
            ],
        ),
        Records::Pairs(r) => (
            vec![utf8("text1"), utf8("text2"), Field::new("label", DataType::Int8, false)],
            vec![
                strings(r.iter().map(|p| p.text1.as_str())),
                strings(r.iter().map(|p| p.text2.as_str())),
                Arc::new(Int8Array::from_iter_values(r.iter().map(|p| p.label as i8))),
            ],
        ),
        Records::Labeled(r) => (
            vec![utf8("text"), utf8("label")],
            vec![
                strings(r.iter().map(|l| l.text.as_str())),
                strings(r.iter().map(|l| l.label.as_str())),
            ],
        ),
        Records::Clustering(r) => (
            vec![utf8("text"), utf8("cluster_id")],
            vec![
                strings(r.iter().map(|c| c.text.as_str())),
                strings(r.iter().map(|c| c.cluster_id.as_str())),
            ],
        ),
    };
    RecordBatch::try_new(Arc::new(Schema::new(fields)), columns)
}

/// Writes one task split as Parquet.
pub fn export_task(records: &Records, path: &Path) -> Result<(), TaskgenError> {
    let batch = to_batch(records).map_err(|e| io_err(path, e))?;
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = ArrowWriter::try_new(file, batch.schema(), None).map_err(|e| io_err(path, e))?;
    writer.write(&batch).map_err(|e| io_err(path, e))?;
    writer.close().map_err(|e| io_err(path, e))?;
    Ok(())
}

struct Columns<'a> {
    batch: &'a RecordBatch,
    path: &'a Path,
}

impl Columns<'_> {
    fn bad(&self, detail: String) -> TaskgenError {
        TaskgenError::BadTaskFile {
            path: self.path.display().to_string(),
            detail,
        }
    }

    fn string(&self, name: &str) -> Result<Vec<String>, TaskgenError> {
        let col = self
            .batch
            .column_by_name(name)
            .ok_or_else(|| self.bad(format!("missing column `{name}`")))?
            .as_any()
            .downcast_ref::<StringArray>()
            .ok_or_else(|| self.bad(format!("column `{name}` is not utf8")))?;
        Ok((0..col.len()).map(|i| col.value(i).to_string()).collect())
    }

    fn int8(&self, name: &str) -> Result<Vec<i8>, TaskgenError> {
        let col = self
            .batch
            .column_by_name(name)
            .ok_or_else(|| self.bad(format!("missing column `{name}`")))?
            .as_any()
            .downcast_ref::<Int8Array>()
            .ok_or_else(|| self.bad(format!("column `{name}` is not int8")))?;
        Ok(col.values().to_vec())
    }
}

fn from_batch(kind: RecordKind, cols: &Columns<'_>, out: &mut Records) -> Result<(), TaskgenError> {
    match (kind, out) {
        (RecordKind::Retrieval, Records::Retrieval(v)) => {
            let q = cols.string("query_id")?;
            let p = cols.string("positive_id")?;
            let n = cols.string("negative_id")?;
            let qt = cols.string("query_text")?;
            let pt = cols.string("positive_text")?;
            let nt = cols.string("negative_text")?;
            let rel = cols.string("relation")?;
            for i in 0..q.len() {
                let relation: DomainRelation = rel[i].parse().map_err(|e: String| cols.bad(e))?;
                v.push(RetrievalTriplet {
                    query_id: q[i].clone(),
                    positive_id: p[i].clone(),
                    negative_id: n[i].clone(),
                    query_text: qt[i].clone(),
                    positive_text: pt[i].clone(),
                    negative_text: nt[i].clone(),
                    relation,
                });
            }
        }
        (RecordKind::Pairs, Records::Pairs(v)) => {
            let t1 = cols.string("text1")?;
            let t2 = cols.string("text2")?;
            let l = cols.int8("label")?;
            for ((text1, text2), label) in t1.into_iter().zip(t2).zip(l) {
                if !(0..=1).contains(&label) {
                    return Err(cols.bad(format!("label {label} not in {{0,1}}")));
                }
                v.push(PairRecord {
                    text1,
                    text2,
                    label: label as u8,
                });
            }
        }
        (RecordKind::Labeled, Records::Labeled(v)) => {
            let t = cols.string("text")?;
            let l = cols.string("label")?;
            v.extend(t.into_iter().zip(l).map(|(text, label)| LabeledText { text, label }));
        }
        (RecordKind::Clustering, Records::Clustering(v)) => {
            let t = cols.string("text")?;
            let c = cols.string("cluster_id")?;
            v.extend(t.into_iter().zip(c).map(|(text, cluster_id)| ClusterMember { text, cluster_id }));
        }
        _ => unreachable!("record container matches kind"),
    }
    Ok(())
}

/// Reads one exported task split.
pub fn read_task(task: TaskId, path: &Path) -> Result<Records, TaskgenError> {
    let kind = task.record_kind();
    let mut out = match kind {
        RecordKind::Retrieval => Records::Retrieval(Vec::new()),
        RecordKind::Pairs => Records::Pairs(Vec::new()),
        RecordKind::Labeled => Records::Labeled(Vec::new()),
        RecordKind::Clustering => Records::Clustering(Vec::new()),
    };
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = ParquetRecordBatchReaderBuilder::try_new(file)
        .map_err(|e| io_err(path, e))?
        .build()
        .map_err(|e| io_err(path, e))?;
    for batch in reader {
        let batch = batch.map_err(|e| io_err(path, e))?;
        from_batch(kind, &Columns { batch: &batch, path }, &mut out)?;
    }
    Ok(out)
}
