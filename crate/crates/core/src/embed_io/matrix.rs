use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::StructuralVariant;
use crate::numeric::{normalize_in_place, Matrix, Scalar};

use super::{EmbedError, PromptMode};

/// File signature: `PTEB-EMB`, seven zero bytes, format version 1.
pub const MAGIC: [u8; 16] = *b"PTEB-EMB\0\0\0\0\0\0\0\x01";

/// Tolerance on row norms for a matrix flagged as normalized.
pub const NORM_TOLERANCE: f32 = 1e-3;

/// 64-bit key of an exact (prompted) text: the first eight bytes of its
/// SHA-256, little endian.
pub fn content_key(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider: String,
    pub prompt_mode: PromptMode,
    pub variant: StructuralVariant,
    pub layer_cap: Option<usize>,
    pub truncate_dim: Option<usize>,
}

/// Row-per-text embeddings stored as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    row_keys: Vec<u64>,
    normalized: bool,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    count: usize,
    normalized: bool,
    provenance: Provenance,
    row_keys: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(
        dim: usize,
        data: Vec<f32>,
        row_keys: Vec<u64>,
        normalized: bool,
        provenance: Provenance,
    ) -> Result<Self, EmbedError> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        if data.len() / dim != row_keys.len() {
            return Err(EmbedError::RowKeyMismatch {
                rows: data.len() / dim,
                keys: row_keys.len(),
            });
        }
        Ok(Self {
            dim,
            data,
            row_keys,
            normalized,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.row_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_keys.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn row_keys(&self) -> &[u64] {
        &self.row_keys
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Scales every non-zero row to unit norm and sets the flag.
    pub fn normalize(&mut self) {
        for row in self.data.chunks_exact_mut(self.dim) {
            normalize_in_place(row);
        }
        self.normalized = true;
    }

    /// True if every row norm is within [`NORM_TOLERANCE`] of 1.
    pub fn rows_are_unit(&self) -> bool {
        self.rows()
            .all(|r| (r.iter().map(|x| x * x).sum::<f32>().sqrt() - 1.0).abs() <= NORM_TOLERANCE)
    }

    /// Copies the rows into a matrix of any scalar type.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let data = self.data.iter().map(|&x| T::of(x as f64)).collect();
        Matrix::from_vec(self.len(), self.dim, data)
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            dim: self.dim,
            data,
            row_keys: idx.iter().map(|&i| self.row_keys[i]).collect(),
            normalized: self.normalized,
            provenance: self.provenance.clone(),
        }
    }

    /// Keeps the first `d` columns; the caller decides about renormalizing.
    pub(crate) fn first_columns(&self, d: usize) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(self.len() * d);
        for r in self.rows() {
            data.extend_from_slice(&r[..d]);
        }
        EmbeddingMatrix {
            dim: d,
            data,
            row_keys: self.row_keys.clone(),
            normalized: false,
            provenance: self.provenance.clone(),
        }
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> EmbedError {
    EmbedError::CorruptFile {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Writes magic, a JSON header line, then rows as little-endian `f32`.
pub fn store_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<(), EmbedError> {
    let header = Header {
        dim: m.dim,
        count: m.len(),
        normalized: m.normalized,
        provenance: m.provenance.clone(),
        row_keys: m.row_keys.iter().map(|k| format!("{k:016x}")).collect(),
    };
    let file = File::create(path).map_err(|e| EmbedError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| w.write_all(bytes).map_err(|e| EmbedError::io(path, e));
    write(&mut w, &MAGIC)?;
    let json = serde_json::to_vec(&header).expect("header serializes");
    write(&mut w, &json)?;
    write(&mut w, b"\n")?;
    for x in &m.data {
        write(&mut w, &x.to_le_bytes())?;
    }
    w.flush().map_err(|e| EmbedError::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let file = File::open(path).map_err(|e| EmbedError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic).map_err(|_| corrupt(path, "file shorter than magic"))?;
    if magic != MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line).map_err(|e| EmbedError::io(path, e))?;
    if line.last() != Some(&b'\n') {
        return Err(corrupt(path, "unterminated header"));
    }
    let header: Header =
        serde_json::from_slice(&line[..line.len() - 1]).map_err(|e| corrupt(path, format!("header: {e}")))?;
    if header.row_keys.len() != header.count || header.dim == 0 {
        return Err(corrupt(path, "header counts inconsistent"));
    }
    let row_keys = header
        .row_keys
        .iter()
        .map(|k| u64::from_str_radix(k, 16))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| corrupt(path, format!("row key: {e}")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| EmbedError::io(path, e))?;
    let expected = header.dim * header.count * 4;
    if bytes.len() != expected {
        return Err(corrupt(path, format!("payload is {} bytes, expected {expected}", bytes.len())));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    EmbeddingMatrix::new(header.dim, data, row_keys, header.normalized, header.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            3,
            vec![1.0, 2.0, 3.0, -0.5, 0.25, f32::MIN_POSITIVE],
            vec![content_key("a"), content_key("b")],
            false,
            Provenance {
                provider: "test".into(),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn store_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        let m = sample();
        store_embeddings(&m, &path).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), m);
    }

    #[test]
    fn file_size_is_magic_header_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        let m = sample();
        store_embeddings(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = bytes[16..].iter().position(|&b| b == b'\n').unwrap() + 1;
        assert_eq!(bytes.len(), 16 + header_len + 4 * 3 * 2);
    }

    #[test]
    fn truncated_or_mislabelled_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        store_embeddings(&sample(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_embeddings(&path), Err(EmbedError::CorruptFile { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_embeddings(&path), Err(EmbedError::CorruptFile { .. })));
    }

    #[test]
    fn normalize_sets_unit_rows() {
        let mut m = sample();
        assert!(!m.rows_are_unit());
        m.normalize();
        assert!(m.is_normalized() && m.rows_are_unit());
    }

    #[test]
    fn shape_checks() {
        assert!(EmbeddingMatrix::new(2, vec![1.0; 3], vec![1], false, Provenance::default()).is_err());
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![1.0; 4], vec![1], false, Provenance::default()),
            Err(EmbedError::RowKeyMismatch { .. })
        ));
    }
}
