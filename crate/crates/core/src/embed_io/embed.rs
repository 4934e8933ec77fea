use std::collections::HashMap;

use super::matrix::{content_key, EmbeddingMatrix, Provenance};
use super::{EmbedError, Provider};

pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Clone, Debug)]
pub struct EmbedOptions {
    pub batch_size: usize,
    /// Batches in flight at once.
    pub window: usize,
    pub layer_cap: Option<usize>,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            window: 4,
            layer_cap: None,
        }
    }
}

/// Embeds `texts` (duplicates are sent once) and returns one unit-norm row
/// per input text, in input order. Rows are keyed by [`content_key`].
pub fn embed_texts(provider: &dyn Provider, texts: &[String], opts: &EmbedOptions) -> Result<EmbeddingMatrix, EmbedError> {
    let mut unique: Vec<&String> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let positions: Vec<usize> = texts
        .iter()
        .map(|t| {
            *slot.entry(t.as_str()).or_insert_with(|| {
                unique.push(t);
                unique.len() - 1
            })
        })
        .collect();

    let batches: Vec<Vec<String>> = unique
        .chunks(opts.batch_size.max(1))
        .map(|c| c.iter().map(|s| s.to_string()).collect())
        .collect();
    let mut responses = Vec::with_capacity(batches.len());
    for window in batches.chunks(opts.window.max(1)) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = window
                .iter()
                .map(|b| s.spawn(move || provider.embed_batch(b, opts.layer_cap)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        for (batch, r) in window.iter().zip(results) {
            let r = r?;
            if r.vectors.len() != batch.len() {
                return Err(EmbedError::BadResponse(format!(
                    "{} vectors for {} texts",
                    r.vectors.len(),
                    batch.len()
                )));
            }
            responses.push(r);
        }
    }

    let dim = match responses.first() {
        Some(r) => r.dim,
        None => provider.info()?.dim,
    };
    let mut unique_rows: Vec<&[f32]> = Vec::with_capacity(unique.len());
    let mut all_normalized = true;
    for r in &responses {
        all_normalized &= r.normalized;
        for v in &r.vectors {
            if r.dim != dim || v.len() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, got: v.len() });
            }
            unique_rows.push(v);
        }
    }
    let mut data = Vec::with_capacity(texts.len() * dim);
    for &p in &positions {
        data.extend_from_slice(unique_rows[p]);
    }
    let keys = texts.iter().map(|t| content_key(t)).collect();
    let provenance = Provenance {
        provider: provider.id(),
        layer_cap: opts.layer_cap,
        ..Default::default()
    };
    let mut m = EmbeddingMatrix::new(dim, data, keys, all_normalized, provenance)?;
    if !m.is_normalized() || !m.rows_are_unit() {
        m.normalize();
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::HashingProvider;

    #[test]
    fn order_and_duplicates_preserved_across_batch_sizes() {
        let p = HashingProvider::new(16);
        let texts: Vec<String> = ["a b", "c", "a b", "d e f", "g"].iter().map(|s| s.to_string()).collect();
        let base = embed_texts(&p, &texts, &EmbedOptions::default()).unwrap();
        assert!(base.rows_are_unit());
        assert_eq!(base.row(0), base.row(2));
        for bs in 1..4 {
            let opts = EmbedOptions {
                batch_size: bs,
                window: 2,
                layer_cap: None,
            };
            assert_eq!(embed_texts(&p, &texts, &opts).unwrap(), base);
        }
    }

    #[test]
    fn empty_input() {
        let m = embed_texts(&HashingProvider::new(8), &[], &EmbedOptions::default()).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.dim(), 8);
    }
}
