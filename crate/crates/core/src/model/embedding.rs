use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Modality;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingItem {
    pub subject_id: String,
    pub slice_index: usize,
    pub modality: Modality,
    pub vector: Vec<f64>,
}

impl EmbeddingItem {
    pub fn new(subject_id: impl Into<String>, slice_index: usize, modality: Modality, vector: Vec<f64>) -> Self {
        Self {
            subject_id: subject_id.into(),
            slice_index,
            modality,
            vector,
        }
    }

    /// `subject/slice/modality`, used to name items in errors and reports.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.subject_id, self.slice_index, self.modality)
    }

    /// True when both items come from the same subject and slice.
    pub fn same_slice(&self, other: &Self) -> bool {
        self.subject_id == other.subject_id && self.slice_index == other.slice_index
    }
}

/// Validated set of labeled feature vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingBatch {
    dim: usize,
    items: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct RawBatch {
    dim: usize,
    items: Vec<EmbeddingItem>,
}

impl EmbeddingBatch {
    /// Checks vector lengths, rejects all-zero vectors and duplicate
    /// `(subject, slice, modality)` triples. Item order is preserved.
    pub fn new(dim: usize, items: Vec<EmbeddingItem>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::format(0, "embedding dim must be positive"));
        }
        let mut seen = HashSet::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.vector.len() != dim {
                return Err(Error::format(
                    i,
                    format!(
                        "item {i} ({}) has length {}, expected {dim}",
                        item.key(),
                        item.vector.len()
                    ),
                ));
            }
            if item.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(
                    i,
                    format!("item {i} ({}) has non-finite entries", item.key()),
                ));
            }
            if item.vector.iter().all(|&v| v == 0.0) {
                return Err(Error::DegenerateVector(format!(
                    "item {i} ({}) is all zeros",
                    item.key()
                )));
            }
            if !seen.insert((item.subject_id.as_str(), item.slice_index, item.modality)) {
                return Err(Error::DuplicateItem {
                    subject_id: item.subject_id.clone(),
                    slice_index: item.slice_index,
                    modality: item.modality.to_string(),
                });
            }
        }
        Ok(Self { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[EmbeddingItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.items.iter().map(|i| i.vector.as_slice())
    }

    /// Same labels, new vectors (re-validated).
    pub fn with_vectors(&self, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.len() != self.items.len() {
            return Err(Error::Shape(format!(
                "{} vectors for {} items",
                vectors.len(),
                self.items.len()
            )));
        }
        let items = self
            .items
            .iter()
            .zip(vectors)
            .map(|(it, v)| EmbeddingItem {
                vector: v,
                ..it.clone()
            })
            .collect();
        Self::new(self.dim, items)
    }

    /// Distinct modalities present, in canonical order.
    pub fn modalities(&self) -> Vec<Modality> {
        let mut m: Vec<Modality> = self.items.iter().map(|i| i.modality).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawBatch = serde_json::from_str(text)
            .map_err(|e| Error::format(offset_of(text, e.line(), e.column()), e.to_string()))?;
        Self::new(raw.dim, raw.items)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn offset_of(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    line_start + column.saturating_sub(1)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingBatch> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingBatch::from_json(&text)
}

pub fn write_embeddings(batch: &EmbeddingBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = batch.to_json()?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(s: &str, k: usize, m: Modality, v: Vec<f64>) -> EmbeddingItem {
        EmbeddingItem::new(s, k, m, v)
    }

    #[test]
    fn parses_two_items() {
        let text = r#"{"dim": 4, "items": [
            {"subject_id": "a", "slice_index": 0, "modality": "T1", "vector": [1, 0, 0, 0]},
            {"subject_id": "a", "slice_index": 0, "modality": "T2", "vector": [0, 1, 0.5, 0]}
        ]}"#;
        let b = EmbeddingBatch::from_json(text).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.items()[1].modality, Modality::T2);
    }

    #[test]
    fn rejects_length_mismatch() {
        let text = r#"{"dim": 4, "items": [
            {"subject_id": "a", "slice_index": 0, "modality": "T1", "vector": [1, 0, 0]}
        ]}"#;
        assert!(matches!(EmbeddingBatch::from_json(text), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_duplicates_and_zero_vectors() {
        let dup = vec![
            item("a", 1, Modality::T1, vec![1.0, 2.0]),
            item("a", 1, Modality::T1, vec![3.0, 2.0]),
        ];
        assert!(matches!(EmbeddingBatch::new(2, dup), Err(Error::DuplicateItem { .. })));
        let zero = vec![item("a", 1, Modality::T1, vec![0.0, 0.0])];
        assert!(matches!(EmbeddingBatch::new(2, zero), Err(Error::DegenerateVector(_))));
    }

    #[test]
    fn malformed_json_reports_offset() {
        let text = "{\"dim\": 2,\n \"items\": [oops]}";
        match EmbeddingBatch::from_json(text) {
            Err(Error::Format { offset, .. }) => assert!(offset > 10),
            other => panic!("{other:?}"),
        }
    }
}
