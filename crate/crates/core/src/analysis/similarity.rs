use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::cosine_similarity;
use crate::model::{EmbeddingBatch, Modality};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalityPairMean {
    pub first: Modality,
    pub second: Modality,
    pub mean: f64,
    pub count: usize,
}

/// Mean raw cosine similarities over an embedding batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilaritySummary {
    /// Same subject and slice, one entry per unordered modality pair that occurs.
    pub pairs: Vec<ModalityPairMean>,
    /// Modality pairs present in the batch that never co-occur on one slice.
    pub missing_pairs: Vec<(Modality, Modality)>,
    /// All pairs sharing subject and slice.
    pub intra_slice_mean: Option<f64>,
    pub intra_slice_count: usize,
    /// All pairs that differ in subject or slice.
    pub inter_slice_mean: Option<f64>,
    pub inter_slice_count: usize,
}

pub fn similarity_summary(batch: &EmbeddingBatch) -> Result<SimilaritySummary> {
    let modalities = batch.modalities();
    if modalities.len() < 2 {
        return Err(Error::Param(format!(
            "similarity summary needs at least two modalities, found {}",
            modalities.len()
        )));
    }
    let n_mod = Modality::ALL.len();
    let mut pair_sum = vec![0.0; n_mod * n_mod];
    let mut pair_count = vec![0usize; n_mod * n_mod];
    let (mut intra, mut intra_n, mut inter, mut inter_n) = (0.0, 0usize, 0.0, 0usize);

    let items = batch.items();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let (a, b) = (&items[i], &items[j]);
            let c = cosine_similarity(&a.vector, &b.vector)?;
            if a.same_slice(b) {
                intra += c;
                intra_n += 1;
                let (lo, hi) = if a.modality <= b.modality {
                    (a.modality, b.modality)
                } else {
                    (b.modality, a.modality)
                };
                let slot = lo.ordinal() * n_mod + hi.ordinal();
                pair_sum[slot] += c;
                pair_count[slot] += 1;
            } else {
                inter += c;
                inter_n += 1;
            }
        }
    }

    let mut pairs = Vec::new();
    let mut missing_pairs = Vec::new();
    for (x, &a) in modalities.iter().enumerate() {
        for &b in &modalities[x + 1..] {
            let slot = a.ordinal() * n_mod + b.ordinal();
            if pair_count[slot] == 0 {
                missing_pairs.push((a, b));
            } else {
                pairs.push(ModalityPairMean {
                    first: a,
                    second: b,
                    mean: pair_sum[slot] / pair_count[slot] as f64,
                    count: pair_count[slot],
                });
            }
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok(SimilaritySummary {
        pairs,
        missing_pairs,
        intra_slice_mean: mean(intra, intra_n),
        intra_slice_count: intra_n,
        inter_slice_mean: mean(inter, inter_n),
        inter_slice_count: inter_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EmbeddingItem;

    #[test]
    fn orthogonal_modalities_average_zero() {
        let mut items = Vec::new();
        for k in 0..3 {
            for (m, axis) in [(Modality::T1, 0), (Modality::T1c, 1), (Modality::T2, 2)] {
                let mut v = vec![0.0; 3];
                v[axis] = 1.0 + k as f64;
                items.push(EmbeddingItem::new("s", k, m, v));
            }
        }
        let s = similarity_summary(&EmbeddingBatch::new(3, items).unwrap()).unwrap();
        assert_eq!(s.pairs.len(), 3);
        assert!(s.pairs.iter().all(|p| p.mean == 0.0 && p.count == 3));
        assert!(s.missing_pairs.is_empty());
        assert_eq!(s.intra_slice_count, 9);
    }

    #[test]
    fn missing_pair_is_flagged() {
        let items = vec![
            EmbeddingItem::new("s", 0, Modality::T1, vec![1.0, 0.0]),
            EmbeddingItem::new("s", 1, Modality::T2, vec![1.0, 1.0]),
        ];
        let s = similarity_summary(&EmbeddingBatch::new(2, items).unwrap()).unwrap();
        assert!(s.pairs.is_empty());
        assert_eq!(s.missing_pairs, vec![(Modality::T1, Modality::T2)]);
        assert_eq!(s.intra_slice_mean, None);
    }

    #[test]
    fn single_modality_is_rejected() {
        let items = vec![
            EmbeddingItem::new("s", 0, Modality::T1, vec![1.0, 0.0]),
            EmbeddingItem::new("s", 1, Modality::T1, vec![1.0, 1.0]),
        ];
        assert!(similarity_summary(&EmbeddingBatch::new(2, items).unwrap()).is_err());
    }
}
