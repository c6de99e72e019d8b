use serde::Serialize;

use super::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::metrics::dot;
use crate::model::EmbeddingBatch;

/// Principal axes of an embedding batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, by descending variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub requested: usize,
    /// Set when the data had fewer than `requested` non-trivial directions.
    pub rank_deficit: Option<usize>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project_one(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.iter().map(|c| dot(&centered, c)).collect()
    }

    /// Map projected coordinates back to the embedding space.
    pub fn inverse_transform(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(coords) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        out
    }
}

/// Principal components from the (n - 1)-normalized sample covariance.
///
/// Requires `n >= 3` and `1 <= k <= min(D, n - 1)`. Each component's
/// largest-magnitude entry is made positive. Directions whose variance is
/// below `1e-12` of the largest are dropped and reported via `rank_deficit`.
pub fn pca_fit(batch: &EmbeddingBatch, k: usize) -> Result<PcaModel> {
    let n = batch.len();
    let d = batch.dim();
    if n < 3 {
        return Err(Error::Param(format!("PCA needs at least 3 items, got {n}")));
    }
    if k < 1 || k > d.min(n - 1) {
        return Err(Error::Param(format!("k = {k} outside [1, {}]", d.min(n - 1))));
    }
    let mut mean = vec![0.0; d];
    for v in batch.vectors() {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; d * d];
    for v in batch.vectors() {
        let c: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let val = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = val;
            cov[j * d + i] = val;
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let (values, vectors) = symmetric_eigen(&cov, d);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = values.iter().filter(|&&v| v > 1e-12 * top && top > 0.0).count();
    let kept = k.min(rank);

    let components: Vec<Vec<f64>> = vectors
        .into_iter()
        .take(kept)
        .map(|mut c| {
            let pivot = c
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if c[pivot] < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();
    let explained_variance: Vec<f64> = values.iter().take(kept).map(|v| v.max(0.0)).collect();
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { (v / total).min(1.0) } else { 0.0 })
        .collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        requested: k,
        rank_deficit: (kept < k).then_some(kept),
    })
}

/// `(x - mean) · componentsᵀ` for every item, in batch order.
pub fn pca_project(model: &PcaModel, batch: &EmbeddingBatch) -> Result<Vec<Vec<f64>>> {
    if batch.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "batch dim {} vs model dim {}",
            batch.dim(),
            model.dim()
        )));
    }
    Ok(batch.vectors().map(|v| model.project_one(v)).collect())
}
