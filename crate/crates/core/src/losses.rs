//! Encoder and decoder training objectives with analytic gradients.
//!
//! Each loss returns a [`LossValueGrad`] whose gradient has the shape of the
//! differentiable inputs. L1 terms use the subgradient `0` at exact ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::dot;
use crate::model::{EmbeddingBatch, FeatureMapSet, Slice2D};

#[derive(Debug, Clone, PartialEq)]
pub struct LossValueGrad<G> {
    pub value: f64,
    pub grad: G,
}

/// Gradient pair for two-argument losses.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad<T> {
    pub first: T,
    pub second: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// L2-normalize vectors before dot products.
    pub normalize: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.07,
            normalize: true,
        }
    }
}

impl ContrastiveConfig {
    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Param(format!("temperature {} must be > 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderLossConfig {
    pub contrastive: ContrastiveConfig,
    /// Weight of the L1 term in the feature-map loss; 0 leaves plain MSE.
    pub l1_weight: f64,
}

impl Default for EncoderLossConfig {
    fn default() -> Self {
        Self {
            contrastive: ContrastiveConfig::default(),
            l1_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderLossConfig {
    pub w_pixel: f64,
    pub w_semantic: f64,
}

impl Default for DecoderLossConfig {
    fn default() -> Self {
        Self {
            w_pixel: 1.0,
            w_semantic: 1.0,
        }
    }
}

impl DecoderLossConfig {
    fn validate(&self) -> Result<()> {
        if !(self.w_pixel >= 0.0) || !(self.w_semantic >= 0.0) || !(self.w_pixel + self.w_semantic > 0.0) {
            return Err(Error::Param(format!(
                "decoder weights ({}, {}) must be non-negative with a positive sum",
                self.w_pixel, self.w_semantic
            )));
        }
        Ok(())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity and its gradients with respect to both arguments.
fn cosine_with_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vector lengths {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector("zero vector in cosine loss".into()));
    }
    let cos = dot(a, b) / (dot(a, a) * dot(b, b)).sqrt();
    let ga = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - cos * x / (na * na))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(x, y)| x / (na * nb) - cos * y / (nb * nb))
        .collect();
    Ok((cos, ga, gb))
}

/// Negative cosine similarity between two global feature vectors.
pub fn loss_vector(a: &[f64], b: &[f64]) -> Result<LossValueGrad<PairGrad<Vec<f64>>>> {
    let (cos, ga, gb) = cosine_with_grad(a, b)?;
    Ok(LossValueGrad {
        value: -cos,
        grad: PairGrad {
            first: ga.into_iter().map(|g| -g).collect(),
            second: gb.into_iter().map(|g| -g).collect(),
        },
    })
}

/// `Σ_levels [MSE + l1_weight · L1]`, each term a per-level mean.
pub fn loss_featuremap(
    f1: &FeatureMapSet,
    f2: &FeatureMapSet,
    l1_weight: f64,
) -> Result<LossValueGrad<PairGrad<FeatureMapSet>>> {
    f1.check_same_shape(f2)?;
    let mut g1 = f1.zeros_like();
    let mut g2 = f1.zeros_like();
    let mut value = 0.0;
    for (lvl, (a, b)) in f1.levels.iter().zip(&f2.levels).enumerate() {
        let n = a.data.len() as f64;
        let (mut sq, mut abs) = (0.0, 0.0);
        for (i, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
            let d = x - y;
            sq += d * d;
            abs += d.abs();
            let g = (2.0 * d + l1_weight * sign(d)) / n;
            g1.levels[lvl].data[i] = g;
            g2.levels[lvl].data[i] = -g;
        }
        value += sq / n + l1_weight * abs / n;
    }
    Ok(LossValueGrad {
        value,
        grad: PairGrad { first: g1, second: g2 },
    })
}

/// Indices of the positives of each anchor: same subject and slice, other modality.
pub fn positive_sets(batch: &EmbeddingBatch) -> Vec<Vec<usize>> {
    let items = batch.items();
    items
        .iter()
        .enumerate()
        .map(|(i, a)| {
            items
                .iter()
                .enumerate()
                .filter(|&(j, b)| j != i && a.same_slice(b) && a.modality != b.modality)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Supervised contrastive InfoNCE summed over anchors.
///
/// For anchor `i` with positive set `P(i)`, the term is the mean over `p` of
/// `-log softmax_{a != i}(z_i·z_a / τ)[p]`, so every term is non-negative.
/// The gradient is with respect to the raw (pre-normalization) vectors.
pub fn loss_infonce(batch: &EmbeddingBatch, cfg: &ContrastiveConfig) -> Result<LossValueGrad<Vec<Vec<f64>>>> {
    cfg.validate()?;
    let n = batch.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let positives = positive_sets(batch);
    if let Some(i) = positives.iter().position(Vec::is_empty) {
        return Err(Error::NoPositive {
            anchor: batch.items()[i].key(),
        });
    }

    let raw: Vec<&[f64]> = batch.vectors().collect();
    let norms: Vec<f64> = raw.iter().map(|v| norm(v)).collect();
    let z: Vec<Vec<f64>> = if cfg.normalize {
        raw.iter()
            .zip(&norms)
            .map(|(v, &nv)| v.iter().map(|x| x / nv).collect())
            .collect()
    } else {
        raw.iter().map(|v| v.to_vec()).collect()
    };
    let tau = cfg.temperature;
    let mut logits = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s = dot(&z[i], &z[j]) / tau;
            logits[i * n + j] = s;
            logits[j * n + i] = s;
        }
    }

    // coeff[i][j] = dL/ds_ij as seen from anchor i.
    let mut coeff = vec![0.0; n * n];
    let mut value = 0.0;
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        let others = (0..n).filter(move |&a| a != i).map(move |a| row[a]);
        let lse = log_sum_exp(others);
        let p = &positives[i];
        let inv = 1.0 / p.len() as f64;
        value -= inv * p.iter().map(|&j| row[j] - lse).sum::<f64>();
        for a in (0..n).filter(|&a| a != i) {
            coeff[i * n + a] += (row[a] - lse).exp();
        }
        for &j in p {
            coeff[i * n + j] -= inv;
        }
    }

    let dim = batch.dim();
    let mut grad_z = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = (coeff[i * n + j] + coeff[j * n + i]) / tau;
            if c != 0.0 {
                for (g, zj) in grad_z[i].iter_mut().zip(&z[j]) {
                    *g += c * zj;
                }
            }
        }
    }
    let grad = if cfg.normalize {
        grad_z
            .into_iter()
            .zip(&z)
            .zip(&norms)
            .map(|((g, u), &nv)| {
                let proj = dot(&g, u);
                g.iter().zip(u).map(|(gi, ui)| (gi - proj * ui) / nv).collect()
            })
            .collect()
    } else {
        grad_z
    };
    Ok(LossValueGrad { value, grad })
}

/// Gradient of the combined encoder loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub vectors: Vec<Vec<f64>>,
    pub featuremaps: Vec<FeatureMapSet>,
}

/// Breakdown of the encoder loss into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EncoderLossParts {
    pub vector: f64,
    pub featuremap: f64,
    pub infonce: f64,
    pub intra_pairs: usize,
}

/// Unordered pairs `(i, j)`, `i < j`, sharing subject and slice with different modality.
pub fn intra_pairs(batch: &EmbeddingBatch) -> Vec<(usize, usize)> {
    let items = batch.items();
    let mut pairs = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            if items[i].same_slice(&items[j]) && items[i].modality != items[j].modality {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Intra-subject alignment (negative cosine plus feature-map reconstruction
/// over every intra pair) plus inter-subject InfoNCE. `featuremaps[i]`
/// belongs to `batch.items()[i]`.
pub fn loss_encoder_total(
    batch: &EmbeddingBatch,
    featuremaps: &[FeatureMapSet],
    cfg: &EncoderLossConfig,
) -> Result<(LossValueGrad<EncoderGrad>, EncoderLossParts)> {
    if featuremaps.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{} feature map sets for {} embeddings",
            featuremaps.len(),
            batch.len()
        )));
    }
    let nce = loss_infonce(batch, &cfg.contrastive)?;
    let mut vectors = nce.grad;
    let mut maps: Vec<FeatureMapSet> = featuremaps.iter().map(FeatureMapSet::zeros_like).collect();
    let mut parts = EncoderLossParts {
        vector: 0.0,
        featuremap: 0.0,
        infonce: nce.value,
        intra_pairs: 0,
    };
    let items = batch.items();
    for (i, j) in intra_pairs(batch) {
        let lv = loss_vector(&items[i].vector, &items[j].vector)?;
        let lf = loss_featuremap(&featuremaps[i], &featuremaps[j], cfg.l1_weight)?;
        parts.vector += lv.value;
        parts.featuremap += lf.value;
        parts.intra_pairs += 1;
        add_into(&mut vectors[i], &lv.grad.first);
        add_into(&mut vectors[j], &lv.grad.second);
        add_maps(&mut maps[i], &lf.grad.first);
        add_maps(&mut maps[j], &lf.grad.second);
    }
    let value = (parts.vector + parts.featuremap) + parts.infonce;
    Ok((
        LossValueGrad {
            value,
            grad: EncoderGrad {
                vectors,
                featuremaps: maps,
            },
        },
        parts,
    ))
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn add_maps(acc: &mut FeatureMapSet, g: &FeatureMapSet) {
    for (la, lg) in acc.levels.iter_mut().zip(&g.levels) {
        add_into(&mut la.data, &lg.data);
    }
}

/// `MSE + L1` between a synthesized slice and its target; gradient w.r.t. the synthesized slice.
pub fn loss_pixel(synthesized: &Slice2D, target: &Slice2D) -> Result<LossValueGrad<Vec<f64>>> {
    if synthesized.dims() != target.dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", synthesized.dims(), target.dims())));
    }
    let n = synthesized.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    let grad = synthesized
        .data()
        .iter()
        .zip(target.data())
        .map(|(s, t)| {
            let d = s - t;
            sq += d * d;
            abs += d.abs();
            (2.0 * d + sign(d)) / n
        })
        .collect();
    Ok(LossValueGrad {
        value: sq / n + abs / n,
        grad,
    })
}

/// `1 - cos(e_v, e_t)`; the text embedding is a fixed target so only the
/// vision embedding receives a gradient.
pub fn loss_semantic(vision: &[f64], text: &[f64]) -> Result<LossValueGrad<Vec<f64>>> {
    let (cos, gv, _) = cosine_with_grad(vision, text)?;
    Ok(LossValueGrad {
        value: 1.0 - cos,
        grad: gv.into_iter().map(|g| -g).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrad {
    pub synthesized: Vec<f64>,
    pub vision: Vec<f64>,
}

/// `w_pixel · pixel + w_semantic · semantic`.
pub fn loss_decoder_total(
    synthesized: &Slice2D,
    target: &Slice2D,
    vision: &[f64],
    text: &[f64],
    cfg: &DecoderLossConfig,
) -> Result<LossValueGrad<DecoderGrad>> {
    cfg.validate()?;
    let px = loss_pixel(synthesized, target)?;
    let sem = loss_semantic(vision, text)?;
    Ok(LossValueGrad {
        value: cfg.w_pixel * px.value + cfg.w_semantic * sem.value,
        grad: DecoderGrad {
            synthesized: px.grad.iter().map(|g| cfg.w_pixel * g).collect(),
            vision: sem.grad.iter().map(|g| cfg.w_semantic * g).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbeddingItem, FeatureLevel, Modality};

    fn batch(vectors: Vec<(usize, Modality, Vec<f64>)>) -> EmbeddingBatch {
        let dim = vectors[0].2.len();
        EmbeddingBatch::new(
            dim,
            vectors
                .into_iter()
                .map(|(k, m, v)| EmbeddingItem::new("s", k, m, v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vector_loss_extremes() {
        let a = [0.5, -1.0, 2.0];
        let l = loss_vector(&a, &a).unwrap();
        assert!((l.value + 1.0).abs() < 1e-15);
        assert!(l.grad.first.iter().all(|g| g.abs() < 1e-15));
        assert_eq!(loss_vector(&[1.0, 0.0], &[0.0, 3.0]).unwrap().value, 0.0);
        assert!(loss_vector(&a, &[0.0; 3]).is_err());
    }

    #[test]
    fn featuremap_offset() {
        let a = FeatureMapSet::new(vec![FeatureLevel::new([1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap()]);
        let mut b = a.clone();
        b.levels[0].data.iter_mut().for_each(|v| *v += 0.1);
        let l = loss_featuremap(&a, &b, 1.0).unwrap();
        assert!((l.value - 0.11).abs() < 1e-12);
        assert_eq!(loss_featuremap(&a, &a, 1.0).unwrap().value, 0.0);
        let other = FeatureMapSet::new(vec![FeatureLevel::zeros([1, 1, 4])]);
        assert!(matches!(loss_featuremap(&a, &other, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn infonce_identical_triplet_is_three_log_two() {
        let v = vec![0.3, 0.4, -0.2];
        let b = batch(vec![
            (0, Modality::T1, v.clone()),
            (0, Modality::T1c, v.clone()),
            (0, Modality::T2, v),
        ]);
        let l = loss_infonce(&b, &ContrastiveConfig::default()).unwrap();
        assert!((l.value - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infonce_errors() {
        let one = batch(vec![(0, Modality::T1, vec![1.0, 0.0])]);
        assert!(matches!(
            loss_infonce(&one, &ContrastiveConfig::default()),
            Err(Error::BatchTooSmall(1))
        ));
        let lonely = batch(vec![
            (0, Modality::T1, vec![1.0, 0.0]),
            (1, Modality::T2, vec![0.0, 1.0]),
        ]);
        match loss_infonce(&lonely, &ContrastiveConfig::default()) {
            Err(Error::NoPositive { anchor }) => assert_eq!(anchor, "s/0/T1"),
            other => panic!("{other:?}"),
        }
        let pair = batch(vec![
            (0, Modality::T1, vec![1.0, 0.0]),
            (0, Modality::T2, vec![0.0, 1.0]),
        ]);
        let bad = ContrastiveConfig {
            temperature: 0.0,
            normalize: true,
        };
        assert!(matches!(loss_infonce(&pair, &bad), Err(Error::Param(_))));
    }

    #[test]
    fn semantic_and_pixel_examples() {
        let e = [1.0, 2.0, -0.5];
        let neg: Vec<f64> = e.iter().map(|v| -v).collect();
        assert_eq!(loss_semantic(&e, &e).unwrap().value, 0.0);
        assert!((loss_semantic(&e, &neg).unwrap().value - 2.0).abs() < 1e-15);
        assert_eq!(loss_semantic(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, 1.0);

        let gt = Slice2D::from_fn(3, 3, |r, c| (r * 3 + c) as f64 / 10.0).unwrap();
        let syn = gt.map(|v| v + 0.1);
        assert!((loss_pixel(&syn, &gt).unwrap().value - 0.11).abs() < 1e-12);
        assert_eq!(loss_pixel(&gt, &gt).unwrap().value, 0.0);
    }

    #[test]
    fn decoder_weights() {
        let gt = Slice2D::from_fn(2, 2, |r, c| (r + c) as f64 / 4.0).unwrap();
        let syn = gt.map(|v| v * 0.5 + 0.1);
        let (ev, et) = ([1.0, 0.2], [0.3, 1.0]);
        let px = loss_pixel(&syn, &gt).unwrap().value;
        let only_px = loss_decoder_total(
            &syn,
            &gt,
            &ev,
            &et,
            &DecoderLossConfig {
                w_pixel: 1.0,
                w_semantic: 0.0,
            },
        )
        .unwrap();
        assert_eq!(only_px.value, px);
        let zero = loss_decoder_total(&gt, &gt, &ev, &ev, &DecoderLossConfig::default()).unwrap();
        assert_eq!(zero.value, 0.0);
        let bad = DecoderLossConfig {
            w_pixel: 0.0,
            w_semantic: 0.0,
        };
        assert!(loss_decoder_total(&syn, &gt, &ev, &et, &bad).is_err());
    }
}
