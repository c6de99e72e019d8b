//! Image-fidelity, overlap, classification and vector-alignment metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mask2D, Slice2D};

/// How SSIM statistics are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SsimMode {
    /// One evaluation with whole-image means, variances and covariance.
    #[default]
    Global,
    /// Mean over every fully contained Gaussian-weighted window.
    Windowed { window: usize, sigma: f64 },
}

impl SsimMode {
    pub const fn windowed() -> Self {
        SsimMode::Windowed { window: 11, sigma: 1.5 }
    }
}

/// Dynamic range and SSIM stabilizers. `C1 = (k1 L)^2`, `C2 = (k2 L)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricContext {
    pub data_range: f64,
    pub k1: f64,
    pub k2: f64,
    #[serde(default)]
    pub ssim_mode: SsimMode,
}

impl Default for MetricContext {
    fn default() -> Self {
        Self {
            data_range: 1.0,
            k1: 0.01,
            k2: 0.03,
            ssim_mode: SsimMode::Global,
        }
    }
}

impl MetricContext {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.data_range > 0.0) || !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::Param(format!(
                "metric context needs L, k1, k2 > 0 (got {}, {}, {})",
                self.data_range, self.k1, self.k2
            )));
        }
        if let SsimMode::Windowed { window, sigma } = self.ssim_mode {
            if window == 0 || !(sigma > 0.0) {
                return Err(Error::Param(format!("bad ssim window {window} / sigma {sigma}")));
            }
        }
        Ok(())
    }
}

fn same_dims(a: &Slice2D, b: &Slice2D) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Mean squared error over all pixels.
pub fn mse(reference: &Slice2D, synthesized: &Slice2D) -> Result<f64> {
    same_dims(reference, synthesized)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(synthesized.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `10 log10(L^2 / MSE)` in dB; `f64::INFINITY` when the images are identical.
pub fn psnr(reference: &Slice2D, synthesized: &Slice2D, ctx: &MetricContext) -> Result<f64> {
    Ok(psnr_from_mse(mse(reference, synthesized)?, ctx.data_range))
}

pub fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / mse).log10()
    }
}

/// First and second moments of a (weighted) pixel pair.
#[derive(Debug, Clone, Copy)]
struct Moments {
    mu_a: f64,
    mu_b: f64,
    var_a: f64,
    var_b: f64,
    cov: f64,
}

// Evaluated as a single quotient so identical inputs give exactly 1.
fn ssim_formula(m: Moments, c1: f64, c2: f64) -> f64 {
    ((2.0 * m.mu_a * m.mu_b + c1) * (2.0 * m.cov + c2))
        / ((m.mu_a * m.mu_a + m.mu_b * m.mu_b + c1) * (m.var_a + m.var_b + c2))
}

// Same expression for variance and covariance so that ssim(a, a) == 1 bit-exactly.
fn centered_products(a: &[f64], b: &[f64], mu_a: f64, mu_b: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - mu_a) * (y - mu_b)).sum()
}

/// Structural similarity; see [`SsimMode`]. Global mode uses unbiased
/// (N - 1) variances and covariance.
pub fn ssim(reference: &Slice2D, synthesized: &Slice2D, ctx: &MetricContext) -> Result<f64> {
    same_dims(reference, synthesized)?;
    ctx.validate()?;
    let (c1, c2) = (ctx.c1(), ctx.c2());
    match ctx.ssim_mode {
        SsimMode::Global => Ok(global_ssim(reference.data(), synthesized.data(), c1, c2)),
        SsimMode::Windowed { window, sigma } => windowed_ssim(reference, synthesized, window, sigma, c1, c2),
    }
}

fn global_ssim(a: &[f64], b: &[f64], c1: f64, c2: f64) -> f64 {
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let denom = if a.len() > 1 { n - 1.0 } else { 1.0 };
    let m = Moments {
        mu_a,
        mu_b,
        var_a: centered_products(a, a, mu_a, mu_a) / denom,
        var_b: centered_products(b, b, mu_b, mu_b) / denom,
        cov: centered_products(a, b, mu_a, mu_b) / denom,
    };
    ssim_formula(m, c1, c2)
}

/// Normalized separable Gaussian taps of odd or even length `window`.
pub fn gaussian_window(window: usize, sigma: f64) -> Vec<f64> {
    let center = (window as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn windowed_ssim(a: &Slice2D, b: &Slice2D, window: usize, sigma: f64, c1: f64, c2: f64) -> Result<f64> {
    let (h, w) = a.dims();
    if window > h || window > w {
        return Err(Error::Param(format!(
            "ssim window {window} is larger than the {h}x{w} image"
        )));
    }
    let g = gaussian_window(window, sigma);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(h - window) {
        for c0 in 0..=(w - window) {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    let wt = gi * gj;
                    mu_a += wt * a.get(r0 + i, c0 + j);
                    mu_b += wt * b.get(r0 + i, c0 + j);
                }
            }
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    let wt = gi * gj;
                    let da = a.get(r0 + i, c0 + j) - mu_a;
                    let db = b.get(r0 + i, c0 + j) - mu_b;
                    vaa += wt * (da * da);
                    vbb += wt * (db * db);
                    vab += wt * (da * db);
                }
            }
            let m = Moments {
                mu_a,
                mu_b,
                var_a: vaa,
                var_b: vbb,
                cov: vab,
            };
            total += ssim_formula(m, c1, c2);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Dice overlap `2|P ∩ G| / (|P| + |G|)`. Two empty masks give
/// [`Error::UndefinedDice`].
pub fn dice(predicted: &Mask2D, truth: &Mask2D) -> Result<f64> {
    if predicted.dims() != truth.dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", predicted.dims(), truth.dims())));
    }
    let (mut inter, mut total) = (0usize, 0usize);
    for (&p, &g) in predicted.data().iter().zip(truth.data()) {
        inter += (p & g) as usize;
        total += (p + g) as usize;
    }
    if total == 0 {
        return Err(Error::UndefinedDice);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Multi-class outcome folded into the binary counts: correct
    /// predictions as `tp`, wrong ones as `fp`.
    pub fn from_outcomes(correct: u64, wrong: u64) -> Self {
        Self {
            tp: correct,
            fp: wrong,
            ..Self::default()
        }
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::UndefinedAccuracy);
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a·b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vector lengths {} vs {}", a.len(), b.len())));
    }
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb).sqrt()).clamp(-1.0, 1.0))
}
