//! Independent reference implementations used as test oracles. They are
//! written from the textbook definitions with plain loops and deliberately
//! share no code with the library.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashSet;

use synth_eval::rng::SplitMix64;
use synth_eval::{EmbeddingBatch, EmbeddingItem, Mask2D, Modality, Slice2D};

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s / a.len() as f64
}

pub fn psnr(a: &[f64], b: &[f64], l: f64) -> f64 {
    let m = mse(a, b);
    if m == 0.0 {
        f64::INFINITY
    } else {
        20.0 * l.log10() - 10.0 * m.log10()
    }
}

/// Whole-image SSIM from raw power sums with N - 1 normalization.
pub fn ssim_global(a: &[f64], b: &[f64], l: f64) -> f64 {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sa += a[i];
        sb += b[i];
    }
    let (ma, mb) = (sa / n, sb / n);
    for i in 0..a.len() {
        saa += (a[i] - ma).powi(2);
        sbb += (b[i] - mb).powi(2);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    let d = if a.len() > 1 { n - 1.0 } else { 1.0 };
    let (va, vb, cab) = (saa / d, sbb / d, sab / d);
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    let cs = (2.0 * cab + c2) / (va + vb + c2);
    lum * cs
}

/// Mean SSIM over all fully contained windows with 2-D Gaussian weights
/// `exp(-(dr² + dc²) / 2σ²)` normalized to sum 1.
pub fn ssim_windowed(a: &Slice2D, b: &Slice2D, win: usize, sigma: f64, l: f64) -> f64 {
    let (h, w) = a.dims();
    let c = (win as f64 - 1.0) / 2.0;
    let mut wts = vec![0.0; win * win];
    let mut tot = 0.0;
    for i in 0..win {
        for j in 0..win {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            wts[i * win + j] = (-r2 / (2.0 * sigma * sigma)).exp();
            tot += wts[i * win + j];
        }
    }
    for x in &mut wts {
        *x /= tot;
    }
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let mut acc = 0.0;
    let mut cnt = 0.0;
    for r0 in 0..=h - win {
        for c0 in 0..=w - win {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    ma += wts[i * win + j] * a.get(r0 + i, c0 + j);
                    mb += wts[i * win + j] * b.get(r0 + i, c0 + j);
                }
            }
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let x = a.get(r0 + i, c0 + j) - ma;
                    let y = b.get(r0 + i, c0 + j) - mb;
                    va += wts[i * win + j] * x * x;
                    vb += wts[i * win + j] * y * y;
                    cab += wts[i * win + j] * x * y;
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            cnt += 1.0;
        }
    }
    acc / cnt
}

/// Dice via explicit coordinate sets.
pub fn dice(p: &Mask2D, g: &Mask2D) -> Option<f64> {
    let (h, w) = p.dims();
    let mut sp = HashSet::new();
    let mut sg = HashSet::new();
    for r in 0..h {
        for c in 0..w {
            if p.get(r, c) {
                sp.insert((r, c));
            }
            if g.get(r, c) {
                sg.insert((r, c));
            }
        }
    }
    if sp.is_empty() && sg.is_empty() {
        return None;
    }
    Some(2.0 * sp.intersection(&sg).count() as f64 / (sp.len() + sg.len()) as f64)
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let mut ok = 0;
    for i in 0..truth.len() {
        if truth[i] == pred[i] {
            ok += 1;
        }
    }
    ok as f64 / truth.len() as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Naive supervised InfoNCE: for each anchor, the mean over its positives of
/// `-ln(exp(s_ip) / Σ_{a≠i} exp(s_ia))`, summed over anchors.
pub fn infonce(items: &[EmbeddingItem], tau: f64, normalize: bool) -> f64 {
    let z: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            let n: f64 = if normalize {
                it.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
            } else {
                1.0
            };
            it.vector.iter().map(|x| x / n).collect()
        })
        .collect();
    let sim = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for d in 0..z[i].len() {
            s += z[i][d] * z[j][d];
        }
        s / tau
    };
    let mut total = 0.0;
    for i in 0..items.len() {
        let mut denom = 0.0;
        for a in 0..items.len() {
            if a != i {
                denom += sim(i, a).exp();
            }
        }
        let mut terms = 0.0;
        let mut np = 0;
        for p in 0..items.len() {
            let pos = p != i
                && items[p].subject_id == items[i].subject_id
                && items[p].slice_index == items[i].slice_index
                && items[p].modality != items[i].modality;
            if pos {
                terms += -(sim(i, p).exp() / denom).ln();
                np += 1;
            }
        }
        total += terms / np as f64;
    }
    total
}

/// Central differences at every coordinate.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let o = p[i];
            p[i] = o + h;
            let up = f(&p);
            p[i] = o - h;
            let dn = f(&p);
            p[i] = o;
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, 0 when both are negligible.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let mut d = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for i in 0..a.len() {
        d += (a[i] - n[i]).powi(2);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    let s = na.sqrt().max(nn.sqrt());
    if s < 1e-8 {
        0.0
    } else {
        d.sqrt() / s
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }
}

pub fn random_slice(rng: &mut SplitMix64, h: usize, w: usize) -> Slice2D {
    Slice2D::new(h, w, (0..h * w).map(|_| rng.next_f64()).collect()).unwrap()
}

pub fn random_mask(rng: &mut SplitMix64, h: usize, w: usize, p: f64) -> Mask2D {
    Mask2D::new(h, w, (0..h * w).map(|_| (rng.next_f64() < p) as u8).collect(), "m").unwrap()
}

pub fn random_vec(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.normal()).collect()
}

/// Batch over `subjects × slices × modalities` with Gaussian vectors.
pub fn random_batch(
    rng: &mut SplitMix64,
    subjects: usize,
    slices: usize,
    mods: &[Modality],
    dim: usize,
) -> EmbeddingBatch {
    let mut items = Vec::new();
    for s in 0..subjects {
        for k in 0..slices {
            for &m in mods {
                items.push(EmbeddingItem::new(format!("s{s}"), k, m, random_vec(rng, dim)));
            }
        }
    }
    EmbeddingBatch::new(dim, items).unwrap()
}
