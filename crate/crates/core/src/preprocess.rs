//! Isotropic resampling, per-slice resizing and min-max normalization.
//!
//! Both interpolators use the cell-centred convention: output sample `j`
//! reads the source at `(j + 0.5) * scale - 0.5`, where `scale` is
//! `target_spacing / source_spacing` for resampling and `in_dim / out_dim`
//! for resizing. Source coordinates outside `[0, n - 1]` are clamped to the
//! edge. Output dimensions round half up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Slice2D, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VolumeInterpolation {
    #[default]
    Trilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SliceInterpolation {
    #[default]
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub target_spacing: [f64; 3],
    #[serde(default)]
    pub interpolation: VolumeInterpolation,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            target_spacing: [1.0, 1.0, 1.0],
            interpolation: VolumeInterpolation::Trilinear,
        }
    }
}

/// Slices are stretched to `target_dims` without preserving aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeSpec {
    pub target_dims: (usize, usize),
    #[serde(default)]
    pub interpolation: SliceInterpolation,
}

impl Default for ResizeSpec {
    fn default() -> Self {
        Self {
            target_dims: (224, 224),
            interpolation: SliceInterpolation::Bilinear,
        }
    }
}

/// `round_half_up(n * from / to)`, at least 1.
pub fn resampled_len(n: usize, from: f64, to: f64) -> usize {
    ((n as f64 * from / to + 0.5).floor() as usize).max(1)
}

/// Index pair and weight for linear interpolation along one axis.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    t: f64,
}

fn taps(n_out: usize, n_in: usize, scale: f64) -> Vec<Tap> {
    let max = (n_in - 1) as f64;
    (0..n_out)
        .map(|j| {
            let src = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            Tap {
                lo,
                hi,
                t: src - lo as f64,
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

pub fn resample(v: &Volume3D, spec: &ResampleSpec) -> Result<Volume3D> {
    let target = spec.target_spacing;
    if target.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Param(format!("target spacing {target:?} must be positive")));
    }
    let dims = v.dims();
    let spacing = v.spacing();
    let out: [usize; 3] = std::array::from_fn(|a| resampled_len(dims[a], spacing[a], target[a]));
    let tx = taps(out[0], dims[0], target[0] / spacing[0]);
    let ty = taps(out[1], dims[1], target[1] / spacing[1]);
    let tz = taps(out[2], dims[2], target[2] / spacing[2]);

    let mut data = Vec::with_capacity(out.iter().product());
    for z in &tz {
        for y in &ty {
            for x in &tx {
                let c = |xi, yi, zi| v.get(xi, yi, zi);
                let c00 = lerp(c(x.lo, y.lo, z.lo), c(x.hi, y.lo, z.lo), x.t);
                let c10 = lerp(c(x.lo, y.hi, z.lo), c(x.hi, y.hi, z.lo), x.t);
                let c01 = lerp(c(x.lo, y.lo, z.hi), c(x.hi, y.lo, z.hi), x.t);
                let c11 = lerp(c(x.lo, y.hi, z.hi), c(x.hi, y.hi, z.hi), x.t);
                data.push(lerp(lerp(c00, c10, y.t), lerp(c01, c11, y.t), z.t));
            }
        }
    }
    let mut res = Volume3D::new(out, target, data, v.modality, v.subject_id.clone())?;
    res.set_intensity_range(clamp_range(res.intensity_range(), v.intensity_range()));
    Ok(res)
}

// Interpolation is convex, so the declared range of the input still bounds the output.
fn clamp_range(actual: (f64, f64), parent: (f64, f64)) -> (f64, f64) {
    (actual.0.min(parent.0), actual.1.max(parent.1))
}

pub fn resize_slice(s: &Slice2D, spec: &ResizeSpec) -> Result<Slice2D> {
    let (oh, ow) = spec.target_dims;
    if oh == 0 || ow == 0 {
        return Err(Error::Param(format!(
            "target dims {:?} must be positive",
            spec.target_dims
        )));
    }
    let (h, w) = s.dims();
    if (oh, ow) == (h, w) {
        return Ok(s.clone());
    }
    let tr = taps(oh, h, h as f64 / oh as f64);
    let tc = taps(ow, w, w as f64 / ow as f64);
    let mut data = Vec::with_capacity(oh * ow);
    for r in &tr {
        for c in &tc {
            let top = lerp(s.get(r.lo, c.lo), s.get(r.lo, c.hi), c.t);
            let bottom = lerp(s.get(r.hi, c.lo), s.get(r.hi, c.hi), c.t);
            data.push(lerp(top, bottom, r.t));
        }
    }
    Slice2D::new(oh, ow, data).map(|out| out.with_meta(s.slice_index, s.modality, s.subject_id.clone()))
}

/// Min-max normalization to `[0, 1]`.
pub trait Normalize: Sized {
    fn normalize(&self) -> Result<Self>;
}

fn normalize_values(data: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Err(Error::DegenerateIntensity(lo));
    }
    let span = hi - lo;
    Ok(data.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect())
}

impl Normalize for Slice2D {
    fn normalize(&self) -> Result<Self> {
        self.with_data(normalize_values(self.data())?)
    }
}

impl Normalize for Volume3D {
    fn normalize(&self) -> Result<Self> {
        let mut out = self.with_data(normalize_values(self.data())?)?;
        out.set_intensity_range((0.0, 1.0));
        Ok(out)
    }
}

/// Resample to isotropic spacing, normalize the whole volume, then resize each
/// axial slice. Slices keep the volume-wide normalization.
pub fn preprocess_volume(v: &Volume3D, resample_spec: &ResampleSpec, resize: &ResizeSpec) -> Result<Vec<Slice2D>> {
    let iso = resample(v, resample_spec)?.normalize()?;
    iso.slices().iter().map(|s| resize_slice(s, resize)).collect()
}
