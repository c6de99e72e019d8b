//! Seeded image corruptions at graded severities: Gaussian noise, Rician
//! noise, resolution loss and k-space motion.
//!
//! All operators expect slices normalized to `[0, 1]` and clamp their output
//! back into that range.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Slice2D, Volume3D};
use crate::preprocess::{resize_slice, ResizeSpec};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "motion")]
    MotionArtifact,
    #[serde(rename = "downsample")]
    DownSampling,
    #[serde(rename = "gaussian")]
    GaussianNoise,
    #[serde(rename = "rician")]
    RicianNoise,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::MotionArtifact,
        Family::DownSampling,
        Family::GaussianNoise,
        Family::RicianNoise,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Family::MotionArtifact => "motion",
            Family::DownSampling => "downsample",
            Family::GaussianNoise => "gaussian",
            Family::RicianNoise => "rician",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.slug())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.slug() == lower || format!("{f:?}").to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Param(format!("unknown corruption family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Moderate,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Minor, Severity::Moderate, Severity::Severe];

    pub fn slug(self) -> &'static str {
        match self {
            Severity::Minor => "minor",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }

    fn idx(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.slug())
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Severity::ALL
            .into_iter()
            .find(|v| v.slug() == lower)
            .ok_or_else(|| Error::Param(format!("unknown severity {s:?}")))
    }
}

/// Resolved family parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CorruptionParams {
    Motion {
        line_fraction: f64,
        max_shift_px: f64,
    },
    #[serde(rename = "downsample")]
    DownSampling {
        factor: usize,
    },
    Gaussian {
        sigma: f64,
    },
    Rician {
        sigma: f64,
    },
}

impl CorruptionParams {
    pub fn family(&self) -> Family {
        match self {
            CorruptionParams::Motion { .. } => Family::MotionArtifact,
            CorruptionParams::DownSampling { .. } => Family::DownSampling,
            CorruptionParams::Gaussian { .. } => Family::GaussianNoise,
            CorruptionParams::Rician { .. } => Family::RicianNoise,
        }
    }

    /// Accepted ranges: σ ∈ [0, 1]; factor ≥ 1 (the upper bound depends on
    /// the slice); line fraction ∈ [0, 1); shift ∈ [0, 64] px.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        match *self {
            CorruptionParams::Gaussian { sigma } | CorruptionParams::Rician { sigma } => {
                if !(0.0..=1.0).contains(&sigma) {
                    return bad(format!("sigma {sigma} outside [0, 1]"));
                }
            }
            CorruptionParams::DownSampling { factor } => {
                if factor < 1 {
                    return bad("down-sampling factor must be >= 1".into());
                }
            }
            CorruptionParams::Motion {
                line_fraction,
                max_shift_px,
            } => {
                if !(0.0..1.0).contains(&line_fraction) {
                    return bad(format!("line fraction {line_fraction} outside [0, 1)"));
                }
                if !(0.0..=64.0).contains(&max_shift_px) {
                    return bad(format!("max shift {max_shift_px} outside [0, 64]"));
                }
            }
        }
        Ok(())
    }

    /// Apply a `key=value` override (`sigma`, `factor`, `line_fraction`, `max_shift_px`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Param(format!("{key}={value}: not a number")))
        };
        match (self, key) {
            (CorruptionParams::Gaussian { sigma } | CorruptionParams::Rician { sigma }, "sigma") => *sigma = num()?,
            (CorruptionParams::DownSampling { factor }, "factor") => {
                *factor = value
                    .parse()
                    .map_err(|_| Error::Param(format!("factor={value}: not a positive integer")))?
            }
            (CorruptionParams::Motion { line_fraction, .. }, "line_fraction") => *line_fraction = num()?,
            (CorruptionParams::Motion { max_shift_px, .. }, "max_shift_px") => *max_shift_px = num()?,
            (p, _) => {
                return Err(Error::Param(format!(
                    "parameter {key:?} does not apply to {}",
                    p.family()
                )))
            }
        }
        Ok(())
    }
}

/// Default parameters per family and severity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityTable {
    pub gaussian_sigma: [f64; 3],
    pub rician_sigma: [f64; 3],
    pub downsample_factor: [usize; 3],
    pub motion_line_fraction: [f64; 3],
    pub motion_max_shift_px: [f64; 3],
}

impl Default for SeverityTable {
    fn default() -> Self {
        Self {
            gaussian_sigma: [0.035, 0.10, 0.19],
            rician_sigma: [0.03, 0.10, 0.22],
            downsample_factor: [2, 4, 8],
            motion_line_fraction: [0.05, 0.15, 0.30],
            motion_max_shift_px: [1.0, 3.0, 6.0],
        }
    }
}

impl SeverityTable {
    pub fn params(&self, family: Family, severity: Severity) -> CorruptionParams {
        let i = severity.idx();
        match family {
            Family::GaussianNoise => CorruptionParams::Gaussian {
                sigma: self.gaussian_sigma[i],
            },
            Family::RicianNoise => CorruptionParams::Rician {
                sigma: self.rician_sigma[i],
            },
            Family::DownSampling => CorruptionParams::DownSampling {
                factor: self.downsample_factor[i],
            },
            Family::MotionArtifact => CorruptionParams::Motion {
                line_fraction: self.motion_line_fraction[i],
                max_shift_px: self.motion_max_shift_px[i],
            },
        }
    }

    /// Table rows must be strictly positive (σ > 0, factor ≥ 2, fraction in (0, 1)).
    pub fn validate(&self) -> Result<()> {
        let ok = self
            .gaussian_sigma
            .iter()
            .chain(&self.rician_sigma)
            .all(|&s| s > 0.0 && s <= 1.0)
            && self.downsample_factor.iter().all(|&f| f >= 2)
            && self.motion_line_fraction.iter().all(|&f| f > 0.0 && f < 1.0)
            && self.motion_max_shift_px.iter().all(|&s| (0.0..=64.0).contains(&s));
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid severity table {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub family: Family,
    pub severity: Severity,
    /// Replaces the severity default when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CorruptionParams>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(family: Family, severity: Severity, seed: u64) -> Self {
        Self {
            family,
            severity,
            params: None,
            seed,
        }
    }

    pub fn with_params(mut self, params: CorruptionParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn resolve(&self, table: &SeverityTable) -> Result<CorruptionParams> {
        let params = self.params.unwrap_or_else(|| table.params(self.family, self.severity));
        if params.family() != self.family {
            return Err(Error::Param(format!(
                "{} parameters given for family {}",
                params.family(),
                self.family
            )));
        }
        params.validate()?;
        Ok(params)
    }
}

/// What a corruption actually did, for manifests and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedCorruption {
    pub family: Family,
    pub severity: Severity,
    pub params: CorruptionParams,
    pub seed: u64,
}

fn check_unit_sigma(sigma: f64) -> Result<()> {
    CorruptionParams::Gaussian { sigma }.validate()
}

/// Additive i.i.d. `N(0, σ²)` noise.
pub fn corrupt_gaussian(s: &Slice2D, sigma: f64, seed: u64) -> Result<Slice2D> {
    check_unit_sigma(sigma)?;
    let mut rng = SplitMix64::new(seed);
    let data = s
        .data()
        .iter()
        .map(|&v| (v + sigma * rng.normal()).clamp(0.0, 1.0))
        .collect();
    s.with_data(data)
}

/// Magnitude of the signal plus complex Gaussian noise, `|s + n_re + i n_im|`.
pub fn corrupt_rician(s: &Slice2D, sigma: f64, seed: u64) -> Result<Slice2D> {
    check_unit_sigma(sigma)?;
    let mut rng = SplitMix64::new(seed);
    let data = s
        .data()
        .iter()
        .map(|&v| {
            let re = v + sigma * rng.normal();
            let im = sigma * rng.normal();
            re.hypot(im).clamp(0.0, 1.0)
        })
        .collect();
    s.with_data(data)
}

/// Bilinear decimation by `factor` followed by bilinear upsampling back to
/// the original size. `factor` may be at most `min(h, w) / 4`.
pub fn corrupt_downsample(s: &Slice2D, factor: usize) -> Result<Slice2D> {
    let (h, w) = s.dims();
    if factor == 0 || factor > h.min(w) / 4 {
        return Err(Error::Param(format!(
            "down-sampling factor {factor} must lie in [1, {}] for a {h}x{w} slice",
            h.min(w) / 4
        )));
    }
    if factor == 1 {
        return Ok(s.clone());
    }
    let small = resize_slice(
        s,
        &ResizeSpec {
            target_dims: (h / factor, w / factor),
            ..ResizeSpec::default()
        },
    )?;
    let back = resize_slice(
        &small,
        &ResizeSpec {
            target_dims: (h, w),
            ..ResizeSpec::default()
        },
    )?;
    s.with_data(back.data().iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionEvent {
    pub row: usize,
    pub shift_x: f64,
    pub shift_y: f64,
}

/// Motion corruption before clamping, together with the replaced k-space rows.
pub fn motion_unclamped(
    s: &Slice2D,
    line_fraction: f64,
    max_shift_px: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<MotionEvent>)> {
    CorruptionParams::Motion {
        line_fraction,
        max_shift_px,
    }
    .validate()?;
    let (h, w) = s.dims();
    let n_lines = ((line_fraction * h as f64).floor() as usize).min(h.saturating_sub(1));
    if n_lines == 0 || max_shift_px == 0.0 {
        return Ok((s.data().to_vec(), Vec::new()));
    }

    let mut rng = SplitMix64::new(seed);
    let candidates: Vec<usize> = (1..h).collect();
    let mut rows = rng.sample_distinct(&candidates, n_lines);
    rows.sort_unstable();
    let events: Vec<MotionEvent> = rows
        .into_iter()
        .map(|row| MotionEvent {
            row,
            shift_x: rng.uniform(-max_shift_px, max_shift_px),
            shift_y: rng.uniform(-max_shift_px, max_shift_px),
        })
        .collect();

    let mut k: Vec<Complex64> = s.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut k, h, w, false);
    let tau = std::f64::consts::TAU;
    for e in &events {
        let fy = signed_freq(e.row, h) / h as f64;
        for kx in 0..w {
            let fx = signed_freq(kx, w) / w as f64;
            let phase = -tau * (fx * e.shift_x + fy * e.shift_y);
            k[e.row * w + kx] *= Complex64::from_polar(1.0, phase);
        }
    }
    fft2(&mut k, h, w, true);
    let scale = 1.0 / (h * w) as f64;
    Ok((k.iter().map(|c| c.re * scale).collect(), events))
}

/// Replaces `⌊line_fraction · h⌋` randomly chosen phase-encode rows (never
/// the DC row) with the k-space rows of a translated copy of the slice, one
/// uniform shift in `[-max_shift, max_shift]²` per row.
pub fn corrupt_motion(s: &Slice2D, line_fraction: f64, max_shift_px: f64, seed: u64) -> Result<Slice2D> {
    let (data, _) = motion_unclamped(s, line_fraction, max_shift_px, seed)?;
    s.with_data(data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// In-place unnormalized 2-D DFT of a row-major `h × w` array.
pub fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row_fft.process(data);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

pub fn apply_params(params: &CorruptionParams, s: &Slice2D, seed: u64) -> Result<Slice2D> {
    params.validate()?;
    match *params {
        CorruptionParams::Gaussian { sigma } => corrupt_gaussian(s, sigma, seed),
        CorruptionParams::Rician { sigma } => corrupt_rician(s, sigma, seed),
        CorruptionParams::DownSampling { factor } => corrupt_downsample(s, factor),
        CorruptionParams::Motion {
            line_fraction,
            max_shift_px,
        } => corrupt_motion(s, line_fraction, max_shift_px, seed),
    }
}

/// Corrupt one slice with the default severity table.
pub fn apply(spec: &CorruptionSpec, s: &Slice2D) -> Result<(Slice2D, ResolvedCorruption)> {
    apply_with_table(spec, &SeverityTable::default(), s)
}

pub fn apply_with_table(
    spec: &CorruptionSpec,
    table: &SeverityTable,
    s: &Slice2D,
) -> Result<(Slice2D, ResolvedCorruption)> {
    let params = spec.resolve(table)?;
    let out = apply_params(&params, s, spec.seed)?;
    Ok((
        out,
        ResolvedCorruption {
            family: spec.family,
            severity: spec.severity,
            params,
            seed: spec.seed,
        },
    ))
}

/// Corrupt every axial slice; slice `z` uses seed `derive_seed(spec.seed, z)`.
/// The volume must already be normalized to `[0, 1]`.
pub fn corrupt_volume(
    spec: &CorruptionSpec,
    table: &SeverityTable,
    v: &Volume3D,
) -> Result<(Volume3D, ResolvedCorruption)> {
    let params = spec.resolve(table)?;
    let slices = v
        .slices()
        .par_iter()
        .map(|s| apply_params(&params, s, derive_seed(spec.seed, s.slice_index as u64)))
        .collect::<Result<Vec<_>>>()?;
    let out = Volume3D::from_slices(&slices, v.spacing(), v.modality, v.subject_id.clone())?;
    Ok((
        out,
        ResolvedCorruption {
            family: spec.family,
            severity: spec.severity,
            params,
            seed: spec.seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{psnr, MetricContext};

    fn textured(h: usize, w: usize) -> Slice2D {
        Slice2D::from_fn(h, w, |r, c| {
            let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
            0.5 + 0.2 * (6.0 * x).sin() * (4.0 * y).cos() + if (r / 8 + c / 8) % 2 == 0 { 0.1 } else { -0.1 }
        })
        .unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let s = textured(32, 32);
        assert_eq!(corrupt_gaussian(&s, 0.0, 1).unwrap(), s);
        assert_eq!(corrupt_rician(&s, 0.0, 1).unwrap(), s);
        assert_eq!(corrupt_downsample(&s, 1).unwrap(), s);
        for (fraction, shift) in [(0.0, 5.0), (0.3, 0.0)] {
            let m = corrupt_motion(&s, fraction, shift, 9).unwrap();
            let err = m
                .data()
                .iter()
                .zip(s.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6);
        }
    }

    #[test]
    fn fft_round_trip() {
        let s = textured(12, 20);
        let mut k: Vec<Complex64> = s.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut k, 12, 20, false);
        assert!((k[0].re - s.data().iter().sum::<f64>()).abs() < 1e-9);
        fft2(&mut k, 12, 20, true);
        for (c, v) in k.iter().zip(s.data()) {
            assert!((c.re / 240.0 - v).abs() < 1e-12);
        }
    }

    #[test]
    fn motion_keeps_dc_and_touches_requested_rows() {
        let s = textured(64, 48);
        let (raw, events) = motion_unclamped(&s, 0.30, 6.0, 4).unwrap();
        assert_eq!(events.len(), 19);
        assert!(events
            .iter()
            .all(|e| e.row != 0 && e.shift_x.abs() <= 6.0 && e.shift_y.abs() <= 6.0));
        let mean_in = s.mean();
        let mean_out = raw.iter().sum::<f64>() / raw.len() as f64;
        assert!((mean_in - mean_out).abs() < 1e-12);
        let clamped = corrupt_motion(&s, 0.30, 6.0, 4).unwrap();
        assert!((clamped.mean() - mean_in).abs() < 1e-4);
        assert_ne!(clamped, s);
    }

    #[test]
    fn downsample_limits() {
        let s = textured(32, 32);
        assert!(corrupt_downsample(&s, 8).is_ok());
        assert!(matches!(corrupt_downsample(&s, 9), Err(Error::Param(_))));
        assert!(matches!(corrupt_downsample(&s, 0), Err(Error::Param(_))));
        let c = Slice2D::filled(32, 32, 0.4).unwrap();
        assert_eq!(corrupt_downsample(&c, 4).unwrap(), c);
    }

    #[test]
    fn gaussian_psnr_at_mid_gray() {
        let s = Slice2D::filled(224, 224, 0.5).unwrap();
        let noisy = corrupt_gaussian(&s, 0.10, 11).unwrap();
        let p = psnr(&s, &noisy, &MetricContext::default()).unwrap();
        assert!((p - 20.0).abs() < 0.3, "{p}");
    }

    #[test]
    fn apply_is_deterministic_and_records_params() {
        let s = textured(32, 32);
        let spec = CorruptionSpec::new(Family::GaussianNoise, Severity::Minor, 7);
        let (a, ra) = apply(&spec, &s).unwrap();
        let (b, _) = apply(&spec, &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.params, CorruptionParams::Gaussian { sigma: 0.035 });

        let c = Slice2D::filled(32, 32, 0.5).unwrap();
        for family in [Family::GaussianNoise, Family::RicianNoise] {
            let (out, _) = apply(&CorruptionSpec::new(family, Severity::Minor, 3), &c).unwrap();
            let (lo, hi) = out.min_max();
            assert!(hi > lo);
        }

        let wrong = CorruptionSpec::new(Family::GaussianNoise, Severity::Minor, 7)
            .with_params(CorruptionParams::DownSampling { factor: 2 });
        assert!(apply(&wrong, &s).is_err());
    }

    #[test]
    fn overrides_parse() {
        let mut p = SeverityTable::default().params(Family::MotionArtifact, Severity::Severe);
        p.set("max_shift_px", "2.5").unwrap();
        assert_eq!(
            p,
            CorruptionParams::Motion {
                line_fraction: 0.30,
                max_shift_px: 2.5
            }
        );
        assert!(p.set("sigma", "0.1").is_err());
        assert_eq!("Rician".parse::<Family>().unwrap(), Family::RicianNoise);
        assert_eq!("gaussiannoise".parse::<Family>().unwrap(), Family::GaussianNoise);
        assert!(SeverityTable::default().validate().is_ok());
    }
}
