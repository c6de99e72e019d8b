//! Synthetic multi-contrast phantoms with known ground truth.
//!
//! Geometry: an elliptic "head" cylinder spanning every slice, then up to 15
//! seeded ellipsoidal inner structures, then an optional lesion. Later
//! structures overwrite earlier ones. Each voxel's class picks its per-contrast
//! intensity from the [`TissueTable`]; a smooth seeded multiplicative shading
//! field common to all contrasts is applied and each volume is min-max
//! normalized. The background stays at exactly 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingBatch, EmbeddingItem, Mask2D, Modality, Volume3D};
use crate::preprocess::Normalize;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueClass {
    Background,
    SoftTissue,
    WhiteMatter,
    GrayMatter,
    Fluid,
    Fat,
    Lesion,
}

impl TissueClass {
    const INNER: [TissueClass; 4] = [
        TissueClass::Fluid,
        TissueClass::Fat,
        TissueClass::WhiteMatter,
        TissueClass::GrayMatter,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Mean intensity per class for T1, T1c and T2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueTable {
    pub rows: BTreeMap<TissueClass, [f64; 3]>,
}

impl Default for TissueTable {
    fn default() -> Self {
        use TissueClass::*;
        let rows = [
            (Background, [0.0, 0.0, 0.0]),
            (SoftTissue, [0.55, 0.60, 0.45]),
            (WhiteMatter, [0.70, 0.72, 0.35]),
            (GrayMatter, [0.50, 0.55, 0.60]),
            (Fluid, [0.15, 0.18, 0.90]),
            (Fat, [0.90, 0.90, 0.40]),
            (Lesion, [0.40, 0.95, 0.75]),
        ]
        .into_iter()
        .collect();
        Self { rows }
    }
}

impl TissueTable {
    pub fn intensity(&self, class: TissueClass, modality: Modality) -> f64 {
        let row = self.rows.get(&class).copied().unwrap_or([0.0; 3]);
        match modality {
            Modality::T1 => row[0],
            Modality::T1c => row[1],
            Modality::T2 => row[2],
            _ => 0.0,
        }
    }

    /// Fluid is brighter on T2 than T1, fat brighter on T1 than T2, and the lesion enhances on T1c.
    pub fn validate(&self) -> Result<()> {
        use TissueClass::*;
        let t = |c, m| self.intensity(c, m);
        let ok = t(Fluid, Modality::T2) > t(Fluid, Modality::T1)
            && t(Fat, Modality::T1) > t(Fat, Modality::T2)
            && t(Lesion, Modality::T1c) > t(Lesion, Modality::T1)
            && self.rows.values().flatten().all(|v| (0.0..=1.0).contains(v));
        if ok {
            Ok(())
        } else {
            Err(Error::Param("tissue table violates the contrast orderings".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub seed: u64,
    /// Total structures including the head envelope.
    pub n_structures: usize,
    pub lesion: bool,
    #[serde(default = "default_subject")]
    pub subject_id: String,
}

fn default_subject() -> String {
    "phantom".to_string()
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl PhantomSpec {
    /// 64 × 64 × 24 at 1 mm, eight structures and a lesion, seed 2024.
    pub fn standard() -> Self {
        Self {
            dims: [64, 64, 24],
            spacing: [1.0, 1.0, 1.0],
            seed: 2024,
            n_structures: 8,
            lesion: true,
            subject_id: default_subject(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [nx, ny, nz] = self.dims;
        if nx < 16 || ny < 16 || nz < 4 {
            return Err(Error::Param(format!(
                "phantom dims {:?} must be at least (16, 16, 4)",
                self.dims
            )));
        }
        if !(1..=16).contains(&self.n_structures) {
            return Err(Error::Param(format!(
                "n_structures {} outside 1..=16",
                self.n_structures
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Param(format!("spacing {:?} must be positive", self.spacing)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
    pub class: TissueClass,
    /// Ignore z (an elliptic cylinder).
    pub infinite_z: bool,
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        let axes = if self.infinite_z { 2 } else { 3 };
        let r: f64 = p
            .iter()
            .zip(&self.center)
            .zip(&self.radii)
            .take(axes)
            .map(|((x, c), r)| ((x - c) / r).powi(2))
            .sum();
        r <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub volumes: BTreeMap<Modality, Volume3D>,
    /// One lesion mask per axial slice (all empty without a lesion).
    pub lesion_masks: Vec<Mask2D>,
    pub tissue: TissueTable,
    /// Class code per voxel, same addressing as the volumes.
    pub labels: Vec<u8>,
    pub structures: Vec<Ellipsoid>,
    /// Multiplicative shading per voxel.
    pub shading: Vec<f64>,
}

impl Phantom {
    pub fn volume(&self, m: Modality) -> &Volume3D {
        &self.volumes[&m]
    }
}

fn layout(spec: &PhantomSpec, rng: &mut SplitMix64) -> Vec<Ellipsoid> {
    let [nx, ny, nz] = spec.dims.map(|d| d as f64);
    let center = [(nx - 1.0) / 2.0, (ny - 1.0) / 2.0, (nz - 1.0) / 2.0];
    let head = Ellipsoid {
        center,
        radii: [0.47 * nx, 0.47 * ny, f64::INFINITY],
        class: TissueClass::SoftTissue,
        infinite_z: true,
    };
    let mut out = vec![head];
    for k in 1..spec.n_structures {
        let class = TissueClass::INNER[(k - 1) % TissueClass::INNER.len()];
        let radii = [
            rng.uniform(0.08, 0.18) * nx,
            rng.uniform(0.08, 0.18) * ny,
            rng.uniform(0.25, 0.6) * nz,
        ];
        // Keep inner structures inside the head ellipse.
        let max_off = [0.47 * nx - radii[0], 0.47 * ny - radii[1]].map(|m| (m * 0.7).max(0.0));
        let c = [
            center[0] + rng.uniform(-1.0, 1.0) * max_off[0] * std::f64::consts::FRAC_1_SQRT_2,
            center[1] + rng.uniform(-1.0, 1.0) * max_off[1] * std::f64::consts::FRAC_1_SQRT_2,
            center[2] + rng.uniform(-0.25, 0.25) * nz,
        ];
        out.push(Ellipsoid {
            center: c,
            radii,
            class,
            infinite_z: false,
        });
    }
    if spec.lesion {
        let radii = [0.07 * nx, 0.07 * ny, 0.2 * nz].map(|r: f64| r.max(1.5));
        let c = [
            center[0] + rng.uniform(-0.15, 0.15) * nx,
            center[1] + rng.uniform(-0.15, 0.15) * ny,
            center[2] + rng.uniform(-0.1, 0.1) * nz,
        ];
        out.push(Ellipsoid {
            center: c,
            radii,
            class: TissueClass::Lesion,
            infinite_z: false,
        });
    }
    out
}

fn shading_field(spec: &PhantomSpec, rng: &mut SplitMix64) -> Vec<f64> {
    let [nx, ny, nz] = spec.dims;
    let phases: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, std::f64::consts::TAU)).collect();
    let amps: Vec<f64> = (0..3).map(|_| rng.uniform(0.02, 0.04)).collect();
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let u = [x as f64 / nx as f64, y as f64 / ny as f64, z as f64 / nz as f64];
                let s: f64 = (0..3)
                    .map(|a| amps[a] * (std::f64::consts::TAU * u[a] + phases[a]).sin())
                    .sum();
                out.push(1.0 + s);
            }
        }
    }
    out
}

/// Build the phantom for `spec`. A pure function of the spec.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let tissue = TissueTable::default();
    tissue.validate()?;
    let mut rng = SplitMix64::new(derive_seed(spec.seed, 0));
    let structures = layout(spec, &mut rng);
    let mut shade_rng = SplitMix64::new(derive_seed(spec.seed, 1));
    let shading = shading_field(spec, &mut shade_rng);

    let [nx, ny, nz] = spec.dims;
    let mut labels = vec![TissueClass::Background.code(); nx * ny * nz];
    let mut classes = vec![TissueClass::Background; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [x as f64, y as f64, z as f64];
                let i = x + nx * (y + ny * z);
                for e in &structures {
                    if e.contains(p) {
                        classes[i] = e.class;
                    }
                }
                labels[i] = classes[i].code();
            }
        }
    }

    let mut volumes = BTreeMap::new();
    for m in Modality::PHANTOM {
        let data: Vec<f64> = classes
            .iter()
            .zip(&shading)
            .map(|(&c, &s)| tissue.intensity(c, m) * s)
            .collect();
        let v = Volume3D::new(spec.dims, spec.spacing, data, m, spec.subject_id.clone())?.normalize()?;
        volumes.insert(m, v);
    }

    let lesion_masks = (0..nz)
        .map(|z| {
            let start = nx * ny * z;
            let data = classes[start..start + nx * ny]
                .iter()
                .map(|&c| (c == TissueClass::Lesion) as u8)
                .collect();
            Mask2D::new(ny, nx, data, "lesion")
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Phantom {
        spec: spec.clone(),
        volumes,
        lesion_masks,
        tissue,
        labels,
        structures,
        shading,
    })
}

/// Controls for [`generate_embeddings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub dim: usize,
    pub slice_signal_scale: f64,
    pub modality_offset_scale: f64,
    /// Norm (in expectation) of the per-item noise vector.
    pub noise_scale: f64,
    pub subjects: usize,
    pub modalities: Vec<Modality>,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            slice_signal_scale: 1.0,
            modality_offset_scale: 0.2,
            noise_scale: 0.01,
            subjects: 2,
            modalities: Modality::PHANTOM.to_vec(),
        }
    }
}

fn unit_gaussian(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Random unit direction standing in for the text embedding of `m`.
pub fn modality_direction(seed: u64, m: Modality, dim: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(derive_seed(derive_seed(seed, 0xC0DE), m.ordinal() as u64));
    unit_gaussian(&mut rng, dim)
}

/// `slice_scale · u(subject, slice) + offset_scale · u(modality) + noise`, where
/// the `u` are seeded unit vectors and the noise has i.i.d. components with
/// standard deviation `noise_scale / sqrt(dim)`. One item per subject, axial
/// slice of the phantom, and modality; subjects are `<subject_id>-<k>`.
pub fn generate_embeddings(spec: &PhantomSpec, emb: &EmbeddingSpec) -> Result<EmbeddingBatch> {
    spec.validate()?;
    if emb.dim < 2 {
        return Err(Error::Param(format!("embedding dim {} must be >= 2", emb.dim)));
    }
    if emb.subjects == 0 || emb.modalities.is_empty() {
        return Err(Error::Param("need at least one subject and one modality".into()));
    }
    let offsets: BTreeMap<Modality, Vec<f64>> = emb
        .modalities
        .iter()
        .map(|&m| (m, modality_direction(spec.seed, m, emb.dim)))
        .collect();
    let noise_sd = emb.noise_scale / (emb.dim as f64).sqrt();
    let mut items = Vec::new();
    for subject in 0..emb.subjects {
        let sid = format!("{}-{subject}", spec.subject_id);
        for z in 0..spec.dims[2] {
            let stream = derive_seed(derive_seed(spec.seed, 0x5EED + subject as u64), z as u64);
            let mut rng = SplitMix64::new(stream);
            let signal = unit_gaussian(&mut rng, emb.dim);
            for &m in &emb.modalities {
                let mut nrng = SplitMix64::new(derive_seed(stream, 1 + m.ordinal() as u64));
                let v: Vec<f64> = (0..emb.dim)
                    .map(|d| {
                        emb.slice_signal_scale * signal[d]
                            + emb.modality_offset_scale * offsets[&m][d]
                            + noise_sd * nrng.normal()
                    })
                    .collect();
                items.push(EmbeddingItem::new(sid.clone(), z, m, v));
            }
        }
    }
    EmbeddingBatch::new(emb.dim, items)
}
