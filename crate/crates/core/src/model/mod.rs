//! Image, mask, and embedding types plus their on-disk forms.

mod embedding;
mod modality;
pub mod nifti;

pub use embedding::{read_embeddings, write_embeddings, EmbeddingBatch, EmbeddingItem};
pub use modality::Modality;

use crate::error::{Error, Result};

fn min_max(data: &[f64]) -> (f64, f64) {
    data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// A 3-D scalar image. Voxel `(x, y, z)` lives at `data[x + nx * (y + ny * z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
    pub modality: Modality,
    pub subject_id: String,
    intensity_range: (f64, f64),
}

impl Volume3D {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        data: Vec<f64>,
        modality: Modality,
        subject_id: impl Into<String>,
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension(format!("volume dims {dims:?} must be positive")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Param(format!("spacing {spacing:?} must be positive")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::Shape(format!(
                "volume {dims:?} needs {n} voxels, got {}",
                data.len()
            )));
        }
        let intensity_range = min_max(&data);
        Ok(Self {
            dims,
            spacing,
            data,
            modality,
            subject_id: subject_id.into(),
            intensity_range,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn intensity_range(&self) -> (f64, f64) {
        self.intensity_range
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    /// Replace the voxel payload, keeping geometry and metadata.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, data, self.modality, self.subject_id.clone())
    }

    pub(crate) fn set_intensity_range(&mut self, range: (f64, f64)) {
        self.intensity_range = range;
    }

    /// Axial slice `z` as an `ny × nx` image.
    pub fn slice(&self, z: usize) -> Slice2D {
        let [nx, ny, _] = self.dims;
        let start = nx * ny * z;
        Slice2D {
            dims: (ny, nx),
            data: self.data[start..start + nx * ny].to_vec(),
            slice_index: z,
            modality: self.modality,
            subject_id: self.subject_id.clone(),
        }
    }

    pub fn slices(&self) -> Vec<Slice2D> {
        (0..self.dims[2]).map(|z| self.slice(z)).collect()
    }

    /// Reassemble a volume from equally sized axial slices.
    pub fn from_slices(
        slices: &[Slice2D],
        spacing: [f64; 3],
        modality: Modality,
        subject_id: impl Into<String>,
    ) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Dimension("no slices to stack".into()))?;
        let (h, w) = first.dims;
        let mut data = Vec::with_capacity(h * w * slices.len());
        for s in slices {
            if s.dims != (h, w) {
                return Err(Error::Shape(format!(
                    "slice {} is {:?}, expected {:?}",
                    s.slice_index, s.dims, first.dims
                )));
            }
            data.extend_from_slice(&s.data);
        }
        Self::new([w, h, slices.len()], spacing, data, modality, subject_id)
    }
}

/// A 2-D float image stored row-major: pixel `(row, col)` is `data[row * w + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    dims: (usize, usize),
    data: Vec<f64>,
    pub slice_index: usize,
    pub modality: Modality,
    pub subject_id: String,
}

impl Slice2D {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Dimension(format!("slice dims ({h}, {w}) must be positive")));
        }
        if data.len() != h * w {
            return Err(Error::Shape(format!(
                "slice ({h}, {w}) needs {} pixels, got {}",
                h * w,
                data.len()
            )));
        }
        Ok(Self {
            dims: (h, w),
            data,
            slice_index: 0,
            modality: Modality::T1,
            subject_id: "unknown".into(),
        })
    }

    pub fn filled(h: usize, w: usize, value: f64) -> Result<Self> {
        Self::new(h, w, vec![value; h * w])
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                data.push(f(r, c));
            }
        }
        Self::new(h, w, data)
    }

    pub fn with_meta(mut self, slice_index: usize, modality: Modality, subject_id: impl Into<String>) -> Self {
        self.slice_index = slice_index;
        self.modality = modality;
        self.subject_id = subject_id.into();
        self
    }

    /// `(h, w)`.
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn height(&self) -> usize {
        self.dims.0
    }

    pub fn width(&self) -> usize {
        self.dims.1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dims.1 + col]
    }

    /// Same geometry and metadata, new pixels.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        let (h, w) = self.dims;
        Ok(Self::new(h, w, data)?.with_meta(self.slice_index, self.modality, self.subject_id.clone()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        min_max(&self.data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Binary segmentation mask, row-major like [`Slice2D`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    dims: (usize, usize),
    data: Vec<u8>,
    pub label_name: String,
}

impl Mask2D {
    pub fn new(h: usize, w: usize, data: Vec<u8>, label_name: impl Into<String>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::Shape(format!(
                "mask ({h}, {w}) needs {} elements, got {}",
                h * w,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::Param(format!(
                "mask element {pos} is {}, expected 0 or 1",
                data[pos]
            )));
        }
        Ok(Self {
            dims: (h, w),
            data,
            label_name: label_name.into(),
        })
    }

    pub fn empty(h: usize, w: usize, label_name: impl Into<String>) -> Self {
        Self {
            dims: (h, w),
            data: vec![0; h * w],
            label_name: label_name.into(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.dims.1 + col] == 1
    }

    /// Binary erosion with the 4-connected cross; pixels outside the image count as background.
    pub fn eroded(&self) -> Self {
        let (h, w) = self.dims;
        let mut out = vec![0u8; h * w];
        for r in 0..h {
            for c in 0..w {
                let keep = self.get(r, c)
                    && r > 0
                    && c > 0
                    && r + 1 < h
                    && c + 1 < w
                    && self.get(r - 1, c)
                    && self.get(r + 1, c)
                    && self.get(r, c - 1)
                    && self.get(r, c + 1);
                out[r * w + c] = keep as u8;
            }
        }
        Self {
            dims: self.dims,
            data: out,
            label_name: self.label_name.clone(),
        }
    }
}

/// Multi-level feature maps, each level a `(c, h, w)` array, coarse to fine.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet {
    pub levels: Vec<FeatureLevel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl FeatureLevel {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let n = shape.iter().product::<usize>();
        if n == 0 || data.len() != n {
            return Err(Error::Shape(format!(
                "feature level {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }
}

impl FeatureMapSet {
    pub fn new(levels: Vec<FeatureLevel>) -> Self {
        Self { levels }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            levels: self.levels.iter().map(|l| FeatureLevel::zeros(l.shape)).collect(),
        }
    }

    /// Errors unless `other` has the same level count and per-level shapes.
    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.levels.len() != other.levels.len() {
            return Err(Error::Shape(format!(
                "feature map sets have {} and {} levels",
                self.levels.len(),
                other.levels.len()
            )));
        }
        for (i, (a, b)) in self.levels.iter().zip(&other.levels).enumerate() {
            if a.shape != b.shape {
                return Err(Error::Shape(format!("level {i}: {:?} vs {:?}", a.shape, b.shape)));
            }
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.levels.iter().map(|l| l.data.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_addressing_is_x_fastest() {
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let v = Volume3D::new([2, 3, 4], [1.0; 3], data, Modality::T2, "s").unwrap();
        assert_eq!(v.get(1, 0, 0), 1.0);
        assert_eq!(v.get(0, 1, 0), 2.0);
        assert_eq!(v.get(0, 0, 1), 6.0);
        let s = v.slice(2);
        assert_eq!(s.dims(), (3, 2));
        assert_eq!(s.get(1, 1), v.get(1, 1, 2));
        let back = Volume3D::from_slices(&v.slices(), [1.0; 3], Modality::T2, "s").unwrap();
        assert_eq!(back.data(), v.data());
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(
            Volume3D::new([2, 2, 2], [1.0, 0.0, 1.0], vec![0.0; 8], Modality::T1, "s"),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            Volume3D::new([2, 2, 2], [1.0; 3], vec![0.0; 7], Modality::T1, "s"),
            Err(Error::Shape(_))
        ));
        assert!(Slice2D::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Mask2D::new(1, 2, vec![0, 2], "m").is_err());
    }

    #[test]
    fn erosion_peels_one_layer() {
        let mut data = vec![0u8; 25];
        for r in 1..4 {
            for c in 1..4 {
                data[r * 5 + c] = 1;
            }
        }
        let m = Mask2D::new(5, 5, data, "m").unwrap();
        let e = m.eroded();
        assert_eq!(e.count(), 1);
        assert!(e.get(2, 2));
    }
}
