//! Minimal NIfTI-1 reader/writer.
//!
//! Supported: single-file (`n+1`) and header/image pair (`ni1`) layouts,
//! little-endian, exactly three dimensions, datatypes uint8 (2), int16 (4)
//! and float32 (16), optionally gzip-compressed (detected by magic bytes).
//! qform/sform orientation is ignored; only `pixdim[1..3]` spacing is kept.
//!
//! Contrast and subject labels live in a JSON sidecar next to the image,
//! `<stem>.json` holding `{"modality": "T2", "subject_id": "sub-01"}`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::{Modality, Volume3D};
use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
pub const SINGLE_FILE_OFFSET: usize = 352;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_DESCRIP: usize = 148;
const OFF_QFORM_CODE: usize = 252;
const OFF_SFORM_CODE: usize = 254;
const OFF_SROW_X: usize = 280;
const OFF_MAGIC: usize = 344;

/// Voxel storage types in the supported subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
        }
    }
}

/// Header fields the reader interprets.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub datatype: Datatype,
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub single_file: bool,
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::format(
                bytes.len(),
                format!("header truncated: {} of {HEADER_SIZE} bytes", bytes.len()),
            ));
        }
        let r = Reader(bytes);
        let sizeof_hdr = r.i32(0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            let msg = if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
                "big-endian headers are not supported".to_string()
            } else {
                format!("sizeof_hdr is {sizeof_hdr}, expected 348")
            };
            return Err(Error::format(0, msg));
        }
        let magic = &bytes[OFF_MAGIC..OFF_MAGIC + 4];
        let single_file = match magic {
            b"n+1\0" => true,
            b"ni1\0" => false,
            _ => {
                return Err(Error::format(
                    OFF_MAGIC,
                    format!("bad magic {magic:?}, expected \"n+1\\0\" or \"ni1\\0\""),
                ))
            }
        };
        let ndim = r.i16(OFF_DIM);
        if ndim != 3 {
            return Err(Error::Dimension(format!(
                "dim[0] = {ndim}, only 3-D volumes are supported"
            )));
        }
        let mut dims = [0usize; 3];
        for (axis, d) in dims.iter_mut().enumerate() {
            let off = OFF_DIM + 2 * (axis + 1);
            let v = r.i16(off);
            if v <= 0 {
                return Err(Error::Dimension(format!("dim[{}] = {v} must be positive", axis + 1)));
            }
            *d = v as usize;
        }
        let datatype = Datatype::from_code(r.i16(OFF_DATATYPE))?;
        let bitpix = r.i16(OFF_BITPIX);
        if bitpix as usize != datatype.bytes() * 8 {
            return Err(Error::format(
                OFF_BITPIX,
                format!("bitpix {bitpix} does not match datatype {datatype:?}"),
            ));
        }
        let mut spacing = [0f64; 3];
        for (axis, s) in spacing.iter_mut().enumerate() {
            let off = OFF_PIXDIM + 4 * (axis + 1);
            let v = r.f32(off);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::format(
                    off,
                    format!("pixdim[{}] = {v} must be positive", axis + 1),
                ));
            }
            *s = v as f64;
        }
        let vox = r.f32(OFF_VOX_OFFSET);
        if !(vox >= 0.0) || vox.fract() != 0.0 {
            return Err(Error::format(
                OFF_VOX_OFFSET,
                format!("vox_offset {vox} is not a byte offset"),
            ));
        }
        let vox_offset = vox as usize;
        if single_file && vox_offset < SINGLE_FILE_OFFSET {
            return Err(Error::format(
                OFF_VOX_OFFSET,
                format!("vox_offset {vox_offset} overlaps the header"),
            ));
        }
        Ok(Self {
            dims,
            spacing,
            datatype,
            vox_offset,
            scl_slope: r.f32(OFF_SCL_SLOPE),
            scl_inter: r.f32(OFF_SCL_INTER),
            single_file,
        })
    }

    /// Serialize a single-file (`n+1`) header. Returns all 352 bytes
    /// including the empty extension block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = vec![0u8; SINGLE_FILE_OFFSET];
        put_i32(&mut b, 0, HEADER_SIZE as i32);
        put_i16(&mut b, OFF_DIM, 3);
        for axis in 0..3 {
            put_i16(&mut b, OFF_DIM + 2 * (axis + 1), self.dims[axis] as i16);
        }
        for axis in 3..7 {
            put_i16(&mut b, OFF_DIM + 2 * (axis + 1), 1);
        }
        put_i16(&mut b, OFF_DATATYPE, self.datatype.code());
        put_i16(&mut b, OFF_BITPIX, (self.datatype.bytes() * 8) as i16);
        put_f32(&mut b, OFF_PIXDIM, 1.0);
        for axis in 0..3 {
            put_f32(&mut b, OFF_PIXDIM + 4 * (axis + 1), self.spacing[axis] as f32);
        }
        put_f32(&mut b, OFF_VOX_OFFSET, self.vox_offset as f32);
        put_f32(&mut b, OFF_SCL_SLOPE, self.scl_slope);
        put_f32(&mut b, OFF_SCL_INTER, self.scl_inter);
        // NIFTI_UNITS_MM
        b[OFF_XYZT_UNITS] = 2;
        let descrip = b"synth-eval";
        b[OFF_DESCRIP..OFF_DESCRIP + descrip.len()].copy_from_slice(descrip);
        // Scanner-anchored diagonal sform so viewers show the spacing.
        put_i16(&mut b, OFF_QFORM_CODE, 0);
        put_i16(&mut b, OFF_SFORM_CODE, 1);
        for row in 0..3 {
            put_f32(&mut b, OFF_SROW_X + 16 * row + 4 * row, self.spacing[row] as f32);
        }
        b[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(b"n+1\0");
        b
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes([self.0[off], self.0[off + 1]])
    }
    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.0[off..off + 4].try_into().unwrap())
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.0[off..off + 4].try_into().unwrap())
    }
}

fn put_i16(b: &mut [u8], off: usize, v: i16) {
    b[off..off + 2].copy_from_slice(&v.to_le_bytes());
}
fn put_i32(b: &mut [u8], off: usize, v: i32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}
fn put_f32(b: &mut [u8], off: usize, v: f32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// File name with `.nii`, `.nii.gz`, `.hdr`, `.hdr.gz` or `.img` removed.
pub fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for ext in [".nii.gz", ".hdr.gz", ".img.gz", ".nii", ".hdr", ".img"] {
        if let Some(s) = name.strip_suffix(ext) {
            return s.to_string();
        }
    }
    name
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_file_name(format!("{}.json", stem(path)))
}

/// Contents of the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
}

impl Sidecar {
    pub fn read(path: &Path) -> Result<Option<Self>> {
        let side = sidecar_path(path);
        if !side.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let side = sidecar_path(path);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }
}

/// Read a volume, taking labels from the sidecar when present and
/// defaulting to `T1` / `"unknown"`.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume3D> {
    read_nifti_with(path, &Sidecar::default())
}

/// Like [`read_nifti`], with `overrides` taking precedence over the sidecar.
pub fn read_nifti_with(path: impl AsRef<Path>, overrides: &Sidecar) -> Result<Volume3D> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let header = NiftiHeader::parse(&bytes)?;
    let payload: Vec<u8>;
    let (data, start) = if header.single_file {
        (bytes.as_slice(), header.vox_offset)
    } else {
        let img = paired_image_path(path);
        payload = read_maybe_gz(&img)?;
        (payload.as_slice(), header.vox_offset)
    };
    let n = header.dims.iter().product::<usize>();
    let need = start + n * header.datatype.bytes();
    if data.len() < need {
        return Err(Error::format(
            data.len(),
            format!("voxel data truncated: need {need} bytes, file has {}", data.len()),
        ));
    }
    let raw = &data[start..need];
    let mut voxels: Vec<f64> = match header.datatype {
        Datatype::Uint8 => raw.iter().map(|&v| v as f64).collect(),
        Datatype::Int16 => raw
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        Datatype::Float32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
    if slope != 0.0 && !(slope == 1.0 && inter == 0.0) {
        for v in &mut voxels {
            *v = *v * slope + inter;
        }
    }
    let side = Sidecar::read(path)?.unwrap_or_default();
    let modality = overrides.modality.or(side.modality).unwrap_or(Modality::T1);
    let subject = overrides
        .subject_id
        .clone()
        .or(side.subject_id)
        .unwrap_or_else(|| "unknown".to_string());
    Volume3D::new(header.dims, header.spacing, voxels, modality, subject)
}

fn paired_image_path(hdr: &Path) -> PathBuf {
    let s = stem(hdr);
    let gz = is_gz(hdr);
    let img = hdr.with_file_name(format!("{s}.img{}", if gz { ".gz" } else { "" }));
    if img.exists() || !gz {
        img
    } else {
        hdr.with_file_name(format!("{s}.img"))
    }
}

/// Storage options for [`write_nifti_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteOptions {
    pub datatype: Datatype,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self {
            datatype: Datatype::Float32,
            scl_slope: 1.0,
            scl_inter: 0.0,
        }
    }
}

/// Write a float32 single-file NIfTI. A `.gz` extension selects gzip.
/// Values are rounded to f32, so payloads that came from a float32 file
/// round-trip bit-exactly.
pub fn write_nifti(v: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    write_nifti_with(v, path, WriteOptions::default())
}

/// Write with an explicit datatype and scaling; integer types store
/// `round((value - inter) / slope)` and fail if that leaves the type's range.
pub fn write_nifti_with(v: &Volume3D, path: impl AsRef<Path>, opts: WriteOptions) -> Result<()> {
    let path = path.as_ref();
    for d in v.dims() {
        if d > i16::MAX as usize {
            return Err(Error::Dimension(format!("dimension {d} exceeds the NIfTI-1 limit")));
        }
    }
    if opts.datatype != Datatype::Float32 && opts.scl_slope == 0.0 {
        return Err(Error::Param("integer storage needs a nonzero scl_slope".into()));
    }
    let header = NiftiHeader {
        dims: v.dims(),
        spacing: v.spacing(),
        datatype: opts.datatype,
        vox_offset: SINGLE_FILE_OFFSET,
        scl_slope: opts.scl_slope,
        scl_inter: opts.scl_inter,
        single_file: true,
    };
    let mut bytes = header.to_bytes();
    bytes.reserve(v.data().len() * opts.datatype.bytes());
    let (slope, inter) = (opts.scl_slope as f64, opts.scl_inter as f64);
    let stored = |x: f64| -> f64 {
        if opts.datatype == Datatype::Float32 && slope == 1.0 && inter == 0.0 {
            x
        } else {
            (x - inter) / slope
        }
    };
    for (i, &x) in v.data().iter().enumerate() {
        let s = stored(x);
        match opts.datatype {
            Datatype::Float32 => bytes.extend_from_slice(&(s as f32).to_le_bytes()),
            Datatype::Int16 => {
                let r = s.round();
                if !(i16::MIN as f64..=i16::MAX as f64).contains(&r) {
                    return Err(Error::Param(format!("voxel {i} value {x} does not fit int16")));
                }
                bytes.extend_from_slice(&(r as i16).to_le_bytes());
            }
            Datatype::Uint8 => {
                let r = s.round();
                if !(0.0..=255.0).contains(&r) {
                    return Err(Error::Param(format!("voxel {i} value {x} does not fit uint8")));
                }
                bytes.push(r as u8);
            }
        }
    }
    let io = |e| Error::io(path, e);
    if is_gz(path) {
        let file = fs::File::create(path).map_err(io)?;
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes).map_err(io)?;
        enc.finish().map_err(io)?;
    } else {
        fs::write(path, &bytes).map_err(io)?;
    }
    Ok(())
}

/// Write the volume plus its label sidecar.
pub fn write_nifti_labeled(v: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_nifti(v, path)?;
    Sidecar {
        modality: Some(v.modality),
        subject_id: Some(v.subject_id.clone()),
    }
    .write(path)
}
