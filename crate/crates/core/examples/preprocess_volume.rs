//! Thick-slice volume to isotropic spacing, normalized, slices resized.
//!
//! cargo run --example preprocess_volume

use synth_eval::preprocess::{preprocess_volume, resample, ResampleSpec, ResizeSpec};
use synth_eval::{Modality, Volume3D};

fn main() -> synth_eval::Result<()> {
    let (nx, ny, nz) = (40, 48, 10);
    let mut data = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                data.push(100.0 + 2.0 * x as f64 + y as f64 + 10.0 * z as f64);
            }
        }
    }
    let v = Volume3D::new([nx, ny, nz], [1.0, 1.0, 2.0], data, Modality::T2, "demo")?;

    let iso = resample(&v, &ResampleSpec::default())?;
    println!(
        "{:?} @ {:?} mm -> {:?} @ {:?} mm",
        v.dims(),
        v.spacing(),
        iso.dims(),
        iso.spacing()
    );

    let slices = preprocess_volume(&v, &ResampleSpec::default(), &ResizeSpec::default())?;
    let first = &slices[0];
    let (lo, hi) = slices
        .iter()
        .map(|s| s.min_max())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, h)| {
            (a.min(l), b.max(h))
        });
    println!(
        "{} slices of {}x{}, intensity range [{lo}, {hi}]",
        slices.len(),
        first.height(),
        first.width()
    );
    Ok(())
}
