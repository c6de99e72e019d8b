//! Generate the standard phantom and round-trip it through NIfTI files.
//!
//! cargo run --example phantom_nifti -- [out_dir]

use std::path::PathBuf;

use synth_eval::model::nifti::{read_nifti, write_nifti_labeled};
use synth_eval::phantom::{generate_phantom, PhantomSpec, TissueClass};
use synth_eval::Modality;

fn main() -> synth_eval::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let spec = PhantomSpec::standard();
    let p = generate_phantom(&spec)?;

    for class in [TissueClass::Fluid, TissueClass::Fat, TissueClass::Lesion] {
        let row: Vec<String> = Modality::PHANTOM
            .iter()
            .map(|&m| format!("{m}={:.2}", p.tissue.intensity(class, m)))
            .collect();
        println!("{class:?}: {}", row.join(" "));
    }
    let lesion_slices = p.lesion_masks.iter().filter(|m| !m.is_empty()).count();
    println!("lesion visible on {lesion_slices} of {} slices", spec.dims[2]);

    for m in Modality::PHANTOM {
        let path = out.join(format!("{}_{m}.nii.gz", spec.subject_id));
        write_nifti_labeled(p.volume(m), &path)?;
        let back = read_nifti(&path)?;
        let max_err = back
            .data()
            .iter()
            .zip(p.volume(m).data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{} -> {m} {:?}, max |error| {max_err:.2e}", path.display(), back.dims());
    }
    Ok(())
}
