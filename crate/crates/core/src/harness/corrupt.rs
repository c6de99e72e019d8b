use std::fs;
use std::path::Path;

use serde_json::json;

use super::{file_digest, provenance, resolve_params, volume_digest, MetricReport, Row, RunConfig, RunOutput};
use crate::corruption::{corrupt_volume, CorruptionSpec};
use crate::error::{Error, Result};
use crate::metrics::{mse, psnr, ssim};
use crate::model::nifti::{read_nifti, stem, write_nifti_labeled};
use crate::phantom::generate_phantom;
use crate::preprocess::Normalize;

/// Corrupt one volume slice by slice and write
/// `<stem>_<family>_<severity>.nii.gz` plus `corrupt_manifest.json`.
///
/// File inputs are min-max normalized first; the report compares the
/// corrupted slices against those normalized clean slices.
pub fn run_corrupt(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let c = &cfg.corrupt;
    let (clean, name, input) = match &c.input {
        Some(path) => {
            let v = read_nifti(path)?.normalize()?;
            (v, stem(path), file_digest(path)?)
        }
        None => {
            let p = generate_phantom(&cfg.phantom)?;
            let v = p.volume(c.modality).clone();
            let name = format!("{}_{}", cfg.phantom.subject_id, c.modality);
            let d = volume_digest(format!("phantom:{name}"), &v);
            (v, name, d)
        }
    };
    let params = resolve_params(&c.table, c.family, c.severity, &c.params)?;
    let spec = CorruptionSpec::new(c.family, c.severity, cfg.seed).with_params(params);
    let (out, resolved) = corrupt_volume(&spec, &c.table, &clean)?;

    let out_name = format!("{name}_{}_{}.nii.gz", c.family, c.severity);
    let out_path = out_dir.join(&out_name);
    write_nifti_labeled(&out, &out_path)?;

    let rows = clean
        .slices()
        .iter()
        .zip(out.slices())
        .map(|(a, b)| {
            Ok(Row::new(format!("{}/{}", c.family, c.severity))
                .label("volume", &name)
                .label("slice", format!("{:03}", a.slice_index))
                .value("mse", mse(a, &b)?)
                .value("psnr", psnr(a, &b, &cfg.metric)?)
                .value("ssim", ssim(a, &b, &cfg.metric)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut output_digest = file_digest(&out_path)?;
    output_digest.name = out_name.clone();
    let manifest = json!({
        "input": input.name,
        "output": out_name,
        "output_sha256": output_digest.sha256,
        "corruption": resolved,
        "slice_seed_rule": "derive_seed(seed, slice_index)",
    });
    let manifest_path = out_dir.join("corrupt_manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    let report = MetricReport::new("corrupt", provenance(cfg, vec![input])?, rows)
        .note(
            "domain",
            "corruption applied to normalized 2-D axial slices, output clamped to [0, 1]",
        )
        .with_extra(manifest);
    Ok(RunOutput::new(report))
}
