use std::fs;
use std::path::Path;

use serde_json::json;

use super::{file_digest, provenance, MetricReport, Row, RunConfig, RunOutput};
use crate::error::{Error, Result};
use crate::model::nifti::{write_nifti_labeled, write_nifti_with, Datatype, WriteOptions};
use crate::model::{write_embeddings, EmbeddingBatch, EmbeddingItem, Modality, Volume3D};
use crate::phantom::{generate_embeddings, generate_phantom, modality_direction, Phantom};

fn mask_volume(p: &Phantom) -> Result<Volume3D> {
    let data: Vec<f64> = p
        .lesion_masks
        .iter()
        .flat_map(|m| m.data().iter().map(|&v| v as f64))
        .collect();
    Volume3D::new(
        p.spec.dims,
        p.spec.spacing,
        data,
        Modality::T1,
        p.spec.subject_id.clone(),
    )
}

fn uint8(v: &Volume3D, path: &Path) -> Result<()> {
    write_nifti_with(
        v,
        path,
        WriteOptions {
            datatype: Datatype::Uint8,
            scl_slope: 1.0,
            scl_inter: 0.0,
        },
    )
}

/// Prototype stand-ins: one seeded unit direction per modality.
fn prototypes(cfg: &RunConfig) -> Result<EmbeddingBatch> {
    let items = cfg
        .embeddings
        .modalities
        .iter()
        .map(|&m| {
            EmbeddingItem::new(
                "prototype",
                0,
                m,
                modality_direction(cfg.phantom.seed, m, cfg.embeddings.dim),
            )
        })
        .collect();
    EmbeddingBatch::new(cfg.embeddings.dim, items)
}

/// Write the phantom volumes (`<subject>_<modality>.nii.gz` plus sidecars),
/// `masks/<subject>_lesion.nii.gz`, `labels/<subject>_tissue.nii.gz`,
/// `embeddings.json` and `prototypes.json` into `out_dir`.
pub fn run_phantom(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let p = generate_phantom(&cfg.phantom)?;
    let sid = &cfg.phantom.subject_id;
    let mut written = Vec::new();
    for (m, v) in &p.volumes {
        let path = out_dir.join(format!("{sid}_{m}.nii.gz"));
        write_nifti_labeled(v, &path)?;
        written.push(path);
    }
    for sub in ["masks", "labels"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mask_path = out_dir.join("masks").join(format!("{sid}_lesion.nii.gz"));
    uint8(&mask_volume(&p)?, &mask_path)?;
    written.push(mask_path);
    let labels = Volume3D::new(
        p.spec.dims,
        p.spec.spacing,
        p.labels.iter().map(|&c| c as f64).collect(),
        Modality::T1,
        sid.clone(),
    )?;
    let label_path = out_dir.join("labels").join(format!("{sid}_tissue.nii.gz"));
    uint8(&labels, &label_path)?;
    written.push(label_path);

    let emb_path = out_dir.join("embeddings.json");
    write_embeddings(&generate_embeddings(&cfg.phantom, &cfg.embeddings)?, &emb_path)?;
    written.push(emb_path);
    let proto_path = out_dir.join("prototypes.json");
    write_embeddings(&prototypes(cfg)?, &proto_path)?;
    written.push(proto_path);

    let mut rows = Vec::new();
    for (m, v) in &p.volumes {
        for s in v.slices() {
            let (lo, hi) = s.min_max();
            let lesion = p.lesion_masks[s.slice_index].count();
            rows.push(
                Row::new(m.tag())
                    .label("subject", sid)
                    .label("modality", m)
                    .label("slice", format!("{:03}", s.slice_index))
                    .value("mean", s.mean())
                    .value("min", lo)
                    .value("max", hi)
                    .value("lesion_pixels", lesion as f64),
            );
        }
    }
    let files = written
        .iter()
        .map(|path| {
            let mut d = file_digest(path)?;
            d.name = path.strip_prefix(out_dir).unwrap_or(path).display().to_string();
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    let tissue = serde_json::to_value(&p.tissue)?;
    let report = MetricReport::new("phantom", provenance(cfg, Vec::new())?, rows)
        .note(
            "normalization",
            "each volume min-max normalized to [0, 1]; background is exactly 0",
        )
        .with_extra(json!({ "files": files, "tissue_table": tissue }));
    Ok(RunOutput::new(report))
}
