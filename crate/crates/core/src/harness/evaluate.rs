use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::json;

use super::pairing::{index_dir, list_volumes, pair_dirs, PairEntry, PairManifest};
use super::plot::severity_curves;
use super::{file_digest, provenance, volume_digest, InputDigest, MetricReport, Row, RunConfig, RunOutput};
use crate::corruption::{corrupt_volume, CorruptionParams, CorruptionSpec, Family, Severity};
use crate::error::{Error, Result};
use crate::metrics::{mse, psnr, ssim, MetricContext};
use crate::model::nifti::{read_nifti, stem};
use crate::model::{Modality, Slice2D, Volume3D};
use crate::phantom::generate_phantom;
use crate::preprocess::{resample, resize_slice, Normalize, ResampleSpec, ResizeSpec};
use crate::rng::derive_seed;

fn slice_metrics(a: &Slice2D, b: &Slice2D, ctx: &MetricContext, prefix: &str, row: Row) -> Result<Row> {
    Ok(row
        .value(&format!("{prefix}mse"), mse(a, b)?)
        .value(&format!("{prefix}psnr"), psnr(a, b, ctx)?)
        .value(&format!("{prefix}ssim"), ssim(a, b, ctx)?))
}

fn prepare(v: Volume3D, cfg: &RunConfig) -> Result<Vec<Slice2D>> {
    let mc = &cfg.metrics;
    let v = match mc.resample {
        Some(spacing) => resample(
            &v,
            &ResampleSpec {
                target_spacing: spacing,
                ..ResampleSpec::default()
            },
        )?,
        None => v,
    };
    let v = if mc.normalize { v.normalize()? } else { v };
    let slices = v.slices();
    match mc.resize {
        Some([h, w]) => slices
            .iter()
            .map(|s| {
                resize_slice(
                    s,
                    &ResizeSpec {
                        target_dims: (h, w),
                        ..ResizeSpec::default()
                    },
                )
            })
            .collect(),
        None => Ok(slices),
    }
}

fn pairs_for(cfg: &RunConfig) -> Result<Vec<PairEntry>> {
    let mc = &cfg.metrics;
    let mut pairs = match (&mc.manifest, &mc.reference_dir, &mc.synthesized_dir) {
        (Some(m), _, _) => PairManifest::load(m)?.pairs,
        (None, Some(r), Some(s)) => pair_dirs(r, s)?,
        _ => {
            return Err(Error::Config(
                "metrics needs either metrics.manifest or both metrics.reference_dir and metrics.synthesized_dir"
                    .into(),
            ))
        }
    };
    pairs.sort_by(|a, b| (&a.subject, a.modality, &a.label).cmp(&(&b.subject, b.modality, &b.label)));
    Ok(pairs)
}

fn group_label(cfg: &RunConfig, p: &PairEntry) -> String {
    p.label
        .clone()
        .or_else(|| cfg.metrics.labels.get(p.modality.tag()).cloned())
        .unwrap_or_else(|| p.modality.tag().to_string())
}

/// MSE / PSNR / SSIM per slice for every reference/synthesized pair, grouped
/// by translation-direction label (the modality tag unless configured).
pub fn run_metrics(cfg: &RunConfig) -> Result<MetricReport> {
    let pairs = pairs_for(cfg)?;
    if pairs.is_empty() {
        return Err(Error::Config("no volume pairs found".into()));
    }
    let per_pair: Vec<Vec<Row>> = pairs
        .par_iter()
        .map(|p| {
            let a = read_nifti(&p.reference)?;
            let b = read_nifti(&p.synthesized)?;
            if a.dims() != b.dims() {
                return Err(Error::Dimension(format!(
                    "{} is {:?} but {} is {:?}",
                    p.reference.display(),
                    a.dims(),
                    p.synthesized.display(),
                    b.dims()
                )));
            }
            let ra = prepare(a, cfg)?;
            let rb = prepare(b, cfg)?;
            let group = group_label(cfg, p);
            ra.iter()
                .zip(&rb)
                .map(|(x, y)| {
                    let row = Row::new(group.clone())
                        .label("subject", &p.subject)
                        .label("modality", p.modality)
                        .label("slice", format!("{:03}", x.slice_index));
                    slice_metrics(x, y, &cfg.metric, "", row)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut inputs = Vec::new();
    for p in &pairs {
        for (role, path) in [("reference", &p.reference), ("synthesized", &p.synthesized)] {
            let mut d = file_digest(path)?;
            d.name = format!("{role}/{}", d.name);
            inputs.push(d);
        }
    }
    let rows = per_pair.into_iter().flatten().collect();
    let mut report = MetricReport::new("metrics", provenance(cfg, inputs)?, rows)
        .note("ssim", format!("{:?}", cfg.metric.ssim_mode))
        .note(
            "protocol",
            "volumes min-max normalized (when enabled), then metrics per axial slice; PSNR of identical slices is inf",
        );
    if let Some([h, w]) = cfg.metrics.resize {
        report = report.note(
            "resize",
            format!("slices stretched to {h}x{w} by bilinear interpolation, aspect ratio not preserved"),
        );
    }
    Ok(report)
}

struct CleanVolume {
    subject: String,
    modality: Modality,
    volume: Volume3D,
}

fn clean_volumes(cfg: &RunConfig) -> Result<(Vec<CleanVolume>, Vec<InputDigest>)> {
    let rc = &cfg.robustness;
    match &rc.input_dir {
        Some(dir) => {
            let index = index_dir(dir)?;
            if index.is_empty() {
                return Err(Error::Config(format!("no volumes in {}", dir.display())));
            }
            let mut vols = Vec::new();
            let mut inputs = Vec::new();
            for ((subject, modality), path) in index {
                vols.push(CleanVolume {
                    volume: read_nifti(&path)?.normalize()?,
                    subject,
                    modality,
                });
                inputs.push(file_digest(&path)?);
            }
            Ok((vols, inputs))
        }
        None => {
            let p = generate_phantom(&cfg.phantom)?;
            let mut vols = Vec::new();
            let mut inputs = Vec::new();
            for &m in &rc.modalities {
                let v = p
                    .volumes
                    .get(&m)
                    .ok_or_else(|| Error::Config(format!("the phantom has no {m} volume")))?;
                inputs.push(volume_digest(format!("phantom:{}_{m}", cfg.phantom.subject_id), v));
                vols.push(CleanVolume {
                    subject: cfg.phantom.subject_id.clone(),
                    modality: m,
                    volume: v.clone(),
                });
            }
            Ok((vols, inputs))
        }
    }
}

type PredKey = (String, Modality, Family, Severity);

fn prediction_index(dir: &std::path::Path) -> Result<BTreeMap<PredKey, PathBuf>> {
    let mut map = BTreeMap::new();
    for path in list_volumes(dir)? {
        let s = stem(&path);
        let parts: Vec<&str> = s.rsplitn(4, '_').collect();
        if parts.len() != 4 {
            return Err(Error::Param(format!(
                "{}: expected <subject>_<modality>_<family>_<severity>",
                path.display()
            )));
        }
        let key = (
            parts[3].to_string(),
            parts[2].parse::<Modality>()?,
            parts[1].parse::<Family>()?,
            parts[0].parse::<Severity>()?,
        );
        map.insert(key, path);
    }
    Ok(map)
}

/// The family × severity grid: every clean slice is corrupted and compared
/// against itself. With `predictions_dir`, model outputs on those corrupted
/// inputs are also scored against the clean slices (`pred_*` columns).
///
/// A volume's noise stream depends on the family and volume only, so the
/// severities of one family share their random draws.
pub fn run_robustness(cfg: &RunConfig) -> Result<RunOutput> {
    let rc = &cfg.robustness;
    if rc.families.is_empty() || rc.severities.is_empty() {
        return Err(Error::Config(
            "robustness needs at least one family and one severity".into(),
        ));
    }
    let (vols, mut inputs) = clean_volumes(cfg)?;
    let mut cells: Vec<(Family, Severity, CorruptionParams)> = Vec::new();
    for &f in &rc.families {
        for &s in &rc.severities {
            cells.push((f, s, rc.cell_params(f, s)?));
        }
    }

    let predictions = match &rc.predictions_dir {
        Some(dir) => {
            let index = prediction_index(dir)?;
            let mut missing = Vec::new();
            for v in &vols {
                for &(f, s, _) in &cells {
                    if !index.contains_key(&(v.subject.clone(), v.modality, f, s)) {
                        missing.push(format!("{}_{}_{f}_{s}", v.subject, v.modality));
                    }
                }
            }
            if !missing.is_empty() {
                return Err(Error::Pairing { orphans: missing });
            }
            for path in index.values() {
                inputs.push(file_digest(path)?);
            }
            Some(index)
        }
        None => None,
    };

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..vols.len()).map(move |v| (c, v)))
        .collect();
    let per_job: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(ci, vi)| {
            let (family, severity, params) = cells[ci];
            let cv = &vols[vi];
            let family_idx = crate::corruption::Family::ALL
                .iter()
                .position(|&f| f == family)
                .unwrap_or(0);
            let seed = derive_seed(derive_seed(cfg.seed, 1 + family_idx as u64), vi as u64);
            let spec = CorruptionSpec::new(family, severity, seed).with_params(params);
            let (corrupted, _) = corrupt_volume(&spec, &rc.table, &cv.volume)?;
            let pred = match &predictions {
                Some(index) => {
                    let path = &index[&(cv.subject.clone(), cv.modality, family, severity)];
                    let p = read_nifti(path)?;
                    if p.dims() != cv.volume.dims() {
                        return Err(Error::Dimension(format!(
                            "{} is {:?}, expected {:?}",
                            path.display(),
                            p.dims(),
                            cv.volume.dims()
                        )));
                    }
                    Some(p.normalize()?.slices())
                }
                None => None,
            };
            let clean = cv.volume.slices();
            let corr = corrupted.slices();
            clean
                .iter()
                .enumerate()
                .map(|(z, a)| {
                    let row = Row::new(format!("{family}/{severity}"))
                        .label("family", family)
                        .label("severity", severity)
                        .label("subject", &cv.subject)
                        .label("modality", cv.modality)
                        .label("slice", format!("{:03}", a.slice_index));
                    let row = slice_metrics(a, &corr[z], &cfg.metric, "", row)?;
                    match &pred {
                        Some(p) => slice_metrics(a, &p[z], &cfg.metric, "pred_", row),
                        None => Ok(row),
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let rows = per_job.into_iter().flatten().collect();
    let mut report = MetricReport::new("robustness", provenance(cfg, inputs)?, rows);

    let mean = |group: &str, metric: &str| report.aggregate_for(group, metric).and_then(|a| a.mean.as_f64());
    let mut grid = Vec::new();
    let mut monotone = serde_json::Map::new();
    for &f in &rc.families {
        let mut series: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for &(cf, s, params) in cells.iter().filter(|c| c.0 == f) {
            let g = format!("{cf}/{s}");
            let mut cell = json!({
                "family": cf,
                "severity": s,
                "params": params,
                "mse": mean(&g, "mse"),
                "psnr": report.aggregate_for(&g, "psnr").map(|a| a.mean),
                "ssim": mean(&g, "ssim"),
            });
            if predictions.is_some() {
                cell["prediction"] = json!({
                    "mse": mean(&g, "pred_mse"),
                    "psnr": report.aggregate_for(&g, "pred_psnr").map(|a| a.mean),
                    "ssim": mean(&g, "pred_ssim"),
                });
            }
            grid.push(cell);
            for m in ["psnr", "ssim"] {
                series.entry(m).or_default().push(mean(&g, m).unwrap_or(f64::NAN));
            }
        }
        let strictly_down = |v: &Vec<f64>| v.windows(2).all(|w| w[0] > w[1]);
        monotone.insert(
            f.to_string(),
            json!({ "psnr": strictly_down(&series["psnr"]), "ssim": strictly_down(&series["ssim"]) }),
        );
    }
    let plot = severity_curves(&report, &rc.families, &rc.severities);
    report = report
        .note("domain", "corruptions applied to [0, 1]-normalized 2-D axial slices")
        .note(
            "prediction",
            if predictions.is_some() {
                "pred_* columns score externally supplied model outputs against the clean slices"
            } else {
                "no model outputs supplied; only corrupted-input columns are reported"
            },
        )
        .with_extra(json!({ "grid": grid, "strictly_decreasing": monotone }));
    let mut out = RunOutput::new(report);
    out.files.push(("robustness_severity.svg".into(), plot));
    Ok(out)
}
