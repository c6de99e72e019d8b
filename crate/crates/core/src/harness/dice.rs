use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::pairing::list_volumes;
use super::{file_digest, provenance, summarize, MetricReport, MetricValue, Row, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::dice;
use crate::model::nifti::{read_nifti, stem};
use crate::model::{Mask2D, Volume3D};
use crate::phantom::generate_phantom;

/// Axial slices of a 0/1 volume as masks.
pub(crate) fn volume_masks(v: &Volume3D, name: &str) -> Result<Vec<Mask2D>> {
    v.slices()
        .iter()
        .map(|s| {
            let data = s
                .data()
                .iter()
                .map(|&x| {
                    if x == 0.0 {
                        Ok(0u8)
                    } else if x == 1.0 {
                        Ok(1u8)
                    } else {
                        Err(Error::Param(format!("{name}: mask value {x} is not 0 or 1")))
                    }
                })
                .collect::<Result<Vec<u8>>>()?;
            Mask2D::new(s.height(), s.width(), data, name)
        })
        .collect()
}

fn mask_rows(group: &str, pred: &[Mask2D], truth: &[Mask2D]) -> Result<Vec<Row>> {
    pred.iter()
        .zip(truth)
        .enumerate()
        .map(|(z, (p, t))| {
            let v = match dice(p, t) {
                Ok(d) => MetricValue::Finite(d),
                Err(Error::UndefinedDice) => MetricValue::Undefined,
                Err(e) => return Err(e),
            };
            Ok(Row::new(group)
                .label("mask", group)
                .label("slice", format!("{z:03}"))
                .value("dice", v)
                .value("truth_pixels", t.count() as f64)
                .value("predicted_pixels", p.count() as f64))
        })
        .collect()
}

fn file_pairs(pred_dir: &Path, truth_dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let preds: BTreeMap<String, PathBuf> = list_volumes(pred_dir)?.into_iter().map(|p| (stem(&p), p)).collect();
    let truths: BTreeMap<String, PathBuf> = list_volumes(truth_dir)?.into_iter().map(|p| (stem(&p), p)).collect();
    let mut orphans: Vec<String> = preds
        .iter()
        .filter(|(k, _)| !truths.contains_key(*k))
        .chain(truths.iter().filter(|(k, _)| !preds.contains_key(*k)))
        .map(|(_, p)| p.display().to_string())
        .collect();
    orphans.sort();
    if !orphans.is_empty() {
        return Err(Error::Pairing { orphans });
    }
    if truths.is_empty() {
        return Err(Error::Config(format!("no mask volumes in {}", truth_dir.display())));
    }
    Ok(truths
        .into_iter()
        .map(|(name, t)| {
            let p = preds[&name].clone();
            (name, p, t)
        })
        .collect())
}

/// Per-slice Dice between predicted and ground-truth mask stacks. Slices
/// where both masks are empty are reported as undefined and left out of
/// the mean; their number is the aggregate's `undefined` count.
pub fn run_dice_eval(cfg: &RunConfig) -> Result<MetricReport> {
    let dc = &cfg.dice;
    let (rows, inputs, source) = match (&dc.prediction_dir, &dc.truth_dir) {
        (Some(pd), Some(td)) => {
            let pairs = file_pairs(pd, td)?;
            let per: Vec<Vec<Row>> = pairs
                .par_iter()
                .map(|(name, p, t)| {
                    let pv = read_nifti(p)?;
                    let tv = read_nifti(t)?;
                    if pv.dims() != tv.dims() {
                        return Err(Error::Dimension(format!(
                            "{name}: prediction {:?} vs truth {:?}",
                            pv.dims(),
                            tv.dims()
                        )));
                    }
                    mask_rows(name, &volume_masks(&pv, name)?, &volume_masks(&tv, name)?)
                })
                .collect::<Result<_>>()?;
            let mut inputs = Vec::new();
            for (_, p, t) in &pairs {
                for (role, path) in [("prediction", p), ("truth", t)] {
                    let mut d = file_digest(path)?;
                    d.name = format!("{role}/{}", d.name);
                    inputs.push(d);
                }
            }
            (
                per.into_iter().flatten().collect::<Vec<_>>(),
                inputs,
                "files".to_string(),
            )
        }
        (None, None) => {
            let p = generate_phantom(&cfg.phantom)?;
            let truth = &p.lesion_masks;
            let pred: Vec<Mask2D> = truth
                .iter()
                .map(|m| (0..dc.phantom_erosion).fold(m.clone(), |acc, _| acc.eroded()))
                .collect();
            let rows = mask_rows("lesion", &pred, truth)?;
            (
                rows,
                Vec::new(),
                format!(
                    "phantom lesion masks eroded {} time(s) vs the masks themselves",
                    dc.phantom_erosion
                ),
            )
        }
        _ => {
            return Err(Error::Config(
                "dice needs both dice.prediction_dir and dice.truth_dir, or neither".into(),
            ))
        }
    };
    let all: Vec<MetricValue> = rows.iter().filter_map(|r| r.values.get("dice").copied()).collect();
    let (mean, std, count, undefined) = summarize(&all);
    let overall = super::Aggregate {
        group: "all".into(),
        metric: "dice".into(),
        mean,
        std,
        count,
        undefined,
    };
    let mut report = MetricReport::new("dice", provenance(cfg, inputs)?, rows)
        .note("source", source)
        .note(
            "undefined",
            "slices with empty prediction and truth are undefined and excluded from the mean",
        );
    let per_group: serde_json::Map<String, serde_json::Value> = report
        .aggregates
        .iter()
        .filter(|a| a.metric == "dice")
        .map(|a| (a.group.clone(), json!(a.mean_pm_std())))
        .collect();
    report.extra = json!({
        "dice": overall.mean_pm_std(),
        "mean": overall.mean,
        "std": overall.std,
        "count": overall.count,
        "undefined": overall.undefined,
        "per_mask": per_group,
    });
    Ok(report)
}
