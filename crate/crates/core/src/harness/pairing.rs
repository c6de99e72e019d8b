//! Matching reference and synthesized volumes by file name or manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::nifti::stem;
use crate::model::Modality;

/// `.nii`, `.nii.gz` and `.hdr` files directly inside `dir`, sorted by name.
pub fn list_volumes(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && (name.ends_with(".nii") || name.ends_with(".nii.gz") || name.ends_with(".hdr")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Split `<subject>_<modality>` at the last underscore.
pub fn parse_name(path: &Path) -> Result<(String, Modality)> {
    let s = stem(path);
    let (subject, tag) = s
        .rsplit_once('_')
        .ok_or_else(|| Error::Param(format!("{}: expected <subject>_<modality>", path.display())))?;
    if subject.is_empty() {
        return Err(Error::Param(format!("{}: empty subject id", path.display())));
    }
    let modality = tag
        .parse()
        .map_err(|_| Error::Param(format!("{}: unknown modality {tag:?}", path.display())))?;
    Ok((subject.to_string(), modality))
}

/// Volumes of a directory keyed by `(subject, modality)`.
pub fn index_dir(dir: &Path) -> Result<BTreeMap<(String, Modality), PathBuf>> {
    let mut map = BTreeMap::new();
    for path in list_volumes(dir)? {
        let key = parse_name(&path)?;
        if let Some(prev) = map.insert(key.clone(), path.clone()) {
            return Err(Error::Param(format!(
                "{} and {} both name {}_{}",
                prev.display(),
                path.display(),
                key.0,
                key.1
            )));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub subject: String,
    pub modality: Modality,
    pub reference: PathBuf,
    pub synthesized: PathBuf,
    /// Group label, e.g. the translation direction `"T1->T2"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairManifest {
    pub pairs: Vec<PairEntry>,
}

impl PairManifest {
    /// Relative paths are taken relative to the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: PairManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut m.pairs {
            if p.reference.is_relative() {
                p.reference = base.join(&p.reference);
            }
            if p.synthesized.is_relative() {
                p.synthesized = base.join(&p.synthesized);
            }
        }
        Ok(m)
    }
}

/// Pair two directories; any volume without a partner is an orphan.
pub fn pair_dirs(reference: &Path, synthesized: &Path) -> Result<Vec<PairEntry>> {
    let refs = index_dir(reference)?;
    let syns = index_dir(synthesized)?;
    let mut orphans: Vec<String> = Vec::new();
    for (key, path) in &refs {
        if !syns.contains_key(key) {
            orphans.push(path.display().to_string());
        }
    }
    for (key, path) in &syns {
        if !refs.contains_key(key) {
            orphans.push(path.display().to_string());
        }
    }
    if !orphans.is_empty() {
        return Err(Error::Pairing { orphans });
    }
    Ok(refs
        .into_iter()
        .map(|((subject, modality), reference)| PairEntry {
            synthesized: syns[&(subject.clone(), modality)].clone(),
            subject,
            modality,
            reference,
            label: None,
        })
        .collect())
}
