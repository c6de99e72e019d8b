//! TOML run configuration. Every section has defaults, so an empty file
//! (or no file) is a valid config that runs against the standard phantom.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::{CorruptionParams, Family, Severity, SeverityTable};
use crate::error::{Error, Result};
use crate::losses::{DecoderLossConfig, EncoderLossConfig};
use crate::metrics::MetricContext;
use crate::model::Modality;
use crate::phantom::{EmbeddingSpec, PhantomSpec};

use super::report::OutputFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the embedded config, so moving the output leaves reports unchanged.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
    /// Also write SVG figures next to the reports.
    pub plots: bool,
    pub metric: MetricContext,
    pub phantom: PhantomSpec,
    pub embeddings: EmbeddingSpec,
    pub corrupt: CorruptConfig,
    pub metrics: MetricsConfig,
    pub robustness: RobustnessConfig,
    pub dice: DiceConfig,
    pub losses: LossesConfig,
    pub embed: EmbedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            out_dir: None,
            format: OutputFormat::Both,
            plots: false,
            metric: MetricContext::default(),
            phantom: PhantomSpec::standard(),
            embeddings: EmbeddingSpec::default(),
            corrupt: CorruptConfig::default(),
            metrics: MetricsConfig::default(),
            robustness: RobustnessConfig::default(),
            dice: DiceConfig::default(),
            losses: LossesConfig::default(),
            embed: EmbedConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The phantom always follows the run seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.phantom.seed = self.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.metric.validate()?;
        self.phantom.validate()?;
        self.robustness.table.validate()?;
        self.corrupt.table.validate()?;
        if self.losses.instances == 0 || self.losses.coords == 0 {
            return Err(Error::Config("losses.instances and losses.coords must be >= 1".into()));
        }
        if !(self.losses.h > 0.0) || !(self.losses.tolerance > 0.0) {
            return Err(Error::Config("losses.h and losses.tolerance must be > 0".into()));
        }
        if !(self.embed.temperature > 0.0) {
            return Err(Error::Config("embed.temperature must be > 0".into()));
        }
        Ok(())
    }

    /// JSON form embedded in reports.
    pub fn to_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptConfig {
    /// Volume to corrupt; the phantom volume of `modality` when absent.
    pub input: Option<PathBuf>,
    pub modality: Modality,
    pub family: Family,
    pub severity: Severity,
    /// `key = value` overrides on top of the severity default.
    pub params: BTreeMap<String, f64>,
    pub table: SeverityTable,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        Self {
            input: None,
            modality: Modality::T1,
            family: Family::GaussianNoise,
            severity: Severity::Severe,
            params: BTreeMap::new(),
            table: SeverityTable::default(),
        }
    }
}

/// Resolve severity defaults plus `key = value` overrides.
pub fn resolve_params(
    table: &SeverityTable,
    family: Family,
    severity: Severity,
    overrides: &BTreeMap<String, f64>,
) -> Result<CorruptionParams> {
    let mut p = table.params(family, severity);
    for (k, v) in overrides {
        p.set(k, &v.to_string())?;
    }
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub reference_dir: Option<PathBuf>,
    pub synthesized_dir: Option<PathBuf>,
    /// JSON pairing manifest; takes precedence over directory matching.
    pub manifest: Option<PathBuf>,
    /// Modality tag to group label, e.g. `T2 = "T1->T2"`.
    pub labels: BTreeMap<String, String>,
    /// Min-max normalize each volume before slicing.
    pub normalize: bool,
    /// Resample to this spacing (mm) before slicing.
    pub resample: Option<[f64; 3]>,
    /// Resize every slice to `(h, w)`.
    pub resize: Option<[usize; 2]>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            reference_dir: None,
            synthesized_dir: None,
            manifest: None,
            labels: BTreeMap::new(),
            normalize: true,
            resample: None,
            resize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellOverride {
    pub family: Family,
    pub severity: Severity,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    /// Clean volumes named `<subject>_<modality>.nii[.gz]`; the phantom when absent.
    pub input_dir: Option<PathBuf>,
    /// Phantom modalities to evaluate.
    pub modalities: Vec<Modality>,
    pub families: Vec<Family>,
    pub severities: Vec<Severity>,
    pub table: SeverityTable,
    pub overrides: Vec<CellOverride>,
    /// Model outputs on corrupted inputs, named
    /// `<subject>_<modality>_<family>_<severity>.nii[.gz]`.
    pub predictions_dir: Option<PathBuf>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            modalities: Modality::PHANTOM.to_vec(),
            families: Family::ALL.to_vec(),
            severities: Severity::ALL.to_vec(),
            table: SeverityTable::default(),
            overrides: Vec::new(),
            predictions_dir: None,
        }
    }
}

impl RobustnessConfig {
    pub fn cell_params(&self, family: Family, severity: Severity) -> Result<CorruptionParams> {
        let empty = BTreeMap::new();
        let overrides = self
            .overrides
            .iter()
            .rev()
            .find(|o| o.family == family && o.severity == severity)
            .map(|o| &o.params)
            .unwrap_or(&empty);
        resolve_params(&self.table, family, severity, overrides)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiceConfig {
    /// Predicted mask volumes; matched to `truth_dir` by file name.
    pub prediction_dir: Option<PathBuf>,
    pub truth_dir: Option<PathBuf>,
    /// Without directories: phantom lesion masks as truth, eroded this many
    /// times as the prediction.
    pub phantom_erosion: usize,
}

impl Default for DiceConfig {
    fn default() -> Self {
        Self {
            prediction_dir: None,
            truth_dir: None,
            phantom_erosion: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossInputs {
    /// Phantom embeddings, slices and seeded random feature maps.
    Phantom,
    /// Every pair of compared inputs identical.
    Identical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossesConfig {
    pub inputs: LossInputs,
    /// Independent instances per loss.
    pub instances: usize,
    /// Coordinates probed per gradient check.
    pub coords: usize,
    pub h: f64,
    pub tolerance: f64,
    /// Feature-map levels as `[channels, height, width]`.
    pub featuremap_levels: Vec<[usize; 3]>,
    /// Subjects / slices of the phantom embedding batch.
    pub subjects: usize,
    pub slices: usize,
    pub encoder: EncoderLossConfig,
    pub decoder: DecoderLossConfig,
}

impl Default for LossesConfig {
    fn default() -> Self {
        Self {
            inputs: LossInputs::Phantom,
            instances: 4,
            coords: 24,
            h: 1e-5,
            tolerance: 1e-4,
            featuremap_levels: vec![[4, 8, 8], [8, 4, 4]],
            subjects: 2,
            slices: 4,
            encoder: EncoderLossConfig::default(),
            decoder: DecoderLossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// Embedding JSON; generated from the phantom when absent.
    pub input: Option<PathBuf>,
    /// Embedding JSON whose items (averaged per modality) are the prototypes;
    /// class means of the input when absent.
    pub prototypes: Option<PathBuf>,
    pub k: usize,
    pub temperature: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            input: None,
            prototypes: None,
            k: 2,
            temperature: 0.07,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            r#"
            seed = 7
            format = "json"
            [metric]
            data_range = 2.0
            ssim_mode = { mode = "windowed", window = 7, sigma = 1.0 }
            [corrupt]
            family = "motion"
            severity = "minor"
            params = { line_fraction = 0.1 }
            [[robustness.overrides]]
            family = "gaussian"
            severity = "severe"
            params = { sigma = 0.0 }
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.format, OutputFormat::Json);
        assert_eq!(c.metric.data_range, 2.0);
        assert_eq!(c.metric.k1, 0.01);
        assert_eq!(
            c.robustness
                .cell_params(Family::GaussianNoise, Severity::Severe)
                .unwrap(),
            CorruptionParams::Gaussian { sigma: 0.0 }
        );
        let p = resolve_params(
            &c.corrupt.table,
            c.corrupt.family,
            c.corrupt.severity,
            &c.corrupt.params,
        )
        .unwrap();
        assert_eq!(
            p,
            CorruptionParams::Motion {
                line_fraction: 0.1,
                max_shift_px: 1.0
            }
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("sede = 1"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[phantom]\ndimz = [1,2,3]").is_err());
    }

    #[test]
    fn out_dir_not_embedded() {
        let c = RunConfig {
            out_dir: Some("/tmp/x".into()),
            ..RunConfig::default()
        };
        let v = c.to_value().unwrap();
        assert!(v.get("out_dir").is_none());
        assert!(v.get("seed").is_some());
    }
}
