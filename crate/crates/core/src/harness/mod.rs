//! Deterministic batch runs producing versioned CSV/JSON reports.
//!
//! Each `run_*` function is a pure function of its [`RunConfig`] and input
//! files. Work is spread over rayon, but rows are always assembled in key
//! order, so reports are byte-identical across thread counts.

mod config;
mod corrupt;
mod dice;
mod embed;
mod evaluate;
mod losses;
mod pairing;
mod phantom;
pub mod plot;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{
    resolve_params, CellOverride, CorruptConfig, DiceConfig, EmbedConfig, LossInputs, LossesConfig, MetricsConfig,
    RobustnessConfig, RunConfig,
};
pub use corrupt::run_corrupt;
pub use dice::run_dice_eval;
pub use embed::run_embed_analysis;
pub use evaluate::{run_metrics, run_robustness};
pub use losses::{run_loss_diagnostics, LossCheckSummary};
pub use pairing::{index_dir, list_volumes, pair_dirs, parse_name, PairEntry, PairManifest};
pub use phantom::run_phantom;
pub use report::{
    aggregate, sha256_hex, summarize, Aggregate, InputDigest, MetricReport, MetricValue, OutputFormat, Provenance, Row,
    SCHEMA_VERSION,
};

use crate::error::{Error, Result};
use crate::model::Volume3D;

pub const TOOL_NAME: &str = "synth-eval";
pub const THREADS_ENV: &str = "SYNTH_EVAL_THREADS";

/// Size the global rayon pool from `SYNTH_EVAL_THREADS` (default: all cores).
/// Returns the thread count in effect.
pub fn init_threads() -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
        // A pool built earlier in the process wins; that is fine for callers.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Run modes of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Phantom,
    Corrupt,
    Metrics,
    Robustness,
    Dice,
    Losses,
    EmbedAnalyze,
}

impl Command {
    pub fn kind(self) -> &'static str {
        match self {
            Command::Phantom => "phantom",
            Command::Corrupt => "corrupt",
            Command::Metrics => "metrics",
            Command::Robustness => "robustness",
            Command::Dice => "dice",
            Command::Losses => "losses",
            Command::EmbedAnalyze => "embed",
        }
    }
}

/// A report plus any auxiliary text files (CSV tables, SVG plots).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricReport,
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    pub fn new(report: MetricReport) -> Self {
        Self {
            report,
            files: Vec::new(),
        }
    }
}

/// Run `cmd`, write everything under `out_dir`, and return the written paths.
///
/// A loss diagnostic whose gradient checks fail still writes its report and
/// then returns [`Error::Invariant`].
pub fn execute(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<(RunOutput, Vec<PathBuf>)> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let output = match cmd {
        Command::Phantom => run_phantom(&cfg, out_dir)?,
        Command::Corrupt => run_corrupt(&cfg, out_dir)?,
        Command::Metrics => RunOutput::new(run_metrics(&cfg)?),
        Command::Robustness => run_robustness(&cfg)?,
        Command::Dice => RunOutput::new(run_dice_eval(&cfg)?),
        Command::Losses => run_loss_diagnostics(&cfg)?,
        Command::EmbedAnalyze => run_embed_analysis(&cfg)?,
    };
    let mut written = output.report.emit(out_dir, cfg.format)?;
    for (name, text) in &output.files {
        let is_plot = name.ends_with(".svg");
        if is_plot && !cfg.plots {
            continue;
        }
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    if cmd == Command::Losses {
        let all_pass = output
            .report
            .extra
            .get("all_pass")
            .and_then(|v| v.as_bool())
            .unwrap_or(false);
        if !all_pass {
            return Err(Error::Invariant("gradient checks failed; see losses report".into()));
        }
    }
    Ok((output, written))
}

pub(crate) fn provenance(cfg: &RunConfig, inputs: Vec<InputDigest>) -> Result<Provenance> {
    Ok(Provenance {
        tool: TOOL_NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.to_value()?,
        inputs,
    })
}

/// Digest of a file, named by its file name only so that reports do not
/// depend on where the inputs live.
pub(crate) fn file_digest(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(InputDigest::of_bytes(name, &bytes))
}

/// Digest of an in-memory volume: dims, then voxels as little-endian f64.
pub(crate) fn volume_digest(name: impl Into<String>, v: &Volume3D) -> InputDigest {
    let mut bytes: Vec<u8> = v.dims().iter().flat_map(|d| (*d as u64).to_le_bytes()).collect();
    bytes.extend(v.data().iter().flat_map(|x| x.to_le_bytes()));
    InputDigest::of_bytes(name, &bytes)
}
