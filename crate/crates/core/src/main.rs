use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use synth_eval::corruption::{Family, Severity};
use synth_eval::harness::{execute, init_threads, Command, LossInputs, OutputFormat, RunConfig};
use synth_eval::{Error, Modality, Result};

/// Deterministic evaluation runs for multi-contrast MRI synthesis.
#[derive(Parser)]
#[command(name = "synth-eval", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `out_dir` from the config, else ./out).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write phantom volumes, masks and embeddings.
    Phantom {
        #[command(flatten)]
        common: Common,
    },
    /// Corrupt one volume with a family at a severity.
    Corrupt {
        #[command(flatten)]
        common: Common,
        /// Volume to corrupt (default: the phantom).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Phantom modality when no input is given.
        #[arg(long)]
        modality: Option<Modality>,
        #[arg(long)]
        family: Option<Family>,
        #[arg(long)]
        severity: Option<Severity>,
        /// Parameter override, e.g. `sigma=0.1`; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// MSE / PSNR / SSIM between reference and synthesized volumes.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reference_dir: Option<PathBuf>,
        #[arg(long)]
        synthesized_dir: Option<PathBuf>,
        /// JSON pairing manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Family × severity corruption grid.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input_dir: Option<PathBuf>,
        /// Model outputs on the corrupted inputs.
        #[arg(long)]
        predictions_dir: Option<PathBuf>,
    },
    /// Per-slice Dice between mask stacks.
    Dice {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        prediction_dir: Option<PathBuf>,
        #[arg(long)]
        truth_dir: Option<PathBuf>,
    },
    /// Loss values and finite-difference gradient checks.
    Losses {
        #[command(flatten)]
        common: Common,
        /// `identical` evaluates every loss at its minimum.
        #[arg(long, value_parser = ["phantom", "identical"])]
        inputs: Option<String>,
    },
    /// PCA, similarity summary and prototype classification of embeddings.
    EmbedAnalyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        prototypes: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(f) = common.format {
        cfg.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
            Format::Both => OutputFormat::Both,
        };
    }
    cfg.plots |= common.plots;
    let out = common
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

type ConfigEdit<'a> = Box<dyn Fn(&mut RunConfig) -> Result<()> + 'a>;

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let (command, common, cfg_edit): (Command, &Common, ConfigEdit<'_>) = match &cli.command {
        Cmd::Phantom { common } => (Command::Phantom, common, Box::new(|_| Ok(()))),
        Cmd::Corrupt {
            common,
            input,
            modality,
            family,
            severity,
            params,
        } => (
            Command::Corrupt,
            common,
            Box::new(move |c| {
                let cc = &mut c.corrupt;
                if input.is_some() {
                    cc.input = input.clone();
                }
                cc.modality = modality.unwrap_or(cc.modality);
                cc.family = family.unwrap_or(cc.family);
                cc.severity = severity.unwrap_or(cc.severity);
                for kv in params {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::Param(format!("--param {kv:?}: expected KEY=VALUE")))?;
                    let v: f64 = v
                        .parse()
                        .map_err(|_| Error::Param(format!("--param {kv:?}: value is not a number")))?;
                    cc.params.insert(k.to_string(), v);
                }
                Ok(())
            }),
        ),
        Cmd::Metrics {
            common,
            reference_dir,
            synthesized_dir,
            manifest,
        } => (
            Command::Metrics,
            common,
            Box::new(move |c| {
                let m = &mut c.metrics;
                if reference_dir.is_some() {
                    m.reference_dir = reference_dir.clone();
                }
                if synthesized_dir.is_some() {
                    m.synthesized_dir = synthesized_dir.clone();
                }
                if manifest.is_some() {
                    m.manifest = manifest.clone();
                }
                Ok(())
            }),
        ),
        Cmd::Robustness {
            common,
            input_dir,
            predictions_dir,
        } => (
            Command::Robustness,
            common,
            Box::new(move |c| {
                if input_dir.is_some() {
                    c.robustness.input_dir = input_dir.clone();
                }
                if predictions_dir.is_some() {
                    c.robustness.predictions_dir = predictions_dir.clone();
                }
                Ok(())
            }),
        ),
        Cmd::Dice {
            common,
            prediction_dir,
            truth_dir,
        } => (
            Command::Dice,
            common,
            Box::new(move |c| {
                if prediction_dir.is_some() {
                    c.dice.prediction_dir = prediction_dir.clone();
                }
                if truth_dir.is_some() {
                    c.dice.truth_dir = truth_dir.clone();
                }
                Ok(())
            }),
        ),
        Cmd::Losses { common, inputs } => (
            Command::Losses,
            common,
            Box::new(move |c| {
                match inputs.as_deref() {
                    Some("identical") => c.losses.inputs = LossInputs::Identical,
                    Some(_) => c.losses.inputs = LossInputs::Phantom,
                    None => {}
                }
                Ok(())
            }),
        ),
        Cmd::EmbedAnalyze {
            common,
            input,
            prototypes,
            k,
        } => (
            Command::EmbedAnalyze,
            common,
            Box::new(move |c| {
                if input.is_some() {
                    c.embed.input = input.clone();
                }
                if prototypes.is_some() {
                    c.embed.prototypes = prototypes.clone();
                }
                c.embed.k = k.unwrap_or(c.embed.k);
                Ok(())
            }),
        ),
    };
    let (mut cfg, out_dir) = load(common)?;
    cfg_edit(&mut cfg)?;
    let (_, written) = execute(command, &cfg, &out_dir)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("synth-eval: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
