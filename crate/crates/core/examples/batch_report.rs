//! Drive the harness from code: a robustness grid written as CSV + JSON.
//!
//! cargo run --example batch_report -- [out_dir]

use std::path::PathBuf;

use synth_eval::harness::{execute, Command, RunConfig};

fn main() -> synth_eval::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("synth-eval-robustness"));
    let cfg = RunConfig::from_toml(
        r#"
        seed = 11
        plots = true
        [robustness]
        modalities = ["T1", "T2"]
        [[robustness.overrides]]
        family = "gaussian"
        severity = "minor"
        params = { sigma = 0.02 }
        "#,
    )?;
    let (run, written) = execute(Command::Robustness, &cfg, &out)?;
    for a in run.report.aggregates.iter().filter(|a| a.metric == "psnr") {
        println!("{:<22} PSNR {}", a.group, a.mean_pm_std());
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
