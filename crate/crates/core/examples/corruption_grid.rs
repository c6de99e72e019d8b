//! Mean corrupted-input PSNR / SSIM for every family and severity on the
//! standard phantom (T1).
//!
//! cargo run --example corruption_grid

use synth_eval::corruption::{corrupt_volume, CorruptionSpec, Family, Severity, SeverityTable};
use synth_eval::metrics::{psnr, ssim, MetricContext};
use synth_eval::phantom::{generate_phantom, PhantomSpec};
use synth_eval::Modality;

fn main() -> synth_eval::Result<()> {
    let p = generate_phantom(&PhantomSpec::standard())?;
    let clean = p.volume(Modality::T1);
    let table = SeverityTable::default();
    let ctx = MetricContext::default();

    println!("{:<12}{:>20}{:>20}{:>20}", "family", "minor", "moderate", "severe");
    for family in Family::ALL {
        let mut line = format!("{family:<12}");
        for severity in Severity::ALL {
            let spec = CorruptionSpec::new(family, severity, 7);
            let (noisy, _) = corrupt_volume(&spec, &table, clean)?;
            let (mut ps, mut ss) = (0.0, 0.0);
            let pairs: Vec<_> = clean.slices().into_iter().zip(noisy.slices()).collect();
            for (a, b) in &pairs {
                ps += psnr(a, b, &ctx)?;
                ss += ssim(a, b, &ctx)?;
            }
            let n = pairs.len() as f64;
            line += &format!("{:>20}", format!("{:.2} dB / {:.3}", ps / n, ss / n));
        }
        println!("{line}");
    }
    Ok(())
}
