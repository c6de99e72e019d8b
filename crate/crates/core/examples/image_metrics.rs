//! Fidelity metrics on a pair of small synthetic slices.
//!
//! cargo run --example image_metrics

use synth_eval::metrics::{cosine_similarity, dice, mse, psnr, ssim, MetricContext, SsimMode};
use synth_eval::{Mask2D, Slice2D};

fn main() -> synth_eval::Result<()> {
    let reference = Slice2D::from_fn(32, 32, |r, c| {
        ((r as f64 - 16.0).hypot(c as f64 - 16.0) / 23.0).min(1.0)
    })?;
    let synthesized = reference.map(|v| (0.9 * v + 0.05).clamp(0.0, 1.0));

    let global = MetricContext::default();
    let windowed = MetricContext {
        ssim_mode: SsimMode::windowed(),
        ..MetricContext::default()
    };
    println!("MSE              {:.6}", mse(&reference, &synthesized)?);
    println!("PSNR             {:.3} dB", psnr(&reference, &synthesized, &global)?);
    println!("SSIM (global)    {:.6}", ssim(&reference, &synthesized, &global)?);
    println!("SSIM (11x11 win) {:.6}", ssim(&reference, &synthesized, &windowed)?);
    println!("PSNR identical   {}", psnr(&reference, &reference, &global)?);

    let truth = Mask2D::new(4, 4, vec![0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0], "lesion")?;
    let pred = Mask2D::new(4, 4, vec![0, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0], "lesion")?;
    println!("Dice             {:.4}", dice(&pred, &truth)?);
    println!(
        "cosine           {:.4}",
        cosine_similarity(&[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0])?
    );
    Ok(())
}
