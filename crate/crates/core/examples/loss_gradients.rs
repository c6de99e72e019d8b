//! Contrastive and reconstruction losses with a finite-difference check.
//!
//! cargo run --example loss_gradients

use synth_eval::gradcheck::check;
use synth_eval::losses::{loss_infonce, loss_semantic, ContrastiveConfig};
use synth_eval::{EmbeddingBatch, EmbeddingItem, Modality};

fn main() -> synth_eval::Result<()> {
    // Two slices, two modalities each, pairwise orthogonal: every anchor has
    // one positive among three candidates, so the loss is 4 ln 3 at τ = 1.
    let e = |i: usize| (0..4).map(|d| (d == i) as u8 as f64).collect::<Vec<_>>();
    let batch = EmbeddingBatch::new(
        4,
        vec![
            EmbeddingItem::new("s", 0, Modality::T1, e(0)),
            EmbeddingItem::new("s", 0, Modality::T2, e(1)),
            EmbeddingItem::new("s", 1, Modality::T1, e(2)),
            EmbeddingItem::new("s", 1, Modality::T2, e(3)),
        ],
    )?;
    let cfg = ContrastiveConfig {
        temperature: 1.0,
        normalize: true,
    };
    let l = loss_infonce(&batch, &cfg)?;
    println!("InfoNCE = {:.6} (4 ln 3 = {:.6})", l.value, 4.0 * 3f64.ln());

    let x: Vec<f64> = batch.vectors().flatten().copied().collect();
    let analytic: Vec<f64> = l.grad.concat();
    let coords: Vec<usize> = (0..x.len()).collect();
    let r = check(&x, &analytic, &coords, 1e-5, |v| {
        let b = batch.with_vectors(v.chunks(4).map(<[f64]>::to_vec).collect()).unwrap();
        loss_infonce(&b, &cfg).unwrap().value
    });
    println!(
        "InfoNCE gradient: rel error {:.2e} over {} coords",
        r.rel_error, r.coords_checked
    );

    let vision = [0.3, -0.2, 0.9];
    let text = [0.1, 0.0, 1.0];
    let s = loss_semantic(&vision, &text)?;
    let r = check(&vision, &s.grad, &[0, 1, 2], 1e-5, |v| {
        loss_semantic(v, &text).unwrap().value
    });
    println!("semantic = {:.6}, gradient rel error {:.2e}", s.value, r.rel_error);
    Ok(())
}
