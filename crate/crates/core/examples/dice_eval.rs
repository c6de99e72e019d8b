//! Dice of eroded phantom lesion masks against the originals.
//!
//! cargo run --example dice_eval

use synth_eval::harness::summarize;
use synth_eval::harness::MetricValue;
use synth_eval::metrics::dice;
use synth_eval::phantom::{generate_phantom, PhantomSpec};
use synth_eval::Error;

fn main() -> synth_eval::Result<()> {
    let p = generate_phantom(&PhantomSpec::standard())?;
    let mut values = Vec::new();
    for (z, truth) in p.lesion_masks.iter().enumerate() {
        let pred = truth.eroded();
        let v = match dice(&pred, truth) {
            Ok(d) => MetricValue::Finite(d),
            Err(Error::UndefinedDice) => MetricValue::Undefined,
            Err(e) => return Err(e),
        };
        if let MetricValue::Finite(d) = v {
            println!(
                "slice {z:2}: |GT| = {:3}, |pred| = {:3}, DSC = {d:.4}",
                truth.count(),
                pred.count()
            );
        }
        values.push(v);
    }
    let (mean, std, n, undefined) = summarize(&values);
    if let (MetricValue::Finite(m), MetricValue::Finite(s)) = (mean, std) {
        println!("DSC {m:.4} ± {s:.4} over {n} slices ({undefined} undefined)");
    }
    Ok(())
}
