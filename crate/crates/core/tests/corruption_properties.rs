mod common;

use proptest::prelude::*;
use synth_eval::corruption::{
    apply_params, corrupt_downsample, corrupt_gaussian, corrupt_motion, corrupt_rician, motion_unclamped,
    CorruptionParams, Family, Severity, SeverityTable,
};
use synth_eval::metrics::{psnr, MetricContext};
use synth_eval::rng::SplitMix64;
use synth_eval::Slice2D;

fn params_for(f: Family, s: Severity) -> CorruptionParams {
    SeverityTable::default().params(f, s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_stay_in_unit_range(seed in any::<u64>(), fi in 0usize..4, si in 0usize..3) {
        let mut rng = SplitMix64::new(seed);
        let s = common::random_slice(&mut rng, 40, 36);
        let p = params_for(Family::ALL[fi], Severity::ALL[si]);
        let out = apply_params(&p, &s, seed).unwrap();
        prop_assert_eq!(out.dims(), s.dims());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        // Same seed, same output.
        let again = apply_params(&p, &s, seed).unwrap();
        prop_assert_eq!(again.data(), out.data());
    }

    #[test]
    fn motion_keeps_dc(seed in any::<u64>(), frac in 0.0f64..0.5, shift in 0.0f64..6.0) {
        let mut rng = SplitMix64::new(seed);
        let s = common::random_slice(&mut rng, 16, 12);
        let (raw, _) = motion_unclamped(&s, frac, shift, seed).unwrap();
        let m0: f64 = s.data().iter().sum::<f64>() / s.len() as f64;
        let m1: f64 = raw.iter().sum::<f64>() / raw.len() as f64;
        prop_assert!((m0 - m1).abs() < 1e-12);
    }
}

#[test]
fn zero_strength_is_identity() {
    let mut rng = SplitMix64::new(1);
    let s = common::random_slice(&mut rng, 16, 16);
    assert_eq!(corrupt_gaussian(&s, 0.0, 3).unwrap().data(), s.data());
    assert_eq!(corrupt_motion(&s, 0.0, 4.0, 3).unwrap().data(), s.data());
    assert_eq!(corrupt_motion(&s, 0.3, 0.0, 3).unwrap().data(), s.data());
    assert_eq!(corrupt_downsample(&s, 1).unwrap().data(), s.data());
}

#[test]
fn rician_background_bias() {
    let s = Slice2D::filled(128, 128, 0.0).unwrap();
    let out = corrupt_rician(&s, 0.10, 77).unwrap();
    let mean = out.mean();
    let want = 0.10 * (std::f64::consts::PI / 2.0).sqrt();
    assert!((mean - want).abs() < 0.002, "{mean} vs {want}");
}

#[test]
fn gaussian_on_mid_gray_hits_twenty_db() {
    let s = Slice2D::filled(128, 128, 0.5).unwrap();
    let out = corrupt_gaussian(&s, 0.1, 5).unwrap();
    let p = psnr(&s, &out, &MetricContext::default()).unwrap();
    assert!((p - 20.0).abs() < 0.3, "{p}");
}

#[test]
fn motion_dc_after_clamping() {
    let s = Slice2D::from_fn(32, 32, |r, c| 0.2 + 0.6 * ((r * 3 + c) % 7) as f64 / 7.0).unwrap();
    let out = corrupt_motion(&s, 0.3, 3.0, 2).unwrap();
    assert!((out.mean() - s.mean()).abs() < 1e-4);
}

#[test]
fn seeds_change_noise() {
    let s = Slice2D::filled(16, 16, 0.5).unwrap();
    assert_ne!(
        corrupt_gaussian(&s, 0.1, 1).unwrap().data(),
        corrupt_gaussian(&s, 0.1, 2).unwrap().data()
    );
}

#[test]
fn invalid_parameters_are_rejected() {
    let s = Slice2D::filled(16, 16, 0.5).unwrap();
    assert!(corrupt_gaussian(&s, -0.1, 0).is_err());
    assert!(corrupt_downsample(&s, 5).is_err());
    assert!(corrupt_downsample(&s, 0).is_err());
    assert!(corrupt_motion(&s, 1.5, 1.0, 0).is_err());
}
