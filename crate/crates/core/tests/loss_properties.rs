mod common;

use proptest::prelude::*;
use synth_eval::losses::{
    loss_decoder_total, loss_encoder_total, loss_featuremap, loss_infonce, loss_pixel, loss_semantic, loss_vector,
    ContrastiveConfig, DecoderLossConfig, EncoderLossConfig,
};
use synth_eval::model::{FeatureLevel, FeatureMapSet};
use synth_eval::rng::SplitMix64;
use synth_eval::{EmbeddingBatch, EmbeddingItem, Error, Modality, Slice2D};

const MODS: [Modality; 3] = Modality::PHANTOM;

fn cfg(tau: f64) -> ContrastiveConfig {
    ContrastiveConfig {
        temperature: tau,
        normalize: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn infonce_matches_naive(seed in any::<u64>(), subjects in 1usize..3, slices in 1usize..3, tau in 0.05f64..2.0) {
        let mut rng = SplitMix64::new(seed);
        let b = common::random_batch(&mut rng, subjects, slices, &MODS, 5);
        let got = loss_infonce(&b, &cfg(tau)).unwrap().value;
        let want = common::infonce(b.items(), tau, true);
        prop_assert!(common::rel(got, want) < 1e-10, "{} vs {}", got, want);
    }

    #[test]
    fn infonce_is_scale_invariant_when_normalized(seed in any::<u64>(), k in 0.1f64..50.0) {
        let mut rng = SplitMix64::new(seed);
        let b = common::random_batch(&mut rng, 2, 2, &MODS, 6);
        let scaled = b.with_vectors(b.vectors().map(|v| v.iter().map(|x| x * k).collect()).collect()).unwrap();
        let (l1, l2) = (loss_infonce(&b, &cfg(0.1)).unwrap(), loss_infonce(&scaled, &cfg(0.1)).unwrap());
        prop_assert!((l1.value - l2.value).abs() < 1e-9 * l1.value.abs().max(1.0));
        // The gradient scales by 1/k.
        for (g1, g2) in l1.grad.iter().flatten().zip(l2.grad.iter().flatten()) {
            prop_assert!((g1 / k - g2).abs() < 1e-8 * g1.abs().max(1.0));
        }
    }

    #[test]
    fn infonce_is_nonnegative(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let b = common::random_batch(&mut rng, 2, 3, &MODS[..2], 4);
        prop_assert!(loss_infonce(&b, &cfg(0.07)).unwrap().value >= 0.0);
    }

    #[test]
    fn vector_loss_bounds_and_gradient(seed in any::<u64>(), d in 2usize..12) {
        let mut rng = SplitMix64::new(seed);
        let (a, b) = (common::random_vec(&mut rng, d), common::random_vec(&mut rng, d));
        let l = loss_vector(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&l.value));
        let x: Vec<f64> = a.iter().chain(&b).copied().collect();
        let num = common::numeric_grad(&x, 1e-5, |v| loss_vector(&v[..d], &v[d..]).unwrap().value);
        let ana: Vec<f64> = l.grad.first.iter().chain(&l.grad.second).copied().collect();
        prop_assert!(common::rel_err(&ana, &num) < 1e-6);
    }
}

#[test]
fn infonce_needs_positives() {
    let b = EmbeddingBatch::new(
        2,
        vec![
            EmbeddingItem::new("a", 0, Modality::T1, vec![1.0, 0.0]),
            EmbeddingItem::new("a", 1, Modality::T2, vec![0.0, 1.0]),
        ],
    )
    .unwrap();
    assert!(matches!(loss_infonce(&b, &cfg(0.1)), Err(Error::NoPositive { .. })));
    let single = EmbeddingBatch::new(1, vec![EmbeddingItem::new("a", 0, Modality::T1, vec![1.0])]).unwrap();
    assert!(matches!(loss_infonce(&single, &cfg(0.1)), Err(Error::BatchTooSmall(1))));
    let bad_tau = ContrastiveConfig {
        temperature: 0.0,
        normalize: true,
    };
    assert!(loss_infonce(&b, &bad_tau).is_err());
}

#[test]
fn hand_computed_three_log_two() {
    // Three orthogonal modalities of one slice. Every softmax entry is 1/2,
    // so each anchor contributes ln 2.
    let e = |i: usize| (0..3).map(|d| (d == i) as u8 as f64).collect::<Vec<_>>();
    let b = EmbeddingBatch::new(3, (0..3).map(|i| EmbeddingItem::new("s", 0, MODS[i], e(i))).collect()).unwrap();
    let v = loss_infonce(&b, &cfg(0.07)).unwrap().value;
    assert!((v - 3.0 * 2f64.ln()).abs() < 1e-9, "{v}");
}

fn maps(rng: &mut SplitMix64) -> FeatureMapSet {
    FeatureMapSet::new(vec![
        FeatureLevel::new([2, 3, 3], (0..18).map(|_| rng.normal()).collect()).unwrap(),
        FeatureLevel::new([1, 2, 2], (0..4).map(|_| rng.normal()).collect()).unwrap(),
    ])
}

fn flat(m: &FeatureMapSet) -> Vec<f64> {
    m.levels.iter().flat_map(|l| l.data.clone()).collect()
}

fn unflat(t: &FeatureMapSet, x: &[f64]) -> FeatureMapSet {
    let mut out = t.clone();
    let mut p = 0;
    for l in &mut out.levels {
        let n = l.data.len();
        l.data.copy_from_slice(&x[p..p + n]);
        p += n;
    }
    out
}

#[test]
fn featuremap_and_pixel_gradients() {
    let mut rng = SplitMix64::new(5);
    for _ in 0..20 {
        let (f1, f2) = (maps(&mut rng), maps(&mut rng));
        let l = loss_featuremap(&f1, &f2, 0.7).unwrap();
        let n1 = f1.num_values();
        let x: Vec<f64> = flat(&f1).into_iter().chain(flat(&f2)).collect();
        let num = common::numeric_grad(&x, 1e-5, |v| {
            loss_featuremap(&unflat(&f1, &v[..n1]), &unflat(&f2, &v[n1..]), 0.7)
                .unwrap()
                .value
        });
        let ana: Vec<f64> = flat(&l.grad.first).into_iter().chain(flat(&l.grad.second)).collect();
        assert!(common::rel_err(&ana, &num) < 1e-6);

        let s = common::random_slice(&mut rng, 5, 6);
        let t = common::random_slice(&mut rng, 5, 6);
        let px = loss_pixel(&s, &t).unwrap();
        let num = common::numeric_grad(s.data(), 1e-5, |v| {
            loss_pixel(&Slice2D::new(5, 6, v.to_vec()).unwrap(), &t).unwrap().value
        });
        assert!(common::rel_err(&px.grad, &num) < 1e-6);
    }
}

#[test]
fn encoder_and_decoder_totals_decompose() {
    let mut rng = SplitMix64::new(8);
    let b = common::random_batch(&mut rng, 2, 2, &MODS, 4);
    let fm: Vec<FeatureMapSet> = (0..b.len()).map(|_| maps(&mut rng)).collect();
    let c = EncoderLossConfig::default();
    let (total, parts) = loss_encoder_total(&b, &fm, &c).unwrap();
    assert_eq!(parts.intra_pairs, 2 * 2 * 3);
    assert!((total.value - (parts.vector + parts.featuremap + parts.infonce)).abs() < 1e-12);

    let x: Vec<f64> = b.vectors().flatten().copied().collect();
    let num = common::numeric_grad(&x, 1e-5, |v| {
        let bb = b.with_vectors(v.chunks(4).map(<[f64]>::to_vec).collect()).unwrap();
        loss_encoder_total(&bb, &fm, &c).unwrap().0.value
    });
    let ana: Vec<f64> = total.grad.vectors.concat();
    assert!(common::rel_err(&ana, &num) < 1e-6);

    let s = common::random_slice(&mut rng, 4, 4);
    let t = common::random_slice(&mut rng, 4, 4);
    let (v, e) = (common::random_vec(&mut rng, 6), common::random_vec(&mut rng, 6));
    let w = DecoderLossConfig {
        w_pixel: 0.3,
        w_semantic: 2.0,
    };
    let d = loss_decoder_total(&s, &t, &v, &e, &w).unwrap();
    let want = 0.3 * loss_pixel(&s, &t).unwrap().value + 2.0 * loss_semantic(&v, &e).unwrap().value;
    assert!((d.value - want).abs() < 1e-12);
}

#[test]
fn minima_for_identical_inputs() {
    let mut rng = SplitMix64::new(3);
    let v = common::random_vec(&mut rng, 8);
    assert_eq!(loss_vector(&v, &v).unwrap().value, -1.0);
    assert_eq!(loss_semantic(&v, &v).unwrap().value, 0.0);
    let f = maps(&mut rng);
    assert_eq!(loss_featuremap(&f, &f, 1.0).unwrap().value, 0.0);
    let s = common::random_slice(&mut rng, 3, 3);
    assert_eq!(loss_pixel(&s, &s).unwrap().value, 0.0);
    assert_eq!(
        loss_decoder_total(&s, &s, &v, &v, &DecoderLossConfig::default())
            .unwrap()
            .value,
        0.0
    );
}
