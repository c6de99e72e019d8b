mod common;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use synth_eval::analysis::{classify_modality, pca_fit, pca_project, similarity_summary, PrototypeClassifier};
use synth_eval::phantom::{generate_embeddings, EmbeddingSpec, PhantomSpec};
use synth_eval::rng::SplitMix64;
use synth_eval::{EmbeddingBatch, EmbeddingItem, Modality};

fn batch_from(rows: Vec<Vec<f64>>) -> EmbeddingBatch {
    let d = rows[0].len();
    let items = rows
        .into_iter()
        .enumerate()
        .map(|(i, v)| EmbeddingItem::new("s", i, Modality::PHANTOM[i % 3], v))
        .collect();
    EmbeddingBatch::new(d, items).unwrap()
}

fn covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let (n, d) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    DMatrix::from_fn(d, d, |a, b| {
        rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1) as f64
    })
}

#[test]
fn pca_agrees_with_eigensolver() {
    let mut rng = SplitMix64::new(41);
    for trial in 0..10 {
        let d = 4 + trial % 5;
        let n = 30;
        // Anisotropic data so eigenvalues are well separated.
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| rng.normal() * (1.0 + 2.0 * j as f64)).collect())
            .collect();
        let k = 3;
        let model = pca_fit(&batch_from(rows.clone()), k).unwrap();
        let eig = SymmetricEigen::new(covariance(&rows));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let total: f64 = eig.eigenvalues.iter().sum();
        for (c, &o) in order.iter().take(k).enumerate() {
            let lam = eig.eigenvalues[o];
            assert!(common::rel(model.explained_variance[c], lam) < 1e-8);
            assert!(common::rel(model.explained_variance_ratio[c], lam / total) < 1e-8);
            let v = eig.eigenvectors.column(o);
            let dot: f64 = model.components[c].iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-8, "component {c}: |dot| = {}", dot.abs());
        }
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = model.components[i]
                    .iter()
                    .zip(&model.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                assert!((dot - (i == j) as u8 as f64).abs() < 1e-8);
            }
        }
        let r = &model.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.iter().sum::<f64>() <= 1.0 + 1e-8);
    }
}

#[test]
fn rank_two_data_reconstructs() {
    let mut rng = SplitMix64::new(9);
    let d = 10;
    let (u, v) = (common::random_vec(&mut rng, d), common::random_vec(&mut rng, d));
    let offset = common::random_vec(&mut rng, d);
    let rows: Vec<Vec<f64>> = (0..25)
        .map(|_| {
            let (a, b) = (rng.normal(), rng.normal());
            (0..d).map(|j| offset[j] + a * u[j] + b * v[j]).collect()
        })
        .collect();
    let batch = batch_from(rows.clone());
    let model = pca_fit(&batch, 2).unwrap();
    let proj = pca_project(&model, &batch).unwrap();
    for (row, p) in rows.iter().zip(&proj) {
        let back = model.inverse_transform(p);
        let err = row.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }
    assert!((model.explained_variance_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-8);
}

#[test]
fn pca_rejects_bad_k() {
    let mut rng = SplitMix64::new(2);
    let b = common::random_batch(&mut rng, 1, 2, &Modality::PHANTOM, 4);
    assert!(pca_fit(&b, 0).is_err());
    assert!(pca_fit(&b, 5).is_err());
}

#[test]
fn similarity_matches_brute_force() {
    let mut rng = SplitMix64::new(12);
    let b = common::random_batch(&mut rng, 2, 3, &Modality::PHANTOM, 6);
    let s = similarity_summary(&b).unwrap();
    let items = b.items();
    let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let c = common::cosine(&items[i].vector, &items[j].vector);
            if items[i].subject_id == items[j].subject_id && items[i].slice_index == items[j].slice_index {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                ne += 1;
            }
        }
    }
    assert_eq!((s.intra_slice_count, s.inter_slice_count), (ni, ne));
    assert!((s.intra_slice_mean.unwrap() - intra / ni as f64).abs() < 1e-12);
    assert!((s.inter_slice_mean.unwrap() - inter / ne as f64).abs() < 1e-12);
    assert_eq!(s.pairs.len(), 3);
    assert!(s.pairs.iter().all(|p| p.count == 6));
}

#[test]
fn phantom_embeddings_cluster_by_slice() {
    let spec = PhantomSpec::standard();
    let b = generate_embeddings(&spec, &EmbeddingSpec::default()).unwrap();
    let s = similarity_summary(&b).unwrap();
    assert!(s.intra_slice_mean.unwrap() > s.inter_slice_mean.unwrap() + 0.5);
}

fn prototypes() -> BTreeMap<Modality, Vec<f64>> {
    let mut rng = SplitMix64::new(4);
    Modality::PHANTOM
        .iter()
        .map(|&m| (m, common::random_vec(&mut rng, 8)))
        .collect()
}

#[test]
fn classifier_accuracy_cases() {
    let protos = prototypes();
    let items: Vec<EmbeddingItem> = protos
        .iter()
        .enumerate()
        .map(|(i, (&m, v))| EmbeddingItem::new("p", i, m, v.clone()))
        .collect();
    let batch = EmbeddingBatch::new(8, items.clone()).unwrap();
    let clf = PrototypeClassifier::new(protos.clone(), 0.07).unwrap();
    let res = classify_modality(&clf, &batch).unwrap();
    assert_eq!(res.accuracy, 1.0);
    let truth: Vec<usize> = batch.items().iter().map(|i| i.modality.ordinal()).collect();
    let pred: Vec<usize> = res.predictions.iter().map(|m| m.ordinal()).collect();
    assert_eq!(res.accuracy, common::accuracy(&truth, &pred));
    for row in &res.probabilities {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    // Positive rescaling of inputs changes nothing.
    let scaled = batch
        .with_vectors(batch.vectors().map(|v| v.iter().map(|x| 3.5 * x).collect()).collect())
        .unwrap();
    assert_eq!(classify_modality(&clf, &scaled).unwrap().predictions, res.predictions);

    // Every item sits on another class's prototype.
    let rotated: Vec<EmbeddingItem> = items
        .iter()
        .enumerate()
        .map(|(i, it)| EmbeddingItem::new("p", i, Modality::PHANTOM[(i + 1) % 3], it.vector.clone()))
        .collect();
    let wrong = EmbeddingBatch::new(8, rotated).unwrap();
    assert_eq!(classify_modality(&clf, &wrong).unwrap().accuracy, 0.0);
}

#[test]
fn missing_prototype_is_an_error() {
    let mut protos = prototypes();
    protos.remove(&Modality::T2);
    let clf = PrototypeClassifier::new(protos, 0.07).unwrap();
    let mut rng = SplitMix64::new(1);
    let b = common::random_batch(&mut rng, 1, 1, &Modality::PHANTOM, 8);
    assert!(classify_modality(&clf, &b).is_err());
}
