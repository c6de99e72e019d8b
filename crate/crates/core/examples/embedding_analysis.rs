//! PCA, cross-modality similarity and prototype classification of phantom embeddings.
//!
//! cargo run --example embedding_analysis

use synth_eval::analysis::{classify_modality, pca_fit, pca_project, similarity_summary, PrototypeClassifier};
use synth_eval::phantom::{generate_embeddings, EmbeddingSpec, PhantomSpec};

fn main() -> synth_eval::Result<()> {
    let batch = generate_embeddings(&PhantomSpec::standard(), &EmbeddingSpec::default())?;
    println!("{} embeddings of dim {}", batch.len(), batch.dim());

    let model = pca_fit(&batch, 2)?;
    let coords = pca_project(&model, &batch)?;
    println!("explained variance ratio {:?}", model.explained_variance_ratio);
    println!("first item -> ({:.3}, {:.3})", coords[0][0], coords[0][1]);

    let s = similarity_summary(&batch)?;
    for p in &s.pairs {
        println!(
            "{}<->{}: mean cosine {:.4} over {} pairs",
            p.first, p.second, p.mean, p.count
        );
    }
    println!(
        "intra-slice {:.4} vs inter-slice {:.4}",
        s.intra_slice_mean.unwrap_or(f64::NAN),
        s.inter_slice_mean.unwrap_or(f64::NAN)
    );

    let clf = PrototypeClassifier::from_class_means(&batch, 0.07)?;
    let c = classify_modality(&clf, &batch)?;
    println!("class-mean prototype accuracy {:.4}", c.accuracy);
    Ok(())
}
