use serde_json::json;

use super::plot::{pca_scatter, probability_heatmap};
use super::report::{csv_err, finish_csv};
use super::{file_digest, provenance, InputDigest, MetricReport, Row, RunConfig, RunOutput};
use crate::analysis::{classify_modality, pca_fit, pca_project, similarity_summary, PrototypeClassifier};
use crate::error::Result;
use crate::model::{read_embeddings, EmbeddingBatch};
use crate::phantom::generate_embeddings;

/// PCA projection, similarity summary and prototype classification of an
/// embedding batch. Besides the report it produces `embed_pca.csv`,
/// `embed_similarity.json` and `embed_probabilities.csv` (items × classes).
pub fn run_embed_analysis(cfg: &RunConfig) -> Result<RunOutput> {
    let ec = &cfg.embed;
    let (batch, mut inputs) = match &ec.input {
        Some(path) => (read_embeddings(path)?, vec![file_digest(path)?]),
        None => {
            let b = generate_embeddings(&cfg.phantom, &cfg.embeddings)?;
            let d = InputDigest::of_bytes("phantom:embeddings", b.to_json()?.as_bytes());
            (b, vec![d])
        }
    };
    let (clf, prototype_source) = match &ec.prototypes {
        Some(path) => {
            inputs.push(file_digest(path)?);
            let protos: EmbeddingBatch = read_embeddings(path)?;
            (PrototypeClassifier::from_batch(&protos, ec.temperature)?, "file")
        }
        None => (
            PrototypeClassifier::from_class_means(&batch, ec.temperature)?,
            "class means",
        ),
    };

    let model = pca_fit(&batch, ec.k)?;
    let coords = pca_project(&model, &batch)?;
    let summary = similarity_summary(&batch)?;
    let cls = classify_modality(&clf, &batch)?;

    let mut pca_csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject_id".to_string(), "slice_index".into(), "modality".into()];
    header.extend((1..=model.k()).map(|i| format!("pc{i}")));
    pca_csv.write_record(&header).map_err(csv_err)?;
    for (item, c) in batch.items().iter().zip(&coords) {
        let mut rec = vec![
            item.subject_id.clone(),
            item.slice_index.to_string(),
            item.modality.to_string(),
        ];
        rec.extend(c.iter().map(|v| v.to_string()));
        pca_csv.write_record(&rec).map_err(csv_err)?;
    }

    let mut prob_csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "subject_id".to_string(),
        "slice_index".into(),
        "modality".into(),
        "predicted".into(),
    ];
    header.extend(cls.classes.iter().map(|m| format!("p_{m}")));
    prob_csv.write_record(&header).map_err(csv_err)?;
    let mut rows = Vec::new();
    for (i, item) in batch.items().iter().enumerate() {
        let mut rec = vec![
            item.subject_id.clone(),
            item.slice_index.to_string(),
            item.modality.to_string(),
            cls.predictions[i].to_string(),
        ];
        rec.extend(cls.probabilities[i].iter().map(|p| p.to_string()));
        prob_csv.write_record(&rec).map_err(csv_err)?;

        let true_idx = cls.classes.iter().position(|&m| m == item.modality);
        let mut row = Row::new(item.modality.tag())
            .label("subject", &item.subject_id)
            .label("slice", format!("{:03}", item.slice_index))
            .label("predicted", cls.predictions[i])
            .value("correct", if cls.predictions[i] == item.modality { 1.0 } else { 0.0 });
        if let Some(t) = true_idx {
            row = row.value("p_true", cls.probabilities[i][t]);
        }
        for (j, v) in coords[i].iter().enumerate() {
            row = row.value(&format!("pc{}", j + 1), *v);
        }
        rows.push(row);
    }

    let mut similarity = serde_json::to_string_pretty(&summary)?;
    similarity.push('\n');
    let report = MetricReport::new("embed", provenance(cfg, inputs)?, rows)
        .note("prototypes", prototype_source)
        .note("cosine", "raw cosine similarity in [-1, 1], no clipping")
        .with_extra(json!({
            "accuracy": cls.accuracy,
            "correct": cls.correct,
            "items": batch.len(),
            "classes": cls.classes,
            "pca": {
                "k": model.k(),
                "requested": model.requested,
                "rank_deficit": model.rank_deficit,
                "explained_variance_ratio": model.explained_variance_ratio,
            },
            "similarity": summary,
        }));
    let scatter = pca_scatter(&batch, &coords);
    let heat = probability_heatmap(&batch, &cls);
    let mut out = RunOutput::new(report);
    out.files.push(("embed_pca.csv".into(), finish_csv(pca_csv)?));
    out.files.push(("embed_similarity.json".into(), similarity));
    out.files
        .push(("embed_probabilities.csv".into(), finish_csv(prob_csv)?));
    out.files.push(("embed_pca.svg".into(), scatter));
    out.files.push(("embed_probabilities.svg".into(), heat));
    Ok(out)
}
