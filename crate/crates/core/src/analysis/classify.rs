use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{accuracy, cosine_similarity, ConfusionCounts};
use crate::model::{EmbeddingBatch, Modality};

/// Nearest-prototype classifier: softmax over `cos(x, prototype) / temperature`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeClassifier {
    prototypes: BTreeMap<Modality, Vec<f64>>,
    temperature: f64,
}

impl PrototypeClassifier {
    pub fn new(prototypes: BTreeMap<Modality, Vec<f64>>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::Param(format!("temperature {temperature} must be > 0")));
        }
        if prototypes.is_empty() {
            return Err(Error::Param("classifier needs at least one prototype".into()));
        }
        let dim = prototypes.values().next().map(Vec::len).unwrap_or(0);
        for (m, p) in &prototypes {
            if p.len() != dim {
                return Err(Error::Shape(format!(
                    "prototype {m} has length {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().all(|&v| v == 0.0) {
                return Err(Error::DegenerateVector(format!("prototype {m} is all zeros")));
            }
        }
        Ok(Self {
            prototypes,
            temperature,
        })
    }

    /// One prototype per modality taken from a batch (e.g. a file of text
    /// embeddings). Multiple items of a modality are averaged.
    pub fn from_batch(batch: &EmbeddingBatch, temperature: f64) -> Result<Self> {
        Self::from_class_means(batch, temperature)
    }

    /// Class-mean prototypes.
    pub fn from_class_means(batch: &EmbeddingBatch, temperature: f64) -> Result<Self> {
        let mut sums: BTreeMap<Modality, (Vec<f64>, usize)> = BTreeMap::new();
        for item in batch.items() {
            let e = sums.entry(item.modality).or_insert_with(|| (vec![0.0; batch.dim()], 0));
            for (s, v) in e.0.iter_mut().zip(&item.vector) {
                *s += v;
            }
            e.1 += 1;
        }
        let protos = sums
            .into_iter()
            .map(|(m, (s, n))| (m, s.into_iter().map(|v| v / n as f64).collect()))
            .collect();
        Self::new(protos, temperature)
    }

    /// Classes in canonical modality order.
    pub fn classes(&self) -> Vec<Modality> {
        self.prototypes.keys().copied().collect()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn prototype(&self, m: Modality) -> Option<&[f64]> {
        self.prototypes.get(&m).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub classes: Vec<Modality>,
    pub predictions: Vec<Modality>,
    /// `items × classes`, rows sum to 1.
    pub probabilities: Vec<Vec<f64>>,
    pub correct: usize,
    pub accuracy: f64,
}

/// Ties in the argmax go to the class that comes first in modality order.
pub fn classify_modality(clf: &PrototypeClassifier, batch: &EmbeddingBatch) -> Result<Classification> {
    if let Some(m) = batch.modalities().into_iter().find(|m| !clf.prototypes.contains_key(m)) {
        return Err(Error::MissingPrototype(m.to_string()));
    }
    let classes = clf.classes();
    let mut predictions = Vec::with_capacity(batch.len());
    let mut probabilities = Vec::with_capacity(batch.len());
    let mut correct = 0usize;
    for item in batch.items() {
        let logits = classes
            .iter()
            .map(|m| Ok(cosine_similarity(&item.vector, &clf.prototypes[m])? / clf.temperature))
            .collect::<Result<Vec<f64>>>()?;
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        let max = logits[best];
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        probabilities.push(exps.into_iter().map(|e| e / z).collect());
        predictions.push(classes[best]);
        correct += (classes[best] == item.modality) as usize;
    }
    let acc = accuracy(&ConfusionCounts::from_outcomes(
        correct as u64,
        (batch.len() - correct) as u64,
    ))?;
    Ok(Classification {
        classes,
        predictions,
        probabilities,
        correct,
        accuracy: acc,
    })
}
