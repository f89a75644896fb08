//! Nearest-neighbor retrieval evaluation over labeled anchor matrices.

use crate::error::{Error, Result};
use crate::isotropy::apply_in;
use crate::linalg::{dot, norm, unit_normalize_columns, EmbeddingMatrix, DEGENERATE_NORM};
use crate::pipeline::{transfer_vector, MappingArtifact};
use crate::synth::GroundTruth;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Fraction of target columns whose correct source label (per `truth`)
/// appears among the top-k source columns by cosine similarity.
///
/// Ties in similarity rank lexicographically by source label.
pub fn retrieval_precision(
    mapped_targets: &EmbeddingMatrix,
    sources: &EmbeddingMatrix,
    truth: &BTreeMap<String, String>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if mapped_targets.dim() != sources.dim() {
        return Err(Error::DimensionMismatch {
            expected: mapped_targets.dim(),
            got: sources.dim(),
            context: "retrieval matrices".into(),
        });
    }
    let target_labels = mapped_targets
        .labels()
        .ok_or_else(|| Error::MissingLabel("target matrix has no labels".into()))?;
    let source_labels = sources
        .labels()
        .ok_or_else(|| Error::MissingLabel("source matrix has no labels".into()))?;
    if mapped_targets.count() == 0 || sources.count() == 0 {
        return Err(Error::EmptyCollection);
    }

    let check_norms = |m: &EmbeddingMatrix| -> Result<Vec<f64>> {
        m.columns()
            .enumerate()
            .map(|(i, col)| {
                let n = norm(col);
                if n < DEGENERATE_NORM {
                    Err(Error::DegenerateVector {
                        context: format!("column {i} in retrieval input"),
                    })
                } else {
                    Ok(n)
                }
            })
            .collect()
    };
    let target_norms = check_norms(mapped_targets)?;
    let source_norms = check_norms(sources)?;

    for label in target_labels {
        if !truth.contains_key(label) {
            return Err(Error::MissingLabel(label.clone()));
        }
    }

    let hits: usize = (0..mapped_targets.count())
        .into_par_iter()
        .map(|i| {
            let query = mapped_targets.column(i);
            let qn = target_norms[i];
            let mut scored: Vec<(f64, &String)> = sources
                .columns()
                .enumerate()
                .map(|(j, col)| (dot(query, col) / (qn * source_norms[j]), &source_labels[j]))
                .collect();
            scored.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("cosines are finite")
                    .then_with(|| a.1.cmp(b.1))
            });
            let correct = &truth[&target_labels[i]];
            scored
                .iter()
                .take(k)
                .any(|(_, label)| *label == correct) as usize
        })
        .sum();

    Ok(hits as f64 / mapped_targets.count() as f64)
}

/// Score an artifact against synthetic ground truth: the true target sense
/// vectors are pushed through the artifact and ranked against the true
/// source vectors (projected into the same normalized space the map was
/// trained in). Returns P@k for each requested k.
pub fn evaluate_retrieval(
    artifact: &MappingArtifact,
    truth: &GroundTruth,
    ks: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if truth.dim() != artifact.dim {
        return Err(Error::DimensionMismatch {
            expected: artifact.dim,
            got: truth.dim(),
            context: "ground truth vs artifact".into(),
        });
    }
    let dim = artifact.dim;

    let mut query_labels = Vec::with_capacity(truth.sense_vectors.target.len());
    let mut query_cols = Vec::with_capacity(truth.sense_vectors.target.len());
    for (label, vector) in &truth.sense_vectors.target {
        query_labels.push(label.clone());
        query_cols.push(transfer_vector(artifact, vector)?);
    }
    let queries = EmbeddingMatrix::from_columns(dim, query_cols)?.with_labels(query_labels)?;

    let mut cand_labels = Vec::with_capacity(truth.sense_vectors.source.len());
    let mut cand_cols = Vec::with_capacity(truth.sense_vectors.source.len());
    for (label, vector) in &truth.sense_vectors.source {
        cand_labels.push(label.clone());
        cand_cols.push(vector.clone());
    }
    let candidates = EmbeddingMatrix::from_columns(dim, cand_cols)?.with_labels(cand_labels)?;
    let candidates = if artifact.settings.use_in {
        apply_in(&artifact.source_in, &candidates)?
    } else {
        unit_normalize_columns(&candidates)?
    };

    ks.iter()
        .map(|&k| Ok((k, retrieval_precision(&queries, &candidates, &truth.type_truth, k)?)))
        .collect()
}
