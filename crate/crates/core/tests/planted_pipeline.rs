//! End-to-end checks against synthetic corpora with a planted orthogonal
//! map: the trained map must recover the plant, transfer held-out vectors
//! onto their true partners, and benefit from iterative normalization when
//! the spaces carry anisotropy offsets.

use sensemap::eval::evaluate_retrieval;
use sensemap::linalg::{dot, norm};
use sensemap::pipeline::{train_mapping, transfer_vector, PipelineConfig};
use sensemap::synth::{generate_synthetic, load_ground_truth, SynthConfig, SynthFiles};

fn train(files: &SynthFiles, cfg: &PipelineConfig) -> sensemap::pipeline::MappingArtifact {
    train_mapping(
        &files.target_corpus,
        &files.source_corpus,
        &files.alignments,
        cfg,
    )
    .unwrap()
}

#[test]
fn planted_map_is_recovered_without_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        dim: 16,
        n_types: 120,
        n_sentences: 800,
        noise_sigma: 0.01,
        seed: 101,
        ..SynthConfig::default()
    };
    let files = generate_synthetic(&cfg, dir.path()).unwrap();
    let truth = load_ground_truth(&files.ground_truth).unwrap();

    let artifact = train(
        &files,
        &PipelineConfig {
            use_in: false,
            ..PipelineConfig::default()
        },
    );

    // W maps target -> source, so it should recover A^T.
    let d = artifact.dim;
    let a = truth.a_flat();
    let mut frob_sq = 0.0;
    for r in 0..d {
        for c in 0..d {
            let diff = artifact.w.values()[r * d + c] - a[c * d + r];
            frob_sq += diff * diff;
        }
    }
    let score = frob_sq.sqrt() / (d as f64).sqrt();
    assert!(score <= 0.05, "||W - A^T||_F / sqrt(d) = {score}");

    let precision = evaluate_retrieval(&artifact, &truth, &[1]).unwrap();
    assert!(precision[0].1 >= 0.99, "P@1 = {}", precision[0].1);
}

#[test]
fn transfer_lands_on_true_partner() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        dim: 16,
        n_types: 80,
        n_sentences: 600,
        noise_sigma: 0.01,
        seed: 103,
        ..SynthConfig::default()
    };
    let files = generate_synthetic(&cfg, dir.path()).unwrap();
    let truth = load_ground_truth(&files.ground_truth).unwrap();
    let artifact = train(
        &files,
        &PipelineConfig {
            use_in: false,
            ..PipelineConfig::default()
        },
    );

    for (label, target_vec) in &truth.sense_vectors.target {
        let mapped = transfer_vector(&artifact, target_vec).unwrap();
        assert!((norm(&mapped) - 1.0).abs() <= 1e-9);
        let source_label = &truth.type_truth[label];
        let source_vec = &truth.sense_vectors.source[source_label];
        let cos = dot(&mapped, source_vec) / (norm(&mapped) * norm(source_vec));
        assert!(cos >= 0.95, "{label}: cosine {cos}");
    }
}

#[test]
fn in_reduces_residual_under_anisotropy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        dim: 16,
        n_types: 80,
        n_sentences: 600,
        noise_sigma: 0.01,
        anisotropy_offset_norm: 5.0,
        seed: 107,
        ..SynthConfig::default()
    };
    let files = generate_synthetic(&cfg, dir.path()).unwrap();

    let with_in = train(
        &files,
        &PipelineConfig {
            use_in: true,
            ..PipelineConfig::default()
        },
    );
    let without_in = train(
        &files,
        &PipelineConfig {
            use_in: false,
            ..PipelineConfig::default()
        },
    );
    assert!(
        with_in.residual < without_in.residual,
        "with IN {} vs without {}",
        with_in.residual,
        without_in.residual
    );
}
