//! End-to-end mapping pipeline: collect aligned type pairs, normalize the
//! spaces, derive sense anchors, solve for the orthogonal map, and package
//! the result as a replayable artifact.
//!
//! The map is learned and applied in the normalized space: both sides' IN
//! transforms are fitted on the stored token-vector populations before
//! clustering, so anchors and the map live in the same geometry that
//! transfer-time vectors are projected into.

use crate::cluster::{derive_sense_anchors, AnchorPairSet, ClusteringConfig, Level};
use crate::corpus::{collect_type_pairs, read_alignments, read_corpus, TypeCollection};
use crate::error::{Error, Result};
use crate::isotropy::{apply_in_vec, fit_iterative_normalization, InTransform};
use crate::linalg::{
    solve_procrustes, unit_normalize_columns, unit_normalize_in_place, EmbeddingMatrix,
    OrthogonalMap,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ARTIFACT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Max stored contextual vectors per type.
    pub cap: usize,
    /// Types must occur strictly more often than this to be sense-clustered.
    pub min_count: u64,
    pub clustering: ClusteringConfig,
    pub in_iterations: usize,
    pub use_in: bool,
    pub lowercase: bool,
    pub level: Level,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cap: 10_000,
            min_count: 100,
            clustering: ClusteringConfig::default(),
            in_iterations: 5,
            use_in: true,
            lowercase: true,
            level: Level::Sense,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cap == 0 || self.in_iterations == 0 {
            return Err(Error::InvalidConfig(
                "cap and in_iterations must be positive".into(),
            ));
        }
        self.clustering.validate()
    }

    /// Clustering config actually used by the pipeline: the pipeline-level
    /// occurrence threshold wins over the nested one.
    pub fn effective_clustering(&self) -> ClusteringConfig {
        ClusteringConfig {
            min_count: self.min_count,
            ..self.clustering.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub pipeline: u64,
    pub clustering: u64,
}

/// The trained deliverable: the orthogonal map plus both sides' IN
/// transforms and full provenance.
#[derive(Debug, Clone)]
pub struct MappingArtifact {
    pub version: String,
    pub dim: usize,
    pub level: Level,
    pub w: OrthogonalMap,
    pub target_in: InTransform,
    pub source_in: InTransform,
    pub anchor_count: usize,
    pub residual: f64,
    pub settings: PipelineConfig,
    /// Anchors were fewer than dimensions, leaving the map underdetermined.
    pub underdetermined: bool,
    pub seeds: Seeds,
}

/// Stack an anchor set into column-aligned, unit-normalized target and
/// source matrices, ordered by (type, sense index) and labeled
/// `type@senseIndex`.
pub fn build_anchor_matrices(
    anchors: &AnchorPairSet,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    if anchors.entries.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut order: Vec<usize> = (0..anchors.entries.len()).collect();
    order.sort_by(|&a, &b| {
        let ea = &anchors.entries[a];
        let eb = &anchors.entries[b];
        ea.type_name
            .cmp(&eb.type_name)
            .then(ea.sense_index.cmp(&eb.sense_index))
    });
    let labels: Vec<String> = order
        .iter()
        .map(|&i| {
            let e = &anchors.entries[i];
            format!("{}@{}", e.type_name, e.sense_index)
        })
        .collect();
    let dim = anchors.dim;
    let targets = EmbeddingMatrix::from_columns(
        dim,
        order.iter().map(|&i| anchors.entries[i].target_anchor.as_slice()),
    )?
    .with_labels(labels.clone())?;
    let sources = EmbeddingMatrix::from_columns(
        dim,
        order.iter().map(|&i| anchors.entries[i].source_anchor.as_slice()),
    )?
    .with_labels(labels)?;
    Ok((
        unit_normalize_columns(&targets)?,
        unit_normalize_columns(&sources)?,
    ))
}

/// Fit IN on the stored vector populations per side (or just unit-normalize
/// when IN is off) and rewrite the collection in the normalized space.
fn normalize_collection(
    coll: &mut TypeCollection,
    cfg: &PipelineConfig,
) -> Result<(InTransform, InTransform)> {
    let dim = coll.dim();
    if cfg.use_in {
        let stack = |coll: &TypeCollection, source_side: bool| -> Result<EmbeddingMatrix> {
            let columns = coll.iter().flat_map(|(_, e)| {
                e.pairs
                    .iter()
                    .map(move |p| if source_side { &p.1 } else { &p.0 })
            });
            EmbeddingMatrix::from_columns(dim, columns)
        };
        let (target_in, target_out) =
            fit_iterative_normalization(&stack(coll, false)?, cfg.in_iterations)?;
        let (source_in, source_out) =
            fit_iterative_normalization(&stack(coll, true)?, cfg.in_iterations)?;
        let mut idx = 0;
        for (_, entry) in coll.iter_mut() {
            for pair in entry.pairs.iter_mut() {
                pair.0.copy_from_slice(target_out.column(idx));
                pair.1.copy_from_slice(source_out.column(idx));
                idx += 1;
            }
        }
        Ok((target_in, source_in))
    } else {
        for (name, entry) in coll.iter_mut() {
            for pair in entry.pairs.iter_mut() {
                unit_normalize_in_place(&mut pair.0, &format!("target vector of {name:?}"))?;
                unit_normalize_in_place(&mut pair.1, &format!("source vector of {name:?}"))?;
            }
        }
        Ok((InTransform::identity(dim), InTransform::identity(dim)))
    }
}

/// Run the whole pipeline over corpus and alignment files.
pub fn train_mapping(
    target_corpus: impl AsRef<Path>,
    source_corpus: impl AsRef<Path>,
    alignments: impl AsRef<Path>,
    cfg: &PipelineConfig,
) -> Result<MappingArtifact> {
    let align = read_alignments(alignments)?;
    train_mapping_aligned(target_corpus, source_corpus, &align, cfg)
}

/// Like [`train_mapping`], but with alignments already parsed (and possibly
/// side-swapped).
pub fn train_mapping_aligned(
    target_corpus: impl AsRef<Path>,
    source_corpus: impl AsRef<Path>,
    alignments: &crate::corpus::AlignmentSet,
    cfg: &PipelineConfig,
) -> Result<MappingArtifact> {
    cfg.validate()?;
    let target = read_corpus(target_corpus)?;
    let source = read_corpus(source_corpus)?;
    let mut coll = collect_type_pairs(target, source, alignments, cfg.cap, cfg.lowercase)?;
    train_from_collection(&mut coll, cfg).map(|(artifact, _)| artifact)
}

/// Train from an already-built collection. Also returns the anchor
/// matrices the map was solved from, for export and evaluation.
pub fn train_from_collection(
    coll: &mut TypeCollection,
    cfg: &PipelineConfig,
) -> Result<(MappingArtifact, (EmbeddingMatrix, EmbeddingMatrix))> {
    cfg.validate()?;
    if coll.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let dim = coll.dim();
    let (target_in, source_in) = normalize_collection(coll, cfg)?;
    let anchors = derive_sense_anchors(coll, &cfg.effective_clustering(), cfg.level)?;
    let (x_s, y_s) = build_anchor_matrices(&anchors)?;
    let w = solve_procrustes(&x_s, &y_s)?;
    let anchor_count = x_s.count();
    let residual = w.residual();
    let artifact = MappingArtifact {
        version: ARTIFACT_VERSION.to_string(),
        dim,
        level: cfg.level,
        w,
        target_in,
        source_in,
        anchor_count,
        residual,
        settings: cfg.clone(),
        underdetermined: anchor_count < dim,
        seeds: Seeds {
            pipeline: cfg.seed,
            clustering: cfg.clustering.seed,
        },
    };
    Ok((artifact, (x_s, y_s)))
}

/// Map one target-space vector into the source space: replay the target IN
/// transform (or plain unit normalization when IN was off), then apply W.
pub fn transfer_vector(artifact: &MappingArtifact, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != artifact.dim {
        return Err(Error::DimensionMismatch {
            expected: artifact.dim,
            got: x.len(),
            context: "transfer_vector input".into(),
        });
    }
    let normalized = if artifact.settings.use_in {
        apply_in_vec(&artifact.target_in, x)?
    } else {
        let mut v = x.to_vec();
        unit_normalize_in_place(&mut v, "transfer input")?;
        v
    };
    artifact.w.apply_vec(&normalized)
}

/// On-disk shape of a `.map.json` artifact.
#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    version: String,
    dim: usize,
    level: Level,
    w: Vec<Vec<f64>>,
    target_in_means: Vec<Vec<f64>>,
    source_in_means: Vec<Vec<f64>>,
    anchor_count: usize,
    residual: f64,
    settings: SettingsFile,
    seeds: Seeds,
}

#[derive(Serialize, Deserialize)]
struct SettingsFile {
    cap: usize,
    min_count: u64,
    clustering: ClusteringConfig,
    in_iterations: usize,
    use_in: bool,
    lowercase: bool,
    level: Level,
    seed: u64,
    underdetermined: bool,
}

pub fn save_artifact(artifact: &MappingArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let d = artifact.dim;
    let file = ArtifactFile {
        version: artifact.version.clone(),
        dim: d,
        level: artifact.level,
        w: artifact
            .w
            .values()
            .chunks(d)
            .map(|row| row.to_vec())
            .collect(),
        target_in_means: artifact.target_in.means().to_vec(),
        source_in_means: artifact.source_in.means().to_vec(),
        anchor_count: artifact.anchor_count,
        residual: artifact.residual,
        settings: SettingsFile {
            cap: artifact.settings.cap,
            min_count: artifact.settings.min_count,
            clustering: artifact.settings.clustering.clone(),
            in_iterations: artifact.settings.in_iterations,
            use_in: artifact.settings.use_in,
            lowercase: artifact.settings.lowercase,
            level: artifact.settings.level,
            seed: artifact.settings.seed,
            underdetermined: artifact.underdetermined,
        },
        seeds: artifact.seeds,
    };
    let mut json = serde_json::to_string(&file)
        .map_err(|e| Error::format(Some(path.to_path_buf()), None, e.to_string()))?;
    json.push('\n');
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_artifact(path: impl AsRef<Path>) -> Result<MappingArtifact> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ArtifactFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(Some(path.to_path_buf()), None, e.to_string()))?;
    if file.version != ARTIFACT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: ARTIFACT_VERSION.to_string(),
        });
    }
    let d = file.dim;
    let mut w_flat = Vec::with_capacity(d * d);
    for row in &file.w {
        if row.len() != d {
            return Err(Error::format(
                Some(path.to_path_buf()),
                None,
                format!("map row has {} entries, expected {d}", row.len()),
            ));
        }
        w_flat.extend_from_slice(row);
    }
    if file.w.len() != d {
        return Err(Error::format(
            Some(path.to_path_buf()),
            None,
            format!("map has {} rows, expected {d}", file.w.len()),
        ));
    }
    let w = OrthogonalMap::new(d, w_flat, file.residual).map_err(|e| {
        Error::format(Some(path.to_path_buf()), None, format!("invalid map: {e}"))
    })?;
    let target_in = InTransform::from_means(d, file.target_in_means).map_err(|e| {
        Error::format(
            Some(path.to_path_buf()),
            None,
            format!("invalid target IN transform: {e}"),
        )
    })?;
    let source_in = InTransform::from_means(d, file.source_in_means).map_err(|e| {
        Error::format(
            Some(path.to_path_buf()),
            None,
            format!("invalid source IN transform: {e}"),
        )
    })?;
    Ok(MappingArtifact {
        version: ARTIFACT_VERSION.to_string(),
        dim: d,
        level: file.level,
        w,
        target_in,
        source_in,
        anchor_count: file.anchor_count,
        residual: file.residual,
        settings: PipelineConfig {
            cap: file.settings.cap,
            min_count: file.settings.min_count,
            clustering: file.settings.clustering,
            in_iterations: file.settings.in_iterations,
            use_in: file.settings.use_in,
            lowercase: file.settings.lowercase,
            level: file.settings.level,
            seed: file.settings.seed,
        },
        underdetermined: file.settings.underdetermined,
        seeds: file.seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::AnchorEntry;
    use crate::linalg::{apply_map, diff_frobenius, norm};
    use crate::synth::{generate_synthetic, SynthConfig};

    fn entry(name: &str, sense: usize, t: &[f64], s: &[f64]) -> AnchorEntry {
        AnchorEntry {
            type_name: name.into(),
            sense_index: sense,
            target_anchor: t.to_vec(),
            source_anchor: s.to_vec(),
            support: 1,
        }
    }

    #[test]
    fn anchor_matrices_are_ordered_and_normalized() {
        let anchors = AnchorPairSet {
            dim: 2,
            entries: vec![
                entry("b", 0, &[2.0, 0.0], &[0.0, 2.0]),
                entry("a", 0, &[0.0, 3.0], &[3.0, 0.0]),
                entry("a", 1, &[1.0, 1.0], &[1.0, -1.0]),
            ],
        };
        let (x, y) = build_anchor_matrices(&anchors).unwrap();
        let labels = x.labels().unwrap();
        assert_eq!(labels, &["a@0".to_string(), "a@1".into(), "b@0".into()]);
        assert_eq!(x.labels().unwrap(), y.labels().unwrap());
        for col in x.columns().chain(y.columns()) {
            assert!((norm(col) - 1.0).abs() <= 1e-12);
        }
        // column pairing follows the sorted entry order
        assert!((x.column(2)[0] - 1.0).abs() < 1e-12);
        assert!((y.column(2)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_anchor_set_rejected() {
        let anchors = AnchorPairSet {
            dim: 2,
            entries: vec![],
        };
        assert!(matches!(
            build_anchor_matrices(&anchors),
            Err(Error::EmptyCollection)
        ));
    }

    fn small_synth(dir: &Path, seed: u64) -> crate::synth::SynthFiles {
        generate_synthetic(
            &SynthConfig {
                dim: 8,
                n_types: 30,
                n_sentences: 150,
                sentence_len: 6,
                seed,
                ..SynthConfig::default()
            },
            dir,
        )
        .unwrap()
    }

    #[test]
    fn self_alignment_recovers_identity() {
        let dir = tempfile::tempdir().unwrap();
        let files = small_synth(dir.path(), 1);
        for use_in in [true, false] {
            let cfg = PipelineConfig {
                use_in,
                ..PipelineConfig::default()
            };
            let artifact = train_mapping(
                &files.target_corpus,
                &files.target_corpus,
                &files.alignments,
                &cfg,
            )
            .unwrap();
            let d = artifact.dim;
            for r in 0..d {
                for c in 0..d {
                    let expect = if r == c { 1.0 } else { 0.0 };
                    let got = artifact.w.values()[r * d + c];
                    assert!(
                        (got - expect).abs() <= 1e-6,
                        "use_in={use_in} W[{r},{c}]={got}"
                    );
                }
            }
            assert!(artifact.residual <= 1e-6);
        }
    }

    #[test]
    fn artifact_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let files = small_synth(dir.path(), 2);
        let artifact = train_mapping(
            &files.target_corpus,
            &files.source_corpus,
            &files.alignments,
            &PipelineConfig::default(),
        )
        .unwrap();
        let path = dir.path().join("map.json");
        save_artifact(&artifact, &path).unwrap();
        let loaded = load_artifact(&path).unwrap();
        assert_eq!(loaded.dim, artifact.dim);
        assert_eq!(loaded.level, artifact.level);
        assert_eq!(loaded.anchor_count, artifact.anchor_count);
        assert_eq!(loaded.residual.to_bits(), artifact.residual.to_bits());
        assert_eq!(loaded.w.values(), artifact.w.values());
        assert_eq!(loaded.target_in.means(), artifact.target_in.means());
        assert_eq!(loaded.source_in.means(), artifact.source_in.means());
        assert_eq!(loaded.seeds, artifact.seeds);
        // saving the loaded artifact reproduces the bytes
        let path2 = dir.path().join("map2.json");
        save_artifact(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_artifact_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let files = small_synth(dir.path(), 3);
        let artifact = train_mapping(
            &files.target_corpus,
            &files.source_corpus,
            &files.alignments,
            &PipelineConfig::default(),
        )
        .unwrap();
        let path = dir.path().join("map.json");
        save_artifact(&artifact, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_artifact(&path),
            Err(Error::FormatError { .. })
        ));
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let files = small_synth(dir.path(), 4);
        let artifact = train_mapping(
            &files.target_corpus,
            &files.source_corpus,
            &files.alignments,
            &PipelineConfig::default(),
        )
        .unwrap();
        let path = dir.path().join("map.json");
        save_artifact(&artifact, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":\"1\"", "\"version\":\"99\"");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_artifact(&path),
            Err(Error::VersionMismatch { found, .. }) if found == "99"
        ));
    }

    #[test]
    fn transfer_identity_artifact_normalizes() {
        let d = 2;
        let artifact = MappingArtifact {
            version: ARTIFACT_VERSION.into(),
            dim: d,
            level: Level::Word,
            w: OrthogonalMap::new(d, vec![1.0, 0.0, 0.0, 1.0], 0.0).unwrap(),
            target_in: InTransform::identity(d),
            source_in: InTransform::identity(d),
            anchor_count: 2,
            residual: 0.0,
            settings: PipelineConfig::default(),
            underdetermined: false,
            seeds: Seeds {
                pipeline: 0,
                clustering: 0,
            },
        };
        let out = transfer_vector(&artifact, &[3.0, 4.0]).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-12);
        assert!((out[1] - 0.8).abs() < 1e-12);
        assert!(matches!(
            transfer_vector(&artifact, &[0.0, 0.0]),
            Err(Error::DegenerateVector { .. })
        ));
        assert!(matches!(
            transfer_vector(&artifact, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sense_level_never_fewer_anchors_than_word_level() {
        let dir = tempfile::tempdir().unwrap();
        let files = generate_synthetic(
            &SynthConfig {
                dim: 8,
                n_types: 20,
                n_sentences: 500,
                sentence_len: 8,
                two_sense_fraction: 0.5,
                sense_offset_norm: 0.2,
                seed: 5,
                ..SynthConfig::default()
            },
            dir.path(),
        )
        .unwrap();
        let mut counts = Vec::new();
        for level in [Level::Word, Level::Sense] {
            let cfg = PipelineConfig {
                level,
                ..PipelineConfig::default()
            };
            let artifact = train_mapping(
                &files.target_corpus,
                &files.source_corpus,
                &files.alignments,
                &cfg,
            )
            .unwrap();
            counts.push(artifact.anchor_count);
        }
        assert!(counts[1] >= counts[0], "sense {} < word {}", counts[1], counts[0]);
    }

    #[test]
    fn residual_matches_recomputation_from_anchor_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let files = small_synth(dir.path(), 6);
        let align = read_alignments(&files.alignments).unwrap();
        let cfg = PipelineConfig::default();
        let mut coll = collect_type_pairs(
            read_corpus(&files.target_corpus).unwrap(),
            read_corpus(&files.source_corpus).unwrap(),
            &align,
            cfg.cap,
            cfg.lowercase,
        )
        .unwrap();
        let (artifact, (x_s, y_s)) = train_from_collection(&mut coll, &cfg).unwrap();
        let mapped = apply_map(&artifact.w, &x_s).unwrap();
        assert!((diff_frobenius(&mapped, &y_s) - artifact.residual).abs() <= 1e-9);
    }

    #[test]
    fn training_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let files = small_synth(dir.path(), 7);
        let cfg = PipelineConfig::default();
        let run = || {
            train_mapping(
                &files.target_corpus,
                &files.source_corpus,
                &files.alignments,
                &cfg,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        let pa = dir.path().join("a.map.json");
        let pb = dir.path().join("b.map.json");
        save_artifact(&a, &pa).unwrap();
        save_artifact(&b, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }
}
