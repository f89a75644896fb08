//! Seeded synthetic bilingual corpus generator with known ground truth.
//!
//! Source types get unit-Gaussian sense vectors; target occurrences are the
//! planted orthogonal map applied to the clean source sense vector, plus an
//! optional per-sense offset, an optional shared anisotropy offset, and
//! Gaussian noise. Polysemous target types align to distinct source types
//! per sense, which is what gives sense-level anchors their edge over
//! word-level means. Output is byte-identical for a fixed seed.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_types: usize,
    pub n_sentences: usize,
    pub sentence_len: usize,
    /// Fraction of target types with two senses; the rest have one.
    pub two_sense_fraction: f64,
    pub noise_sigma: f64,
    /// Norm of the fixed offset added to every occurrence, per side.
    pub anisotropy_offset_norm: f64,
    /// Norm of a per-sense offset on the target side, breaking the exact
    /// orthogonal relation between the spaces.
    pub sense_offset_norm: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            n_types: 500,
            n_sentences: 2000,
            sentence_len: 10,
            two_sense_fraction: 0.2,
            noise_sigma: 0.01,
            anisotropy_offset_norm: 0.0,
            sense_offset_norm: 0.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig("dim must be at least 2".into()));
        }
        if self.n_types == 0 || self.n_sentences == 0 || self.sentence_len == 0 {
            return Err(Error::InvalidConfig(
                "types, sentences, and sentence length must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.two_sense_fraction) {
            return Err(Error::InvalidConfig(
                "two_sense_fraction must be in [0, 1]".into(),
            ));
        }
        if self.noise_sigma < 0.0
            || self.anisotropy_offset_norm < 0.0
            || self.sense_offset_norm < 0.0
        {
            return Err(Error::InvalidConfig(
                "sigma and offset norms must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// What the generator knows and the pipeline must recover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Planted orthogonal map (source -> target), row-major d×d.
    pub a: Vec<Vec<f64>>,
    /// Target sense label ("type@senseIndex") -> correct source type.
    pub type_truth: BTreeMap<String, String>,
    pub sense_vectors: SenseVectors,
}

/// Noise-free expected occurrence vectors per side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SenseVectors {
    pub target: BTreeMap<String, Vec<f64>>,
    pub source: BTreeMap<String, Vec<f64>>,
}

impl GroundTruth {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Row-major flattening of the planted map.
    pub fn a_flat(&self) -> Vec<f64> {
        self.a.iter().flatten().copied().collect()
    }
}

/// File names written by [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub target_corpus: PathBuf,
    pub source_corpus: PathBuf,
    pub alignments: PathBuf,
    pub ground_truth: PathBuf,
}

/// Sample a uniformly random orthogonal matrix (row-major) by Gram-Schmidt
/// orthonormalization of a Gaussian matrix.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        // columns of g, orthonormalized in order
        let mut cols: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let mut ok = true;
        for i in 0..dim {
            for j in 0..i {
                let d: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                for r in 0..dim {
                    cols[i][r] -= d * cols[j][r];
                }
            }
            let n: f64 = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-8 {
                ok = false;
                break;
            }
            for x in cols[i].iter_mut() {
                *x /= n;
            }
        }
        if !ok {
            continue; // essentially never: Gaussian matrices are full rank
        }
        let mut m = vec![0.0; dim * dim];
        for (c, col) in cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                m[r * dim + c] = v;
            }
        }
        return m;
    }
}

/// Random unit vector.
pub fn random_unit_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

struct Sense {
    source_name: String,
    /// Clean source sense vector (unit Gaussian).
    source_vec: Vec<f64>,
    /// A * source_vec + sense offset; target occurrences scatter around
    /// this plus the shared anisotropy offset.
    target_clean: Vec<f64>,
}

struct TypeSpec {
    name: String,
    senses: Vec<Sense>,
}

/// Write the synthetic bundle (target/source corpora, alignments, ground
/// truth) into `out_dir`.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SynthFiles> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let a = random_orthogonal(d, &mut rng);
    let scaled = |v: Vec<f64>, norm: f64| -> Vec<f64> { v.into_iter().map(|x| x * norm).collect() };
    let target_offset = scaled(random_unit_vector(d, &mut rng), cfg.anisotropy_offset_norm);
    let source_offset = scaled(random_unit_vector(d, &mut rng), cfg.anisotropy_offset_norm);

    // Plant types and senses.
    let mut types = Vec::with_capacity(cfg.n_types);
    let mut source_counter = 0usize;
    for i in 0..cfg.n_types {
        let n_senses = if rng.gen::<f64>() < cfg.two_sense_fraction {
            2
        } else {
            1
        };
        let mut senses = Vec::with_capacity(n_senses);
        for _ in 0..n_senses {
            let source_vec = random_unit_vector(d, &mut rng);
            let offset = scaled(random_unit_vector(d, &mut rng), cfg.sense_offset_norm);
            let mut target_clean = vec![0.0; d];
            for r in 0..d {
                let row = &a[r * d..(r + 1) * d];
                target_clean[r] =
                    row.iter().zip(&source_vec).map(|(m, x)| m * x).sum::<f64>() + offset[r];
            }
            senses.push(Sense {
                source_name: format!("s{source_counter:05}"),
                source_vec,
                target_clean,
            });
            source_counter += 1;
        }
        types.push(TypeSpec {
            name: format!("t{i:05}"),
            senses,
        });
    }

    let files = SynthFiles {
        target_corpus: out_dir.join("target.tec.jsonl"),
        source_corpus: out_dir.join("source.tec.jsonl"),
        alignments: out_dir.join("alignments.txt"),
        ground_truth: out_dir.join("truth.json"),
    };

    let open = |p: &Path| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(
            File::create(p).map_err(|e| Error::io(p, e))?,
        ))
    };
    let mut tf = open(&files.target_corpus)?;
    let mut sf = open(&files.source_corpus)?;
    let mut af = open(&files.alignments)?;

    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: std::io::Error| Error::io(p.clone(), e)
    };

    writeln!(tf, "{}", serde_json::json!({ "dim": d })).map_err(io_err(&files.target_corpus))?;
    writeln!(sf, "{}", serde_json::json!({ "dim": d })).map_err(io_err(&files.source_corpus))?;

    let noise = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|_| cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    for sent in 0..cfg.n_sentences {
        let mut t_tokens = Vec::with_capacity(cfg.sentence_len);
        let mut t_vectors = Vec::with_capacity(cfg.sentence_len);
        let mut s_tokens = Vec::with_capacity(cfg.sentence_len);
        let mut s_vectors = Vec::with_capacity(cfg.sentence_len);
        let mut links = Vec::with_capacity(cfg.sentence_len);
        for pos in 0..cfg.sentence_len {
            let ty = &types[rng.gen_range(0..types.len())];
            let sense = if ty.senses.len() == 2 {
                &ty.senses[rng.gen_range(0..2)]
            } else {
                &ty.senses[0]
            };
            let t_noise = noise(&mut rng);
            let s_noise = noise(&mut rng);
            let t_vec: Vec<f64> = (0..d)
                .map(|r| sense.target_clean[r] + target_offset[r] + t_noise[r])
                .collect();
            let s_vec: Vec<f64> = (0..d)
                .map(|r| sense.source_vec[r] + source_offset[r] + s_noise[r])
                .collect();
            t_tokens.push(ty.name.clone());
            t_vectors.push(t_vec);
            s_tokens.push(sense.source_name.clone());
            s_vectors.push(s_vec);
            links.push(format!("{pos}-{pos}"));
        }
        writeln!(
            tf,
            "{}",
            serde_json::json!({ "id": sent, "tokens": t_tokens, "vectors": t_vectors })
        )
        .map_err(io_err(&files.target_corpus))?;
        writeln!(
            sf,
            "{}",
            serde_json::json!({ "id": sent, "tokens": s_tokens, "vectors": s_vectors })
        )
        .map_err(io_err(&files.source_corpus))?;
        writeln!(af, "{}", links.join(" ")).map_err(io_err(&files.alignments))?;
    }
    tf.flush().map_err(io_err(&files.target_corpus))?;
    sf.flush().map_err(io_err(&files.source_corpus))?;
    af.flush().map_err(io_err(&files.alignments))?;

    // Ground truth: expected occurrence vectors (offsets included, noise-free).
    let mut type_truth = BTreeMap::new();
    let mut target_vecs = BTreeMap::new();
    let mut source_vecs = BTreeMap::new();
    for ty in &types {
        for (j, sense) in ty.senses.iter().enumerate() {
            let label = format!("{}@{j}", ty.name);
            type_truth.insert(label.clone(), sense.source_name.clone());
            target_vecs.insert(
                label,
                sense
                    .target_clean
                    .iter()
                    .zip(&target_offset)
                    .map(|(v, o)| v + o)
                    .collect(),
            );
            source_vecs.insert(
                sense.source_name.clone(),
                sense
                    .source_vec
                    .iter()
                    .zip(&source_offset)
                    .map(|(v, o)| v + o)
                    .collect(),
            );
        }
    }
    let truth = GroundTruth {
        a: a.chunks(d).map(|row| row.to_vec()).collect(),
        type_truth,
        sense_vectors: SenseVectors {
            target: target_vecs,
            source: source_vecs,
        },
    };
    save_ground_truth(&truth, &files.ground_truth)?;
    Ok(files)
}

pub fn save_ground_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string(truth)
        .map_err(|e| Error::format(Some(path.to_path_buf()), None, e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let truth: GroundTruth = serde_json::from_str(&text)
        .map_err(|e| Error::format(Some(path.to_path_buf()), None, e.to_string()))?;
    let d = truth.a.len();
    for row in &truth.a {
        if row.len() != d {
            return Err(Error::format(
                Some(path.to_path_buf()),
                None,
                "ground-truth map is not square",
            ));
        }
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{collect_type_pairs, read_alignments, read_corpus};
    use crate::isotropy::anisotropy_score;
    use crate::linalg::EmbeddingMatrix;

    #[test]
    fn orthogonal_sampler_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [2, 5, 16] {
            let q = random_orthogonal(d, &mut rng);
            for i in 0..d {
                for j in 0..d {
                    let dot: f64 = (0..d).map(|r| q[r * d + i] * q[r * d + j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn generation_is_byte_deterministic() {
        let cfg = SynthConfig {
            n_types: 20,
            n_sentences: 30,
            seed: 7,
            ..SynthConfig::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let fa = generate_synthetic(&cfg, dir_a.path()).unwrap();
        let fb = generate_synthetic(&cfg, dir_b.path()).unwrap();
        for (a, b) in [
            (&fa.target_corpus, &fb.target_corpus),
            (&fa.source_corpus, &fb.source_corpus),
            (&fa.alignments, &fb.alignments),
            (&fa.ground_truth, &fb.ground_truth),
        ] {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn monosemous_noiseless_vectors_are_identical() {
        let cfg = SynthConfig {
            dim: 8,
            n_types: 10,
            n_sentences: 50,
            sentence_len: 4,
            two_sense_fraction: 0.0,
            noise_sigma: 0.0,
            seed: 3,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let files = generate_synthetic(&cfg, dir.path()).unwrap();
        let coll = collect_type_pairs(
            read_corpus(&files.target_corpus).unwrap(),
            read_corpus(&files.source_corpus).unwrap(),
            &read_alignments(&files.alignments).unwrap(),
            100_000,
            true,
        )
        .unwrap();
        for (_, entry) in coll.iter() {
            let first = &entry.pairs[0].0;
            for (tv, _) in &entry.pairs {
                for (a, b) in tv.iter().zip(first) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn anisotropy_offset_dominates_scores() {
        let cfg = SynthConfig {
            dim: 16,
            n_types: 50,
            n_sentences: 200,
            anisotropy_offset_norm: 5.0,
            seed: 11,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let files = generate_synthetic(&cfg, dir.path()).unwrap();
        let mut values = Vec::new();
        for record in read_corpus(&files.target_corpus).unwrap() {
            for v in record.unwrap().vectors {
                values.extend(v);
            }
        }
        let m = EmbeddingMatrix::new(16, values).unwrap();
        let score = anisotropy_score(&m, 1000, 5).unwrap();
        assert!(score >= 0.5, "score {score}");
    }

    #[test]
    fn ground_truth_roundtrip_and_labels() {
        let cfg = SynthConfig {
            dim: 4,
            n_types: 8,
            n_sentences: 10,
            two_sense_fraction: 0.5,
            seed: 9,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let files = generate_synthetic(&cfg, dir.path()).unwrap();
        let truth = load_ground_truth(&files.ground_truth).unwrap();
        assert_eq!(truth.dim(), 4);
        for (label, source) in &truth.type_truth {
            assert!(truth.sense_vectors.target.contains_key(label));
            assert!(truth.sense_vectors.source.contains_key(source));
            assert!(label.contains('@'));
        }
    }
}
