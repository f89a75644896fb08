//! Anisotropy measurement and iterative normalization.
//!
//! Contextual embedding spaces tend to occupy a narrow cone; the degree is
//! measured here as the mean pairwise cosine similarity of sampled vectors
//! (0 for an isotropic space). Iterative normalization (IN) removes the
//! effect by alternately centering all vectors to zero mean and rescaling
//! them to unit length. The fit records the per-iteration means so the same
//! transform can be replayed on unseen vectors.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, unit_normalize_in_place, EmbeddingMatrix, DEGENERATE_NORM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Mean norms below this stop the centering loop; remaining iterations
/// record exact zero means.
pub const MEAN_CONVERGENCE_TOL: f64 = 1e-9;

/// Replayable iterative-normalization transform: the ordered per-iteration
/// mean vectors recorded during fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct InTransform {
    dim: usize,
    means: Vec<Vec<f64>>,
}

impl InTransform {
    pub fn from_means(dim: usize, means: Vec<Vec<f64>>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidConfig(
                "an IN transform needs at least one iteration".into(),
            ));
        }
        for (t, mean) in means.iter().enumerate() {
            if mean.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: mean.len(),
                    context: format!("IN mean {t}"),
                });
            }
            if mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("IN mean {t}"),
                });
            }
        }
        Ok(Self { dim, means })
    }

    /// Transform that only unit-normalizes: a single zero mean.
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            means: vec![vec![0.0; dim]],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iterations(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }
}

/// Mean cosine similarity over all unordered pairs of `min(sample_size,
/// count)` columns sampled without replacement with the seeded generator.
///
/// Deterministic for fixed inputs, seed, and thread count alike: the pair
/// sums reduce in a fixed order.
pub fn anisotropy_score(m: &EmbeddingMatrix, sample_size: usize, seed: u64) -> Result<f64> {
    if m.count() < 2 {
        return Err(Error::InsufficientVectors {
            needed: 2,
            got: m.count(),
        });
    }
    if sample_size < 2 {
        return Err(Error::InsufficientVectors {
            needed: 2,
            got: sample_size,
        });
    }
    for (i, col) in m.columns().enumerate() {
        if norm(col) < DEGENERATE_NORM {
            return Err(Error::DegenerateVector {
                context: format!("column {i} has near-zero norm"),
            });
        }
    }

    let n = m.count();
    let take = sample_size.min(n);

    // Partial Fisher-Yates: the first `take` slots are a uniform sample
    // without replacement.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..take {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(take);

    let units: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| {
            let col = m.column(i);
            let n = norm(col);
            col.iter().map(|x| x / n).collect()
        })
        .collect();

    // Per-anchor partial sums are each computed sequentially and combined
    // in index order, so the result is independent of worker count.
    let partials: Vec<f64> = (0..take.saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let ui = &units[i];
            let mut acc = 0.0;
            for uj in units.iter().skip(i + 1) {
                acc += dot(ui, uj);
            }
            acc
        })
        .collect();
    let total: f64 = partials.iter().sum();
    let pairs = (take * (take - 1) / 2) as f64;
    Ok(total / pairs)
}

/// Fit iterative normalization: for each iteration record the current mean,
/// subtract it from every column, then unit-normalize every column.
///
/// Once the mean norm drops below 1e-9 the recorded means become exact zero
/// vectors (the matrix still gets re-normalized), so `iterations` entries
/// always exist and replaying them reproduces the fit output exactly.
pub fn fit_iterative_normalization(
    m: &EmbeddingMatrix,
    iterations: usize,
) -> Result<(InTransform, EmbeddingMatrix)> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be positive".into()));
    }
    if m.count() < 2 {
        return Err(Error::InsufficientVectors {
            needed: 2,
            got: m.count(),
        });
    }
    let dim = m.dim();
    let mut current = m.clone();
    let mut means = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut mean = current.column_mean().expect("count >= 2");
        if norm(&mean) < MEAN_CONVERGENCE_TOL {
            mean = vec![0.0; dim];
        }
        center_and_normalize(&mut current, &mean)?;
        means.push(mean);
    }
    let transform = InTransform::from_means(dim, means)?;
    Ok((transform, current))
}

/// Replay a fitted transform on a matrix: subtract each recorded mean in
/// order, unit-normalizing after every subtraction.
pub fn apply_in(t: &InTransform, m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if t.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: m.dim(),
            context: "apply_in".into(),
        });
    }
    let mut current = m.clone();
    for mean in t.means() {
        center_and_normalize(&mut current, mean)?;
    }
    Ok(current)
}

/// Replay a fitted transform on a single vector.
pub fn apply_in_vec(t: &InTransform, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: x.len(),
            context: "apply_in_vec".into(),
        });
    }
    let mut v = x.to_vec();
    for mean in t.means() {
        for (val, mu) in v.iter_mut().zip(mean) {
            *val -= mu;
        }
        unit_normalize_in_place(&mut v, "vector after centering")?;
    }
    Ok(v)
}

fn center_and_normalize(m: &mut EmbeddingMatrix, mean: &[f64]) -> Result<()> {
    for i in 0..m.count() {
        let col = m.column_mut(i);
        for (val, mu) in col.iter_mut().zip(mean) {
            *val -= mu;
        }
        let n = norm(col);
        if n < DEGENERATE_NORM {
            return Err(Error::DegenerateVector {
                context: format!("column {i} vanished after centering"),
            });
        }
        for val in col.iter_mut() {
            *val /= n;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn matrix(dim: usize, cols: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_columns(dim, cols.iter().copied()).unwrap()
    }

    fn gaussian_matrix(dim: usize, count: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..dim * count).map(|_| rng.sample(StandardNormal)).collect();
        EmbeddingMatrix::new(dim, values).unwrap()
    }

    #[test]
    fn identical_vectors_score_one() {
        let col = vec![0.6, 0.8];
        let cols: Vec<&[f64]> = (0..100).map(|_| col.as_slice()).collect();
        let m = matrix(2, &cols);
        let score = anisotropy_score(&m, 1000, 42).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antipodal_vectors_score_minus_one() {
        let m = matrix(2, &[&[1.0, 0.0], &[-1.0, 0.0]]);
        let score = anisotropy_score(&m, 2, 0).unwrap();
        assert!((score + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_cloud_scores_near_zero() {
        let m = gaussian_matrix(64, 10000, 7);
        let score = anisotropy_score(&m, 1000, 13).unwrap();
        assert!(score.abs() <= 0.02, "score {score}");
    }

    #[test]
    fn full_computation_matches_naive_oracle() {
        let m = gaussian_matrix(5, 40, 3);
        // sample_size >= count: exact computation over all pairs.
        let score = anisotropy_score(&m, 100, 99).unwrap();
        let mut acc = 0.0;
        let mut pairs = 0usize;
        for i in 0..40 {
            for j in (i + 1)..40 {
                let a = m.column(i);
                let b = m.column(j);
                acc += dot(a, b) / (norm(a) * norm(b));
                pairs += 1;
            }
        }
        assert!((score - acc / pairs as f64).abs() < 1e-12);
    }

    #[test]
    fn regular_simplex_matches_analytic_value() {
        // k+1 centered unit directions in R^{k+1}: pairwise cosine -1/k.
        let k = 9usize;
        let n = k + 1;
        let mut cols = Vec::new();
        for i in 0..n {
            let mut v = vec![-1.0 / n as f64; n];
            v[i] += 1.0;
            cols.push(v);
        }
        let m = EmbeddingMatrix::from_columns(n, cols).unwrap();
        let score = anisotropy_score(&m, n, 0).unwrap();
        assert!((score - (-1.0 / k as f64)).abs() < 1e-9);
    }

    #[test]
    fn score_rejects_single_vector() {
        let m = matrix(2, &[&[1.0, 0.0]]);
        assert!(matches!(
            anisotropy_score(&m, 10, 0),
            Err(Error::InsufficientVectors { .. })
        ));
    }

    #[test]
    fn score_rejects_zero_column() {
        let m = matrix(2, &[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            anisotropy_score(&m, 10, 0),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn score_deterministic_across_thread_counts() {
        let m = gaussian_matrix(16, 500, 21);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let s1 = pool1.install(|| anisotropy_score(&m, 200, 5).unwrap());
        let s4 = pool4.install(|| anisotropy_score(&m, 200, 5).unwrap());
        assert_eq!(s1.to_bits(), s4.to_bits());
    }

    #[test]
    fn fit_fixed_point_antipodal() {
        let m = matrix(2, &[&[1.0, 0.0], &[-1.0, 0.0]]);
        let (t, out) = fit_iterative_normalization(&m, 5).unwrap();
        assert_eq!(t.iterations(), 5);
        for mean in t.means() {
            assert!(norm(mean) <= 1e-9);
        }
        for (a, b) in m.values().iter().zip(out.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_hand_arithmetic() {
        let m = matrix(2, &[&[2.0, 0.0], &[0.0, 2.0]]);
        let (t, out) = fit_iterative_normalization(&m, 5).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [s, -s, -s, s];
        for (a, b) in out.values().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // iteration 1 mean is (1, 1); iteration 2 onward converged to zero
        assert!((t.means()[0][0] - 1.0).abs() < 1e-12);
        assert!((t.means()[0][1] - 1.0).abs() < 1e-12);
        for mean in &t.means()[1..] {
            assert_eq!(norm(mean), 0.0);
        }
    }

    #[test]
    fn fit_cures_offset_anisotropy() {
        // Gaussian columns shifted by a fixed offset of norm 5.
        let dim = 16;
        let count = 5000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut offset: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&offset);
        for x in offset.iter_mut() {
            *x *= 5.0 / n;
        }
        let mut values = Vec::with_capacity(dim * count);
        for _ in 0..count {
            for mu in offset.iter() {
                values.push(mu + rng.sample::<f64, _>(StandardNormal));
            }
        }
        let m = EmbeddingMatrix::new(dim, values).unwrap();
        let before = anisotropy_score(&m, 1000, 1).unwrap();
        assert!(before >= 0.5, "before {before}");
        let (_, fitted) = fit_iterative_normalization(&m, 5).unwrap();
        let after = anisotropy_score(&fitted, 1000, 1).unwrap();
        assert!(after.abs() <= 0.05, "after {after}");
    }

    #[test]
    fn replay_reproduces_fit_output() {
        let m = gaussian_matrix(8, 200, 31);
        let (t, fitted) = fit_iterative_normalization(&m, 5).unwrap();
        let replayed = apply_in(&t, &m).unwrap();
        for (a, b) in fitted.values().iter().zip(replayed.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn apply_zero_mean_is_pure_normalization() {
        let t = InTransform::identity(2);
        let m = matrix(2, &[&[3.0, 4.0]]);
        let out = apply_in(&t, &m).unwrap();
        assert!((out.column(0)[0] - 0.6).abs() < 1e-15);
        assert!((out.column(0)[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn replay_on_held_out_vector() {
        // transform fitted from the (2,0),(0,2) example, applied to (4,0)
        let m = matrix(2, &[&[2.0, 0.0], &[0.0, 2.0]]);
        let (t, _) = fit_iterative_normalization(&m, 5).unwrap();
        let out = apply_in_vec(&t, &[4.0, 0.0]).unwrap();
        let scale = 1.0 / 10.0_f64.sqrt();
        assert!((out[0] - 3.0 * scale).abs() < 1e-12);
        assert!((out[1] + scale).abs() < 1e-12);
    }

    #[test]
    fn unit_norms_after_fit_and_apply() {
        let m = gaussian_matrix(12, 300, 8);
        let (t, fitted) = fit_iterative_normalization(&m, 5).unwrap();
        for col in fitted.columns() {
            assert!((norm(col) - 1.0).abs() <= 1e-12);
        }
        let applied = apply_in(&t, &gaussian_matrix(12, 50, 9)).unwrap();
        for col in applied.columns() {
            assert!((norm(col) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn fit_idempotent_at_fixed_point() {
        let m = gaussian_matrix(64, 5000, 44);
        let (_, fitted) = fit_iterative_normalization(&m, 5).unwrap();
        let (t2, refit) = fit_iterative_normalization(&fitted, 5).unwrap();
        for mean in t2.means() {
            assert!(norm(mean) <= 1e-9, "residual mean norm {}", norm(mean));
        }
        for (a, b) in fitted.values().iter().zip(refit.values()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = InTransform::identity(3);
        let m = matrix(2, &[&[1.0, 0.0]]);
        assert!(matches!(
            apply_in(&t, &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
