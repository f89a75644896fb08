//! Dense matrix primitives, the orthogonal Procrustes solver, and map
//! application.
//!
//! An [`EmbeddingMatrix`] holds `count` column vectors of dimension `dim`.
//! [`solve_procrustes`] finds the orthogonal `W` minimizing `||W*X - Y||_F`
//! over column-paired anchor matrices; [`apply_map`] pushes a matrix through
//! the learned map. Everything computes in `f64` regardless of how the
//! embeddings were stored upstream.

use crate::error::{Error, Result};
use crate::svd::jacobi_svd;

/// Tolerance on `||W^T W - I||_max` for a map to count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

/// Column norms below this are treated as degenerate (zero) vectors.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Dense matrix of `count` column vectors, each of dimension `dim`.
///
/// Storage is column-major: column `i` occupies `values[i*dim .. (i+1)*dim]`.
/// Columns may optionally carry string labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    count: usize,
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("matrix dimension must be positive".into()));
        }
        if values.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len(),
                context: "matrix values length must be a multiple of dim".into(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("matrix entry {pos}"),
            });
        }
        let count = values.len() / dim;
        Ok(Self {
            dim,
            count,
            values,
            labels: None,
        })
    }

    pub fn from_columns<I, C>(dim: usize, columns: I) -> Result<Self>
    where
        I: IntoIterator<Item = C>,
        C: AsRef<[f64]>,
    {
        let mut values = Vec::new();
        for (i, col) in columns.into_iter().enumerate() {
            let col = col.as_ref();
            if col.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: col.len(),
                    context: format!("column {i}"),
                });
            }
            values.extend_from_slice(col);
        }
        Self::new(dim, values)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.count {
            return Err(Error::DimensionMismatch {
                expected: self.count,
                got: labels.len(),
                context: "label count".into(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub(crate) fn column_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean of all columns; `None` when the matrix has no columns.
    pub fn column_mean(&self) -> Option<Vec<f64>> {
        if self.count == 0 {
            return None;
        }
        let mut mean = vec![0.0; self.dim];
        for col in self.columns() {
            for (m, x) in mean.iter_mut().zip(col) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= self.count as f64;
        }
        Some(mean)
    }
}

/// Orthogonal linear map with the contract `y ≈ W · x`.
///
/// `values` is row-major d×d. `residual` records `||W*X - Y||_F` on the
/// anchors the map was solved from.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    dim: usize,
    values: Vec<f64>,
    residual: f64,
}

impl OrthogonalMap {
    /// Validates orthogonality (`||W^T W - I||_max <= 1e-6`) and finiteness.
    pub fn new(dim: usize, values: Vec<f64>, residual: f64) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: values.len(),
                context: "orthogonal map values".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) || !residual.is_finite() || residual < 0.0 {
            return Err(Error::NonFinite {
                context: "orthogonal map entries or residual".into(),
            });
        }
        let map = Self {
            dim,
            values,
            residual,
        };
        let defect = map.orthogonality_defect();
        if defect > ORTHOGONALITY_TOL {
            return Err(Error::NonFinite {
                context: format!("matrix is not orthogonal (defect {defect:.3e})"),
            });
        }
        Ok(map)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major d×d entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `||W^T W - I||_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut dot = 0.0;
                for r in 0..d {
                    dot += self.values[r * d + i] * self.values[r * d + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - expect).abs());
            }
        }
        worst
    }

    /// `W · x` into a fresh vector.
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
                context: "apply_vec input".into(),
            });
        }
        let d = self.dim;
        let mut y = vec![0.0; d];
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.values[r * d..(r + 1) * d];
            *out = dot(row, x);
        }
        Ok(y)
    }
}

/// Inner product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Square root of the sum of squared entries; 0 for an empty matrix.
pub fn frobenius_norm(m: &EmbeddingMatrix) -> f64 {
    m.values().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescale every column to Euclidean norm 1.
///
/// Fails with `DegenerateVector` if any column norm is below 1e-12.
pub fn unit_normalize_columns(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut out = m.clone();
    for i in 0..out.count() {
        let col = out.column_mut(i);
        let n = norm(col);
        if n < DEGENERATE_NORM {
            return Err(Error::DegenerateVector {
                context: format!("column {i} has norm {n:.3e}"),
            });
        }
        for x in col.iter_mut() {
            *x /= n;
        }
    }
    Ok(out)
}

pub(crate) fn unit_normalize_in_place(v: &mut [f64], context: &str) -> Result<()> {
    let n = norm(v);
    if n < DEGENERATE_NORM {
        return Err(Error::DegenerateVector {
            context: format!("{context} has norm {n:.3e}"),
        });
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(())
}

/// Solve the orthogonal Procrustes problem `min ||W*X - Y||_F` over
/// orthogonal `W`, where columns of `X` and `Y` are paired anchors.
///
/// `W = U V^T` from the SVD of `Y X^T`. Reflections are permitted (no
/// determinant constraint). The returned map's `residual` is
/// `||W*X - Y||_F` on the given anchors.
pub fn solve_procrustes(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<OrthogonalMap> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
            context: "procrustes input dimensions".into(),
        });
    }
    if x.count() != y.count() {
        return Err(Error::DimensionMismatch {
            expected: x.count(),
            got: y.count(),
            context: "procrustes anchor counts".into(),
        });
    }
    let d = x.dim();

    // M = Y X^T, row-major d×d.
    let mut m = vec![0.0; d * d];
    for (xc, yc) in x.columns().zip(y.columns()) {
        for r in 0..d {
            let yr = yc[r];
            let row = &mut m[r * d..(r + 1) * d];
            for (entry, xv) in row.iter_mut().zip(xc) {
                *entry += yr * xv;
            }
        }
    }

    let svd = jacobi_svd(&m, d)?;
    let w = svd.u_vt();

    let map = OrthogonalMap {
        dim: d,
        values: w,
        residual: 0.0,
    };
    let mapped = apply_map(&map, x)?;
    let residual = diff_frobenius(&mapped, y);
    OrthogonalMap::new(d, map.values, residual)
}

/// `||A - B||_F` for same-shape matrices.
pub fn diff_frobenius(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    debug_assert_eq!(a.count(), b.count());
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Map every column of `X` through `W`, preserving labels.
pub fn apply_map(w: &OrthogonalMap, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if w.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: x.dim(),
            context: "apply_map dimensions".into(),
        });
    }
    let d = x.dim();
    let mut values = vec![0.0; x.values().len()];
    for (i, col) in x.columns().enumerate() {
        let out = &mut values[i * d..(i + 1) * d];
        for (r, entry) in out.iter_mut().enumerate() {
            *entry = dot(&w.values[r * d..(r + 1) * d], col);
        }
    }
    let mut result = EmbeddingMatrix::new(d, values)?;
    if let Some(labels) = x.labels() {
        result = result.with_labels(labels.to_vec())?;
    }
    Ok(result)
}
