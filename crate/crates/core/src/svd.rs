//! One-sided Jacobi SVD for small square matrices.
//!
//! The Procrustes solver only ever decomposes the d×d product of two anchor
//! matrices, so a dependency-free Jacobi kernel is enough: rotations are
//! applied to column pairs until all columns are mutually orthogonal, at
//! which point the column norms are the singular values.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAG_TOL: f64 = 1e-12;

/// Factorization `A = U * diag(sigma) * V^T` of a square matrix.
///
/// `u` and `v` are column-major d×d with orthonormal columns; `sigma` is
/// sorted descending. The sign of each left singular vector is fixed so its
/// largest-magnitude entry is positive.
pub(crate) struct Svd {
    pub dim: usize,
    pub u: Vec<f64>,
    #[allow(dead_code)] // only read by the reconstruction check in tests
    pub sigma: Vec<f64>,
    pub v: Vec<f64>,
}

/// Decompose a row-major d×d matrix.
pub(crate) fn jacobi_svd(a_row_major: &[f64], dim: usize) -> Result<Svd> {
    assert_eq!(a_row_major.len(), dim * dim);

    // Work on a column-major copy so column rotations are contiguous.
    let mut b = vec![0.0; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            b[c * dim + r] = a_row_major[r * dim + c];
        }
    }
    let mut v = identity(dim);

    let mut converged = dim < 2;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        for p in 0..dim.saturating_sub(1) {
            for q in (p + 1)..dim {
                let (alpha, beta, gamma) = column_moments(&b, dim, p, q);
                if alpha == 0.0 || beta == 0.0 {
                    continue; // zero column: nothing to rotate
                }
                if gamma.abs() <= OFF_DIAG_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut b, dim, p, q, c, s);
                rotate_columns(&mut v, dim, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(Error::SvdFailure { sweeps: MAX_SWEEPS });
    }

    // Column norms of the rotated matrix are the singular values.
    let mut order: Vec<usize> = (0..dim).collect();
    let norms: Vec<f64> = (0..dim)
        .map(|i| {
            let col = &b[i * dim..(i + 1) * dim];
            col.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u = vec![0.0; dim * dim];
    let mut v_sorted = vec![0.0; dim * dim];
    let mut sigma = vec![0.0; dim];
    let max_norm = norms[order[0]];
    let rank_tol = if max_norm > 0.0 {
        max_norm * 1e-12
    } else {
        0.0
    };

    let mut deficient = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        sigma[slot] = norms[i];
        v_sorted[slot * dim..(slot + 1) * dim].copy_from_slice(&v[i * dim..(i + 1) * dim]);
        if norms[i] > rank_tol && norms[i] > 0.0 {
            for r in 0..dim {
                u[slot * dim + r] = b[i * dim + r] / norms[i];
            }
        } else {
            deficient.push(slot);
        }
    }

    // Rank-deficient input: complete U with an orthonormal basis of the
    // remaining subspace, scanning standard basis vectors in index order.
    // Slots not yet filled hold zeros, so projecting against them is a no-op.
    for &slot in &deficient {
        let mut chosen = None;
        for j in 0..dim {
            let mut cand = vec![0.0; dim];
            cand[j] = 1.0;
            orthogonalize_against(&mut cand, &u, dim, slot);
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for x in cand.iter_mut() {
                    *x /= norm;
                }
                chosen = Some(cand);
                break;
            }
        }
        let cand = chosen.expect("orthonormal completion always exists");
        u[slot * dim..(slot + 1) * dim].copy_from_slice(&cand);
    }

    // Sign convention: largest-magnitude entry of each left singular vector
    // is positive; the matching right vector flips with it.
    for i in 0..dim {
        let col = &u[i * dim..(i + 1) * dim];
        let mut arg = 0;
        for r in 1..dim {
            if col[r].abs() > col[arg].abs() {
                arg = r;
            }
        }
        if col[arg] < 0.0 {
            for r in 0..dim {
                u[i * dim + r] = -u[i * dim + r];
                v_sorted[i * dim + r] = -v_sorted[i * dim + r];
            }
        }
    }

    Ok(Svd {
        dim,
        u,
        sigma,
        v: v_sorted,
    })
}

impl Svd {
    /// Row-major product `U * V^T`.
    pub(crate) fn u_vt(&self) -> Vec<f64> {
        let d = self.dim;
        let mut w = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.u[k * d + r] * self.v[k * d + c];
                }
                w[r * d + c] = acc;
            }
        }
        w
    }

    /// Row-major reconstruction `U * diag(sigma) * V^T`.
    #[cfg(test)]
    pub(crate) fn reconstruct(&self) -> Vec<f64> {
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.u[k * d + r] * self.sigma[k] * self.v[k * d + c];
                }
                a[r * d + c] = acc;
            }
        }
        a
    }
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

fn column_moments(b: &[f64], dim: usize, p: usize, q: usize) -> (f64, f64, f64) {
    let cp = &b[p * dim..(p + 1) * dim];
    let cq = &b[q * dim..(q + 1) * dim];
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for r in 0..dim {
        alpha += cp[r] * cp[r];
        beta += cq[r] * cq[r];
        gamma += cp[r] * cq[r];
    }
    (alpha, beta, gamma)
}

fn rotate_columns(m: &mut [f64], dim: usize, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..dim {
        let mp = m[p * dim + r];
        let mq = m[q * dim + r];
        m[p * dim + r] = c * mp - s * mq;
        m[q * dim + r] = s * mp + c * mq;
    }
}

fn orthogonalize_against(cand: &mut [f64], u: &[f64], dim: usize, slot: usize) {
    for col in 0..dim {
        if col == slot {
            continue;
        }
        let ucol = &u[col * dim..(col + 1) * dim];
        let dot: f64 = cand.iter().zip(ucol).map(|(a, b)| a * b).sum();
        for r in 0..dim {
            cand[r] -= dot * ucol[r];
        }
    }
}
