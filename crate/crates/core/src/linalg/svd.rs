//! One-sided (Hestenes) Jacobi SVD.
//!
//! The routine orthogonalizes the columns of a tall working copy with plane
//! rotations until every pair is orthogonal to working precision. Column
//! norms are then the singular values, the normalized columns are the left
//! singular vectors and the accumulated rotations are the right singular
//! vectors. Arithmetic is done in `f64` regardless of the input scalar.
//! Wide inputs are handled by factoring the transpose.

use super::{Matrix, Real};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const TOL: f64 = 1e-15;

/// `w = u · diag(sigma) · vt` with `u` square (m×m) and `vt` of shape
/// min(m, n)×n. `sigma` is non-negative and sorted descending.
#[derive(Clone, Debug)]
pub struct SvdResult<T = f32> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub vt: Matrix<T>,
}

impl<T: Real> SvdResult<T> {
    /// `u[:, ..r] · diag(sigma[..r]) · vt[..r, :]`.
    pub fn reconstruct(&self, r: usize) -> Matrix<T> {
        let m = self.u.rows();
        let n = self.vt.cols();
        let r = r.min(self.sigma.len());
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let orow = out.row_mut(i);
            for l in 0..r {
                let coeff = self.u.get(i, l) * self.sigma[l];
                super::axpy(coeff, self.vt.row(l), orow);
            }
        }
        out
    }
}

pub fn svd<T: Real>(w: &Matrix<T>) -> Result<SvdResult<T>> {
    let (m, n) = w.shape();
    if m == 0 || n == 0 {
        return Err(Error::domain("svd of an empty matrix"));
    }
    if !w.is_finite() {
        return Err(Error::domain("svd input contains non-finite values"));
    }
    let tall = m >= n;
    // Working matrix as columns of a tall p×q matrix (p ≥ q).
    let (p, q) = if tall { (m, n) } else { (n, m) };
    let mut cols: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            (0..p)
                .map(|i| if tall { w.get(i, j) } else { w.get(j, i) }.f64())
                .collect()
        })
        .collect();
    let mut v: Vec<Vec<f64>> = (0..q)
        .map(|j| (0..q).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for j in (i + 1)..q {
                let (alpha, beta, gamma) = {
                    let (ci, cj) = (&cols[i], &cols[j]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for k in 0..p {
                        a += ci[k] * ci[k];
                        b += cj[k] * cj[k];
                        g += ci[k] * cj[k];
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (j, c.iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let sigma: Vec<f64> = order.iter().map(|&(_, s)| s).collect();
    let scale = sigma[0].max(f64::MIN_POSITIVE);
    // Left vectors of the tall problem: normalized columns; near-null
    // directions are completed later to keep the basis orthonormal.
    let mut left: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&(j, s)| {
            if s > scale * 1e-13 {
                Some(cols[j].iter().map(|x| x / s).collect())
            } else {
                None
            }
        })
        .collect();
    let sigma: Vec<f64> = sigma
        .iter()
        .zip(&left)
        .map(|(&s, l)| if l.is_some() { s } else { 0.0 })
        .collect();
    let right: Vec<Vec<f64>> = order.iter().map(|&(j, _)| v[j].clone()).collect();

    let want = if tall { p } else { q };
    let left = complete_basis(&mut left, p, want);

    let (u, vt) = if tall {
        // u: m×m from the completed left basis; vt rows are right vectors.
        let u = Matrix::from_fn(m, m, |i, j| T::of(left[j][i]));
        let vt = Matrix::from_fn(n, n, |i, j| T::of(right[i][j]));
        (u, vt)
    } else {
        // wᵀ = L Σ Rᵀ  ⇒  w = R Σ Lᵀ.
        let u = Matrix::from_fn(m, m, |i, j| T::of(right[j][i]));
        let vt = Matrix::from_fn(m, n, |i, j| T::of(left[i][j]));
        (u, vt)
    };
    Ok(SvdResult { u, sigma: sigma.into_iter().map(T::of).collect(), vt })
}

fn rotate(vecs: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = vecs.split_at_mut(j);
    let (vi, vj) = (&mut lo[i], &mut hi[0]);
    for k in 0..vi.len() {
        let a = vi[k];
        let b = vj[k];
        vi[k] = c * a - s * b;
        vj[k] = s * a + c * b;
    }
}

/// Fills missing vectors (and appends extra ones up to `want`) with unit
/// vectors orthogonal to everything already present, by Gram–Schmidt over the
/// standard basis.
fn complete_basis(vecs: &mut Vec<Option<Vec<f64>>>, dim: usize, want: usize) -> Vec<Vec<f64>> {
    vecs.resize(want, None);
    let mut candidate = 0;
    for idx in 0..want {
        if vecs[idx].is_some() {
            continue;
        }
        loop {
            assert!(candidate < dim, "standard basis exhausted");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // Two passes of modified Gram–Schmidt.
            for _ in 0..2 {
                for other in vecs.iter().flatten() {
                    let proj: f64 = other.iter().zip(&e).map(|(a, b)| a * b).sum();
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= norm);
                vecs[idx] = Some(e);
                break;
            }
        }
    }
    vecs.drain(..).map(|v| v.expect("completed")).collect()
}
