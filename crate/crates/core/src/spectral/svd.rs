//! Complex singular value decomposition by one-sided cyclic Jacobi.
//!
//! The rotations orthogonalize the columns of `A V`, which is the same
//! recursion as a cyclic Jacobi diagonalization of the Gram matrix `A^* A`
//! carried out without ever forming `A^* A`. Left vectors are the normalized
//! columns `A r_i / sigma_i`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

const MAX_SWEEPS: usize = 100;

/// Singular values below this fraction of `sigma_1` get completed left vectors.
const RANK_TOL: f64 = 1e-14;

/// Thin singular system `A = sum_i sigma_i l_i r_i^*`.
#[derive(Debug, Clone)]
pub struct SingularSystem {
    /// Singular values in descending order.
    pub sigma: Vec<f64>,
    /// Orthonormal left vectors, one per singular value.
    pub left: Vec<Vec<Complex64>>,
    /// Orthonormal right vectors, one per singular value.
    pub right: Vec<Vec<Complex64>>,
    /// Number of singular values above `1e-14 sigma_1`.
    pub rank: usize,
}

impl SingularSystem {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Rebuilds `sum_i sigma_i l_i r_i^*`.
    pub fn reconstruct(&self) -> CMatrix {
        let rows = self.left.first().map_or(0, Vec::len);
        let cols = self.right.first().map_or(0, Vec::len);
        CMatrix::from_fn(rows, cols, |i, j| {
            self.sigma
                .iter()
                .zip(self.left.iter().zip(&self.right))
                .map(|(s, (l, r))| *s * l[i] * r[j].conj())
                .sum()
        })
    }
}

/// Column of a matrix stored as separate real and imaginary parts.
#[derive(Clone)]
struct SplitColumn {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitColumn {
    fn from_complex(values: impl Iterator<Item = Complex64>) -> Self {
        let (re, im) = values.map(|z| (z.re, z.im)).unzip();
        Self { re, im }
    }

    fn norm_sqr(&self) -> f64 {
        self.re.iter().map(|x| x * x).sum::<f64>() + self.im.iter().map(|x| x * x).sum::<f64>()
    }

    /// `<self, other> = sum conj(self_i) other_i`.
    fn dot(&self, other: &SplitColumn) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 0..self.re.len() {
            let (pr, pi) = (self.re[i], self.im[i]);
            let (qr, qi) = (other.re[i], other.im[i]);
            re += pr * qr + pi * qi;
            im += pr * qi - pi * qr;
        }
        Complex64::new(re, im)
    }

    fn to_complex(&self, scale: f64) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| Complex64::new(r * scale, i * scale))
            .collect()
    }
}

/// Applies `p <- c p - s e q`, `q <- s p + c e q` with `e` unimodular.
fn rotate(p: &mut SplitColumn, q: &mut SplitColumn, c: f64, s: f64, e: Complex64) {
    for i in 0..p.re.len() {
        let (pr, pi) = (p.re[i], p.im[i]);
        let qr = e.re * q.re[i] - e.im * q.im[i];
        let qi = e.re * q.im[i] + e.im * q.re[i];
        p.re[i] = c * pr - s * qr;
        p.im[i] = c * pi - s * qi;
        q.re[i] = s * pr + c * qr;
        q.im[i] = s * pi + c * qi;
    }
}

/// Thin SVD of a finite complex matrix.
///
/// Returns `min(rows, cols)` singular triplets. Fails only if the Jacobi
/// sweeps do not converge within 100 sweeps.
pub fn svd(matrix: &CMatrix) -> Result<SingularSystem> {
    let (rows, cols) = matrix.shape();
    if rows < cols {
        let t = svd_tall(&matrix.adjoint())?;
        return Ok(SingularSystem {
            sigma: t.sigma,
            left: t.right,
            right: t.left,
            rank: t.rank,
        });
    }
    svd_tall(matrix)
}

fn svd_tall(matrix: &CMatrix) -> Result<SingularSystem> {
    let (m, n) = matrix.shape();
    if n == 0 {
        return Ok(SingularSystem {
            sigma: vec![],
            left: vec![],
            right: vec![],
            rank: 0,
        });
    }
    let mut a: Vec<SplitColumn> = (0..n)
        .map(|j| SplitColumn::from_complex((0..m).map(|i| matrix[(i, j)])))
        .collect();
    let mut v: Vec<SplitColumn> = (0..n)
        .map(|j| {
            SplitColumn::from_complex(
                (0..n).map(|i| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)),
            )
        })
        .collect();

    let tol = f64::EPSILON * m as f64;
    let mut converged = false;
    let mut off_norm = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        let mut norms: Vec<f64> = a.iter().map(SplitColumn::norm_sqr).collect();
        let scale = norms.iter().cloned().fold(0.0, f64::max);
        if scale == 0.0 {
            converged = true;
            break;
        }
        let mut rotated = false;
        off_norm = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                // Columns negligible against the largest carry no information.
                if alpha <= scale * 1e-300 || beta <= scale * 1e-300 {
                    continue;
                }
                let gamma = a[p].dot(&a[q]);
                let g = gamma.norm();
                let rel = g / (alpha * beta).sqrt();
                off_norm = f64::max(off_norm, rel);
                if rel <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = (gamma / g).conj();
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s, e);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s, e);
                norms[p] = alpha - t * g;
                norms[q] = beta + t * g;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdConvergence {
            sweeps: MAX_SWEEPS,
            off_norm,
        });
    }

    let mut order: Vec<(f64, usize)> = a
        .iter()
        .enumerate()
        .map(|(j, col)| (col.norm_sqr().sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let sigma_max = order[0].0;
    let mut sigma = Vec::with_capacity(n);
    let mut left: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut rank = 0;
    let mut deficient = Vec::new();
    for (slot, &(s, j)) in order.iter().enumerate() {
        sigma.push(s);
        right.push(v[j].to_complex(1.0));
        if sigma_max > 0.0 && s > RANK_TOL * sigma_max {
            left.push(a[j].to_complex(1.0 / s));
            rank += 1;
        } else {
            left.push(vec![Complex64::new(0.0, 0.0); m]);
            deficient.push(slot);
        }
    }
    complete_basis(&mut left, &deficient, m);
    Ok(SingularSystem {
        sigma,
        left,
        right,
        rank,
    })
}

/// Fills the listed slots with unit vectors orthogonal to all other slots.
fn complete_basis(vectors: &mut [Vec<Complex64>], slots: &[usize], dim: usize) {
    let mut filled: Vec<bool> = (0..vectors.len()).map(|i| !slots.contains(&i)).collect();
    let mut candidate = 0;
    for &slot in slots {
        while candidate < dim {
            let mut x = vec![Complex64::new(0.0, 0.0); dim];
            x[candidate] = Complex64::new(1.0, 0.0);
            candidate += 1;
            // Two passes of classical Gram-Schmidt.
            for _ in 0..2 {
                for (u, _) in vectors.iter().zip(&filled).filter(|(_, f)| **f) {
                    let proj: Complex64 = u.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
                    for (xi, ui) in x.iter_mut().zip(u) {
                        *xi -= proj * ui;
                    }
                }
            }
            let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.5 {
                vectors[slot] = x.into_iter().map(|z| z / norm).collect();
                filled[slot] = true;
                break;
            }
        }
    }
}
