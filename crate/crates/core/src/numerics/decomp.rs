//! QR (Householder), SVD (one-sided Jacobi) and null-space bases.
//!
//! Everything here is a deterministic function of its input: no random
//! restarts, and ties in the singular-value sort are broken by column index.

use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::error::{Error, Result};

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone)]
pub struct QrResult {
    pub q: ComplexMatrix,
    pub r: ComplexMatrix,
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: ComplexMatrix,
    /// Non-negative, sorted descending. Length `min(rows, cols)`.
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SvdResult {
    /// Numerical rank using `sigma > RANK_TOL * sigma_max`.
    pub fn rank(&self) -> usize {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > RANK_TOL * smax).count()
    }

    /// `u * diag(sigma) * v^H` using the leading `sigma.len()` columns.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.sigma.len();
        let us = ComplexMatrix::from_fn(self.u.rows(), k, |i, j| self.u[(i, j)] * self.sigma[j]);
        &us * &self.v.columns(0, k).adjoint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMode {
    /// `u` is m×k, `v` is n×k with k = min(m, n).
    Thin,
    /// `u` is m×m, `v` is n×n.
    Full,
}

/// Thin QR with a real non-negative diagonal in `r`.
///
/// `a` must have at least as many rows as columns; `q` is m×n with
/// orthonormal columns and `r` is n×n upper triangular.
pub fn qr_decompose(a: &ComplexMatrix) -> Result<QrResult> {
    let full = qr_full(a)?;
    let n = a.cols();
    Ok(QrResult {
        q: full.q.columns(0, n),
        r: full.r.row_block(0, n),
    })
}

/// Full QR: `q` is m×m unitary, `r` is m×n.
pub fn qr_full(a: &ComplexMatrix) -> Result<QrResult> {
    a.ensure_nonempty()?;
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::WideMatrix("qr_decompose"));
    }
    let mut r = a.clone();
    let mut q = ComplexMatrix::identity(m);

    for k in 0..n.min(m - 1) {
        let tail: f64 = (k + 1..m).map(|i| r[(i, k)].norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        let norm = (x0.norm_sqr() + tail).sqrt();
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let alpha = -phase * norm;

        let mut v: Vec<C64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let inv = 2.0 / vnorm2;

        // R <- (I - 2 v v^H / v^H v) R on the trailing block.
        for j in k..n {
            let dot: C64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * r[(k + t, j)]).sum();
            let f = dot * inv;
            for (t, vi) in v.iter().enumerate() {
                r[(k + t, j)] -= vi * f;
            }
        }
        // Q <- Q H.
        for i in 0..m {
            let dot: C64 = v.iter().enumerate().map(|(t, vi)| q[(i, k + t)] * vi).sum();
            let f = dot * inv;
            for (t, vi) in v.iter().enumerate() {
                q[(i, k + t)] -= f * vi.conj();
            }
        }
        for i in k + 1..m {
            r[(i, k)] = ZERO;
        }
    }

    // Rotate phases so that diag(R) is real and non-negative.
    for k in 0..n.min(m) {
        let d = r[(k, k)];
        let mag = d.norm();
        if mag == 0.0 {
            continue;
        }
        let ph = d / mag;
        for j in k..n {
            r[(k, j)] *= ph.conj();
        }
        r[(k, k)] = C64::new(mag, 0.0);
        for i in 0..m {
            q[(i, k)] *= ph;
        }
    }
    Ok(QrResult { q, r })
}

/// Singular value decomposition.
pub fn svd(a: &ComplexMatrix, mode: SvdMode) -> Result<SvdResult> {
    a.ensure_nonempty()?;
    let (m, n) = a.shape();
    if m >= n {
        return Ok(svd_tall(a, mode));
    }
    // a = (a^H)^H = (U S V^H)^H = V S U^H.
    let t = svd_tall(&a.adjoint(), SvdMode::Thin);
    let u = t.v;
    let v = match mode {
        SvdMode::Thin => t.u,
        SvdMode::Full => complete_basis(&t.u, n, m),
    };
    Ok(SvdResult {
        u,
        sigma: t.sigma,
        v,
    })
}

/// One-sided (Hestenes) Jacobi on a matrix with `rows >= cols`.
fn svd_tall(a: &ComplexMatrix, mode: SvdMode) -> SvdResult {
    let (m, n) = a.shape();
    // Column-major working copies for cache-friendly column rotations.
    let mut w: Vec<Vec<C64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect())
        .collect();
    let tol = (m as f64) * f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = w[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = w[p].iter().zip(&w[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = gamma / g;
                rotate(&mut w, p, q, c, s, e);
                rotate(&mut v, p, q, c, s, e);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma: Vec<f64> = idx.iter().map(|&j| norms[j]).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);

    // Left vectors for the numerically nonzero singular values, re-orthogonalised.
    let mut ucols: Vec<Vec<C64>> = Vec::with_capacity(m);
    for (k, &j) in idx.iter().enumerate() {
        if smax == 0.0 || sigma[k] <= RANK_TOL * smax {
            break;
        }
        let mut u: Vec<C64> = w[j].iter().map(|z| z / sigma[k]).collect();
        orthogonalize(&mut u, &ucols);
        normalize(&mut u);
        ucols.push(u);
    }
    let target = match mode {
        SvdMode::Thin => n,
        SvdMode::Full => m,
    };
    let u = complete_columns(ucols, m, target);

    let vmat = ComplexMatrix::from_fn(n, n, |i, k| v[idx[k]][i]);
    SvdResult {
        u,
        sigma,
        v: vmat,
    }
}

fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, c: f64, s: f64, e: C64) {
    // [a_p a_q] <- [a_p a_q] [[c, s e], [-s conj(e), c]]
    let (left, right) = cols.split_at_mut(q);
    let (xp, xq) = (&mut left[p], &mut right[0]);
    let se = e * s;
    let sec = e.conj() * s;
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let ap = *a;
        let aq = *b;
        *a = ap * c - aq * sec;
        *b = ap * se + aq * c;
    }
}

fn orthogonalize(u: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for b in basis {
            let dot: C64 = b.iter().zip(u.iter()).map(|(x, y)| x.conj() * y).sum();
            for (ui, bi) in u.iter_mut().zip(b) {
                *ui -= bi * dot;
            }
        }
    }
}

fn normalize(u: &mut [C64]) -> f64 {
    let nrm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for z in u.iter_mut() {
            *z /= nrm;
        }
    }
    nrm
}

/// Extends orthonormal columns to `target` columns in dimension `dim` using
/// the standard basis (Gram-Schmidt, two passes).
fn complete_columns(mut cols: Vec<Vec<C64>>, dim: usize, target: usize) -> ComplexMatrix {
    let mut e = 0;
    while cols.len() < target && e < dim {
        let mut x = vec![ZERO; dim];
        x[e] = ONE;
        orthogonalize(&mut x, &cols);
        if normalize(&mut x) > 1e-6 {
            cols.push(x);
        }
        e += 1;
    }
    debug_assert_eq!(cols.len(), target);
    ComplexMatrix::from_fn(dim, cols.len(), |i, j| cols[j][i])
}

fn complete_basis(m: &ComplexMatrix, dim: usize, have: usize) -> ComplexMatrix {
    let cols = (0..have.min(m.cols())).map(|j| m.col(j)).collect();
    complete_columns(cols, dim, dim)
}

/// Orthonormal basis of `{x : a x = 0}`.
///
/// Columns beyond the numerical rank (singular values at most `tol` relative
/// to the largest) are returned; a full-column-rank input gives an n×0 matrix.
pub fn null_space(a: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    a.ensure_nonempty()?;
    let n = a.cols();
    let d = svd(a, SvdMode::Full)?;
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    let rank = if smax == 0.0 {
        0
    } else {
        d.sigma.iter().filter(|&&s| s > tol * smax).count()
    };
    Ok(d.v.columns(rank, n))
}

/// Null-space basis via a full QR of `a^H`; valid when `a` has full row rank.
///
/// Cheaper than the SVD route. Falls back to [`null_space`] when the
/// triangular factor reveals a rank deficiency.
pub fn null_space_qr(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.ensure_nonempty()?;
    let (m, n) = a.shape();
    if m >= n {
        return null_space(a, RANK_TOL);
    }
    let f = qr_full(&a.adjoint())?;
    let dmax = (0..m).map(|k| f.r[(k, k)].re).fold(0.0, f64::max);
    if (0..m).any(|k| f.r[(k, k)].re <= 1e-10 * dmax) {
        return null_space(a, RANK_TOL);
    }
    Ok(f.q.columns(m, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::{assert_unitary_cols, random_matrix};

    fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a - b).frobenius_norm() / a.frobenius_norm().max(1e-300)
    }

    #[test]
    fn qr_identity_is_trivial() {
        let i4 = ComplexMatrix::identity(4);
        let f = qr_decompose(&i4).unwrap();
        assert_eq!(f.q, i4);
        assert_eq!(f.r, i4);
    }

    #[test]
    fn qr_scaled_identity() {
        let a = ComplexMatrix::identity(2).scale_real(2.0);
        let f = qr_decompose(&a).unwrap();
        assert_eq!(f.q, ComplexMatrix::identity(2));
        assert_eq!(f.r, a);
    }

    #[test]
    fn qr_random_tall() {
        let a = random_matrix(4, 2, 11);
        let f = qr_decompose(&a).unwrap();
        assert!(rel_err(&a, &(&f.q * &f.r)) < 1e-10);
        assert_unitary_cols(&f.q, 1e-10);
        for k in 0..2 {
            assert!(f.r[(k, k)].im == 0.0 && f.r[(k, k)].re >= 0.0);
            for i in k + 1..2 {
                assert_eq!(f.r[(i, k)], ZERO);
            }
        }
    }

    #[test]
    fn qr_rejects_empty_and_wide() {
        assert!(matches!(
            qr_decompose(&ComplexMatrix::zeros(0, 0)),
            Err(Error::EmptyMatrix { .. })
        ));
        assert!(qr_decompose(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn svd_diagonal_and_zero() {
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 3.0]).unwrap();
        let d = svd(&a, SvdMode::Thin).unwrap();
        assert!((d.sigma[0] - 3.0).abs() < 1e-15 && (d.sigma[1] - 1.0).abs() < 1e-15);

        let z = svd(&ComplexMatrix::zeros(2, 2), SvdMode::Full).unwrap();
        assert_eq!(z.sigma, vec![0.0, 0.0]);
        assert_unitary_cols(&z.u, 1e-12);
        assert_unitary_cols(&z.v, 1e-12);
        assert_eq!(z.rank(), 0);
    }

    #[test]
    fn svd_random_square_and_wide() {
        for (m, n, seed) in [(4, 4, 3), (2, 4, 4), (5, 3, 5), (1, 6, 6)] {
            let a = random_matrix(m, n, seed);
            for mode in [SvdMode::Thin, SvdMode::Full] {
                let d = svd(&a, mode).unwrap();
                assert!(rel_err(&a, &d.reconstruct()) < 1e-10, "{m}x{n} {mode:?}");
                assert_unitary_cols(&d.u, 1e-10);
                assert_unitary_cols(&d.v, 1e-10);
                assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn svd_rank_deficient() {
        let x = random_matrix(4, 1, 8);
        let y = random_matrix(1, 3, 9);
        let a = &x * &y;
        let d = svd(&a, SvdMode::Full).unwrap();
        assert_eq!(d.rank(), 1);
        assert_unitary_cols(&d.u, 1e-10);
        assert!(rel_err(&a, &d.reconstruct()) < 1e-10);
    }

    #[test]
    fn null_space_coordinate_case() {
        let a = ComplexMatrix::from_real(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let ns = null_space(&a, 1e-12).unwrap();
        assert_eq!(ns.shape(), (4, 2));
        assert!((&a * &ns).frobenius_norm() < 1e-14);
        assert_unitary_cols(&ns, 1e-12);
    }

    #[test]
    fn null_space_full_rank_is_empty() {
        let ns = null_space(&ComplexMatrix::identity(4), 1e-12).unwrap();
        assert_eq!(ns.shape(), (4, 0));
    }

    #[test]
    fn null_space_random_wide() {
        let a = random_matrix(2, 4, 21);
        for ns in [null_space(&a, 1e-12).unwrap(), null_space_qr(&a).unwrap()] {
            assert_eq!(ns.cols(), 2);
            assert!((&a * &ns).frobenius_norm() < 1e-12);
            assert_unitary_cols(&ns, 1e-10);
        }
    }
}
