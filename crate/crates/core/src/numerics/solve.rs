//! Linear solves, regularised channel inversion, Hermitian log-determinants.

use super::matrix::{ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.ensure_nonempty()?;
    if !a.is_square() {
        return Err(Error::dims("solve", "square matrix", format!("{:?}", a.shape())));
    }
    if b.rows() != a.rows() {
        return Err(Error::dims("solve", a.rows(), b.rows()));
    }
    let n = a.rows();
    let nb = b.cols();
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(Error::Singular("solve"));
    }
    let mut lu = a.clone();
    let mut x = b.clone();

    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= PIVOT_TOL * scale {
            return Err(Error::Singular("solve"));
        }
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            for j in 0..nb {
                let t = x[(k, j)];
                x[(k, j)] = x[(p, j)];
                x[(p, j)] = t;
            }
        }
        let piv = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / piv;
            if f == ZERO {
                continue;
            }
            for j in k..n {
                let t = lu[(k, j)];
                lu[(i, j)] -= f * t;
            }
            for j in 0..nb {
                let t = x[(k, j)];
                x[(i, j)] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let piv = lu[(k, k)];
        for j in 0..nb {
            let mut acc = x[(k, j)];
            for t in k + 1..n {
                acc -= lu[(k, t)] * x[(t, j)];
            }
            x[(k, j)] = acc / piv;
        }
    }
    Ok(x)
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    solve(a, &ComplexMatrix::identity(a.rows()))
}

/// Regularised MMSE channel inversion `(H^H H + alpha I)^{-1} H^H`, shape
/// `cols(h) x rows(h)`.
///
/// For `alpha > 0` on a wide channel the algebraically identical
/// `H^H (H H^H + alpha I)^{-1}` is evaluated instead (smaller system).
pub fn regularized_mmse_inverse(h: &ComplexMatrix, alpha: f64) -> Result<ComplexMatrix> {
    h.ensure_nonempty()?;
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("must be >= 0, got {alpha}")));
    }
    if h.rows() < h.cols() && alpha > 0.0 {
        return regularized_right_inverse(h, alpha);
    }
    let gram = h.adjoint_mul(h)?.add_identity(alpha);
    solve(&gram, &h.adjoint())
}

/// `H^H (H H^H + alpha I)^{-1}`. At `alpha = 0` this is the right
/// pseudo-inverse and requires full row rank.
pub fn regularized_right_inverse(h: &ComplexMatrix, alpha: f64) -> Result<ComplexMatrix> {
    h.ensure_nonempty()?;
    let gram = (h * &h.adjoint()).add_identity(alpha);
    // (G^{-1} H)^H = H^H G^{-1} since G is Hermitian.
    Ok(solve(&gram, h)?.adjoint())
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.ensure_nonempty()?;
    if !a.is_square() {
        return Err(Error::NotPsd);
    }
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::NotPsd);
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// `log2 det(a)` for Hermitian positive definite `a`.
pub fn log2_det_hpd(a: &ComplexMatrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok((0..l.rows()).map(|i| 2.0 * l[(i, i)].re.log2()).sum())
}

/// Checks Hermitian positive semidefiniteness up to a relative tolerance.
pub fn is_hermitian_psd(a: &ComplexMatrix, tol: f64) -> bool {
    if !a.is_square() || !a.is_finite() {
        return false;
    }
    let scale = a.max_abs();
    if scale == 0.0 {
        return true;
    }
    if a.hermitian_defect() > tol * scale {
        return false;
    }
    let herm = hermitian_part(a);
    cholesky(&herm.add_identity(tol * scale)).is_ok()
}

pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.rows(), a.cols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::random_matrix;

    #[test]
    fn inverse_roundtrip() {
        let a = random_matrix(5, 5, 2);
        let ai = inverse(&a).unwrap();
        assert!((&(&a * &ai) - &ComplexMatrix::identity(5)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn singular_detected() {
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(inverse(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn mmse_inverse_identity_channel() {
        let h = ComplexMatrix::identity(2);
        let got = regularized_mmse_inverse(&h, 0.1).unwrap();
        let want = ComplexMatrix::identity(2).scale_real(1.0 / 1.1);
        assert!((&got - &want).frobenius_norm() < 1e-15);
    }

    #[test]
    fn mmse_inverse_unitary_alpha_zero() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = ComplexMatrix::from_rows(&[
            vec![C64::new(s, 0.0), C64::new(0.0, s)],
            vec![C64::new(0.0, s), C64::new(s, 0.0)],
        ])
        .unwrap();
        let got = regularized_mmse_inverse(&h, 0.0).unwrap();
        assert!((&got - &h.adjoint()).frobenius_norm() < 1e-14);
    }

    #[test]
    fn mmse_inverse_row_vector() {
        // (h^H h + I)^{-1} h^H with h = [1 0] is [0.5, 0]^T.
        let h = ComplexMatrix::from_real(1, 2, &[1.0, 0.0]).unwrap();
        let got = regularized_mmse_inverse(&h, 1.0).unwrap();
        assert_eq!(got.shape(), (2, 1));
        assert!((got[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(got[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn mmse_inverse_alpha_zero_rank_deficient() {
        let h = ComplexMatrix::from_real(1, 2, &[1.0, 0.0]).unwrap();
        assert!(matches!(regularized_mmse_inverse(&h, 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn normal_and_pushthrough_forms_agree() {
        let h = random_matrix(3, 5, 17);
        let gram = h.adjoint_mul(&h).unwrap().add_identity(0.3);
        let normal = solve(&gram, &h.adjoint()).unwrap();
        let push = regularized_right_inverse(&h, 0.3).unwrap();
        assert!((&normal - &push).frobenius_norm() < 1e-12);
    }

    #[test]
    fn mmse_inverse_converges_to_inverse() {
        let h = random_matrix(4, 4, 31);
        let hinv = inverse(&h).unwrap();
        let errs: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|&a| (&regularized_mmse_inverse(&h, a).unwrap() - &hinv).frobenius_norm())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 1e-4);
    }

    #[test]
    fn log_det_of_diagonal() {
        let a = ComplexMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 8.0]).unwrap();
        assert!((log2_det_hpd(&a).unwrap() - 4.0).abs() < 1e-14);
        assert!(log2_det_hpd(&a.scale_real(-1.0)).is_err());
    }

    #[test]
    fn psd_check() {
        let x = random_matrix(3, 2, 1);
        let q = &x * &x.adjoint();
        assert!(is_hermitian_psd(&q, 1e-10));
        assert!(is_hermitian_psd(&ComplexMatrix::zeros(3, 3), 1e-10));
        assert!(!is_hermitian_psd(&q.scale_real(-1.0), 1e-10));
        assert!(!is_hermitian_psd(&x, 1e-10));
    }
}
