//! Complex linear algebra: the matrix type plus the decompositions every
//! precoder is assembled from.

mod decomp;
mod matrix;
mod solve;

pub use decomp::{null_space, null_space_qr, qr_decompose, qr_full, svd, QrResult, SvdMode, SvdResult, RANK_TOL};
pub use matrix::{ComplexMatrix, C64, ONE, ZERO};
pub use solve::{
    cholesky, hermitian_part, inverse, is_hermitian_psd, log2_det_hpd, regularized_mmse_inverse,
    regularized_right_inverse, solve,
};

/// Largest deviation of `m^H m` from the identity (Frobenius).
pub fn orthonormality_defect(m: &ComplexMatrix) -> f64 {
    let g = m.adjoint_mul(m).expect("square gram");
    (&g - &ComplexMatrix::identity(m.cols())).frobenius_norm()
}
