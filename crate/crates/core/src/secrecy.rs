//! Artificial-noise design and log-det secrecy rates.
//!
//! Rates are in bits per channel use. Every mutual-information term is the
//! whitened form `log2 det(K + H Q H^H) - log2 det(K)` where `K` is the
//! receiver's noise-plus-interference covariance.

use rand::Rng;

use crate::channel::{complex_gaussian_vector, CsiView, SystemDims};
use crate::error::{Error, Result};
use crate::numerics::{is_hermitian_psd, log2_det_hpd, null_space_qr, ComplexMatrix, C64};
use crate::precoding::reduce;

const PSD_TOL: f64 = 1e-9;

/// Artificial noise confined to the null space of the users' (combined)
/// channels.
#[derive(Debug, Clone)]
pub struct ArtificialNoise {
    /// `n_t x m_an` with orthonormal columns.
    pub p_prime: ComplexMatrix,
    /// `m_an x m_an` covariance of the noise symbols.
    pub q_s_prime: ComplexMatrix,
    pub rho: f64,
}

impl ArtificialNoise {
    pub fn dim(&self) -> usize {
        self.p_prime.cols()
    }

    pub fn power(&self) -> f64 {
        self.q_s_prime.trace().re
    }

    pub fn is_active(&self) -> bool {
        self.dim() > 0 && self.power() > 0.0
    }

    /// Transmit-side covariance `P' Q' P'^H`.
    pub fn transmit_covariance(&self) -> ComplexMatrix {
        let n = self.p_prime.rows();
        if self.dim() == 0 {
            return ComplexMatrix::zeros(n, n);
        }
        &(&self.p_prime * &self.q_s_prime) * &self.p_prime.adjoint()
    }

    /// One draw of `P' s'` with `s' ~ CN(0, Q')`. Draws nothing when inactive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        let n = self.p_prime.rows();
        if !self.is_active() {
            return vec![C64::new(0.0, 0.0); n];
        }
        // Q' is a multiple of the identity by construction.
        let var = self.power() / self.dim() as f64;
        let s = complex_gaussian_vector(self.dim(), var, rng);
        self.p_prime.matvec(&s).expect("p_prime has m_an columns")
    }
}

/// Spreads `(1 - rho) e_s` evenly over the null space of the stacked user
/// channels seen after each user's receive combiner.
pub fn design_artificial_noise(
    csi: &CsiView,
    dims: &SystemDims,
    rho: f64,
    e_s: f64,
) -> Result<ArtificialNoise> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid("rho", format!("must lie in (0, 1], got {rho}")));
    }
    if !(e_s > 0.0) {
        return Err(Error::invalid("e_s", format!("must be > 0, got {e_s}")));
    }
    let red = reduce(csi, dims)?;
    let stacked = red.stacked();
    let p_prime = if stacked.rows() < dims.n_t {
        null_space_qr(&stacked)?
    } else {
        ComplexMatrix::zeros(dims.n_t, 0)
    };
    let m_an = p_prime.cols();
    if m_an == 0 {
        if rho < 1.0 {
            return Err(Error::NoNullSpace);
        }
        return Ok(ArtificialNoise {
            p_prime,
            q_s_prime: ComplexMatrix::zeros(0, 0),
            rho,
        });
    }
    let per_dim = (1.0 - rho) * e_s / m_an as f64;
    Ok(ArtificialNoise {
        p_prime,
        q_s_prime: ComplexMatrix::identity(m_an).scale_real(per_dim),
        rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecrecyReport {
    pub rate_bits: f64,
    pub rate_user_term: f64,
    pub rate_eve_term: f64,
}

impl SecrecyReport {
    fn new(user: f64, eve: f64) -> Self {
        Self {
            rate_bits: (user - eve).max(0.0),
            rate_user_term: user,
            rate_eve_term: eve,
        }
    }
}

fn check_psd(q: &ComplexMatrix) -> Result<()> {
    if is_hermitian_psd(q, PSD_TOL) {
        Ok(())
    } else {
        Err(Error::NotPsd)
    }
}

fn check_noise(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("noise variance must be > 0, got {v}")))
    }
}

/// `h q h^H`.
pub fn received_covariance(h: &ComplexMatrix, q: &ComplexMatrix) -> Result<ComplexMatrix> {
    h.matmul(q)?.matmul(&h.adjoint())
}

/// `log2 det(I + k^{-1} h q h^H)` evaluated as a difference of log-dets.
pub fn whitened_rate(h: &ComplexMatrix, q: &ComplexMatrix, k: &ComplexMatrix) -> Result<f64> {
    let s = received_covariance(h, q)?;
    if s.shape() != k.shape() {
        return Err(Error::dims("whitened_rate", format!("{:?}", s.shape()), format!("{:?}", k.shape())));
    }
    Ok(log2_det_hpd(&(&s + k))? - log2_det_hpd(k)?)
}

fn noise_covariance(h: &ComplexMatrix, q_an: Option<&ComplexMatrix>, sigma2: f64) -> Result<ComplexMatrix> {
    let base = ComplexMatrix::identity(h.rows()).scale_real(sigma2);
    match q_an {
        Some(q) => Ok(&base + &received_covariance(h, q)?),
        None => Ok(base),
    }
}

/// Secrecy rate of one legitimate link against one eavesdropper.
///
/// `q_an` is the transmit-side artificial-noise covariance; it is added to
/// the effective noise on both sides, so under perfect CSI (where
/// `h_b q_an = 0`) only the eavesdropper is affected.
pub fn secrecy_rate(
    h_b: &ComplexMatrix,
    h_e: &ComplexMatrix,
    q_s: &ComplexMatrix,
    q_an: Option<&ComplexMatrix>,
    sigma_b2: f64,
    sigma_e2: f64,
) -> Result<SecrecyReport> {
    check_noise("sigma_b2", sigma_b2)?;
    check_noise("sigma_e2", sigma_e2)?;
    check_psd(q_s)?;
    if let Some(q) = q_an {
        check_psd(q)?;
    }
    let user = whitened_rate(h_b, q_s, &noise_covariance(h_b, q_an, sigma_b2)?)?;
    let eve = whitened_rate(h_e, q_s, &noise_covariance(h_e, q_an, sigma_e2)?)?;
    Ok(SecrecyReport::new(user, eve))
}

/// Secrecy rate of a link whose receiver also sees the extra covariance
/// `k_extra` (residual multi-user interference, leaked artificial noise),
/// against the strongest of several non-colluding eavesdroppers.
pub fn link_secrecy(
    h_b: &ComplexMatrix,
    q_s: &ComplexMatrix,
    k_extra: &ComplexMatrix,
    sigma_b2: f64,
    eves: &[ComplexMatrix],
    q_an: Option<&ComplexMatrix>,
    sigma_e2: f64,
) -> Result<SecrecyReport> {
    check_noise("sigma_b2", sigma_b2)?;
    check_noise("sigma_e2", sigma_e2)?;
    check_psd(q_s)?;
    let k_b = &ComplexMatrix::identity(h_b.rows()).scale_real(sigma_b2) + k_extra;
    let user = whitened_rate(h_b, q_s, &k_b)?;
    let mut eve = 0.0f64;
    for h_e in eves {
        eve = eve.max(whitened_rate(h_e, q_s, &noise_covariance(h_e, q_an, sigma_e2)?)?);
    }
    Ok(SecrecyReport::new(user, eve))
}

/// `Q_s = rho e_s P P^H / tr(P P^H)`.
pub fn precoder_covariance(p: &ComplexMatrix, e_s: f64, rho: f64) -> Result<ComplexMatrix> {
    let t = p.frobenius_norm_sqr();
    if t == 0.0 || !t.is_finite() {
        return Err(Error::ZeroBlock(0));
    }
    Ok((p * &p.adjoint()).scale_real(rho * e_s / t))
}

/// Per-user covariances `rho e_s / T * P_r P_r^H / ||P_r||_F^2`; they sum
/// to trace `rho e_s`.
pub fn user_covariances(blocks: &[ComplexMatrix], e_s: f64, rho: f64) -> Result<Vec<ComplexMatrix>> {
    let share = e_s / blocks.len() as f64;
    blocks
        .iter()
        .enumerate()
        .map(|(r, b)| precoder_covariance(b, share, rho).map_err(|_| Error::ZeroBlock(r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian_matrix, substream};
    use crate::numerics::{orthonormality_defect, svd, SvdMode};

    fn scalar(v: f64) -> ComplexMatrix {
        ComplexMatrix::from_real(1, 1, &[v]).unwrap()
    }

    fn random_csi(dims: &SystemDims, seed: u64) -> CsiView {
        let mut rng = substream(seed, &[]);
        CsiView::from_users(
            (0..dims.t_users)
                .map(|_| complex_gaussian_matrix(dims.n_r, dims.n_t, 1.0, &mut rng))
                .collect(),
        )
    }

    #[test]
    fn symmetric_link_has_no_secrecy() {
        let h = scalar(0.7);
        let r = secrecy_rate(&h, &h, &scalar(2.0), None, 0.5, 0.5).unwrap();
        assert_eq!(r.rate_bits, 0.0);
        assert!((r.rate_user_term - r.rate_eve_term).abs() < 1e-15);
    }

    #[test]
    fn blind_eavesdropper_gives_link_capacity() {
        let r = secrecy_rate(&scalar(1.0), &scalar(0.0), &scalar(1.0), None, 1.0, 1.0).unwrap();
        assert!((r.rate_bits - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let q = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        let h = ComplexMatrix::identity(2);
        assert!(matches!(secrecy_rate(&h, &h, &q, None, 1.0, 1.0), Err(Error::NotPsd)));
    }

    #[test]
    fn rate_nonincreasing_in_m() {
        let mut rng = substream(31, &[]);
        let hb = complex_gaussian_matrix(2, 4, 1.0, &mut rng);
        let g = complex_gaussian_matrix(2, 4, 1.0, &mut rng);
        let q = ComplexMatrix::identity(4).scale_real(0.25 * 10.0);
        let rates: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&m| {
                secrecy_rate(&hb, &g.scale_real(f64::sqrt(m)), &q, None, 1.0, 1.0)
                    .unwrap()
                    .rate_bits
            })
            .collect();
        assert!(rates[0] >= rates[1] && rates[1] >= rates[2], "{rates:?}");
    }

    #[test]
    fn no_artificial_noise_at_full_power_split() {
        let dims = SystemDims::baseline();
        let an = design_artificial_noise(&random_csi(&dims, 1), &dims, 1.0, 1.0).unwrap();
        assert_eq!(an.power(), 0.0);
        assert!(!an.is_active());
    }

    #[test]
    fn artificial_noise_power_and_nulling() {
        let dims = SystemDims::baseline().with_streams(1).unwrap();
        let csi = random_csi(&dims, 2);
        let an = design_artificial_noise(&csi, &dims, 0.6, 1.0).unwrap();
        assert_eq!(an.dim(), 2);
        assert!((an.power() - 0.4).abs() < 1e-12);
        assert!(orthonormality_defect(&an.p_prime) < 1e-10);
        let red = reduce(&csi, &dims).unwrap();
        assert!((&red.stacked() * &an.p_prime).frobenius_norm() < 1e-10);
    }

    #[test]
    fn full_load_has_no_null_space() {
        let dims = SystemDims::baseline();
        assert!(matches!(
            design_artificial_noise(&random_csi(&dims, 3), &dims, 0.6, 1.0),
            Err(Error::NoNullSpace)
        ));
    }

    #[test]
    fn artificial_noise_only_hurts_the_eavesdropper() {
        let dims = SystemDims::baseline().with_streams(1).unwrap();
        let csi = random_csi(&dims, 4);
        let an = design_artificial_noise(&csi, &dims, 0.6, 1.0).unwrap();
        let hb = reduce(&csi, &dims).unwrap().stacked();
        let he = complex_gaussian_matrix(2, 4, 0.5, &mut substream(5, &[]));
        let q = ComplexMatrix::identity(4).scale_real(0.6 / 4.0);
        let q_an = an.transmit_covariance();
        let without = secrecy_rate(&hb, &he, &q, None, 0.01, 0.01).unwrap();
        let with = secrecy_rate(&hb, &he, &q, Some(&q_an), 0.01, 0.01).unwrap();
        assert!((with.rate_user_term - without.rate_user_term).abs() < 1e-9);
        assert!(with.rate_eve_term <= without.rate_eve_term);
    }

    #[test]
    fn uniform_rate_levels_out() {
        let mut rng = substream(6, &[]);
        let draws = 200;
        let (mut r30, mut r40) = (0.0, 0.0);
        for _ in 0..draws {
            let hb = complex_gaussian_matrix(2, 4, 1.0, &mut rng);
            let he = complex_gaussian_matrix(2, 4, 0.5, &mut rng);
            for (snr_db, acc) in [(30.0, &mut r30), (40.0, &mut r40)] {
                let sigma2 = 10f64.powf(-snr_db / 10.0);
                let q = ComplexMatrix::identity(4).scale_real(0.25);
                *acc += secrecy_rate(&hb, &he, &q, None, sigma2, sigma2).unwrap().rate_bits;
            }
        }
        assert!(r40 - r30 < 0.05 * r30, "30 dB {r30}, 40 dB {r40}");
    }

    #[test]
    fn covariance_trace_and_rank() {
        let p = ComplexMatrix::identity(4);
        let q = precoder_covariance(&p, 4.0, 1.0).unwrap();
        assert!((&q - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-15);

        let p = complex_gaussian_matrix(4, 2, 1.0, &mut substream(7, &[]));
        let q = precoder_covariance(&p, 3.0, 0.6).unwrap();
        assert!((q.trace().re - 1.8).abs() < 1e-12);
        assert_eq!(svd(&q, SvdMode::Thin).unwrap().rank(), svd(&p, SvdMode::Thin).unwrap().rank());
        assert!(precoder_covariance(&ComplexMatrix::zeros(4, 2), 1.0, 1.0).is_err());
    }

    #[test]
    fn user_covariances_split_power() {
        let mut rng = substream(8, &[]);
        let blocks: Vec<_> = (0..3).map(|_| complex_gaussian_matrix(6, 2, 1.0, &mut rng)).collect();
        let qs = user_covariances(&blocks, 2.0, 0.6).unwrap();
        let total: f64 = qs.iter().map(|q| q.trace().re).sum();
        assert!((total - 1.2).abs() < 1e-12);
    }

    #[test]
    fn worst_eavesdropper_counts() {
        let mut rng = substream(9, &[]);
        let hb = complex_gaussian_matrix(2, 4, 1.0, &mut rng);
        let weak = complex_gaussian_matrix(2, 4, 0.01, &mut rng);
        let strong = hb.clone();
        let q = ComplexMatrix::identity(4).scale_real(0.5);
        let zero = ComplexMatrix::zeros(2, 2);
        let one = link_secrecy(&hb, &q, &zero, 0.1, std::slice::from_ref(&weak), None, 0.1).unwrap();
        let both = link_secrecy(&hb, &q, &zero, 0.1, &[weak, strong], None, 0.1).unwrap();
        assert!(one.rate_bits > 0.0);
        assert_eq!(both.rate_bits, 0.0);
    }
}
