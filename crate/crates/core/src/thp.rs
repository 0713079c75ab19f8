//! Tomlinson-Harashima precoding with successive-optimisation user ordering.
//!
//! Streams are indexed in encoding order throughout: column `k` of `f`, row
//! `k` of `b` and `gains[k]` all refer to the `k`-th encoded stream. The
//! effective channel `G = D H F` is lower triangular up to residual leakage;
//! the strictly lower part, normalised by its diagonal, is pre-cancelled at
//! the transmitter and the modulo keeps the transmit symbols bounded.

use crate::algorithm::Algorithm;
use crate::channel::{CsiView, SystemDims};
use crate::error::{Error, Result};
use crate::modulation::{qpsk_modulate, Constellation};
use crate::numerics::{null_space_qr, svd, ComplexMatrix, SvdMode, C64, ZERO};
use crate::precoding::{bd_feasible, reduce, sgmi_blocks, Reduced};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct NonlinearPrecoder {
    /// Feedforward, `n_t x total_streams`, unscaled, columns in encoding order.
    pub f: ComplexMatrix,
    /// Strictly lower triangular feedback.
    pub b: ComplexMatrix,
    /// Block-diagonal receive combiner (`total_streams x t_users*n_r`) in
    /// encoding order.
    pub d: ComplexMatrix,
    /// `d_blocks[p]` is the combiner of the user encoded at position `p`.
    pub d_blocks: Vec<ComplexMatrix>,
    /// `order[p]` is the user encoded at position `p`.
    pub order: Vec<usize>,
    pub tau: f64,
    /// Per-position power scaling.
    pub betas: Vec<f64>,
    /// Expected power of each modulo output `v_k`, used in the power budget.
    pub stream_power: Vec<f64>,
    /// Diagonal of `D H F diag(beta)` as designed from the CSI.
    pub gains: Vec<C64>,
    pub streams: usize,
    pub algorithm: Algorithm,
}

impl NonlinearPrecoder {
    pub fn n_users(&self) -> usize {
        self.order.len()
    }

    pub fn position_of(&self, user: usize) -> usize {
        self.order.iter().position(|&u| u == user).expect("user in order")
    }

    /// Columns of user at encoding position `p`.
    pub fn block(&self, p: usize) -> ComplexMatrix {
        self.f.columns(p * self.streams, (p + 1) * self.streams)
    }

    /// Feedforward including the per-user power scaling.
    pub fn f_scaled(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.f.rows(), self.f.cols(), |i, j| {
            self.f[(i, j)] * self.betas[j / self.streams]
        })
    }

    /// Rescales to total transmit power `e_s` (equal share per user).
    /// The feedback matrix is invariant under a common scaling.
    pub fn with_total_power(mut self, e_s: f64) -> Self {
        let k = e_s.sqrt();
        for b in &mut self.betas {
            *b *= k;
        }
        for g in &mut self.gains {
            *g *= k;
        }
        self
    }

    /// Per-stream gains seen by receivers whose true channels are `users`
    /// (indexed by user, not position).
    pub fn receiver_gains(&self, users: &[ComplexMatrix]) -> Vec<C64> {
        let fs = self.f_scaled();
        let mut g = Vec::with_capacity(fs.cols());
        for (p, &u) in self.order.iter().enumerate() {
            let eff = &(&self.d_blocks[p] * &users[u]) * &fs;
            for k in 0..self.streams {
                let col = p * self.streams + k;
                g.push(eff[(k, col)]);
            }
        }
        g
    }
}

/// Reduces `x` into `[-tau/2, tau/2)` independently in real and imaginary part.
pub fn modulo(x: C64, tau: f64) -> C64 {
    let red = |v: f64| v - tau * ((v + tau / 2.0) / tau).floor();
    C64::new(red(x.re), red(x.im))
}

/// Feedback matrix `strictly_lower(diag(G)^{-1} G)` with `G = d h f`.
pub fn build_feedback(d: &ComplexMatrix, h: &ComplexMatrix, f: &ComplexMatrix) -> Result<ComplexMatrix> {
    feedback_from_effective(&d.matmul(h)?.matmul(f)?)
}

fn feedback_from_effective(g: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !g.is_square() {
        return Err(Error::dims("build_feedback", "square D H F", format!("{:?}", g.shape())));
    }
    let scale = g.max_abs();
    let n = g.rows();
    let mut b = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        let gii = g[(i, i)];
        if gii.norm() <= 1e-12 * scale || scale == 0.0 {
            return Err(Error::ZeroDiagonal(i));
        }
        for j in 0..i {
            b[(i, j)] = g[(i, j)] / gii;
        }
    }
    Ok(b)
}

/// Successive encoding `v_k = mod(s_k - Σ_{j<k} B_kj v_j)`.
pub fn thp_encode(s: &[C64], b: &ComplexMatrix, tau: f64) -> Result<Vec<C64>> {
    if b.shape() != (s.len(), s.len()) {
        return Err(Error::dims(
            "thp_encode",
            format!("{0}x{0} feedback", s.len()),
            format!("{:?}", b.shape()),
        ));
    }
    let mut v: Vec<C64> = Vec::with_capacity(s.len());
    for (k, &sk) in s.iter().enumerate() {
        let fb: C64 = (0..k).map(|j| b[(k, j)] * v[j]).sum();
        v.push(modulo(sk - fb, tau));
    }
    Ok(v)
}

/// Receiver: combine, divide each stream by its gain, fold with the modulo and
/// slice. Returns constellation indices.
pub fn thp_decode(
    y: &[C64],
    d_block: &ComplexMatrix,
    gains: &[C64],
    tau: f64,
    constellation: &Constellation,
) -> Result<Vec<usize>> {
    let z = d_block.matvec(y)?;
    if gains.len() != z.len() {
        return Err(Error::dims("thp_decode", z.len(), gains.len()));
    }
    Ok(z.iter()
        .zip(gains)
        .map(|(zk, gk)| constellation.nearest(modulo(zk / gk, tau)))
        .collect())
}

/// Encoding order: weakest user first, judged by the smallest singular value
/// of its S-GMI effective channel. Ties go to the lower user index.
pub fn so_thp_order(csi: &CsiView, dims: &SystemDims, alpha: f64) -> Result<Vec<usize>> {
    let red = reduce(csi, dims)?;
    let blocks = sgmi_blocks(&red, dims, alpha)?;
    let weakest: Vec<f64> = blocks.iter().map(|b| b.sigma[dims.streams - 1]).collect();
    Ok(weakest_first(&weakest))
}

fn weakest_first(strength: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..strength.len()).collect();
    order.sort_by(|&a, &b| strength[a].total_cmp(&strength[b]).then(a.cmp(&b)));
    order
}

/// SO-THP with the S-GMI feedforward, normalised to unit total power.
pub fn so_thp_sgmi(csi: &CsiView, dims: &SystemDims, alpha: f64, tau: f64) -> Result<NonlinearPrecoder> {
    let red = reduce(csi, dims)?;
    let blocks = sgmi_blocks(&red, dims, alpha)?;
    let weakest: Vec<f64> = blocks.iter().map(|b| b.sigma[dims.streams - 1]).collect();
    let order = weakest_first(&weakest);
    let placed = order
        .iter()
        .map(|&u| (u, blocks[u].precoder.clone(), &blocks[u].filter * &red.combiners[u]))
        .collect();
    finish(placed, csi, dims, tau, Algorithm::SoThpSgmi)
}

/// Classic SO-THP: positions are filled weakest-first, and the user at each
/// position is precoded inside the null space of the users already placed,
/// so the effective channel is exactly lower block-triangular.
pub fn so_thp_classic(csi: &CsiView, dims: &SystemDims, tau: f64) -> Result<NonlinearPrecoder> {
    bd_feasible(dims)?;
    let red = reduce(csi, dims)?;
    let placed = successive_null_space(&red, dims)?;
    finish(placed, csi, dims, tau, Algorithm::SoThp)
}

fn successive_null_space(
    red: &Reduced,
    dims: &SystemDims,
) -> Result<Vec<(usize, ComplexMatrix, ComplexMatrix)>> {
    let s = dims.streams;
    let mut remaining: Vec<usize> = (0..dims.t_users).collect();
    let mut placed: Vec<(usize, ComplexMatrix, ComplexMatrix)> = Vec::with_capacity(dims.t_users);
    while !remaining.is_empty() {
        let basis = if placed.is_empty() {
            ComplexMatrix::identity(dims.n_t)
        } else {
            let prev: Vec<ComplexMatrix> = placed.iter().map(|(u, _, _)| red.users[*u].clone()).collect();
            null_space_qr(&ComplexMatrix::vstack(&prev)?)?
        };
        if basis.cols() < s {
            return Err(Error::Infeasible(format!(
                "position {}: null space of dimension {} < {s} streams",
                placed.len(),
                basis.cols()
            )));
        }
        let mut best: Option<(usize, f64, crate::numerics::SvdResult)> = None;
        for (slot, &u) in remaining.iter().enumerate() {
            let d = svd(&(&red.users[u] * &basis), SvdMode::Thin)?;
            let weakest = d.sigma[s - 1];
            if best.as_ref().is_none_or(|(_, w, _)| weakest < *w) {
                best = Some((slot, weakest, d));
            }
        }
        let (slot, _, d) = best.expect("nonempty candidates");
        let u = remaining.remove(slot);
        let block = &basis * &d.v.columns(0, s);
        let filter = &d.u.columns(0, s).adjoint() * &red.combiners[u];
        placed.push((u, block, filter));
    }
    Ok(placed)
}

fn finish(
    placed: Vec<(usize, ComplexMatrix, ComplexMatrix)>,
    csi: &CsiView,
    dims: &SystemDims,
    tau: f64,
    algorithm: Algorithm,
) -> Result<NonlinearPrecoder> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
    }
    let s = dims.streams;
    let order: Vec<usize> = placed.iter().map(|(u, _, _)| *u).collect();
    let f = ComplexMatrix::hstack(&placed.iter().map(|(_, b, _)| b.clone()).collect::<Vec<_>>())?;
    let d_blocks: Vec<ComplexMatrix> = placed.iter().map(|(_, _, d)| d.clone()).collect();
    let d = ComplexMatrix::block_diag(&d_blocks);
    let h = ComplexMatrix::vstack(&order.iter().map(|&u| csi.users_est[u].clone()).collect::<Vec<_>>())?;

    let e_r = 1.0 / dims.t_users as f64;
    let equal = (0..order.len())
        .map(|p| {
            let n2 = f.columns(p * s, (p + 1) * s).frobenius_norm_sqr();
            if n2 == 0.0 {
                Err(Error::ZeroBlock(order[p]))
            } else {
                Ok((e_r / n2).sqrt())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let fs = ComplexMatrix::from_fn(f.rows(), f.cols(), |i, j| f[(i, j)] * equal[j / s]);
    let g = &(&d * &h) * &fs;
    let b = feedback_from_effective(&g)?;
    let r_v = modulo_covariance(&b, tau)?;
    let stream_power = r_v.diagonal().iter().map(|z| z.re).collect();
    // One common factor keeps B unchanged and brings the expected total
    // transmit power tr(F R_v F^H) back to one.
    let expected = (&(&fs * &r_v) * &fs.adjoint()).trace().re;
    let gamma = expected.sqrt().recip();
    let betas = equal.iter().map(|b| b * gamma).collect();
    let gains = g.diagonal().iter().map(|z| z * gamma).collect();
    Ok(NonlinearPrecoder {
        f,
        b,
        d,
        d_blocks,
        order,
        tau,
        betas,
        stream_power,
        gains,
        streams: s,
        algorithm,
    })
}

/// Symbol vectors encoded to calibrate the transmit power.
const CALIBRATION_VECTORS: usize = 256;
const CALIBRATION_SEED: u64 = 0x7468_705f_7077;

/// Sample covariance of the encoder output `v` over a fixed pseudo-random
/// sequence of unit-energy QPSK vectors. Depends only on `b` and `tau`.
pub fn modulo_covariance(b: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix> {
    let n = b.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let mut r = ComplexMatrix::zeros(n, n);
    for _ in 0..CALIBRATION_VECTORS {
        let s: Vec<C64> = (0..n).map(|_| qpsk_modulate([rng.random(), rng.random()])).collect();
        let v = thp_encode(&s, b, tau)?;
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] += v[i] * v[j].conj();
            }
        }
    }
    Ok(r.scale_real(1.0 / CALIBRATION_VECTORS as f64))
}

/// Streams whose encoder modulo can actually fold, given symbols with
/// per-dimension amplitude at most `a_max`. The feedback term of stream `k`
/// has real and imaginary parts bounded by `sum_j |b_kj| tau / sqrt(2)`; if
/// that stays below the margin `tau / 2 - a_max`, the stream leaves the
/// encoder unchanged and its receiver needs no modulo.
pub fn may_fold(b: &ComplexMatrix, tau: f64, a_max: f64) -> Vec<bool> {
    let margin = tau / 2.0 - a_max;
    (0..b.rows())
        .map(|k| {
            let reach: f64 = (0..k).map(|j| b[(k, j)].norm()).sum::<f64>() * tau * std::f64::consts::FRAC_1_SQRT_2;
            reach >= margin
        })
        .collect()
}

/// Whether every entry of `v` lies in the modulo cell.
pub fn within_cell(v: &[C64], tau: f64) -> bool {
    v.iter()
        .all(|z| z.re >= -tau / 2.0 && z.re < tau / 2.0 && z.im >= -tau / 2.0 && z.im < tau / 2.0)
}

/// `((I + B) v - s) / tau`, which must have integer components.
pub fn lattice_offset(s: &[C64], v: &[C64], b: &ComplexMatrix, tau: f64) -> Vec<C64> {
    (0..s.len())
        .map(|k| {
            let fb: C64 = (0..k).map(|j| b[(k, j)] * v[j]).sum();
            (v[k] + fb - s[k]) / tau
        })
        .collect()
}

#[allow(dead_code)]
fn is_strictly_lower(b: &ComplexMatrix) -> bool {
    (0..b.rows()).all(|i| (i..b.cols()).all(|j| b[(i, j)] == ZERO))
}
