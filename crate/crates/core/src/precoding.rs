//! Linear precoders: ZF, MMSE, BD, GMI and S-GMI.
//!
//! Every constructor returns a [`LinearPrecoder`] whose `p` holds one column
//! block per user (`streams` columns each) and whose `m_filters` holds the
//! matching receive filters. Power scaling is applied afterwards by
//! [`normalize_power`].
//!
//! When `dims.streams < dims.n_r`, each user first combines onto its strongest
//! receive eigenmodes (left singular vectors of its estimated channel); the
//! precoders then see a reduced channel with `streams` rows per user and the
//! combiner is folded into the receive filter.

use crate::algorithm::Algorithm;
use crate::channel::{CsiView, SystemDims};
use crate::error::{Error, Result};
use crate::numerics::{
    inverse, null_space_qr, qr_decompose, regularized_right_inverse, svd, ComplexMatrix, SvdMode,
};

#[derive(Debug, Clone)]
pub struct LinearPrecoder {
    /// `n_t x (t_users * streams)` stacked precoder, unscaled.
    pub p: ComplexMatrix,
    /// Per-user `streams x n_r` receive filters.
    pub m_filters: Vec<ComplexMatrix>,
    /// Per-user power scaling; all ones until [`normalize_power`] runs.
    pub betas: Vec<f64>,
    pub algorithm: Algorithm,
    pub streams: usize,
}

impl LinearPrecoder {
    pub fn n_users(&self) -> usize {
        self.m_filters.len()
    }

    /// Column block of user `r`.
    pub fn block(&self, r: usize) -> ComplexMatrix {
        self.p.columns(r * self.streams, (r + 1) * self.streams)
    }

    /// `p` with each user block multiplied by its `beta`.
    pub fn scaled(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.p.rows(), self.p.cols(), |i, j| {
            self.p[(i, j)] * self.betas[j / self.streams]
        })
    }

    /// Receive filter of every user stacked block-diagonally.
    pub fn receive_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::block_diag(&self.m_filters)
    }
}

/// Per-user effective channel after receive-mode reduction.
pub(crate) struct Reduced {
    pub users: Vec<ComplexMatrix>,
    /// `streams x n_r` combiners; identity when no reduction happens.
    pub combiners: Vec<ComplexMatrix>,
}

impl Reduced {
    pub fn stacked(&self) -> ComplexMatrix {
        ComplexMatrix::vstack(&self.users).expect("shared n_t")
    }

    fn others(&self, r: usize) -> Option<ComplexMatrix> {
        let rest: Vec<ComplexMatrix> = self
            .users
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != r)
            .map(|(_, h)| h.clone())
            .collect();
        if rest.is_empty() {
            None
        } else {
            Some(ComplexMatrix::vstack(&rest).expect("shared n_t"))
        }
    }
}

pub(crate) fn reduce(csi: &CsiView, dims: &SystemDims) -> Result<Reduced> {
    dims.validate()?;
    csi.check(dims)?;
    if dims.streams == dims.n_r {
        return Ok(Reduced {
            users: csi.users_est.clone(),
            combiners: vec![ComplexMatrix::identity(dims.n_r); dims.t_users],
        });
    }
    let mut users = Vec::with_capacity(dims.t_users);
    let mut combiners = Vec::with_capacity(dims.t_users);
    for h in &csi.users_est {
        let d = svd(h, SvdMode::Thin)?;
        let c = d.u.columns(0, dims.streams).adjoint();
        users.push(&c * h);
        combiners.push(c);
    }
    Ok(Reduced { users, combiners })
}

fn assemble(
    blocks: Vec<ComplexMatrix>,
    filters: Vec<ComplexMatrix>,
    reduced: &Reduced,
    algorithm: Algorithm,
    streams: usize,
) -> Result<LinearPrecoder> {
    let p = ComplexMatrix::hstack(&blocks)?;
    let m_filters = filters
        .iter()
        .zip(&reduced.combiners)
        .map(|(f, c)| f * c)
        .collect::<Vec<_>>();
    Ok(LinearPrecoder {
        betas: vec![1.0; m_filters.len()],
        p,
        m_filters,
        algorithm,
        streams,
    })
}

fn split_columns(m: &ComplexMatrix, users: usize, width: usize) -> Vec<ComplexMatrix> {
    (0..users).map(|r| m.columns(r * width, (r + 1) * width)).collect()
}

/// `H^H (H H^H)^{-1}`, which is plain `H^{-1}` for a square channel.
fn zf_matrix(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let inv = if h.is_square() {
        inverse(h)
    } else {
        regularized_right_inverse(h, 0.0)
    };
    inv.map_err(|e| match e {
        Error::Singular(_) => {
            let rank = svd(h, SvdMode::Thin).map(|d| d.rank()).unwrap_or(0);
            Error::RankDeficient {
                rank,
                required: h.rows(),
            }
        }
        other => other,
    })
}

/// `P = H^H (H H^H)^{-1}` on the stacked channel.
pub fn zf_precoder(csi: &CsiView, dims: &SystemDims) -> Result<LinearPrecoder> {
    let red = reduce(csi, dims)?;
    let p = zf_matrix(&red.stacked())?;
    let blocks = split_columns(&p, dims.t_users, dims.streams);
    let filters = vec![ComplexMatrix::identity(dims.streams); dims.t_users];
    assemble(blocks, filters, &red, Algorithm::Zf, dims.streams)
}

/// Regularised inversion `(H^H H + alpha I)^{-1} H^H`; falls back to ZF at
/// `alpha = 0`.
pub fn mmse_precoder(csi: &CsiView, dims: &SystemDims, alpha: f64) -> Result<LinearPrecoder> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("must be >= 0, got {alpha}")));
    }
    let red = reduce(csi, dims)?;
    let h = red.stacked();
    let p = if alpha == 0.0 {
        zf_matrix(&h)?
    } else {
        regularized_right_inverse(&h, alpha)?
    };
    let blocks = split_columns(&p, dims.t_users, dims.streams);
    let filters = vec![ComplexMatrix::identity(dims.streams); dims.t_users];
    assemble(blocks, filters, &red, Algorithm::Mmse, dims.streams)
}

pub(crate) fn bd_feasible(dims: &SystemDims) -> Result<()> {
    if dims.t_users * dims.streams > dims.n_t {
        return Err(Error::Infeasible(format!(
            "{} users x {} streams exceed {} transmit antennas",
            dims.t_users, dims.streams, dims.n_t
        )));
    }
    Ok(())
}

/// Block diagonalisation: each user is precoded inside the null space of the
/// other users' stacked channels, then along its own right singular vectors.
///
/// When the stacked channel has full row rank, the part of user `r`'s null
/// space that its own channel can see is spanned by the user's columns of
/// the zero-forcing inverse, so one shared inversion replaces the per-user
/// null-space computations. Rank-deficient channels take the direct route.
pub fn bd_precoder(csi: &CsiView, dims: &SystemDims) -> Result<LinearPrecoder> {
    bd_feasible(dims)?;
    let red = reduce(csi, dims)?;
    match sgmi_blocks(&red, dims, 0.0) {
        Ok(blocks) => {
            let (p, f): (Vec<_>, Vec<_>) = blocks.into_iter().map(|b| (b.precoder, b.filter)).unzip();
            assemble(p, f, &red, Algorithm::Bd, dims.streams)
        }
        Err(Error::RankDeficient { .. }) => bd_null_space(&red, dims),
        Err(e) => Err(e),
    }
}

/// BD through an explicit null-space basis per user.
pub(crate) fn bd_null_space(red: &Reduced, dims: &SystemDims) -> Result<LinearPrecoder> {
    let s = dims.streams;
    let mut blocks = Vec::with_capacity(dims.t_users);
    let mut filters = Vec::with_capacity(dims.t_users);
    for r in 0..dims.t_users {
        let basis = match red.others(r) {
            Some(others) => null_space_qr(&others)?,
            None => ComplexMatrix::identity(dims.n_t),
        };
        if basis.cols() < s {
            return Err(Error::Infeasible(format!(
                "user {r}: null space of dimension {} < {s} streams",
                basis.cols()
            )));
        }
        let d = svd(&(&red.users[r] * &basis), SvdMode::Thin)?;
        blocks.push(&basis * &d.v.columns(0, s));
        filters.push(d.u.columns(0, s).adjoint());
    }
    assemble(blocks, filters, red, Algorithm::Bd, dims.streams)
}

/// Intermediate products of the S-GMI construction for one user.
#[derive(Debug, Clone)]
pub struct SgmiBlock {
    /// `Q̄_r Ṽ_r`, `n_t x streams`.
    pub precoder: ComplexMatrix,
    /// `Ũ_r^H` on the reduced channel, `streams x streams`.
    pub filter: ComplexMatrix,
    /// Singular values of `H_r Q̄_r`.
    pub sigma: Vec<f64>,
}

/// Orthonormal bases `Q̄_r` of each user's block of the regularised inverse.
fn gmi_bases(red: &Reduced, dims: &SystemDims, alpha: f64) -> Result<Vec<ComplexMatrix>> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("must be >= 0, got {alpha}")));
    }
    let h = red.stacked();
    let hbar = if alpha == 0.0 {
        zf_matrix(&h)?
    } else {
        regularized_right_inverse(&h, alpha)?
    };
    split_columns(&hbar, dims.t_users, dims.streams)
        .iter()
        .map(|b| qr_decompose(b).map(|f| f.q))
        .collect()
}

pub(crate) fn sgmi_blocks(red: &Reduced, dims: &SystemDims, alpha: f64) -> Result<Vec<SgmiBlock>> {
    let s = dims.streams;
    gmi_bases(red, dims, alpha)?
        .into_iter()
        .zip(&red.users)
        .map(|(q, h)| {
            let d = svd(&(h * &q), SvdMode::Thin)?;
            Ok(SgmiBlock {
                precoder: &q * &d.v.columns(0, s),
                filter: d.u.columns(0, s).adjoint(),
                sigma: d.sigma,
            })
        })
        .collect()
}

/// Simplified generalised MMSE channel inversion.
pub fn sgmi_precoder(csi: &CsiView, dims: &SystemDims, alpha: f64) -> Result<LinearPrecoder> {
    let red = reduce(csi, dims)?;
    let blocks = sgmi_blocks(&red, dims, alpha)?;
    let (p, f): (Vec<_>, Vec<_>) = blocks.into_iter().map(|b| (b.precoder, b.filter)).unzip();
    assemble(p, f, &red, Algorithm::Sgmi, dims.streams)
}

/// Generalised MMSE channel inversion with the transmit combining matrix
/// `T̄_r = (Q̄_r^H Σ_j H_j^H H_j Q̄_r + αI)^{-1} Q̄_r^H H_r^H H_r Q̄_r`.
pub fn gmi_precoder(csi: &CsiView, dims: &SystemDims, alpha: f64) -> Result<LinearPrecoder> {
    let red = reduce(csi, dims)?;
    let s = dims.streams;
    let h = red.stacked();
    let gram = h.adjoint_mul(&h)?;
    let mut blocks = Vec::with_capacity(dims.t_users);
    let mut filters = Vec::with_capacity(dims.t_users);
    for (q, hr) in gmi_bases(&red, dims, alpha)?.into_iter().zip(&red.users) {
        let hq = hr * &q;
        let lhs = q.adjoint_mul(&(&gram * &q))?.add_identity(alpha);
        let rhs = hq.adjoint_mul(&hq)?;
        let t = crate::numerics::solve(&lhs, &rhs)?;
        let qt = &q * &t;
        let d = svd(&(hr * &qt), SvdMode::Thin)?;
        blocks.push(&qt * &d.v.columns(0, s));
        filters.push(d.u.columns(0, s).adjoint());
    }
    assemble(blocks, filters, &red, Algorithm::Gmi, dims.streams)
}

/// Sets `betas[r] = sqrt(e_r[r] / ||P_r||_F^2)`.
pub fn normalize_power(pre: &LinearPrecoder, e_r: &[f64]) -> Result<LinearPrecoder> {
    if e_r.len() != pre.n_users() {
        return Err(Error::dims("normalize_power", pre.n_users(), e_r.len()));
    }
    let betas = (0..pre.n_users())
        .map(|r| {
            let n2 = pre.block(r).frobenius_norm_sqr();
            if n2 == 0.0 || !n2.is_finite() {
                return Err(Error::ZeroBlock(r));
            }
            Ok((e_r[r] / n2).sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearPrecoder {
        betas,
        ..pre.clone()
    })
}

/// Builds the requested linear scheme. Nonlinear tags are rejected.
pub fn build_linear(
    algorithm: Algorithm,
    csi: &CsiView,
    dims: &SystemDims,
    alpha: f64,
) -> Result<LinearPrecoder> {
    match algorithm {
        Algorithm::Zf => zf_precoder(csi, dims),
        Algorithm::Mmse => mmse_precoder(csi, dims, alpha),
        Algorithm::Bd => bd_precoder(csi, dims),
        Algorithm::Gmi => gmi_precoder(csi, dims, alpha),
        Algorithm::Sgmi => sgmi_precoder(csi, dims, alpha),
        other => Err(Error::UnknownAlgorithm(format!("{other} is not a linear precoder"))),
    }
}

/// MMSE loading `alpha = n_t * sigma_b2 / e_s`.
pub fn mmse_alpha(dims: &SystemDims, sigma_b2: f64, e_s: f64) -> f64 {
    dims.n_t as f64 * sigma_b2 / e_s
}
