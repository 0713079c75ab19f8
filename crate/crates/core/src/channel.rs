//! Flat-fading MU-MIMO channels for users and eavesdroppers, additive CSI
//! error and the noisy channel application `y = H x + n`.
//!
//! Complex Gaussian draws split variance equally between the real and
//! imaginary parts. Every random draw goes through an explicit `Rng` handle;
//! use [`substream`] to derive independent per-trial streams from a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64};

/// Antenna and user counts of the broadcast system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    /// Transmit antennas at the access point.
    pub n_t: usize,
    /// Number of legitimate users.
    pub t_users: usize,
    /// Receive antennas per user.
    pub n_r: usize,
    /// Number of eavesdroppers.
    pub k_eves: usize,
    /// Receive antennas per eavesdropper.
    pub n_k: usize,
    /// Data streams per user, at most `n_r`. When smaller than `n_r` each
    /// user combines onto its strongest receive eigenmodes.
    pub streams: usize,
}

impl SystemDims {
    pub fn new(n_t: usize, t_users: usize, n_r: usize, k_eves: usize, n_k: usize) -> Result<Self> {
        let d = Self {
            n_t,
            t_users,
            n_r,
            k_eves,
            n_k,
            streams: n_r,
        };
        d.validate()?;
        Ok(d)
    }

    /// The 4-antenna, 2-user, 2-eavesdropper system with two antennas each.
    pub fn baseline() -> Self {
        Self {
            n_t: 4,
            t_users: 2,
            n_r: 2,
            k_eves: 2,
            n_k: 2,
            streams: 2,
        }
    }

    pub fn with_streams(mut self, streams: usize) -> Result<Self> {
        self.streams = streams;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("n_t", self.n_t),
            ("t_users", self.t_users),
            ("n_r", self.n_r),
            ("k_eves", self.k_eves),
            ("n_k", self.n_k),
            ("streams", self.streams),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be >= 1"));
            }
        }
        if self.streams > self.n_r {
            return Err(Error::invalid(
                "streams",
                format!("{} streams exceed {} receive antennas", self.streams, self.n_r),
            ));
        }
        if self.n_t < self.t_users * self.n_r {
            return Err(Error::invalid(
                "n_t",
                format!(
                    "{} transmit antennas cannot serve {} users x {} antennas",
                    self.n_t, self.t_users, self.n_r
                ),
            ));
        }
        Ok(())
    }

    pub fn total_streams(&self) -> usize {
        self.t_users * self.streams
    }

    pub fn total_user_antennas(&self) -> usize {
        self.t_users * self.n_r
    }
}

/// True channels of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Per-user `n_r x n_t` matrices.
    pub users: Vec<ComplexMatrix>,
    /// Per-eavesdropper `n_k x n_t` matrices.
    pub eves: Vec<ComplexMatrix>,
    pub sigma_b2: f64,
    pub sigma_e2: f64,
    pub m_ratio: f64,
}

impl ChannelSet {
    pub fn stacked_users(&self) -> ComplexMatrix {
        ComplexMatrix::vstack(&self.users).expect("user channels share n_t columns")
    }

    /// Transmitter view with no estimation error.
    pub fn perfect_csi(&self) -> CsiView {
        CsiView {
            users_est: self.users.clone(),
            eves_est: None,
            error_var: 0.0,
        }
    }
}

/// What the transmitter believes about the channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiView {
    pub users_est: Vec<ComplexMatrix>,
    /// Only the statistics of the eavesdropper channels are known, so this
    /// is normally `None`.
    pub eves_est: Option<Vec<ComplexMatrix>>,
    pub error_var: f64,
}

impl CsiView {
    /// CSI built directly from user channel matrices (perfect knowledge).
    pub fn from_users(users: Vec<ComplexMatrix>) -> Self {
        Self {
            users_est: users,
            eves_est: None,
            error_var: 0.0,
        }
    }

    pub fn stacked(&self) -> ComplexMatrix {
        ComplexMatrix::vstack(&self.users_est).expect("user channels share n_t columns")
    }

    pub fn n_users(&self) -> usize {
        self.users_est.len()
    }

    pub(crate) fn check(&self, dims: &SystemDims) -> Result<()> {
        if self.users_est.len() != dims.t_users {
            return Err(Error::dims("csi", dims.t_users, self.users_est.len()));
        }
        for h in &self.users_est {
            if h.shape() != (dims.n_r, dims.n_t) {
                return Err(Error::dims(
                    "csi",
                    format!("{}x{}", dims.n_r, dims.n_t),
                    format!("{}x{}", h.rows(), h.cols()),
                ));
            }
        }
        Ok(())
    }
}

/// A zero-mean circularly-symmetric complex Gaussian sample of variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(var: f64, rng: &mut R) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    var: f64,
    rng: &mut R,
) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(var, rng))
}

pub fn complex_gaussian_vector<R: Rng + ?Sized>(n: usize, var: f64, rng: &mut R) -> Vec<C64> {
    (0..n).map(|_| complex_gaussian(var, rng)).collect()
}

/// Draws user channels with unit per-entry variance and eavesdropper channels
/// with per-entry variance `m_ratio`.
pub fn generate_channels<R: Rng + ?Sized>(
    dims: &SystemDims,
    m_ratio: f64,
    sigma_b2: f64,
    sigma_e2: f64,
    rng: &mut R,
) -> Result<ChannelSet> {
    dims.validate()?;
    if !(m_ratio > 0.0) {
        return Err(Error::invalid("m_ratio", format!("must be > 0, got {m_ratio}")));
    }
    if !(sigma_b2 >= 0.0) || !(sigma_e2 >= 0.0) {
        return Err(Error::invalid("sigma", "noise variances must be >= 0"));
    }
    let users = (0..dims.t_users)
        .map(|_| complex_gaussian_matrix(dims.n_r, dims.n_t, 1.0, rng))
        .collect();
    let eves = (0..dims.k_eves)
        .map(|_| complex_gaussian_matrix(dims.n_k, dims.n_t, m_ratio, rng))
        .collect();
    Ok(ChannelSet {
        users,
        eves,
        sigma_b2,
        sigma_e2,
        m_ratio,
    })
}

/// Additive Gaussian CSI error `H_est = H + E` on the user channels.
pub fn perturb_csi<R: Rng + ?Sized>(set: &ChannelSet, error_var: f64, rng: &mut R) -> Result<CsiView> {
    if !(error_var >= 0.0) {
        return Err(Error::invalid("csi_error_var", format!("must be >= 0, got {error_var}")));
    }
    if error_var == 0.0 {
        return Ok(set.perfect_csi());
    }
    let users_est = set
        .users
        .iter()
        .map(|h| h + &complex_gaussian_matrix(h.rows(), h.cols(), error_var, rng))
        .collect();
    Ok(CsiView {
        users_est,
        eves_est: None,
        error_var,
    })
}

/// `h x + n` with `n ~ CN(0, noise_var I)`. No randomness is consumed when
/// `noise_var` is zero.
pub fn apply_channel<R: Rng + ?Sized>(
    h: &ComplexMatrix,
    x: &[C64],
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let mut y = h.matvec(x)?;
    if noise_var > 0.0 {
        for yi in &mut y {
            *yi += complex_gaussian(noise_var, rng);
        }
    }
    Ok(y)
}

/// Independent random stream for `(seed, tags...)`.
///
/// Tags are folded through SplitMix64 so that neighbouring indices give
/// unrelated ChaCha keys. The result depends only on the arguments, never on
/// call order.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
