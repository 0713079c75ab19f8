//! Monte Carlo link simulation: QPSK over precoded MU-MIMO channels, with
//! bit-error counting at users and eavesdroppers and per-draw secrecy rates.
//!
//! Each frame draws a fresh channel realisation (shared by every algorithm
//! and SNR point of that frame) and sends `symbols_per_frame` symbol
//! vectors through it. Frames are processed in fixed-size chunks whose
//! partial sums are combined in chunk order, so results never depend on the
//! number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::channel::{apply_channel, generate_channels, perturb_csi, substream, ChannelSet, CsiView, SystemDims};
use crate::complexity::flops_algorithm;
use crate::error::{Error, Result};
use crate::modulation::{qpsk_bits, qpsk_demodulate, qpsk_index, qpsk_modulate, Constellation};
use crate::numerics::{solve, ComplexMatrix, C64};
use crate::precoding::{build_linear, mmse_alpha, normalize_power, LinearPrecoder};
use crate::secrecy::{design_artificial_noise, link_secrecy, user_covariances, whitened_rate, ArtificialNoise};
use crate::thp::{may_fold, modulo, so_thp_classic, so_thp_sgmi, thp_encode, NonlinearPrecoder};

const TAG_CHANNEL: u64 = 1;
const TAG_CSI: u64 = 2;
const TAG_DATA: u64 = 3;

/// Frames per unit of parallel work. Part of the reduction order, so it
/// must not depend on the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: SystemDims,
    /// Ascending. `+inf` switches the noise off.
    pub snr_db_list: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Eavesdropper-to-user channel variance ratio.
    pub m_ratio: f64,
    /// Fraction of the power spent on data when artificial noise is on.
    pub rho: f64,
    pub csi_error_var: f64,
    pub an_enabled: bool,
    pub frames_per_point: usize,
    pub symbols_per_frame: usize,
    pub seed: u64,
    /// Total transmit power.
    pub e_s: f64,
    /// `sigma_e2 / sigma_b2`.
    pub eve_noise_ratio: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: SystemDims::baseline(),
            snr_db_list: (0..=10).map(|i| 2.0 * i as f64).collect(),
            algorithms: Algorithm::ALL.to_vec(),
            m_ratio: 0.5,
            rho: 1.0,
            csi_error_var: 0.0,
            an_enabled: false,
            frames_per_point: 20_000,
            symbols_per_frame: 10,
            seed: 1,
            e_s: 1.0,
            eve_noise_ratio: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.snr_db_list.is_empty() {
            return Err(Error::invalid("snr_db", "list must not be empty"));
        }
        if self.snr_db_list.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::invalid("snr_db", "values must be numbers or +inf"));
        }
        if self.snr_db_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("snr_db", "values must be strictly ascending"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::invalid("algorithms", "list must not be empty"));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::invalid("algorithms", format!("`{a}` listed twice")));
            }
        }
        if !(self.m_ratio > 0.0 && self.m_ratio.is_finite()) {
            return Err(Error::invalid("m_ratio", format!("must be > 0, got {}", self.m_ratio)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid("rho", format!("must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.csi_error_var >= 0.0 && self.csi_error_var.is_finite()) {
            return Err(Error::invalid("csi_error_var", format!("must be >= 0, got {}", self.csi_error_var)));
        }
        if self.frames_per_point == 0 {
            return Err(Error::invalid("frames_per_point", "must be >= 1"));
        }
        if self.symbols_per_frame == 0 {
            return Err(Error::invalid("symbols_per_frame", "must be >= 1"));
        }
        if !(self.e_s > 0.0 && self.e_s.is_finite()) {
            return Err(Error::invalid("e_s", format!("must be > 0, got {}", self.e_s)));
        }
        if !(self.eve_noise_ratio > 0.0 && self.eve_noise_ratio.is_finite()) {
            return Err(Error::invalid("eve_noise_ratio", format!("must be > 0, got {}", self.eve_noise_ratio)));
        }
        if self.an_enabled && self.rho < 1.0 && self.dims.n_t <= self.dims.total_streams() {
            return Err(Error::invalid(
                "an_enabled",
                format!(
                    "artificial noise needs n_t > users x streams ({} <= {}); reduce `streams`",
                    self.dims.n_t,
                    self.dims.total_streams()
                ),
            ));
        }
        Ok(())
    }

    /// Share of `e_s` carried by data symbols.
    pub fn signal_fraction(&self) -> f64 {
        if self.an_enabled {
            self.rho
        } else {
            1.0
        }
    }

    /// Share of `e_s` carried by artificial noise.
    pub fn an_fraction(&self) -> f64 {
        1.0 - self.signal_fraction()
    }

    pub fn noise_var(&self, snr_db: f64) -> f64 {
        if snr_db == f64::INFINITY {
            0.0
        } else {
            self.e_s / 10f64.powf(snr_db / 10.0)
        }
    }
}

/// Aggregated measurements of one (algorithm, SNR) grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub ber: f64,
    /// Mean precoder-induced secrecy rate; NaN at infinite SNR.
    pub secrecy_rate_bits: f64,
    pub flops: f64,
    pub frames: usize,
    pub bit_errors: u64,
    pub bits: u64,
    pub eve_ber: f64,
    pub eve_bit_errors: u64,
    pub eve_bits: u64,
    /// Mean secrecy rate of the uniform `Q_s = rho e_s / n_t I` benchmark.
    pub uniform_rate_bits: f64,
    /// Mean rate the transmitter predicts from its CSI and the eavesdropper
    /// channel statistics.
    pub design_rate_bits: f64,
    /// Mean transmitted energy per symbol vector.
    pub tx_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Algorithm-major, SNR ascending.
    pub cells: Vec<SimCell>,
}

impl SimResult {
    pub fn cell(&self, algorithm: Algorithm, snr_db: f64) -> Option<&SimCell> {
        self.cells.iter().find(|c| c.algorithm == algorithm && c.snr_db == snr_db)
    }

    pub fn curve(&self, algorithm: Algorithm) -> Vec<&SimCell> {
        self.cells.iter().filter(|c| c.algorithm == algorithm).collect()
    }
}

/// A precoder ready for transmission, scaled to the data power budget.
#[derive(Debug, Clone)]
pub enum Precoder {
    Linear(LinearPrecoder),
    Nonlinear(NonlinearPrecoder),
}

impl Precoder {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Precoder::Linear(p) => p.algorithm,
            Precoder::Nonlinear(p) => p.algorithm,
        }
    }

    /// Scaled `n_t x total_streams` transmit matrix (position order for THP).
    pub fn transmit_matrix(&self) -> ComplexMatrix {
        match self {
            Precoder::Linear(p) => p.scaled(),
            Precoder::Nonlinear(p) => p.f_scaled(),
        }
    }

    /// Unscaled column block of `user`.
    pub fn user_block(&self, user: usize) -> ComplexMatrix {
        match self {
            Precoder::Linear(p) => p.block(user),
            Precoder::Nonlinear(p) => p.block(p.position_of(user)),
        }
    }

    /// Receive processing of `user` before per-stream equalisation.
    pub fn user_filter(&self, user: usize) -> &ComplexMatrix {
        match self {
            Precoder::Linear(p) => &p.m_filters[user],
            Precoder::Nonlinear(p) => &p.d_blocks[p.position_of(user)],
        }
    }

    pub fn n_users(&self) -> usize {
        match self {
            Precoder::Linear(p) => p.n_users(),
            Precoder::Nonlinear(p) => p.n_users(),
        }
    }

    fn streams(&self) -> usize {
        match self {
            Precoder::Linear(p) => p.streams,
            Precoder::Nonlinear(p) => p.streams,
        }
    }

    /// Users whose streams still interfere with `user` after successive
    /// cancellation, and those cancelled by the feedback filter.
    fn interferers(&self, user: usize) -> (Vec<usize>, Vec<usize>) {
        match self {
            Precoder::Linear(p) => ((0..p.n_users()).filter(|&j| j != user).collect(), Vec::new()),
            Precoder::Nonlinear(p) => {
                let pos = p.position_of(user);
                (p.order[pos + 1..].to_vec(), p.order[..pos].to_vec())
            }
        }
    }
}

/// Builds `algorithm` from the transmitter's CSI with total data power
/// `signal_power`, split equally among users.
pub fn build_precoder(
    algorithm: Algorithm,
    csi: &CsiView,
    dims: &SystemDims,
    alpha: f64,
    signal_power: f64,
) -> Result<Precoder> {
    let tau = Constellation::qpsk().modulo_base();
    match algorithm {
        Algorithm::SoThpSgmi => Ok(Precoder::Nonlinear(
            so_thp_sgmi(csi, dims, alpha, tau)?.with_total_power(signal_power),
        )),
        Algorithm::SoThp => Ok(Precoder::Nonlinear(
            so_thp_classic(csi, dims, tau)?.with_total_power(signal_power),
        )),
        linear => {
            let pre = build_linear(linear, csi, dims, alpha)?;
            let e_r = vec![signal_power / dims.t_users as f64; dims.t_users];
            Ok(Precoder::Linear(normalize_power(&pre, &e_r)?))
        }
    }
}

/// Counts from one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameOutcome {
    pub bit_errors: u64,
    pub bits: u64,
    pub eve_bit_errors: u64,
    pub eve_bits: u64,
    pub tx_energy: f64,
    pub symbol_vectors: u64,
}

/// Linear MMSE receiver of an eavesdropper that knows its own channel and
/// the precoder, treating artificial noise as noise.
fn eve_equalizer(
    h_e: &ComplexMatrix,
    x_mat: &ComplexMatrix,
    q_an: Option<&ComplexMatrix>,
    noise: f64,
) -> Result<(ComplexMatrix, Vec<C64>)> {
    let a = h_e * x_mat;
    let mut k = &a * &a.adjoint();
    if let Some(q) = q_an {
        k = &k + &(&(h_e * q) * &h_e.adjoint());
    }
    let floor = (k.max_abs() * 1e-12).max(f64::MIN_POSITIVE);
    k = k.add_identity(noise.max(floor));
    // W = A^H K^{-1}, via K^{-1} A solved once.
    let w = solve(&k, &a)?.adjoint();
    let gains = (&w * &a).diagonal();
    Ok((w, gains))
}

/// Simulates `cfg.symbols_per_frame` symbol vectors over one channel draw.
///
/// Users apply their receive filter, divide each stream by its effective
/// gain on the true channel and, for THP streams the encoder may have
/// folded, apply the modulo before slicing. Eavesdroppers run an MMSE
/// equaliser over all streams and have no access to the feedback schedule.
pub fn run_frame<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    channels: &ChannelSet,
    precoder: &Precoder,
    an: Option<&ArtificialNoise>,
    snr_db: f64,
    rng: &mut R,
) -> Result<FrameOutcome> {
    let sigma_b2 = cfg.noise_var(snr_db);
    let sigma_e2 = sigma_b2 * cfg.eve_noise_ratio;
    let q = Constellation::qpsk();
    let x_mat = precoder.transmit_matrix();
    let total = x_mat.cols();
    let s = precoder.streams();
    let an = an.filter(|a| a.is_active());
    let q_an = an.map(|a| a.transmit_covariance());

    // Stream k of the transmit matrix belongs to `stream_user[k]`.
    let (stream_user, tau) = match precoder {
        Precoder::Linear(_) => ((0..total).map(|k| k / s).collect::<Vec<_>>(), None),
        Precoder::Nonlinear(p) => ((0..total).map(|k| p.order[k / s]).collect(), Some(p.tau)),
    };
    // Streams the encoder can fold; the others are sliced without modulo.
    let folds = match precoder {
        Precoder::Linear(_) => vec![false; total],
        Precoder::Nonlinear(p) => may_fold(&p.b, p.tau, q.max_amplitude()),
    };
    // Per-user gains on the true channels, indexed like the transmit streams.
    let gains: Vec<C64> = match precoder {
        Precoder::Linear(p) => {
            let mut g = Vec::with_capacity(total);
            for (r, h) in channels.users.iter().enumerate() {
                let eff = &(&p.m_filters[r] * h) * &x_mat;
                g.extend((0..s).map(|k| eff[(k, r * s + k)]));
            }
            g
        }
        Precoder::Nonlinear(p) => p.receiver_gains(&channels.users),
    };
    let eve_rx = channels
        .eves
        .iter()
        .map(|h| eve_equalizer(h, &x_mat, q_an.as_ref(), sigma_e2))
        .collect::<Result<Vec<_>>>()?;

    let mut out = FrameOutcome::default();
    let mut idx = vec![0usize; total];
    let mut sym = vec![C64::new(0.0, 0.0); total];
    for _ in 0..cfg.symbols_per_frame {
        for k in 0..total {
            let b = [rng.random::<bool>(), rng.random::<bool>()];
            idx[k] = qpsk_index(b);
            sym[k] = qpsk_modulate(b);
        }
        let v = match precoder {
            Precoder::Linear(_) => sym.clone(),
            Precoder::Nonlinear(p) => thp_encode(&sym, &p.b, p.tau)?,
        };
        let mut x = x_mat.matvec(&v)?;
        if let Some(a) = an {
            for (xi, ni) in x.iter_mut().zip(a.sample(rng)) {
                *xi += ni;
            }
        }
        out.tx_energy += x.iter().map(|z| z.norm_sqr()).sum::<f64>();
        out.symbol_vectors += 1;

        for (r, h) in channels.users.iter().enumerate() {
            let y = apply_channel(h, &x, sigma_b2, rng)?;
            let cols: Vec<usize> = (0..total).filter(|&k| stream_user[k] == r).collect();
            let g: Vec<C64> = cols.iter().map(|&k| gains[k]).collect();
            let z = precoder.user_filter(r).matvec(&y)?;
            let decided: Vec<usize> = z
                .iter()
                .zip(&g)
                .zip(&cols)
                .map(|((zk, gk), &k)| {
                    let est = zk / gk;
                    match tau {
                        Some(t) if folds[k] => q.nearest(modulo(est, t)),
                        _ => qpsk_index(qpsk_demodulate(est)),
                    }
                })
                .collect();
            for (d, &k) in decided.iter().zip(&cols) {
                out.bit_errors += bit_diff(*d, idx[k]);
            }
            out.bits += 2 * cols.len() as u64;
        }

        for (h, (w, g)) in channels.eves.iter().zip(&eve_rx) {
            let y = apply_channel(h, &x, sigma_e2, rng)?;
            let z = w.matvec(&y)?;
            for k in 0..total {
                let mut est = z[k] / g[k];
                if let Some(t) = tau {
                    est = modulo(est, t);
                }
                out.eve_bit_errors += bit_diff(q.nearest(est), idx[k]);
            }
            out.eve_bits += 2 * total as u64;
        }
    }
    Ok(out)
}

fn bit_diff(a: usize, b: usize) -> u64 {
    let (x, y) = (qpsk_bits(a), qpsk_bits(b));
    (x[0] != y[0]) as u64 + (x[1] != y[1]) as u64
}

/// Per-draw secrecy measures for one precoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSecrecy {
    /// Precoder-induced rate on the true channels.
    pub realized: f64,
    /// Transmitter-side prediction.
    pub design: f64,
}

/// Sum over users of `[I(user) - max_k I(eve k)]^+` for the covariances
/// induced by `precoder`.
///
/// Each user is evaluated after its receive filter. Streams the precoder
/// leaves uncancelled count as interference; for THP, streams cancelled by
/// feedback still leak through the CSI error. Artificial noise adds to the
/// effective noise everywhere.
pub fn frame_secrecy(
    cfg: &ExperimentConfig,
    channels: &ChannelSet,
    csi: &CsiView,
    precoder: &Precoder,
    an: Option<&ArtificialNoise>,
    sigma_b2: f64,
) -> Result<FrameSecrecy> {
    let sigma_e2 = sigma_b2 * cfg.eve_noise_ratio;
    let t = precoder.n_users();
    let blocks: Vec<ComplexMatrix> = (0..t).map(|r| precoder.user_block(r)).collect();
    let qs = user_covariances(&blocks, cfg.e_s, cfg.signal_fraction())?;
    let q_an = an.filter(|a| a.is_active()).map(|a| a.transmit_covariance());
    let n_t = cfg.dims.n_t;
    let eve_gram = (cfg.dims.n_k as f64 * cfg.m_ratio).sqrt();
    let expected_eve = ComplexMatrix::identity(n_t).scale_real(eve_gram);
    let k_eve_design = match &q_an {
        Some(q) => q.scale_real(eve_gram * eve_gram).add_identity(sigma_e2),
        None => ComplexMatrix::identity(n_t).scale_real(sigma_e2),
    };

    let mut realized = 0.0;
    let mut design = 0.0;
    for r in 0..t {
        let f = precoder.user_filter(r);
        let (uncancelled, cancelled) = precoder.interferers(r);

        let h_true = f * &channels.users[r];
        let err = f * &(&channels.users[r] - &csi.users_est[r]);
        let mut k_extra = ComplexMatrix::zeros(h_true.rows(), h_true.rows());
        for &j in &uncancelled {
            k_extra = &k_extra + &(&(&h_true * &qs[j]) * &h_true.adjoint());
        }
        for &j in &cancelled {
            k_extra = &k_extra + &(&(&err * &qs[j]) * &err.adjoint());
        }
        if let Some(q) = &q_an {
            k_extra = &k_extra + &(&(&h_true * q) * &h_true.adjoint());
        }
        realized += link_secrecy(&h_true, &qs[r], &k_extra, sigma_b2, &channels.eves, q_an.as_ref(), sigma_e2)?
            .rate_bits;

        let h_est = f * &csi.users_est[r];
        let mut k_design = ComplexMatrix::identity(h_est.rows()).scale_real(sigma_b2);
        for &j in &uncancelled {
            k_design = &k_design + &(&(&h_est * &qs[j]) * &h_est.adjoint());
        }
        if let Some(q) = &q_an {
            k_design = &k_design + &(&(&h_est * q) * &h_est.adjoint());
        }
        let user = whitened_rate(&h_est, &qs[r], &k_design)?;
        let eve = whitened_rate(&expected_eve, &qs[r], &k_eve_design)?;
        design += (user - eve).max(0.0);
    }
    Ok(FrameSecrecy { realized, design })
}

/// Secrecy rate of the uniform benchmark `Q_s = rho e_s / n_t I`, summed
/// over users with each user facing the strongest eavesdropper.
pub fn uniform_secrecy(
    cfg: &ExperimentConfig,
    channels: &ChannelSet,
    an: Option<&ArtificialNoise>,
    sigma_b2: f64,
) -> Result<f64> {
    let n_t = cfg.dims.n_t;
    let q = ComplexMatrix::identity(n_t).scale_real(cfg.signal_fraction() * cfg.e_s / n_t as f64);
    let q_an = an.filter(|a| a.is_active()).map(|a| a.transmit_covariance());
    let mut total = 0.0;
    for h in &channels.users {
        let k_extra = match &q_an {
            Some(qa) => &(h * qa) * &h.adjoint(),
            None => ComplexMatrix::zeros(h.rows(), h.rows()),
        };
        total += link_secrecy(h, &q, &k_extra, sigma_b2, &channels.eves, q_an.as_ref(), sigma_b2 * cfg.eve_noise_ratio)?
            .rate_bits;
    }
    Ok(total)
}

#[derive(Debug, Clone, Default)]
struct CellAcc {
    frame: FrameOutcome,
    frames: usize,
    secrecy: f64,
    design: f64,
    uniform: f64,
}

impl CellAcc {
    fn merge(&mut self, o: &CellAcc) {
        self.frame.bit_errors += o.frame.bit_errors;
        self.frame.bits += o.frame.bits;
        self.frame.eve_bit_errors += o.frame.eve_bit_errors;
        self.frame.eve_bits += o.frame.eve_bits;
        self.frame.tx_energy += o.frame.tx_energy;
        self.frame.symbol_vectors += o.frame.symbol_vectors;
        self.frames += o.frames;
        self.secrecy += o.secrecy;
        self.design += o.design;
        self.uniform += o.uniform;
    }
}

/// Whether the design depends on the noise level.
fn snr_dependent(a: Algorithm) -> bool {
    matches!(a, Algorithm::Mmse | Algorithm::Gmi | Algorithm::Sgmi | Algorithm::SoThpSgmi)
}

/// Runs one frame for every grid cell; `acc` is indexed algorithm-major.
fn simulate_frame(cfg: &ExperimentConfig, frame: u64, acc: &mut [CellAcc]) -> Result<()> {
    let dims = &cfg.dims;
    let n_snr = cfg.snr_db_list.len();
    let mut set = generate_channels(dims, cfg.m_ratio, 0.0, 0.0, &mut substream(cfg.seed, &[TAG_CHANNEL, frame]))?;
    let csi = perturb_csi(&set, cfg.csi_error_var, &mut substream(cfg.seed, &[TAG_CSI, frame]))?;
    let an = if cfg.an_enabled {
        Some(design_artificial_noise(&csi, dims, cfg.rho, cfg.e_s)?)
    } else {
        None
    };
    let signal_power = cfg.signal_fraction() * cfg.e_s;
    let mut fixed: Vec<Option<Precoder>> = vec![None; cfg.algorithms.len()];

    for (si, &snr_db) in cfg.snr_db_list.iter().enumerate() {
        let sigma_b2 = cfg.noise_var(snr_db);
        set.sigma_b2 = sigma_b2;
        set.sigma_e2 = sigma_b2 * cfg.eve_noise_ratio;
        let alpha = mmse_alpha(dims, sigma_b2, cfg.e_s);
        let uniform = if sigma_b2 > 0.0 {
            uniform_secrecy(cfg, &set, an.as_ref(), sigma_b2)?
        } else {
            f64::NAN
        };
        for (ai, &alg) in cfg.algorithms.iter().enumerate() {
            let pre = if snr_dependent(alg) {
                build_precoder(alg, &csi, dims, alpha, signal_power)?
            } else {
                if fixed[ai].is_none() {
                    fixed[ai] = Some(build_precoder(alg, &csi, dims, 0.0, signal_power)?);
                }
                fixed[ai].clone().expect("cached precoder")
            };
            let mut rng = substream(cfg.seed, &[TAG_DATA, frame, si as u64]);
            let outcome = run_frame(cfg, &set, &pre, an.as_ref(), snr_db, &mut rng)?;
            let cell = &mut acc[ai * n_snr + si];
            cell.merge(&CellAcc {
                frame: outcome,
                frames: 1,
                ..Default::default()
            });
            if sigma_b2 > 0.0 {
                let sec = frame_secrecy(cfg, &set, &csi, &pre, an.as_ref(), sigma_b2)?;
                cell.secrecy += sec.realized;
                cell.design += sec.design;
            }
            cell.uniform += uniform;
        }
    }
    Ok(())
}

/// Runs the whole grid on the global rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimResult> {
    cfg.validate()?;
    let n_cells = cfg.algorithms.len() * cfg.snr_db_list.len();
    let frames = cfg.frames_per_point;
    let n_chunks = frames.div_ceil(CHUNK);
    let partials = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![CellAcc::default(); n_cells];
            for f in c * CHUNK..((c + 1) * CHUNK).min(frames) {
                simulate_frame(cfg, f as u64, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![CellAcc::default(); n_cells];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }

    let mut cells = Vec::with_capacity(n_cells);
    for (ai, &alg) in cfg.algorithms.iter().enumerate() {
        let flops = flops_algorithm(alg, &cfg.dims)?;
        for (si, &snr_db) in cfg.snr_db_list.iter().enumerate() {
            let a = &total[ai * cfg.snr_db_list.len() + si];
            let n = a.frames as f64;
            let finite = cfg.noise_var(snr_db) > 0.0;
            cells.push(SimCell {
                algorithm: alg,
                snr_db,
                ber: a.frame.bit_errors as f64 / a.frame.bits as f64,
                secrecy_rate_bits: if finite { a.secrecy / n } else { f64::NAN },
                flops,
                frames: a.frames,
                bit_errors: a.frame.bit_errors,
                bits: a.frame.bits,
                eve_ber: a.frame.eve_bit_errors as f64 / a.frame.eve_bits as f64,
                eve_bit_errors: a.frame.eve_bit_errors,
                eve_bits: a.frame.eve_bits,
                uniform_rate_bits: if finite { a.uniform / n } else { f64::NAN },
                design_rate_bits: if finite { a.design / n } else { f64::NAN },
                tx_power: a.frame.tx_energy / a.frame.symbol_vectors as f64,
            });
        }
    }
    Ok(SimResult { cells })
}

/// Runs the grid on a dedicated pool of `threads` workers. The result is
/// identical for every thread count.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<SimResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

/// SNR at which a BER curve first drops to `target`, by log-linear
/// interpolation between grid points. `None` when it never does.
pub fn snr_at_ber(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    if let Some(&(s0, b0)) = curve.first() {
        if b0 <= target {
            return Some(s0);
        }
    }
    for w in curve.windows(2) {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b1 <= target && b0 > target {
            if b1 <= 0.0 {
                return Some(s1);
            }
            let (l0, l1, lt) = (b0.log10(), b1.log10(), target.log10());
            return Some(s0 + (s1 - s0) * (l0 - lt) / (l0 - l1));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algs: Vec<Algorithm>, snrs: Vec<f64>, frames: usize) -> ExperimentConfig {
        ExperimentConfig {
            algorithms: algs,
            snr_db_list: snrs,
            frames_per_point: frames,
            symbols_per_frame: 4,
            ..Default::default()
        }
    }

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_names_fields() {
        let field = |c: ExperimentConfig| match c.validate() {
            Err(Error::Validation { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        let d = ExperimentConfig::default;
        assert_eq!(field(ExperimentConfig { rho: 1.5, ..d() }), "rho");
        assert_eq!(field(ExperimentConfig { snr_db_list: vec![10.0, 5.0], ..d() }), "snr_db");
        assert_eq!(field(ExperimentConfig { frames_per_point: 0, ..d() }), "frames_per_point");
        assert_eq!(field(ExperimentConfig { an_enabled: true, rho: 0.6, ..d() }), "an_enabled");
    }

    #[test]
    fn single_cell_run() {
        let r = run_experiment(&small(vec![Algorithm::Bd], vec![10.0], 1)).unwrap();
        assert_eq!(r.cells.len(), 1);
        let c = &r.cells[0];
        assert_eq!(c.frames, 1);
        assert_eq!(c.bits, 4 * 4 * 2);
        assert_eq!(c.ber, c.bit_errors as f64 / c.bits as f64);
        assert!(c.secrecy_rate_bits >= 0.0);
    }

    #[test]
    fn grid_shape_and_order() {
        let cfg = small(vec![Algorithm::Sgmi, Algorithm::Zf], vec![0.0, 10.0, 20.0], 3);
        let r = run_experiment(&cfg).unwrap();
        let keys: Vec<(Algorithm, f64)> = r.cells.iter().map(|c| (c.algorithm, c.snr_db)).collect();
        assert_eq!(
            keys,
            vec![
                (Algorithm::Sgmi, 0.0),
                (Algorithm::Sgmi, 10.0),
                (Algorithm::Sgmi, 20.0),
                (Algorithm::Zf, 0.0),
                (Algorithm::Zf, 10.0),
                (Algorithm::Zf, 20.0),
            ]
        );
    }

    #[test]
    fn noiseless_every_algorithm() {
        let cfg = small(Algorithm::ALL.to_vec(), vec![f64::INFINITY], 50);
        let r = run_experiment(&cfg).unwrap();
        for c in &r.cells {
            assert_eq!(c.bit_errors, 0, "{}", c.algorithm);
            assert!(c.secrecy_rate_bits.is_nan());
        }
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = small(vec![Algorithm::SoThpSgmi, Algorithm::Mmse], vec![4.0, 8.0], 70);
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed = 2;
        assert_ne!(run_experiment(&cfg).unwrap(), run_experiment(&other).unwrap());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = small(vec![Algorithm::SoThp, Algorithm::Gmi], vec![6.0], 150);
        let a = run_experiment_with_threads(&cfg, 1).unwrap();
        let b = run_experiment_with_threads(&cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_transmit_power_matches_budget() {
        let mut cfg = small(vec![Algorithm::Zf, Algorithm::Bd, Algorithm::Sgmi], vec![10.0], 400);
        cfg.e_s = 2.0;
        for c in run_experiment(&cfg).unwrap().cells {
            assert!((c.tx_power - 2.0).abs() < 0.02 * 2.0, "{}: {}", c.algorithm, c.tx_power);
        }
    }

    #[test]
    fn artificial_noise_power_included() {
        let mut cfg = small(vec![Algorithm::Bd], vec![10.0], 400);
        cfg.dims = cfg.dims.with_streams(1).unwrap();
        cfg.an_enabled = true;
        cfg.rho = 0.6;
        let c = &run_experiment(&cfg).unwrap().cells[0];
        assert!((c.tx_power - 1.0).abs() < 0.02, "{}", c.tx_power);
    }

    #[test]
    fn interpolated_crossing() {
        let curve = [(0.0, 1e-1), (2.0, 1e-2), (4.0, 1e-3)];
        assert_eq!(snr_at_ber(&curve, 1e-2), Some(2.0));
        assert!((snr_at_ber(&curve, 10f64.powf(-1.5)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(snr_at_ber(&curve, 1e-4), None);
        assert_eq!(snr_at_ber(&curve, 0.5), Some(0.0));
    }
}
