//! Analytical floating-point operation counts.
//!
//! A complex `m x n` operand is costed as the `2m x 2n` real matrix that
//! represents it, except for products, where one complex multiply-add is
//! eight real operations. Each algorithm's total follows the sequence of
//! primitives its constructor in [`crate::precoding`] or [`crate::thp`]
//! actually performs. Regularised designs are costed for `alpha > 0`.

use crate::algorithm::Algorithm;
use crate::channel::SystemDims;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlopKind {
    /// `m x n` times `n x p`.
    Matmul { m: usize, n: usize, p: usize },
    /// Householder QR of a tall `m x n` matrix, triangular factor only.
    Qr { m: usize, n: usize },
    /// Householder QR with the full `m x m` orthogonal factor accumulated.
    QrFull { m: usize, n: usize },
    /// SVD with both singular-vector sets.
    Svd { m: usize, n: usize },
    /// Inversion (or one LU solve) of an `n x n` matrix.
    Inverse { n: usize },
    /// Entrywise complex scaling or division of an `m x n` matrix.
    Scale { m: usize, n: usize },
}

pub fn flops_primitive(kind: FlopKind) -> f64 {
    match kind {
        FlopKind::Matmul { m, n, p } => 8.0 * (m * n * p) as f64,
        FlopKind::Qr { m, n } => {
            let (m, n) = real_dims(m.max(n), m.min(n));
            2.0 * n * n * (m - n / 3.0)
        }
        FlopKind::QrFull { m, n } => {
            let (mr, nr) = real_dims(m.max(n), m.min(n));
            flops_primitive(FlopKind::Qr { m, n }) + 4.0 * (mr * mr * nr - mr * nr * nr + nr * nr * nr / 3.0)
        }
        FlopKind::Svd { m, n } => {
            let (m, n) = real_dims(m.max(n), m.min(n));
            4.0 * m * m * n + 8.0 * m * n * n + 9.0 * n * n * n
        }
        FlopKind::Inverse { n } => {
            let n = 2.0 * n as f64;
            2.0 * n * n * n
        }
        FlopKind::Scale { m, n } => 6.0 * (m * n) as f64,
    }
}

fn real_dims(m: usize, n: usize) -> (f64, f64) {
    (2.0 * m as f64, 2.0 * n as f64)
}

/// Running total.
#[derive(Debug, Default, Clone, Copy)]
struct Tally(f64);

impl Tally {
    fn add(&mut self, kind: FlopKind) {
        self.0 += flops_primitive(kind);
    }

    fn matmul(&mut self, m: usize, n: usize, p: usize) {
        self.add(FlopKind::Matmul { m, n, p });
    }
}

/// Receive-mode reduction applied when fewer streams than antennas are used.
fn reduction(t: &mut Tally, d: &SystemDims) {
    if d.streams < d.n_r {
        for _ in 0..d.t_users {
            t.add(FlopKind::Svd { m: d.n_r, n: d.n_t });
            t.matmul(d.streams, d.n_r, d.n_t);
        }
    }
}

/// `H^H (H H^H + alpha I)^{-1}` for the stacked reduced channel.
fn right_inverse(t: &mut Tally, d: &SystemDims) {
    let r = d.total_streams();
    t.matmul(r, d.n_t, r);
    t.add(FlopKind::Inverse { n: r });
    t.matmul(r, r, d.n_t);
}

/// Zero-forcing inverse; a square stacked channel is inverted directly.
fn zf_inverse(t: &mut Tally, d: &SystemDims) {
    if d.total_streams() == d.n_t {
        t.add(FlopKind::Inverse { n: d.n_t });
    } else {
        right_inverse(t, d);
    }
}

/// Receive filters folded with the combiners.
fn filters(t: &mut Tally, d: &SystemDims) {
    for _ in 0..d.t_users {
        t.matmul(d.streams, d.streams, d.n_r);
    }
}

/// Per-user QR of the inverse block, projected channel, its SVD and the
/// precoder block.
fn sgmi_users(t: &mut Tally, d: &SystemDims) {
    let s = d.streams;
    for _ in 0..d.t_users {
        t.add(FlopKind::Qr { m: d.n_t, n: s });
        t.matmul(s, d.n_t, s);
        t.add(FlopKind::Svd { m: s, n: s });
        t.matmul(d.n_t, s, s);
    }
}

/// `G = (D H) F`, then its diagonal normalisation.
fn feedback(t: &mut Tally, d: &SystemDims) {
    let r = d.total_streams();
    t.matmul(r, d.t_users * d.n_r, d.n_t);
    t.matmul(r, d.n_t, r);
    t.add(FlopKind::Scale { m: r, n: r });
}

pub fn flops_algorithm(algorithm: Algorithm, dims: &SystemDims) -> Result<f64> {
    dims.validate()?;
    let d = dims;
    let s = d.streams;
    let mut t = Tally::default();
    reduction(&mut t, d);
    match algorithm {
        Algorithm::Zf => zf_inverse(&mut t, d),
        Algorithm::Mmse => right_inverse(&mut t, d),
        Algorithm::Bd => {
            crate::precoding::bd_feasible(d)?;
            zf_inverse(&mut t, d);
            sgmi_users(&mut t, d);
            filters(&mut t, d);
        }
        Algorithm::Sgmi => {
            right_inverse(&mut t, d);
            sgmi_users(&mut t, d);
            filters(&mut t, d);
        }
        Algorithm::Gmi => {
            right_inverse(&mut t, d);
            t.matmul(d.n_t, d.total_streams(), d.n_t);
            for _ in 0..d.t_users {
                t.add(FlopKind::Qr { m: d.n_t, n: s });
                t.matmul(s, d.n_t, s);
                t.matmul(d.n_t, d.n_t, s);
                t.matmul(s, d.n_t, s);
                t.matmul(s, s, s);
                t.add(FlopKind::Inverse { n: s });
                t.matmul(s, s, s);
                t.matmul(d.n_t, s, s);
                t.matmul(s, d.n_t, s);
                t.add(FlopKind::Svd { m: s, n: s });
                t.matmul(d.n_t, s, s);
            }
            filters(&mut t, d);
        }
        Algorithm::SoThpSgmi => {
            right_inverse(&mut t, d);
            sgmi_users(&mut t, d);
            filters(&mut t, d);
            feedback(&mut t, d);
        }
        Algorithm::SoThp => {
            crate::precoding::bd_feasible(d)?;
            for pos in 0..d.t_users {
                let placed = pos * s;
                let n0 = d.n_t - placed;
                if placed > 0 {
                    t.add(FlopKind::QrFull { m: d.n_t, n: placed });
                }
                for _ in pos..d.t_users {
                    t.matmul(s, d.n_t, n0);
                    t.add(FlopKind::Svd { m: s, n: n0 });
                }
                t.matmul(d.n_t, n0, s);
            }
            filters(&mut t, d);
            feedback(&mut t, d);
        }
    }
    Ok(t.0)
}

/// Dimensions used for the complexity sweep: two-antenna users and as many
/// users as the array can serve with two streams each.
pub fn sweep_dims(n_t: usize) -> Result<SystemDims> {
    SystemDims::new(n_t, (n_t / 2).max(1), 2, 2, 2)
}
