//! Gray-mapped QPSK and a generic nearest-neighbour constellation.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::numerics::C64;

/// Gray mapping: 00 -> (+1+j)/√2, 01 -> (-1+j)/√2, 11 -> (-1-j)/√2, 10 -> (+1-j)/√2.
///
/// The first bit selects the sign of the imaginary part, the second the sign
/// of the real part.
pub fn qpsk_modulate(bits: [bool; 2]) -> C64 {
    let re = if bits[1] { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    let im = if bits[0] { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    C64::new(re, im)
}

/// Minimum-distance QPSK decision. Exactly zero decides toward bit 0.
pub fn qpsk_demodulate(y: C64) -> [bool; 2] {
    [y.im < 0.0, y.re < 0.0]
}

/// Symbol index used by [`Constellation::qpsk`]: `2*b0 + b1`.
pub fn qpsk_index(bits: [bool; 2]) -> usize {
    (bits[0] as usize) << 1 | bits[1] as usize
}

pub fn qpsk_bits(index: usize) -> [bool; 2] {
    [index & 2 != 0, index & 1 != 0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<C64>,
}

impl Constellation {
    pub fn qpsk() -> Self {
        Self {
            points: (0..4).map(|i| qpsk_modulate(qpsk_bits(i))).collect(),
        }
    }

    pub fn nearest(&self, y: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn min_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.min((a - b).norm());
            }
        }
        d
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Largest per-dimension amplitude.
    pub fn max_amplitude(&self) -> f64 {
        self.points.iter().map(|p| p.re.abs().max(p.im.abs())).fold(0.0, f64::max)
    }

    /// THP modulo base `2 (a_max + d_min / 2)` with `a_max` the largest
    /// per-dimension amplitude. Gives `2√2` for unit-energy QPSK.
    pub fn modulo_base(&self) -> f64 {
        2.0 * (self.max_amplitude() + self.min_distance() / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping() {
        let s = FRAC_1_SQRT_2;
        assert_eq!(qpsk_modulate([false, false]), C64::new(s, s));
        assert_eq!(qpsk_modulate([false, true]), C64::new(-s, s));
        assert_eq!(qpsk_modulate([true, true]), C64::new(-s, -s));
        assert_eq!(qpsk_modulate([true, false]), C64::new(s, -s));
    }

    #[test]
    fn unit_energy_and_roundtrip() {
        for i in 0..4 {
            let b = qpsk_bits(i);
            let c = qpsk_modulate(b);
            assert!((c.norm() - 1.0).abs() < 1e-15);
            assert_eq!(qpsk_demodulate(c), b);
            assert_eq!(qpsk_index(b), i);
            assert_eq!(Constellation::qpsk().nearest(c), i);
        }
    }

    #[test]
    fn quadrant_decisions() {
        assert_eq!(qpsk_demodulate(C64::new(0.9, 0.8)), [false, false]);
        assert_eq!(qpsk_demodulate(C64::new(0.0, 0.0)), [false, false]);
        assert_eq!(qpsk_demodulate(C64::new(-0.1, -3.0)), [true, true]);
    }

    #[test]
    fn qpsk_modulo_base() {
        let q = Constellation::qpsk();
        assert!((q.modulo_base() - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((q.average_energy() - 1.0).abs() < 1e-15);
    }
}
