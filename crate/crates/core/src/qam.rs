//! Square QAM constellations with per-rail reflected Gray labeling.
//!
//! A label of `2 * k` bits is split into the in-phase rail (high `k` bits)
//! and the quadrature rail (low `k` bits). Each rail maps its Gray code to
//! the amplitude levels `-(L-1), ..., -1, 1, ..., L-1` in increasing order,
//! and the constellation is scaled to unit average energy.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    bits_per_symbol: usize,
    points: Vec<Complex64>,
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    /// Square QAM with `bits_per_symbol` (even, >= 2) bits per point.
    pub fn square_qam(bits_per_symbol: usize) -> Result<Self> {
        if bits_per_symbol < 2 || bits_per_symbol % 2 != 0 || bits_per_symbol > 16 {
            return Err(Error::config(format!(
                "square QAM needs an even number of bits, got {bits_per_symbol}"
            )));
        }
        let rail_bits = bits_per_symbol / 2;
        let levels = 1usize << rail_bits;
        let amp = |gray: usize| 2.0 * gray_to_binary(gray) as f64 - (levels as f64 - 1.0);
        // Mean of a^2 over one rail is (L^2 - 1) / 3; two rails double it.
        let mean_energy = 2.0 * ((levels * levels) as f64 - 1.0) / 3.0;
        let scale = 1.0 / mean_energy.sqrt();
        let points = (0..1usize << bits_per_symbol)
            .map(|label| {
                let i = label >> rail_bits;
                let q = label & (levels - 1);
                Complex64::new(amp(i) * scale, amp(q) * scale)
            })
            .collect();
        Ok(Self {
            bits_per_symbol,
            points,
        })
    }

    pub fn qam64() -> Self {
        Self::square_qam(6).expect("64-QAM parameters are valid")
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: u8) -> Complex64 {
        self.points[label as usize]
    }

    /// Bit `i` (0 = most significant) of `label`.
    pub fn bit(&self, label: u8, i: usize) -> u8 {
        (label >> (self.bits_per_symbol - 1 - i)) & 1
    }

    pub fn map(&self, labels: &[u8]) -> Vec<Complex64> {
        labels.iter().map(|&l| self.point(l)).collect()
    }

    /// Minimum-distance hard decision.
    pub fn decide(&self, y: Complex64) -> u8 {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (l, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = l;
            }
        }
        best as u8
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}
