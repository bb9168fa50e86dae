//! Kerr phase of the backward steps: instantaneous (SSFM), filtered
//! single-channel (ESSFM) and the coupled-channel MIMO intensity filter.
//!
//! Intensities are normalized by each channel's mean power `P_l`, and every
//! source channel contributes with its average phase `phi_l = w * P_l`,
//! `w` being the step's weighted effective length. For target channel `i`:
//!
//! ```text
//! theta_i^x[k] = -xi * ( phi_i * sum_m C_0[m] (Ix_i + Iy_i)[k+m]
//!                      + sum_{l != i} phi_l * sum_m C_{l-i}[m] (2 Ix_l + Iy_l)[k+m] )
//! ```
//!
//! and symmetrically for `y`. Indices are circular.

use num_complex::Complex64;

use super::coeffs::CoefficientSet;
use crate::fft;
use crate::signal::DualPolSignal;

/// Phase sequences for one channel.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Phases {
    /// Same rotation on both polarizations.
    Common(Vec<f64>),
    Split(Vec<f64>, Vec<f64>),
}

impl Phases {
    pub(crate) fn x(&self) -> &[f64] {
        match self {
            Phases::Common(t) | Phases::Split(t, _) => t,
        }
    }

    pub(crate) fn y(&self) -> &[f64] {
        match self {
            Phases::Common(t) | Phases::Split(_, t) => t,
        }
    }
}

/// Materialized taps and their correlation spectra for a fixed length.
pub(crate) struct FilterBank {
    n_ch: usize,
    /// `(half, taps)` for `h = -(n_ch-1)..n_ch`, taps indexed `m + half`.
    taps: Vec<(i64, Vec<f64>)>,
    /// `conj(DFT(c_h))` with `c_h[m mod n] = C_h[m]`.
    spectra: Vec<Vec<Complex64>>,
}

impl FilterBank {
    pub(crate) fn new(coeffs: &CoefficientSet, n: usize) -> Self {
        let n_ch = coeffs.n_ch();
        let hs = -(n_ch as i64 - 1)..n_ch as i64;
        let taps: Vec<(i64, Vec<f64>)> = hs
            .clone()
            .map(|h| (coeffs.half_length(h) as i64, coeffs.taps(h)))
            .collect();
        let spectra = taps
            .iter()
            .map(|(half, t)| {
                let mut c = vec![Complex64::new(0.0, 0.0); n];
                for (j, v) in t.iter().enumerate() {
                    c[(j as i64 - half).rem_euclid(n as i64) as usize] += v;
                }
                fft::forward(&mut c);
                c.iter().map(|v| v.conj()).collect()
            })
            .collect();
        Self { n_ch, taps, spectra }
    }

    pub(crate) fn n_ch(&self) -> usize {
        self.n_ch
    }

    pub(crate) fn taps(&self, h: i64) -> (i64, &[f64]) {
        let (half, t) = &self.taps[(h + self.n_ch as i64 - 1) as usize];
        (*half, t)
    }

    pub(crate) fn spectrum(&self, h: i64) -> &[Complex64] {
        &self.spectra[(h + self.n_ch as i64 - 1) as usize]
    }
}

/// Normalized total intensity `(|x|^2 + |y|^2) / P`.
pub(crate) fn total_intensity(sig: &DualPolSignal, inv_p: f64) -> Vec<f64> {
    sig.x()
        .iter()
        .zip(sig.y())
        .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()) * inv_p)
        .collect()
}

/// Spectra of the normalized per-polarization intensities of one channel,
/// from a single FFT of `Ix + j Iy`.
pub(crate) fn intensity_spectra(sig: &DualPolSignal, inv_p: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut packed: Vec<Complex64> = sig
        .x()
        .iter()
        .zip(sig.y())
        .map(|(a, b)| Complex64::new(a.norm_sqr() * inv_p, b.norm_sqr() * inv_p))
        .collect();
    fft::forward(&mut packed);
    fft::split_real_pair(&packed)
}

/// Instantaneous phase `-xi * phi * (|x|^2 + |y|^2) / P`.
pub(crate) fn ssfm_phase(sig: &DualPolSignal, inv_p: f64, phi: f64, neg_xi: f64) -> Phases {
    Phases::Common(
        total_intensity(sig, inv_p)
            .into_iter()
            .map(|s| neg_xi * (phi * s))
            .collect(),
    )
}

/// `sum_m taps[m + half] * v[(k + m) mod n]`, summed in ascending `m`.
fn correlate(v: &[f64], half: i64, taps: &[f64]) -> Vec<f64> {
    let n = v.len() as i64;
    (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for (j, c) in taps.iter().enumerate() {
                acc += c * v[(k + j as i64 - half).rem_euclid(n) as usize];
            }
            acc
        })
        .collect()
}

/// Direct time-domain evaluation of the filtered phases.
pub(crate) fn filtered_phases_time(
    chans: &[&DualPolSignal],
    inv_p: &[f64],
    phis: &[f64],
    neg_xi: f64,
    bank: &FilterBank,
) -> Vec<Phases> {
    let n_ch = chans.len();
    let (half0, taps0) = bank.taps(0);
    if n_ch == 1 {
        let v = correlate(&total_intensity(chans[0], inv_p[0]), half0, taps0);
        return vec![Phases::Common(
            v.into_iter().map(|s| neg_xi * (phis[0] * s)).collect(),
        )];
    }
    let pol_int = |c: &DualPolSignal, ip: f64| -> (Vec<f64>, Vec<f64>) {
        (
            c.x().iter().map(|v| v.norm_sqr() * ip).collect(),
            c.y().iter().map(|v| v.norm_sqr() * ip).collect(),
        )
    };
    let ints: Vec<_> = chans.iter().zip(inv_p).map(|(c, &ip)| pol_int(c, ip)).collect();
    (0..n_ch)
        .map(|i| {
            let s: Vec<f64> = ints[i].0.iter().zip(&ints[i].1).map(|(a, b)| a + b).collect();
            let spm = correlate(&s, half0, taps0);
            let mut tx: Vec<f64> = spm.iter().map(|v| phis[i] * v).collect();
            let mut ty = tx.clone();
            for l in (0..n_ch).filter(|&l| l != i) {
                let (half, taps) = bank.taps(l as i64 - i as i64);
                let (ix, iy) = &ints[l];
                let co: Vec<f64> = ix.iter().zip(iy).map(|(a, b)| 2.0 * a + b).collect();
                let cr: Vec<f64> = ix.iter().zip(iy).map(|(a, b)| a + 2.0 * b).collect();
                for (t, v) in tx.iter_mut().zip(correlate(&co, half, taps)) {
                    *t += phis[l] * v;
                }
                for (t, v) in ty.iter_mut().zip(correlate(&cr, half, taps)) {
                    *t += phis[l] * v;
                }
            }
            tx.iter_mut().for_each(|t| *t *= neg_xi);
            ty.iter_mut().for_each(|t| *t *= neg_xi);
            Phases::Split(tx, ty)
        })
        .collect()
}

/// Frequency-domain evaluation: one packed FFT per source channel and one
/// packed inverse FFT per target channel.
pub(crate) fn filtered_phases_freq(
    chans: &[&DualPolSignal],
    inv_p: &[f64],
    phis: &[f64],
    neg_xi: f64,
    bank: &FilterBank,
) -> Vec<Phases> {
    let n_ch = chans.len();
    let spectra: Vec<_> = chans
        .iter()
        .zip(inv_p)
        .map(|(c, &ip)| intensity_spectra(c, ip))
        .collect();
    let one_j = Complex64::new(1.0, 1.0);
    let j = Complex64::new(0.0, 1.0);
    (0..n_ch)
        .map(|i| {
            let h0 = bank.spectrum(0);
            let (xi_s, yi_s) = &spectra[i];
            let mut acc: Vec<Complex64> = (0..h0.len())
                .map(|k| h0[k] * (xi_s[k] + yi_s[k]) * phis[i] * one_j)
                .collect();
            for l in (0..n_ch).filter(|&l| l != i) {
                let hh = bank.spectrum(l as i64 - i as i64);
                let (xs, ys) = &spectra[l];
                for k in 0..acc.len() {
                    let co = xs[k] * 2.0 + ys[k];
                    let cr = xs[k] + ys[k] * 2.0;
                    acc[k] += hh[k] * (co + j * cr) * phis[l];
                }
            }
            fft::inverse(&mut acc);
            let tx = acc.iter().map(|v| neg_xi * v.re).collect();
            let ty = acc.iter().map(|v| neg_xi * v.im).collect();
            if n_ch == 1 {
                Phases::Common(tx)
            } else {
                Phases::Split(tx, ty)
            }
        })
        .collect()
}

pub(crate) fn apply_phases(sig: &mut DualPolSignal, phases: &Phases) {
    let (x, y) = sig.pols_mut();
    match phases {
        Phases::Common(t) => {
            for ((a, b), th) in x.iter_mut().zip(y.iter_mut()).zip(t) {
                let r = Complex64::from_polar(1.0, *th);
                *a *= r;
                *b *= r;
            }
        }
        Phases::Split(tx, ty) => {
            for (a, th) in x.iter_mut().zip(tx) {
                *a *= Complex64::from_polar(1.0, *th);
            }
            for (b, th) in y.iter_mut().zip(ty) {
                *b *= Complex64::from_polar(1.0, *th);
            }
        }
    }
}
