//! Sampled dual-polarization signals and the spectral primitives shared by
//! the transmitter, the channel and the equalizers.
//!
//! All whole-sequence operations are circular: signals are built from
//! periodic symbol sequences, so FFT processing has no edge effects.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

/// Two complex sample sequences (x and y polarizations) on a common grid.
///
/// `center_offset` is the frequency of the signal's baseband origin relative
/// to the simulation reference frequency (the center of the superchannel of
/// interest). A sample at baseband frequency `f` sits at absolute frequency
/// `f + center_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolSignal {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    sample_rate: f64,
    center_offset: f64,
}

impl DualPolSignal {
    pub fn new(
        x: Vec<Complex64>,
        y: Vec<Complex64>,
        sample_rate: f64,
        center_offset: f64,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::config(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self {
            x,
            y,
            sample_rate,
            center_offset,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64, center_offset: f64) -> Result<Self> {
        Self::new(
            vec![Complex64::new(0.0, 0.0); len],
            vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
            center_offset,
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[Complex64] {
        &self.x
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut [Complex64] {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut [Complex64] {
        &mut self.y
    }

    /// Both polarizations, mutably.
    pub fn pols_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        (&mut self.x, &mut self.y)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn center_offset(&self) -> f64 {
        self.center_offset
    }

    pub fn set_center_offset(&mut self, offset: f64) {
        self.center_offset = offset;
    }

    pub fn into_parts(self) -> (Vec<Complex64>, Vec<Complex64>) {
        (self.x, self.y)
    }

    /// Total energy `sum |x|^2 + |y|^2`.
    pub fn energy(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|v| v.norm_sqr()).sum()
    }

    /// Mean total power per sample, `mean(|x|^2 + |y|^2)`.
    pub fn power(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.energy() / self.len() as f64
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.x.iter_mut().chain(self.y.iter_mut()) {
            *v *= factor;
        }
    }

    /// Adds `other` sample-wise. Grids must agree.
    pub fn accumulate(&mut self, other: &DualPolSignal) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        if other.sample_rate != self.sample_rate || other.center_offset != self.center_offset {
            return Err(Error::config("cannot add signals on different grids"));
        }
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += b;
        }
        Ok(())
    }

    /// Relative L2 distance `||self - other|| / ||other||` over both polarizations.
    pub fn relative_error(&self, other: &DualPolSignal) -> f64 {
        let num: f64 = self
            .x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den = other.energy();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    pub(crate) fn map_pols(&mut self, mut f: impl FnMut(&mut Vec<Complex64>)) {
        f(&mut self.x);
        f(&mut self.y);
    }
}

/// Multiplier `exp(j 2 pi df k / fs)` for sample `k`, with the phase reduced
/// modulo one cycle before scaling so long sequences keep full precision.
fn shift_phasor(df: f64, fs: f64, k: usize) -> Complex64 {
    let cycles = (df / fs) * k as f64;
    let frac = cycles - cycles.floor();
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

/// Moves the signal content up by `df` Hz. The baseband origin moves down
/// accordingly, so absolute frequencies of the content are unchanged.
pub fn frequency_shift(sig: &DualPolSignal, df: f64) -> DualPolSignal {
    let mut out = sig.clone();
    if df != 0.0 {
        let fs = sig.sample_rate;
        out.map_pols(|pol| {
            for (k, v) in pol.iter_mut().enumerate() {
                *v *= shift_phasor(df, fs, k);
            }
        });
    }
    out.center_offset = sig.center_offset - df;
    out
}

/// Frequency-domain filters.
///
/// Parametric responses are evaluated on the signal's FFT grid. Baseband
/// filters (brick-wall, RRC, delay) use the signal's own baseband frequency;
/// [`SpectralFilter::Dispersion`] is a property of the fiber and is evaluated
/// at the absolute frequency `f + center_offset`, which yields the
/// inter-channel walk-off automatically.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralFilter {
    /// Complex gains in FFT bin order.
    Response(Vec<Complex64>),
    /// Unit gain for `|f| < bandwidth / 2`, zero elsewhere.
    BrickWall { bandwidth: f64 },
    /// Root-raised-cosine with unit passband gain.
    RootRaisedCosine { symbol_rate: f64, rolloff: f64 },
    /// `exp(j beta2 / 2 * w^2 * length)`, `beta2` in s^2/m and `length` in m.
    /// A negative length undoes the dispersion of a positive one.
    Dispersion { beta2: f64, length: f64 },
    /// `exp(-j w tau)`: a circular delay by `seconds`.
    Delay { seconds: f64 },
}

/// Root-raised-cosine amplitude response with unit passband gain.
pub fn rrc_response(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let f1 = (1.0 - rolloff) * symbol_rate / 2.0;
    let f2 = (1.0 + rolloff) * symbol_rate / 2.0;
    if af <= f1 {
        1.0
    } else if af > f2 {
        0.0
    } else {
        let arg = PI / (rolloff * symbol_rate) * (af - f1);
        (0.5 * (1.0 + arg.cos())).sqrt()
    }
}

impl SpectralFilter {
    /// Gains on an `n`-point grid for a signal at `fs` with `center_offset`.
    pub fn response(&self, n: usize, fs: f64, center_offset: f64) -> Result<Vec<Complex64>> {
        let freqs = (0..n).map(|k| fft::bin_frequency(k, n, fs));
        let gains = match self {
            SpectralFilter::Response(r) => {
                if r.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        actual: r.len(),
                    });
                }
                r.clone()
            }
            SpectralFilter::BrickWall { bandwidth } => freqs
                .map(|f| {
                    if f.abs() < bandwidth / 2.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect(),
            SpectralFilter::RootRaisedCosine {
                symbol_rate,
                rolloff,
            } => freqs
                .map(|f| Complex64::new(rrc_response(f, *symbol_rate, *rolloff), 0.0))
                .collect(),
            SpectralFilter::Dispersion { beta2, length } => freqs
                .map(|f| {
                    let w = 2.0 * PI * (f + center_offset);
                    Complex64::from_polar(1.0, 0.5 * beta2 * w * w * length)
                })
                .collect(),
            SpectralFilter::Delay { seconds } => freqs
                .map(|f| Complex64::from_polar(1.0, -2.0 * PI * f * seconds))
                .collect(),
        };
        Ok(gains)
    }

    pub fn is_all_pass(&self) -> bool {
        matches!(
            self,
            SpectralFilter::Dispersion { .. } | SpectralFilter::Delay { .. }
        )
    }
}

/// Multiplies one polarization's spectrum by `gains` in place.
pub(crate) fn filter_in_place(pol: &mut [Complex64], gains: &[Complex64]) {
    fft::forward(pol);
    for (v, g) in pol.iter_mut().zip(gains) {
        *v *= g;
    }
    fft::inverse(pol);
}

/// Circular frequency-domain filtering of both polarizations.
pub fn apply_spectral_filter(sig: &DualPolSignal, filter: &SpectralFilter) -> Result<DualPolSignal> {
    let gains = filter.response(sig.len(), sig.sample_rate, sig.center_offset)?;
    let mut out = sig.clone();
    out.map_pols(|pol| filter_in_place(pol, &gains));
    Ok(out)
}

/// Band-limited rate change by zero-padding or truncating the spectrum.
///
/// The new length is `len * new_rate / sample_rate` and must be an integer.
/// Spectrum outside `[-new_rate/2, new_rate/2)` is discarded, so downsampling
/// acts as an ideal low-pass filter. `occupied_bandwidth` is the two-sided
/// width of the wanted content; it must fit in the new band.
pub fn resample(sig: &DualPolSignal, new_rate: f64, occupied_bandwidth: f64) -> Result<DualPolSignal> {
    if !(new_rate > 0.0) {
        return Err(Error::config("target rate must be positive"));
    }
    if new_rate < occupied_bandwidth * (1.0 - 1e-12) {
        return Err(Error::Aliasing(format!(
            "target rate {new_rate:.6e} Hz below occupied bandwidth {occupied_bandwidth:.6e} Hz"
        )));
    }
    let n_old = sig.len();
    if new_rate == sig.sample_rate {
        return Ok(sig.clone());
    }
    let exact = n_old as f64 * new_rate / sig.sample_rate;
    let n_new = exact.round() as usize;
    if (exact - n_new as f64).abs() > 1e-6 || n_new == 0 {
        return Err(Error::config(format!(
            "rate change {} -> {} does not give an integer length for {} samples",
            sig.sample_rate, new_rate, n_old
        )));
    }
    let x = resample_pol(&sig.x, n_new);
    let y = resample_pol(&sig.y, n_new);
    DualPolSignal::new(x, y, new_rate, sig.center_offset)
}

/// Copies the bins of `spec` (length `n_old`) whose signed index lies in
/// `[-n_new/2, n_new/2)` onto an `n_new`-point grid.
pub(crate) fn respectrum(spec: &[Complex64], n_new: usize) -> Vec<Complex64> {
    let n_old = spec.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n_new];
    let lo = -((n_new / 2) as i64);
    let hi = n_new.div_ceil(2) as i64;
    for (k, v) in spec.iter().enumerate() {
        let s = fft::signed_bin(k, n_old);
        if s >= lo && s < hi {
            out[s.rem_euclid(n_new as i64) as usize] = *v;
        }
    }
    out
}

fn resample_pol(pol: &[Complex64], n_new: usize) -> Vec<Complex64> {
    let mut spec = pol.to_vec();
    fft::forward(&mut spec);
    let mut out = respectrum(&spec, n_new);
    fft::inverse(&mut out);
    let scale = n_new as f64 / pol.len() as f64;
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// A set of channels on a common WDM grid.
#[derive(Debug, Clone)]
pub struct WdmSignal {
    pub channels: Vec<DualPolSignal>,
    pub grid_spacing: f64,
    pub symbol_rate: f64,
}

impl WdmSignal {
    /// Nominal offset of channel `i` of `n` from the superchannel center.
    pub fn nominal_offset(i: usize, n: usize, grid_spacing: f64) -> f64 {
        (i as f64 - (n as f64 - 1.0) / 2.0) * grid_spacing
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }
}
