//! Transmitter (bits, 64-QAM mapping, RRC shaping, WDM multiplexing) and
//! receiver front-end (demultiplexing, matched filter, symbol sampling and
//! mean phase rotation removal).
//!
//! Frames are periodic: a frame of `n_symbols` symbols at `symbol_rate` has
//! period `T = n_symbols / symbol_rate`, so every representation of it uses
//! an FFT grid with bin spacing `1 / T`. Channel center frequencies are
//! snapped to that grid so that frequency shifts stay periodic.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::qam::Constellation;
use crate::rng;
use crate::signal::{rrc_response, DualPolSignal, WdmSignal};

pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxConfig {
    /// Baud rate (Hz).
    pub symbol_rate: f64,
    /// WDM grid spacing (Hz).
    pub grid_spacing: f64,
    /// Root-raised-cosine roll-off.
    pub rolloff: f64,
    /// Bits per QAM symbol (6 for 64-QAM).
    pub bits_per_symbol: usize,
    /// Channels in the superchannel of interest.
    pub n_channels: usize,
    /// Number of side superchannels when enabled.
    pub n_side_superchannels: usize,
    /// Whether the side superchannels are transmitted at all.
    pub side_superchannels: bool,
    pub launch_power_dbm: f64,
    pub n_symbols: usize,
    /// Simulation oversampling (samples per symbol of the full field).
    pub samples_per_symbol: usize,
    pub rng_seed: u64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 41.67e9,
            grid_spacing: 75e9,
            rolloff: 0.1,
            bits_per_symbol: 6,
            n_channels: 4,
            n_side_superchannels: 2,
            side_superchannels: false,
            launch_power_dbm: 0.0,
            n_symbols: 65536,
            samples_per_symbol: 16,
            rng_seed: 1,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_rate > 0.0) {
            return Err(Error::config("symbol_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::config("rolloff must be in [0, 1]"));
        }
        if self.grid_spacing < (1.0 + self.rolloff) * self.symbol_rate * (1.0 - 1e-12) {
            return Err(Error::config("grid_spacing must be at least (1 + rolloff) * symbol_rate"));
        }
        if self.n_channels == 0 {
            return Err(Error::config("n_channels must be at least 1"));
        }
        if self.n_symbols == 0 {
            return Err(Error::config("n_symbols must be positive"));
        }
        if self.samples_per_symbol == 0 {
            return Err(Error::config("samples_per_symbol must be positive"));
        }
        Constellation::square_qam(self.bits_per_symbol)?;
        Ok(())
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::square_qam(self.bits_per_symbol).expect("validated constellation")
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.samples_per_symbol as f64
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_watt(self.launch_power_dbm)
    }

    /// FFT bin spacing shared by every representation of a frame.
    pub fn frame_bin(&self) -> f64 {
        self.symbol_rate / self.n_symbols as f64
    }

    fn snap(&self, f: f64) -> f64 {
        (f / self.frame_bin()).round() * self.frame_bin()
    }

    /// Grid-snapped offsets of the channels of interest.
    pub fn scoi_offsets(&self) -> Vec<f64> {
        (0..self.n_channels)
            .map(|i| self.snap(WdmSignal::nominal_offset(i, self.n_channels, self.grid_spacing)))
            .collect()
    }

    /// Grid-snapped offsets of every transmitted channel: the channels of
    /// interest first, then the side superchannels (alternating above and
    /// below the superchannel of interest).
    pub fn all_offsets(&self) -> Vec<f64> {
        let mut offsets = self.scoi_offsets();
        if self.side_superchannels {
            let width = self.n_channels as f64 * self.grid_spacing;
            for s in 0..self.n_side_superchannels {
                let k = (s / 2 + 1) as f64;
                let center = if s % 2 == 0 { k * width } else { -k * width };
                for i in 0..self.n_channels {
                    let off = center + WdmSignal::nominal_offset(i, self.n_channels, self.grid_spacing);
                    offsets.push(self.snap(off));
                }
            }
        }
        offsets
    }
}

/// Per-polarization symbol sequences of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PolSymbols {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl PolSymbols {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.x.iter().chain(&self.y)
    }

    pub fn mean_power(&self) -> f64 {
        let n = self.x.len() + self.y.len();
        if n == 0 {
            return 0.0;
        }
        self.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64
    }

    /// Copy scaled to unit mean power (zero stays zero).
    pub fn normalized(&self) -> PolSymbols {
        let p = self.mean_power();
        let s = if p > 0.0 { 1.0 / p.sqrt() } else { 1.0 };
        PolSymbols {
            x: self.x.iter().map(|v| v * s).collect(),
            y: self.y.iter().map(|v| v * s).collect(),
        }
    }

    pub fn rotated(&self, phase: f64) -> PolSymbols {
        let r = Complex64::from_polar(1.0, phase);
        PolSymbols {
            x: self.x.iter().map(|v| v * r).collect(),
            y: self.y.iter().map(|v| v * r).collect(),
        }
    }
}

/// Bit labels of one channel's two polarizations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelLabels {
    pub x: Vec<u8>,
    pub y: Vec<u8>,
}

/// Transmitted labels for every channel (channels of interest first).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub constellation: Constellation,
    pub channels: Vec<ChannelLabels>,
}

impl SymbolFrame {
    pub fn n_symbols(&self) -> usize {
        self.channels.first().map_or(0, |c| c.x.len())
    }

    pub fn symbols(&self, channel: usize) -> PolSymbols {
        let c = &self.channels[channel];
        PolSymbols {
            x: self.constellation.map(&c.x),
            y: self.constellation.map(&c.y),
        }
    }
}

fn draw_labels(rng: &mut rng::SimRng, n: usize, bits: usize) -> Vec<u8> {
    // Bits are drawn i.i.d. uniform from a 64-bit word stream.
    let mut out = Vec::with_capacity(n);
    let mut word: u64 = 0;
    let mut left = 0usize;
    let mask = (1u64 << bits) - 1;
    for _ in 0..n {
        if left < bits {
            word = rng.random();
            left = 64;
        }
        out.push((word & mask) as u8);
        word >>= bits;
        left -= bits;
    }
    out
}

/// Draws i.i.d. uniform labels for every channel and polarization.
pub fn generate_frame(cfg: &TxConfig) -> Result<SymbolFrame> {
    cfg.validate()?;
    let n_total = cfg.all_offsets().len();
    let bits = cfg.bits_per_symbol;
    let channels = (0..n_total)
        .map(|i| {
            let mut r = if i < cfg.n_channels {
                rng::stream(cfg.rng_seed, "tx-scoi", i as u64)
            } else {
                rng::stream(cfg.rng_seed, "tx-side", (i - cfg.n_channels) as u64)
            };
            let x = draw_labels(&mut r, cfg.n_symbols, bits);
            let y = draw_labels(&mut r, cfg.n_symbols, bits);
            ChannelLabels { x, y }
        })
        .collect();
    Ok(SymbolFrame {
        constellation: cfg.constellation(),
        channels,
    })
}

/// Spectrum (length `n_symbols * sps`) of RRC-shaped symbols, unscaled.
///
/// With `A = FFT(a)` the shaped spectrum is `A[k mod n_symbols] * H(f_k) * sps`;
/// its power equals the mean symbol energy and the matched filter sampled at
/// the symbol instants returns `a` exactly.
fn shaped_spectrum(symbols: &[Complex64], sps: usize, symbol_rate: f64, rolloff: f64) -> Vec<Complex64> {
    let ns = symbols.len();
    let n = ns * sps;
    let fs = symbol_rate * sps as f64;
    let mut a = symbols.to_vec();
    fft::forward(&mut a);
    (0..n)
        .map(|k| {
            let h = rrc_response(fft::bin_frequency(k, n, fs), symbol_rate, rolloff);
            if h == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                a[k % ns] * (h * sps as f64)
            }
        })
        .collect()
}

fn check_multiplex_band(cfg: &TxConfig, offsets: &[f64]) -> Result<()> {
    let half = (1.0 + cfg.rolloff) * cfg.symbol_rate / 2.0;
    let edge = offsets.iter().map(|o| o.abs() + half).fold(0.0, f64::max);
    if edge > cfg.sample_rate() / 2.0 {
        return Err(Error::Aliasing(format!(
            "multiplex occupies +/-{:.1} GHz but the simulation band is +/-{:.1} GHz",
            edge / 1e9,
            cfg.sample_rate() / 2e9
        )));
    }
    Ok(())
}

/// Shapes every channel with the RRC response, scales it to the launch power
/// (split equally between polarizations), shifts it to its grid slot and sums
/// everything into one field at `cfg.sample_rate()`, centered on the
/// superchannel of interest.
///
/// The per-channel scaling uses the measured power of the shaped sequence,
/// so each channel carries exactly the configured power.
pub fn shape_and_mux(frame: &SymbolFrame, cfg: &TxConfig) -> Result<DualPolSignal> {
    mux_subset(frame, cfg, |_| true)
}

fn mux_subset(
    frame: &SymbolFrame,
    cfg: &TxConfig,
    include: impl Fn(usize) -> bool,
) -> Result<DualPolSignal> {
    cfg.validate()?;
    let offsets = cfg.all_offsets();
    if frame.channels.len() != offsets.len() {
        return Err(Error::LengthMismatch {
            expected: offsets.len(),
            actual: frame.channels.len(),
        });
    }
    if frame.n_symbols() != cfg.n_symbols {
        return Err(Error::LengthMismatch {
            expected: cfg.n_symbols,
            actual: frame.n_symbols(),
        });
    }
    check_multiplex_band(cfg, &offsets)?;
    let sps = cfg.samples_per_symbol;
    let n = cfg.n_symbols * sps;
    let bin = cfg.frame_bin();
    let power = cfg.launch_power_w();
    let mut spec_x = vec![Complex64::new(0.0, 0.0); n];
    let mut spec_y = vec![Complex64::new(0.0, 0.0); n];
    for (ch, &offset) in offsets.iter().enumerate().filter(|(ch, _)| include(*ch)) {
        let sym = frame.symbols(ch);
        let sx = shaped_spectrum(&sym.x, sps, cfg.symbol_rate, cfg.rolloff);
        let sy = shaped_spectrum(&sym.y, sps, cfg.symbol_rate, cfg.rolloff);
        // Parseval: mean |s|^2 = sum |S|^2 / n^2, per polarization.
        let measured: f64 =
            sx.iter().chain(&sy).map(|v| v.norm_sqr()).sum::<f64>() / (n as f64 * n as f64);
        let scale = if measured > 0.0 {
            (power / measured).sqrt()
        } else {
            0.0
        };
        let shift = (offset / bin).round() as i64;
        for k in 0..n {
            let dst = (k as i64 + shift).rem_euclid(n as i64) as usize;
            spec_x[dst] += sx[k] * scale;
            spec_y[dst] += sy[k] * scale;
        }
    }
    fft::inverse(&mut spec_x);
    fft::inverse(&mut spec_y);
    DualPolSignal::new(spec_x, spec_y, cfg.sample_rate(), 0.0)
}

/// Extracts the band centered at `offset` (relative to the field's baseband
/// origin): shifts it to baseband, applies a brick-wall filter of width
/// `bandwidth` and resamples to `target_rate`. All three steps are carried
/// out on the FFT grid, which is exact for on-grid offsets.
pub fn extract_band(
    field: &DualPolSignal,
    offset: f64,
    bandwidth: f64,
    target_rate: f64,
) -> Result<DualPolSignal> {
    let n = field.len();
    let fs = field.sample_rate();
    let bin = fs / n as f64;
    let exact = n as f64 * target_rate / fs;
    let n_new = exact.round() as usize;
    if (exact - n_new as f64).abs() > 1e-6 || n_new == 0 {
        return Err(Error::config(format!(
            "target rate {target_rate} Hz gives a non-integer length from {n} samples at {fs} Hz"
        )));
    }
    let shift = (offset / bin).round() as i64;
    if ((offset / bin) - shift as f64).abs() > 1e-6 {
        return Err(Error::config("band offset is not on the frame's frequency grid"));
    }
    let half_bw = bandwidth.min(target_rate) / 2.0;
    let scale = n_new as f64 / n as f64;
    let mut pols = [field.x().to_vec(), field.y().to_vec()];
    for pol in pols.iter_mut() {
        fft::forward(pol);
        let mut out = vec![Complex64::new(0.0, 0.0); n_new];
        for (k, v) in out.iter_mut().enumerate() {
            let s = fft::signed_bin(k, n_new);
            if (s as f64 * bin).abs() < half_bw {
                let src = (s + shift).rem_euclid(n as i64) as usize;
                *v = pol[src] * scale;
            }
        }
        fft::inverse(&mut out);
        *pol = out;
    }
    let [x, y] = pols;
    DualPolSignal::new(x, y, target_rate, field.center_offset() + offset)
}

/// Demultiplexes channel `channel_index` of the superchannel of interest to
/// baseband at `target_rate`.
pub fn demux_channel(
    field: &DualPolSignal,
    channel_index: usize,
    cfg: &TxConfig,
    target_rate: f64,
) -> Result<DualPolSignal> {
    if channel_index >= cfg.n_channels {
        return Err(Error::OutOfRange {
            index: channel_index,
            len: cfg.n_channels,
        });
    }
    if target_rate < (1.0 + cfg.rolloff) * cfg.symbol_rate * (1.0 - 1e-12) {
        return Err(Error::Aliasing(format!(
            "target rate {target_rate} Hz is below (1 + rolloff) * symbol rate"
        )));
    }
    let offset = cfg.scoi_offsets()[channel_index] - field.center_offset();
    extract_band(field, offset, cfg.grid_spacing, target_rate)
}

/// Matched RRC filter plus symbol-time sampling of one polarization, without
/// normalization. `pol` holds one frame period; the output has
/// `n_symbols` samples. Sampling is done by folding the filtered spectrum
/// onto the symbol-rate grid, which is exact for periodic frames at any
/// (possibly fractional) oversampling.
pub(crate) fn matched_filter_pol(pol: &[Complex64], gains: &[f64], n_symbols: usize) -> Vec<Complex64> {
    let n = pol.len();
    let mut spec = pol.to_vec();
    fft::forward(&mut spec);
    let mut folded = vec![Complex64::new(0.0, 0.0); n_symbols];
    for (k, (v, g)) in spec.iter().zip(gains).enumerate() {
        if *g != 0.0 {
            folded[fft::signed_bin(k, n).rem_euclid(n_symbols as i64) as usize] += v * g;
        }
    }
    fft::inverse(&mut folded);
    let scale = n_symbols as f64 / n as f64;
    for v in folded.iter_mut() {
        *v *= scale;
    }
    folded
}

/// Matched filter and symbol sampling of one channel inside a
/// frame-periodic field, as an explicit sparse map between FFT bins so that
/// its adjoint is available. The channel sits at absolute frequency
/// `channel_offset`; the field's own origin is its `center_offset`.
#[derive(Debug, Clone)]
pub(crate) struct SymbolSampler {
    n: usize,
    n_symbols: usize,
    /// `(source bin, folded bin, gain)`.
    map: Vec<(usize, usize, f64)>,
}

impl SymbolSampler {
    pub(crate) fn new(field: &DualPolSignal, channel_offset: f64, cfg: &TxConfig) -> Result<Self> {
        let n = field.len();
        let fs = field.sample_rate();
        let ns = frame_symbols(field, cfg)?;
        let bin = fs / n as f64;
        let rel = (channel_offset - field.center_offset()) / bin;
        let shift = rel.round() as i64;
        if (rel - shift as f64).abs() > 1e-6 {
            return Err(Error::config("channel offset is not on the frame's frequency grid"));
        }
        let half = (1.0 + cfg.rolloff) * cfg.symbol_rate / 2.0;
        if shift.unsigned_abs() as f64 * bin + half > fs / 2.0 * (1.0 + 1e-12) {
            return Err(Error::Aliasing("channel band exceeds the field's bandwidth".into()));
        }
        let kmax = (half / bin).ceil() as i64;
        let map = (-kmax..=kmax)
            .filter_map(|k| {
                let g = rrc_response(k as f64 * bin, cfg.symbol_rate, cfg.rolloff);
                (g != 0.0).then(|| {
                    (
                        (k + shift).rem_euclid(n as i64) as usize,
                        k.rem_euclid(ns as i64) as usize,
                        g,
                    )
                })
            })
            .collect();
        Ok(Self {
            n,
            n_symbols: ns,
            map,
        })
    }

    pub(crate) fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    /// Raw (unnormalized) symbols of one polarization.
    pub(crate) fn apply(&self, pol: &[Complex64]) -> Vec<Complex64> {
        let mut spec = pol.to_vec();
        fft::forward(&mut spec);
        let mut folded = vec![Complex64::new(0.0, 0.0); self.n_symbols];
        for &(src, dst, g) in &self.map {
            folded[dst] += spec[src] * g;
        }
        fft::inverse(&mut folded);
        let scale = self.n_symbols as f64 / self.n as f64;
        folded.iter_mut().for_each(|v| *v *= scale);
        folded
    }

    /// Adjoint of [`SymbolSampler::apply`].
    pub(crate) fn adjoint(&self, sym: &[Complex64]) -> Vec<Complex64> {
        let mut s = sym.to_vec();
        fft::forward(&mut s);
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for &(src, dst, g) in &self.map {
            out[src] += s[dst] * g;
        }
        fft::inverse(&mut out);
        out
    }
}

/// RRC gains on the grid of a frame-periodic signal of `n` samples at `fs`.
pub(crate) fn rrc_gains(n: usize, fs: f64, cfg: &TxConfig) -> Vec<f64> {
    (0..n)
        .map(|k| rrc_response(fft::bin_frequency(k, n, fs), cfg.symbol_rate, cfg.rolloff))
        .collect()
}

/// Number of symbols in one period of `sig`, checking the frame geometry.
pub(crate) fn frame_symbols(sig: &DualPolSignal, cfg: &TxConfig) -> Result<usize> {
    let exact = sig.len() as f64 * cfg.symbol_rate / sig.sample_rate();
    let ns = exact.round() as usize;
    if (exact - ns as f64).abs() > 1e-6 || ns == 0 {
        return Err(Error::config(
            "signal length is not an integer number of symbol periods",
        ));
    }
    Ok(ns)
}

/// RRC matched filter, symbol-instant sampling and normalization to unit
/// mean power over both polarizations.
pub fn matched_filter_and_sample(sig: &DualPolSignal, cfg: &TxConfig) -> Result<PolSymbols> {
    if sig.sample_rate() < (1.0 + cfg.rolloff) * cfg.symbol_rate * (1.0 - 1e-12) {
        return Err(Error::Aliasing(
            "matched filter input needs at least (1 + rolloff) samples per symbol".into(),
        ));
    }
    let ns = frame_symbols(sig, cfg)?;
    let gains = rrc_gains(sig.len(), sig.sample_rate(), cfg);
    let raw = PolSymbols {
        x: matched_filter_pol(sig.x(), &gains, ns),
        y: matched_filter_pol(sig.y(), &gains, ns),
    };
    Ok(raw.normalized())
}

/// Mean phase rotation estimate `arg(sum rx * conj(tx))` over both
/// polarizations; zero when the correlation vanishes.
pub fn mpr_estimate(rx: &PolSymbols, tx: &PolSymbols) -> Result<f64> {
    if rx.x.len() != tx.x.len() || rx.y.len() != tx.y.len() {
        return Err(Error::LengthMismatch {
            expected: tx.len(),
            actual: rx.len(),
        });
    }
    let corr: Complex64 = rx.iter().zip(tx.iter()).map(|(r, t)| r * t.conj()).sum();
    Ok(if corr.norm() == 0.0 { 0.0 } else { corr.arg() })
}

/// Removes the mean phase rotation of `rx` relative to `tx`.
pub fn remove_mpr(rx: &PolSymbols, tx: &PolSymbols) -> Result<PolSymbols> {
    let theta = mpr_estimate(rx, tx)?;
    Ok(if theta == 0.0 { rx.clone() } else { rx.rotated(-theta) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(n_channels: usize) -> TxConfig {
        TxConfig {
            n_channels,
            n_symbols: 1024,
            samples_per_symbol: 8,
            ..TxConfig::default()
        }
    }

    #[test]
    fn sampler_matches_matched_filter_and_has_exact_adjoint() {
        let cfg = small_cfg(3);
        let frame = generate_frame(&cfg).unwrap();
        let field = shape_and_mux(&frame, &cfg).unwrap();
        let offsets = cfg.scoi_offsets();
        let rate = 1.25 * cfg.symbol_rate;
        let ch = demux_channel(&field, 2, &cfg, rate).unwrap();
        let direct = matched_filter_and_sample(&ch, &cfg).unwrap();
        for (sig, off) in [(&ch, offsets[2]), (&field, offsets[2])] {
            let sam = SymbolSampler::new(sig, off, &cfg).unwrap();
            let raw = PolSymbols {
                x: sam.apply(sig.x()),
                y: sam.apply(sig.y()),
            };
            let got = raw.normalized();
            for (a, b) in got.iter().zip(direct.iter()) {
                assert!((a - b).norm() < 1e-9);
            }
        }
        // <M u, v> = <u, M^H v> for random u, v.
        let sam = SymbolSampler::new(&field, offsets[0], &cfg).unwrap();
        let u: Vec<Complex64> = (0..field.len())
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let v: Vec<Complex64> = (0..sam.n_symbols())
            .map(|k| Complex64::new((k as f64 * 0.7).cos(), (k as f64 * 1.3).sin()))
            .collect();
        let lhs: Complex64 = sam.apply(&u).iter().zip(&v).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = u.iter().zip(sam.adjoint(&v)).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm());
    }

    #[test]
    fn frames_are_deterministic_and_unit_energy() {
        let cfg = TxConfig {
            n_symbols: 65536,
            n_channels: 1,
            ..TxConfig::default()
        };
        let a = generate_frame(&cfg).unwrap();
        let b = generate_frame(&cfg).unwrap();
        assert_eq!(a, b);
        let e = a.symbols(0).mean_power();
        assert!((e - 1.0).abs() < 0.02, "{e}");
        let other = generate_frame(&TxConfig { rng_seed: 2, ..cfg }).unwrap();
        assert_ne!(a.channels[0], other.channels[0]);
    }

    #[test]
    fn labels_cover_all_points_uniformly() {
        let cfg = TxConfig {
            n_symbols: 64 * 512,
            n_channels: 1,
            ..TxConfig::default()
        };
        let f = generate_frame(&cfg).unwrap();
        let mut hist = [0usize; 64];
        for &l in &f.channels[0].x {
            hist[l as usize] += 1;
        }
        for h in hist {
            assert!((h as f64 - 512.0).abs() < 5.0 * 512f64.sqrt());
        }
    }

    #[test]
    fn back_to_back_recovers_symbols() {
        let cfg = small_cfg(1);
        let frame = generate_frame(&cfg).unwrap();
        let field = shape_and_mux(&frame, &cfg).unwrap();
        let rx = matched_filter_and_sample(&field, &cfg).unwrap();
        // Equal to the transmitted symbols up to the unit-power normalization.
        let tx = frame.symbols(0).normalized();
        for (a, b) in rx.iter().zip(tx.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn per_channel_power_matches_configuration() {
        let cfg = TxConfig {
            launch_power_dbm: 2.5,
            ..small_cfg(2)
        };
        let frame = generate_frame(&cfg).unwrap();
        // Isolate channel 0 by zeroing the labels' contribution of channel 1.
        let field = shape_and_mux(&frame, &cfg).unwrap();
        for ch in 0..2 {
            let isolated = demux_channel(&field, ch, &cfg, cfg.sample_rate()).unwrap();
            // Oracle: direct energy sum over the isolated channel's samples.
            let p = isolated.energy() / isolated.len() as f64;
            assert!((watt_to_dbm(p) - cfg.launch_power_dbm).abs() < 0.01, "{}", watt_to_dbm(p));
        }
    }

    #[test]
    fn cross_channel_leakage_below_40_db() {
        let cfg = small_cfg(2);
        let frame = generate_frame(&cfg).unwrap();
        // Oracle: fraction of the RRC energy outside a +/- grid/2 slot.
        let df = 1e6;
        let mut inside = 0.0;
        let mut outside = 0.0;
        for k in -100_000..100_000 {
            let f = k as f64 * df;
            let h2 = rrc_response(f, cfg.symbol_rate, cfg.rolloff).powi(2);
            if f.abs() < cfg.grid_spacing / 2.0 {
                inside += h2;
            } else {
                outside += h2;
            }
        }
        assert!(outside == 0.0 || 10.0 * (outside / inside).log10() < -40.0);

        let neighbour = mux_subset(&frame, &cfg, |ch| ch == 1).unwrap();
        let full = shape_and_mux(&frame, &cfg).unwrap();
        let target = 1.25 * cfg.symbol_rate;
        let leak = demux_channel(&neighbour, 0, &cfg, target).unwrap().energy();
        let wanted = demux_channel(&full, 0, &cfg, target).unwrap().energy();
        assert!(leak == 0.0 || 10.0 * (leak / wanted).log10() < -40.0);
    }

    #[test]
    fn demux_remux_reconstructs_in_band_spectrum() {
        // Oracle: spectral comparison on the FFT grid of the full field.
        let cfg = small_cfg(4);
        let frame = generate_frame(&cfg).unwrap();
        let full = shape_and_mux(&frame, &cfg).unwrap();
        let n = full.len();
        let fs = full.sample_rate();
        let mut remux = vec![Complex64::new(0.0, 0.0); n];
        for (ch, off) in cfg.scoi_offsets().into_iter().enumerate() {
            let d = demux_channel(&full, ch, &cfg, 1.25 * cfg.symbol_rate).unwrap();
            let mut spec = d.x().to_vec();
            fft::forward(&mut spec);
            let shift = (off / cfg.frame_bin()).round() as i64;
            let scale = n as f64 / d.len() as f64;
            for (k, v) in spec.iter().enumerate() {
                let s = fft::signed_bin(k, d.len()) + shift;
                remux[s.rem_euclid(n as i64) as usize] += v * scale;
            }
        }
        let mut orig = full.x().to_vec();
        fft::forward(&mut orig);
        let band = 2.0 * cfg.grid_spacing;
        let (mut err, mut sig) = (0.0, 0.0);
        for k in 0..n {
            if fft::bin_frequency(k, n, fs).abs() < band {
                err += (remux[k] - orig[k]).norm_sqr();
                sig += orig[k].norm_sqr();
            }
        }
        assert!(10.0 * (err / sig).log10() < -40.0);
    }

    #[test]
    fn demux_of_single_channel_is_resampled_identity() {
        let cfg = small_cfg(1);
        let frame = generate_frame(&cfg).unwrap();
        let full = shape_and_mux(&frame, &cfg).unwrap();
        let d = demux_channel(&full, 0, &cfg, cfg.sample_rate()).unwrap();
        assert!(d.relative_error(&full) < 1e-12);
    }

    #[test]
    fn demux_errors() {
        let cfg = small_cfg(2);
        let frame = generate_frame(&cfg).unwrap();
        let field = shape_and_mux(&frame, &cfg).unwrap();
        assert!(matches!(
            demux_channel(&field, 2, &cfg, 1.25 * cfg.symbol_rate),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            demux_channel(&field, 0, &cfg, 1.05 * cfg.symbol_rate),
            Err(Error::Aliasing(_))
        ));
    }

    #[test]
    fn mux_rejects_undersampled_band() {
        let cfg = TxConfig {
            samples_per_symbol: 2,
            ..small_cfg(4)
        };
        let frame = generate_frame(&cfg).unwrap();
        assert!(matches!(shape_and_mux(&frame, &cfg), Err(Error::Aliasing(_))));
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let cfg = small_cfg(1);
        let sig = DualPolSignal::zeros(1024 * 2, 2.0 * cfg.symbol_rate, 0.0).unwrap();
        let rx = matched_filter_and_sample(&sig, &cfg).unwrap();
        assert!(rx.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn mpr_removal_cases() {
        let cfg = small_cfg(1);
        let tx = generate_frame(&cfg).unwrap().symbols(0);
        let rx = tx.rotated(0.3);
        let out = remove_mpr(&rx, &tx).unwrap();
        for (a, b) in out.iter().zip(tx.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(mpr_estimate(&tx, &tx).unwrap(), 0.0);
        let twice = remove_mpr(&out, &tx).unwrap();
        for (a, b) in twice.iter().zip(out.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let zeros = PolSymbols {
            x: vec![Complex64::new(0.0, 0.0); tx.len()],
            y: vec![Complex64::new(0.0, 0.0); tx.len()],
        };
        assert_eq!(remove_mpr(&zeros, &tx).unwrap(), zeros);
        let short = PolSymbols {
            x: tx.x[..10].to_vec(),
            y: tx.y[..10].to_vec(),
        };
        assert!(remove_mpr(&short, &tx).is_err());
    }
}
