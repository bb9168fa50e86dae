//! Forward fiber propagation: symmetric split-step integration of the
//! Manakov equation over a chain of identical amplified spans.
//!
//! Sign convention: with `A(t) = sum_w A(w) exp(j w t)`, dispersion over a
//! length `dz` multiplies the spectrum by `exp(j beta2 / 2 * w^2 * dz)` and
//! the Kerr effect rotates the field by `+ (8/9) gamma |A|^2 L_eff`.
//! Backpropagation applies the same operators with negated lengths and
//! phases.

use std::collections::HashMap;
use std::f64::consts::{LN_10, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::rng::SimRng;
use crate::signal::{filter_in_place, DualPolSignal};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Polarization-averaged Kerr factor of the Manakov model.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSpan {
    pub length_km: f64,
    /// Dispersion parameter D (ps/nm/km).
    pub dispersion_ps_nm_km: f64,
    pub attenuation_db_km: f64,
    /// Nonlinear coefficient (1/W/km).
    pub gamma_per_w_km: f64,
    pub reference_wavelength_nm: f64,
}

impl Default for FiberSpan {
    fn default() -> Self {
        Self {
            length_km: 80.0,
            dispersion_ps_nm_km: 17.0,
            attenuation_db_km: 0.2,
            gamma_per_w_km: 1.3,
            reference_wavelength_nm: 1550.0,
        }
    }
}

impl FiberSpan {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::config("span length must be positive"));
        }
        if self.attenuation_db_km < 0.0 {
            return Err(Error::config("attenuation must be non-negative"));
        }
        if self.gamma_per_w_km < 0.0 {
            return Err(Error::config("gamma must be non-negative"));
        }
        if !(self.reference_wavelength_nm > 0.0) {
            return Err(Error::config("reference wavelength must be positive"));
        }
        Ok(())
    }

    pub fn length_m(&self) -> f64 {
        self.length_km * 1e3
    }

    /// Group velocity dispersion `beta2 = -D lambda^2 / (2 pi c)` in s^2/m.
    pub fn beta2(&self) -> f64 {
        let d = self.dispersion_ps_nm_km * 1e-6; // s/m^2
        let lambda = self.reference_wavelength_nm * 1e-9;
        -d * lambda * lambda / (2.0 * PI * SPEED_OF_LIGHT)
    }

    /// Power attenuation coefficient in 1/m.
    pub fn alpha(&self) -> f64 {
        self.attenuation_db_km * LN_10 / 10.0 / 1e3
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_per_w_km / 1e3
    }

    pub fn loss_db(&self) -> f64 {
        self.attenuation_db_km * self.length_km
    }

    /// `integral_{from}^{to} exp(-alpha z) dz`, positions in meters from the
    /// span input.
    pub fn effective_length(&self, from: f64, to: f64) -> f64 {
        let a = self.alpha();
        if a == 0.0 {
            to - from
        } else {
            ((-a * from).exp() - (-a * to).exp()) / a
        }
    }

    pub fn carrier_frequency(&self) -> f64 {
        SPEED_OF_LIGHT / (self.reference_wavelength_nm * 1e-9)
    }
}

/// Lumped amplifier. `noise_figure_db = None` gives a noiseless amplifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpConfig {
    pub gain_db: f64,
    pub noise_figure_db: Option<f64>,
}

impl AmpConfig {
    /// Amplifier that exactly restores the loss of `span`.
    pub fn for_span(span: &FiberSpan, noise_figure_db: Option<f64>) -> Self {
        Self {
            gain_db: span.loss_db(),
            noise_figure_db,
        }
    }

    pub fn gain(&self) -> f64 {
        10f64.powf(self.gain_db / 10.0)
    }

    /// ASE power spectral density per polarization (W/Hz), with the
    /// convention `NF = 2 n_sp (G - 1) / G`, i.e. `S = (G - 1) n_sp h nu`.
    pub fn ase_psd(&self, carrier_frequency: f64) -> f64 {
        match self.noise_figure_db {
            None => 0.0,
            Some(nf_db) => {
                let g = self.gain();
                let nf = 10f64.powf(nf_db / 10.0);
                // (G - 1) * n_sp with n_sp = NF G / (2 (G - 1)).
                nf * g / 2.0 * PLANCK * carrier_frequency
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    spans: Vec<(FiberSpan, AmpConfig)>,
}

impl Link {
    pub fn new(spans: Vec<(FiberSpan, AmpConfig)>) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::config("a link needs at least one span"));
        }
        for (s, _) in &spans {
            s.validate()?;
        }
        Ok(Self { spans })
    }

    /// `n` identical spans, each followed by a loss-compensating amplifier.
    pub fn uniform(n: usize, span: FiberSpan, noise_figure_db: Option<f64>) -> Result<Self> {
        let amp = AmpConfig::for_span(&span, noise_figure_db);
        Self::new(vec![(span, amp); n])
    }

    pub fn spans(&self) -> &[(FiberSpan, AmpConfig)] {
        &self.spans
    }

    pub fn n_spans(&self) -> usize {
        self.spans.len()
    }

    pub fn total_length_m(&self) -> f64 {
        self.spans.iter().map(|(s, _)| s.length_m()).sum()
    }

    /// Same link with every amplifier made noiseless.
    pub fn noiseless(&self) -> Self {
        Self {
            spans: self
                .spans
                .iter()
                .map(|(s, a)| {
                    (
                        s.clone(),
                        AmpConfig {
                            noise_figure_db: None,
                            ..a.clone()
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSpacing {
    Uniform,
    /// Equal nonlinear phase per step: step `k` of `K` ends where the
    /// effective length reaches `k / K` of the span's.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepPlan {
    pub steps_per_span: usize,
    pub spacing: StepSpacing,
}

impl Default for StepPlan {
    fn default() -> Self {
        Self {
            steps_per_span: 100,
            spacing: StepSpacing::Logarithmic,
        }
    }
}

impl StepPlan {
    /// Step lengths (m) covering `span`.
    pub fn step_lengths(&self, span: &FiberSpan) -> Result<Vec<f64>> {
        let k = self.steps_per_span;
        if k == 0 {
            return Err(Error::config("steps_per_span must be at least 1"));
        }
        let l = span.length_m();
        let a = span.alpha();
        let bounds: Vec<f64> = match self.spacing {
            StepSpacing::Logarithmic if a > 0.0 => {
                let delta = (1.0 - (-a * l).exp()) / k as f64;
                (0..=k)
                    .map(|n| {
                        if n == k {
                            l
                        } else {
                            -(1.0 - n as f64 * delta).ln() / a
                        }
                    })
                    .collect()
            }
            _ => (0..=k).map(|n| l * n as f64 / k as f64).collect(),
        };
        Ok(bounds.windows(2).map(|w| w[1] - w[0]).collect())
    }
}

/// Dispersion operator on a fixed grid with a cache of responses.
struct Dispersion {
    /// `beta2 / 2 * w^2` per bin, with `w` the absolute angular frequency.
    phase_per_m: Vec<f64>,
    cache: HashMap<u64, Vec<Complex64>>,
    cache_budget: usize,
}

/// Upper bound on cached response samples (16 bytes each).
const DISPERSION_CACHE_SAMPLES: usize = 1 << 25;

impl Dispersion {
    fn new(sig: &DualPolSignal, beta2: f64) -> Self {
        let n = sig.len();
        let fs = sig.sample_rate();
        let phase_per_m = (0..n)
            .map(|k| {
                let w = 2.0 * PI * (fft::bin_frequency(k, n, fs) + sig.center_offset());
                0.5 * beta2 * w * w
            })
            .collect();
        Self {
            phase_per_m,
            cache: HashMap::new(),
            cache_budget: DISPERSION_CACHE_SAMPLES / n.max(1),
        }
    }

    fn response(&self, dz: f64) -> Vec<Complex64> {
        self.phase_per_m
            .iter()
            .map(|p| Complex64::from_polar(1.0, p * dz))
            .collect()
    }

    fn apply(&mut self, sig: &mut DualPolSignal, dz: f64) {
        if dz == 0.0 || self.phase_per_m.iter().all(|&p| p == 0.0) {
            return;
        }
        let key = dz.to_bits();
        let owned;
        let gains: &[Complex64] = if let Some(g) = self.cache.get(&key) {
            g
        } else if self.cache.len() < self.cache_budget {
            self.cache.insert(key, self.response(dz));
            &self.cache[&key]
        } else {
            owned = self.response(dz);
            &owned
        };
        let (x, y) = sig.pols_mut();
        filter_in_place(x, gains);
        filter_in_place(y, gains);
    }
}

/// Kerr phase `scale * (|x|^2 + |y|^2)` applied to both polarizations.
fn kerr_rotation(sig: &mut DualPolSignal, scale: f64) {
    if scale == 0.0 {
        return;
    }
    let (x, y) = sig.pols_mut();
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let rot = Complex64::from_polar(1.0, scale * (a.norm_sqr() + b.norm_sqr()));
        *a *= rot;
        *b *= rot;
    }
}

fn propagate_span_with(
    sig: &mut DualPolSignal,
    span: &FiberSpan,
    plan: &StepPlan,
    disp: &mut Dispersion,
) -> Result<()> {
    let steps = plan.step_lengths(span)?;
    let gamma = MANAKOV_FACTOR * span.gamma();
    let alpha = span.alpha();
    disp.apply(sig, steps[0] / 2.0);
    for (i, &h) in steps.iter().enumerate() {
        kerr_rotation(sig, gamma * span.effective_length(0.0, h));
        if alpha > 0.0 {
            sig.scale((-alpha * h / 2.0).exp());
        }
        let next = steps.get(i + 1).map_or(h / 2.0, |&n| (h + n) / 2.0);
        disp.apply(sig, next);
    }
    Ok(())
}

/// Propagates through one fiber span (no amplifier).
///
/// Each step is half dispersion, the Kerr rotation with the step's effective
/// length evaluated at the step-input power, the step's loss, and half
/// dispersion; adjacent half steps are merged.
pub fn propagate_span(sig: &DualPolSignal, span: &FiberSpan, plan: &StepPlan) -> Result<DualPolSignal> {
    span.validate()?;
    let mut out = sig.clone();
    let mut disp = Dispersion::new(sig, span.beta2());
    propagate_span_with(&mut out, span, plan, &mut disp)?;
    Ok(out)
}

/// Scales by the amplifier gain and adds circular white Gaussian ASE noise
/// independently on each polarization.
pub fn amplify_with_ase(sig: &DualPolSignal, amp: &AmpConfig, carrier_frequency: f64, rng: &mut SimRng) -> Result<DualPolSignal> {
    if amp.gain_db < 0.0 {
        return Err(Error::config(format!("amplifier gain must be >= 0 dB, got {}", amp.gain_db)));
    }
    let mut out = sig.clone();
    out.scale(amp.gain().sqrt());
    let psd = amp.ase_psd(carrier_frequency);
    if psd > 0.0 {
        // Complex variance per sample is psd * fs, split over re and im.
        let sigma = (psd * sig.sample_rate() / 2.0).sqrt();
        let (x, y) = out.pols_mut();
        for v in x.iter_mut().chain(y.iter_mut()) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * sigma, im * sigma);
        }
    }
    Ok(out)
}

/// Alternates span propagation and amplification over the whole link.
pub fn propagate_link(sig: &DualPolSignal, link: &Link, plan: &StepPlan, rng: &mut SimRng) -> Result<DualPolSignal> {
    let mut out = sig.clone();
    let mut cache: Option<(u64, Dispersion)> = None;
    for (span, amp) in link.spans() {
        span.validate()?;
        let key = span.beta2().to_bits();
        if cache.as_ref().map(|(k, _)| *k) != Some(key) {
            cache = Some((key, Dispersion::new(sig, span.beta2())));
        }
        let disp = &mut cache.as_mut().expect("set above").1;
        propagate_span_with(&mut out, span, plan, disp)?;
        out = amplify_with_ase(&out, amp, span.carrier_frequency(), rng)?;
    }
    Ok(out)
}
