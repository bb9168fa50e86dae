//! Digital backpropagation: the linear step with per-channel walk-off, the
//! SSFM / OSSFM / ESSFM / coupled-channel ESSFM nonlinear steps, in
//! per-channel, coupled and full-field configurations.
//!
//! The field is kept at the launch power level throughout; span loss and
//! amplifier gain only enter through each step's weighted effective length.

mod adjoint;
mod coeffs;
mod complexity;
mod linear;
mod nonlinear;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::Link;
use crate::error::{Error, Result};
use crate::signal::DualPolSignal;

pub use adjoint::{Tape, TapGradient};
pub use coeffs::CoefficientSet;
pub use complexity::{complexity, ComplexityQuery, Rational};
pub use linear::{BlockPlan, Processing};

use nonlinear::{FilterBank, Phases};
use schedule::Op;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    GvdOnly,
    Ssfm,
    Ossfm,
    Essfm,
    CcEssfm,
    FfSsfm,
    FfOssfm,
    FfEssfm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::GvdOnly,
        Method::Ssfm,
        Method::Ossfm,
        Method::Essfm,
        Method::CcEssfm,
        Method::FfSsfm,
        Method::FfOssfm,
        Method::FfEssfm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GvdOnly => "GVD_ONLY",
            Method::Ssfm => "SSFM",
            Method::Ossfm => "OSSFM",
            Method::Essfm => "ESSFM",
            Method::CcEssfm => "CC_ESSFM",
            Method::FfSsfm => "FF_SSFM",
            Method::FfOssfm => "FF_OSSFM",
            Method::FfEssfm => "FF_ESSFM",
        }
    }

    pub fn is_full_field(self) -> bool {
        matches!(self, Method::FfSsfm | Method::FfOssfm | Method::FfEssfm)
    }

    /// Methods whose nonlinear step uses a trained coefficient set.
    pub fn uses_coefficients(self) -> bool {
        matches!(self, Method::Essfm | Method::CcEssfm | Method::FfEssfm)
    }

    /// Methods whose nonlinear scale is trained.
    pub fn trains_nl_scale(self) -> bool {
        matches!(self, Method::Ossfm | Method::FfOssfm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown DBP method '{s}'")))
    }
}

/// Evaluation strategy of the filtered-intensity correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Direct summation for single-channel groups, FFT otherwise.
    Auto,
    Time,
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbpConfig {
    pub method: Method,
    /// Total number of steps over the link.
    pub n_steps: usize,
    /// Samples per symbol of each demultiplexed channel.
    pub samples_per_symbol: f64,
    /// Samples per symbol of the aggregate field in full-field modes.
    pub full_field_samples_per_symbol: f64,
    /// Nonlinear scale `xi`.
    pub nl_scale: f64,
    /// Position of each nonlinear operator within its forward segment,
    /// from 0 (segment input) to 1 (segment output). The default puts it at
    /// the segment midpoint, with the phase weighted by the effective
    /// length of the whole segment.
    pub nl_position: f64,
    pub n_c0: usize,
    pub n_c: usize,
    pub kernel: Kernel,
    pub processing: Processing,
}

impl Default for DbpConfig {
    fn default() -> Self {
        Self {
            method: Method::CcEssfm,
            n_steps: 15,
            samples_per_symbol: 1.25,
            full_field_samples_per_symbol: 8.0,
            nl_scale: 1.0,
            nl_position: 0.5,
            n_c0: 32,
            n_c: 128,
            kernel: Kernel::Auto,
            processing: Processing::WholeSequence,
        }
    }
}

impl DbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be at least 1"));
        }
        if !(self.samples_per_symbol > 0.0 && self.full_field_samples_per_symbol > 0.0) {
            return Err(Error::config("samples per symbol must be positive"));
        }
        if !self.nl_scale.is_finite() {
            return Err(Error::config("nl_scale must be finite"));
        }
        if !(0.0..=1.0).contains(&self.nl_position) {
            return Err(Error::config("nl_position must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Samples per symbol at the DBP rate for this method.
    pub fn dbp_samples_per_symbol(&self) -> f64 {
        if self.method.is_full_field() {
            self.full_field_samples_per_symbol
        } else {
            self.samples_per_symbol
        }
    }
}

#[derive(Debug, Clone)]
enum NlKind {
    None,
    Instant,
    Filtered(CoefficientSet),
}

/// A configured backward propagator for a given link.
#[derive(Debug, Clone)]
pub struct Backpropagator {
    ops: Vec<Op>,
    coupled: bool,
    nl: NlKind,
    neg_xi: f64,
    kernel: Kernel,
    processing: Processing,
    n_channels: usize,
}

impl Backpropagator {
    /// `n_channels` is the number of input signals that will be passed to
    /// [`Backpropagator::run`].
    pub fn new(link: &Link, cfg: &DbpConfig, coeffs: Option<&CoefficientSet>, n_channels: usize) -> Result<Self> {
        cfg.validate()?;
        if n_channels == 0 {
            return Err(Error::config("DBP needs at least one input signal"));
        }
        let m = cfg.method;
        if m.is_full_field() && n_channels != 1 {
            return Err(Error::config("full-field DBP takes a single aggregate field"));
        }
        let nl = match m {
            Method::GvdOnly => NlKind::None,
            Method::Ssfm | Method::Ossfm | Method::FfSsfm | Method::FfOssfm => NlKind::Instant,
            Method::Essfm | Method::CcEssfm | Method::FfEssfm => {
                let c = coeffs.ok_or_else(|| Error::config(format!("{m} needs a coefficient set")))?;
                let want = if m == Method::CcEssfm { n_channels } else { 1 };
                if c.n_ch() != want {
                    return Err(Error::config(format!(
                        "{m} needs a coefficient set for {want} channel(s), got {}",
                        c.n_ch()
                    )));
                }
                NlKind::Filtered(c.clone())
            }
        };
        let ops = schedule::build(link, cfg.n_steps, cfg.nl_position, !matches!(nl, NlKind::None))?;
        linear::LinearStage::new(cfg.processing)?;
        Ok(Self {
            ops,
            coupled: m == Method::CcEssfm,
            nl,
            neg_xi: -cfg.nl_scale,
            kernel: cfg.kernel,
            processing: cfg.processing,
            n_channels,
        })
    }

    /// Number of nonlinear operators in the schedule.
    pub fn n_nonlinear_steps(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, Op::Nonlinear(_))).count()
    }

    fn check_inputs(&self, inputs: &[DualPolSignal]) -> Result<()> {
        if inputs.len() != self.n_channels {
            return Err(Error::LengthMismatch {
                expected: self.n_channels,
                actual: inputs.len(),
            });
        }
        let (n, fs) = (inputs[0].len(), inputs[0].sample_rate());
        for s in inputs {
            if s.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: s.len(),
                });
            }
            if s.sample_rate() != fs {
                return Err(Error::config("all DBP inputs must share one sample rate"));
            }
        }
        if n == 0 {
            return Err(Error::config("DBP input is empty"));
        }
        Ok(())
    }

    fn groups(&self) -> Vec<std::ops::Range<usize>> {
        if self.coupled {
            vec![0..self.n_channels]
        } else {
            (0..self.n_channels).map(|i| i..i + 1).collect()
        }
    }

    fn phases(&self, chans: &[&DualPolSignal], inv_p: &[f64], phis: &[f64], bank: Option<&FilterBank>) -> Vec<Phases> {
        match (&self.nl, bank) {
            (NlKind::Filtered(_), Some(bank)) => {
                let time = match self.kernel {
                    Kernel::Auto => chans.len() == 1,
                    Kernel::Time => true,
                    Kernel::Frequency => false,
                };
                if time {
                    nonlinear::filtered_phases_time(chans, inv_p, phis, self.neg_xi, bank)
                } else {
                    nonlinear::filtered_phases_freq(chans, inv_p, phis, self.neg_xi, bank)
                }
            }
            _ => chans
                .iter()
                .zip(inv_p)
                .zip(phis)
                .map(|((c, &ip), &phi)| nonlinear::ssfm_phase(c, ip, phi, self.neg_xi))
                .collect(),
        }
    }

    fn bank(&self, n: usize) -> Option<FilterBank> {
        match &self.nl {
            NlKind::Filtered(c) => Some(FilterBank::new(c, n)),
            _ => None,
        }
    }

    fn execute(&self, inputs: &[DualPolSignal], mut tape: Option<&mut Tape>) -> Result<Vec<DualPolSignal>> {
        self.check_inputs(inputs)?;
        let n = inputs[0].len();
        let powers: Vec<f64> = inputs.iter().map(|s| s.power()).collect();
        let inv_p: Vec<f64> = powers.iter().map(|&p| if p > 0.0 { 1.0 / p } else { 0.0 }).collect();
        let bank = self.bank(n);
        let mut stage = linear::LinearStage::new(self.processing)?;
        let mut chans = inputs.to_vec();
        for (op_index, op) in self.ops.iter().enumerate() {
            match *op {
                Op::Linear(d) => {
                    for (i, c) in chans.iter_mut().enumerate() {
                        stage.apply(i, c, d)?;
                    }
                }
                Op::Nonlinear(w) => {
                    if self.neg_xi == 0.0 || w == 0.0 {
                        continue;
                    }
                    let phis: Vec<f64> = powers.iter().map(|p| w * p).collect();
                    let mut all = Vec::with_capacity(chans.len());
                    for g in self.groups() {
                        let refs: Vec<&DualPolSignal> = chans[g.clone()].iter().collect();
                        all.extend(self.phases(&refs, &inv_p[g.clone()], &phis[g], bank.as_ref()));
                    }
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(op_index, phis, chans.clone(), all.clone());
                    }
                    for (c, ph) in chans.iter_mut().zip(&all) {
                        nonlinear::apply_phases(c, ph);
                    }
                }
            }
        }
        for c in &chans {
            if c.x().iter().chain(c.y()).any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite sample in DBP output".into()));
            }
        }
        Ok(chans)
    }

    /// Backpropagates `inputs` (one signal per channel, or the aggregate
    /// field in full-field modes).
    pub fn run(&self, inputs: &[DualPolSignal]) -> Result<Vec<DualPolSignal>> {
        self.execute(inputs, None)
    }

    /// Like [`Backpropagator::run`], also recording what the coefficient
    /// gradient needs.
    pub fn run_recorded(&self, inputs: &[DualPolSignal]) -> Result<(Vec<DualPolSignal>, Tape)> {
        let mut tape = Tape::default();
        let out = self.execute(inputs, Some(&mut tape))?;
        Ok((out, tape))
    }
}

/// One-shot backpropagation.
pub fn run_dbp(
    inputs: &[DualPolSignal],
    link: &Link,
    cfg: &DbpConfig,
    coeffs: Option<&CoefficientSet>,
) -> Result<Vec<DualPolSignal>> {
    Backpropagator::new(link, cfg, coeffs, inputs.len())?.run(inputs)
}
