//! Dispersion and walk-off compensation of the backward linear steps.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::signal::{filter_in_place, DualPolSignal};

/// Overlap-and-save geometry: FFT blocks of `fft_size` samples of which
/// `fft_size / eta` are kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockPlan {
    pub fft_size: usize,
    pub eta: f64,
}

impl BlockPlan {
    pub fn new(fft_size: usize, eta: f64) -> Result<Self> {
        let plan = Self { fft_size, eta };
        plan.validate()?;
        Ok(plan)
    }

    /// Smallest plan with `fft_size` whose overlap covers `memory` samples.
    pub fn from_memory(fft_size: usize, memory: usize) -> Result<Self> {
        if memory >= fft_size {
            return Err(Error::config(format!(
                "channel memory of {memory} samples does not fit a {fft_size}-point block"
            )));
        }
        Self::new(fft_size, fft_size as f64 / (fft_size - memory) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::config("block FFT size must be a power of two"));
        }
        if !(self.eta > 1.0) {
            return Err(Error::config("block overlap ratio eta must exceed 1"));
        }
        let saved = self.fft_size as f64 / self.eta;
        if (saved - saved.round()).abs() > 1e-6 || saved.round() < 1.0 {
            return Err(Error::config("fft_size / eta must be a whole number of samples"));
        }
        Ok(())
    }

    /// Output samples kept per block.
    pub fn saved(&self) -> usize {
        (self.fft_size as f64 / self.eta).round() as usize
    }

    /// Filter memory the block can absorb.
    pub fn overlap(&self) -> usize {
        self.fft_size - self.saved()
    }
}

/// How each linear step is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Processing {
    /// Exact all-pass filtering of the whole circular sequence.
    WholeSequence,
    /// Whole-sequence filtering with the impulse response truncated to the
    /// block plan's overlap (reference for [`Processing::OverlapSave`]).
    WholeSequenceFir(BlockPlan),
    /// Block-wise overlap-and-save with the truncated impulse response.
    OverlapSave(BlockPlan),
}

enum Prepared {
    Response(Vec<Complex64>),
    Blocks {
        /// Delay of the first tap, in samples.
        start: i64,
        taps: usize,
        kernel: Vec<Complex64>,
    },
}

pub(crate) struct LinearStage {
    processing: Processing,
    cache: HashMap<(usize, u64), Prepared>,
}

/// `exp(j/2 w^2 d)` at absolute angular frequency `w` on the signal grid.
fn dispersion_response(n: usize, fs: f64, center_offset: f64, dacc: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let w = 2.0 * PI * (fft::bin_frequency(k, n, fs) + center_offset);
            Complex64::from_polar(1.0, 0.5 * w * w * dacc)
        })
        .collect()
}

/// Impulse response truncated to `taps` samples centered on the channel's
/// group delay; returns the delay of the first tap and the taps.
fn truncated_taps(n: usize, fs: f64, center_offset: f64, dacc: f64, taps: usize) -> Result<(i64, Vec<Complex64>)> {
    if taps > n {
        return Err(Error::config(format!(
            "block overlap of {} samples exceeds the sequence length {n}",
            taps - 1
        )));
    }
    let mut h = dispersion_response(n, fs, center_offset, dacc);
    fft::inverse(&mut h);
    let delay = (-2.0 * PI * center_offset * dacc * fs).round() as i64;
    let start = delay - (taps as i64 - 1) / 2;
    let g = (0..taps as i64)
        .map(|t| h[(start + t).rem_euclid(n as i64) as usize])
        .collect();
    Ok((start, g))
}

impl LinearStage {
    pub(crate) fn new(processing: Processing) -> Result<Self> {
        match processing {
            Processing::WholeSequence => {}
            Processing::WholeSequenceFir(p) | Processing::OverlapSave(p) => p.validate()?,
        }
        Ok(Self {
            processing,
            cache: HashMap::new(),
        })
    }

    fn prepare(&self, sig: &DualPolSignal, dacc: f64) -> Result<Prepared> {
        let (n, fs, off) = (sig.len(), sig.sample_rate(), sig.center_offset());
        Ok(match self.processing {
            Processing::WholeSequence => Prepared::Response(dispersion_response(n, fs, off, dacc)),
            Processing::WholeSequenceFir(plan) => {
                let (start, g) = truncated_taps(n, fs, off, dacc, plan.overlap() + 1)?;
                let mut placed = vec![Complex64::new(0.0, 0.0); n];
                for (t, v) in g.iter().enumerate() {
                    placed[(start + t as i64).rem_euclid(n as i64) as usize] += v;
                }
                fft::forward(&mut placed);
                Prepared::Response(placed)
            }
            Processing::OverlapSave(plan) => {
                let taps = plan.overlap() + 1;
                let (start, g) = truncated_taps(n, fs, off, dacc, taps)?;
                let mut kernel = vec![Complex64::new(0.0, 0.0); plan.fft_size];
                kernel[..taps].copy_from_slice(&g);
                fft::forward(&mut kernel);
                Prepared::Blocks { start, taps, kernel }
            }
        })
    }

    fn prepared(&mut self, channel: usize, sig: &DualPolSignal, dacc: f64) -> Result<&Prepared> {
        let key = (channel, dacc.to_bits());
        if !self.cache.contains_key(&key) {
            let p = self.prepare(sig, dacc)?;
            self.cache.insert(key, p);
        }
        Ok(&self.cache[&key])
    }

    /// Filters channel `channel` by the accumulated dispersion `dacc`.
    pub(crate) fn apply(&mut self, channel: usize, sig: &mut DualPolSignal, dacc: f64) -> Result<()> {
        if dacc == 0.0 {
            return Ok(());
        }
        let prepared = self.prepared(channel, sig, dacc)?;
        let (x, y) = sig.pols_mut();
        match prepared {
            Prepared::Response(r) => {
                filter_in_place(x, r);
                filter_in_place(y, r);
            }
            Prepared::Blocks { start, taps, kernel } => {
                for pol in [x, y] {
                    let out = overlap_save(pol, *start, *taps, kernel);
                    pol.copy_from_slice(&out);
                }
            }
        }
        Ok(())
    }

    /// Applies the adjoint of [`LinearStage::apply`] to a gradient pair.
    pub(crate) fn apply_adjoint(
        &mut self,
        channel: usize,
        sig: &DualPolSignal,
        grad: (&mut [Complex64], &mut [Complex64]),
        dacc: f64,
    ) -> Result<()> {
        if dacc == 0.0 {
            return Ok(());
        }
        let prepared = self.prepared(channel, sig, dacc)?;
        match prepared {
            Prepared::Response(r) => {
                let conj: Vec<Complex64> = r.iter().map(|v| v.conj()).collect();
                filter_in_place(grad.0, &conj);
                filter_in_place(grad.1, &conj);
                Ok(())
            }
            Prepared::Blocks { .. } => Err(Error::config(
                "gradients are only available for whole-sequence processing",
            )),
        }
    }
}

/// Circular FIR filtering `y[k] = sum_t g[t] x[k - start - t]` by blocks.
fn overlap_save(x: &[Complex64], start: i64, taps: usize, kernel: &[Complex64]) -> Vec<Complex64> {
    let n = x.len() as i64;
    let block = kernel.len();
    let saved = block - (taps - 1);
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); block];
    let mut k0 = 0usize;
    while k0 < x.len() {
        let first = k0 as i64 - start - (taps as i64 - 1);
        for (j, b) in buf.iter_mut().enumerate() {
            *b = x[(first + j as i64).rem_euclid(n) as usize];
        }
        fft::forward(&mut buf);
        for (b, h) in buf.iter_mut().zip(kernel) {
            *b *= h;
        }
        fft::inverse(&mut buf);
        let count = saved.min(x.len() - k0);
        out[k0..k0 + count].copy_from_slice(&buf[taps - 1..taps - 1 + count]);
        k0 += saved;
    }
    out
}
