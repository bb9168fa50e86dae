//! GMI and NMSE of received symbols, and launch-power sweeps.
//!
//! GMI uses a memoryless circularly-symmetric Gaussian auxiliary channel
//! whose variance is estimated from the residuals of each polarization, with
//! exact (not max-log) bit metrics. Reports are in bits per 4D symbol (the
//! sum over both polarizations).

use num_complex::Complex64;

use crate::dbp::Method;
use crate::error::{Error, Result};
use crate::qam::Constellation;
use crate::txrx::{ChannelLabels, PolSymbols};

/// NMSE values are clipped to this floor (dB).
pub const NMSE_FLOOR_DB: f64 = -150.0;

fn log_sum_exp(vals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = vals.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// GMI in bits per symbol of one polarization.
///
/// `rx` must be phase-corrected and normalized to the constellation scale.
pub fn estimate_gmi(rx: &[Complex64], labels: &[u8], constellation: &Constellation) -> Result<f64> {
    if rx.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: rx.len(),
        });
    }
    if rx.is_empty() {
        return Err(Error::config("GMI needs at least one symbol"));
    }
    let m = constellation.bits_per_symbol();
    let points = constellation.points();
    let sigma2 = rx
        .iter()
        .zip(labels)
        .map(|(r, &l)| (r - constellation.point(l)).norm_sqr())
        .sum::<f64>()
        / rx.len() as f64;
    if !sigma2.is_finite() {
        return Err(Error::Numerical("non-finite noise variance in GMI".into()));
    }
    if sigma2 == 0.0 {
        return Ok(m as f64);
    }
    let mut metric = vec![0.0; points.len()];
    let mut loss = 0.0;
    for (r, &l) in rx.iter().zip(labels) {
        for (d, p) in metric.iter_mut().zip(points) {
            *d = -(r - p).norm_sqr() / sigma2;
        }
        let all = log_sum_exp(metric.iter().cloned());
        for i in 0..m {
            let b = constellation.bit(l, i);
            let same = log_sum_exp(
                metric
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| constellation.bit(*j as u8, i) == b)
                    .map(|(_, &d)| d),
            );
            loss += all - same;
        }
    }
    Ok(m as f64 - loss / (rx.len() as f64 * std::f64::consts::LN_2))
}

/// GMI summed over both polarizations, each with its own noise variance.
pub fn gmi_4d(rx: &PolSymbols, labels: &ChannelLabels, constellation: &Constellation) -> Result<f64> {
    Ok(estimate_gmi(&rx.x, &labels.x, constellation)? + estimate_gmi(&rx.y, &labels.y, constellation)?)
}

/// `10 log10(sum |rx - tx|^2 / sum |tx|^2)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(rx: &[Complex64], tx: &[Complex64]) -> Result<f64> {
    if rx.len() != tx.len() {
        return Err(Error::LengthMismatch {
            expected: tx.len(),
            actual: rx.len(),
        });
    }
    let reference: f64 = tx.iter().map(|v| v.norm_sqr()).sum();
    if reference == 0.0 {
        return Err(Error::config("NMSE reference has zero energy"));
    }
    let err: f64 = rx.iter().zip(tx).map(|(r, t)| (r - t).norm_sqr()).sum();
    Ok((10.0 * (err / reference).log10()).max(NMSE_FLOOR_DB))
}

/// NMSE over both polarizations.
pub fn nmse_pol_db(rx: &PolSymbols, tx: &PolSymbols) -> Result<f64> {
    let r: Vec<Complex64> = rx.iter().cloned().collect();
    let t: Vec<Complex64> = tx.iter().cloned().collect();
    nmse_db(&r, &t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: Method,
    pub n_steps: usize,
    pub power_dbm: f64,
    pub seed: u64,
    /// GMI per channel, bits per 4D symbol.
    pub channel_gmi: Vec<f64>,
    pub channel_nmse_db: Vec<f64>,
}

impl MetricsReport {
    pub fn avg_gmi(&self) -> f64 {
        self.channel_gmi.iter().sum::<f64>() / self.channel_gmi.len() as f64
    }

    pub fn avg_nmse_db(&self) -> f64 {
        self.channel_nmse_db.iter().sum::<f64>() / self.channel_nmse_db.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweep {
    pub reports: Vec<MetricsReport>,
    /// Index of the report with the highest average GMI.
    pub peak: usize,
}

impl PowerSweep {
    pub fn peak_report(&self) -> &MetricsReport {
        &self.reports[self.peak]
    }
}

/// Evaluates `run` at every launch power and locates the GMI peak (first
/// maximum on ties).
pub fn sweep_launch_power(
    powers_dbm: &[f64],
    mut run: impl FnMut(f64) -> Result<MetricsReport>,
) -> Result<PowerSweep> {
    if powers_dbm.len() < 3 {
        return Err(Error::config("a power sweep needs at least three grid points"));
    }
    let reports = powers_dbm.iter().map(|&p| run(p)).collect::<Result<Vec<_>>>()?;
    let peak = peak_index(&reports);
    Ok(PowerSweep { reports, peak })
}

pub fn peak_index(reports: &[MetricsReport]) -> usize {
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.avg_gmi() > reports[best].avg_gmi() {
            best = i;
        }
    }
    best
}
