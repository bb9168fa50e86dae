//! Reverse-mode gradient of a backpropagation run with respect to the
//! materialized filter taps `C_h[m]`.
//!
//! Gradients of real functions of complex samples use the convention
//! `g = dJ/dRe(z) + j dJ/dIm(z)`. Through a phase rotation `y = u e^{j theta}`
//! the sensitivity to the phase is `Im(g_y conj(y))`; the phases are linear
//! in both the taps and the intensities, which is all the backward pass needs.

use num_complex::Complex64;

use super::nonlinear::{intensity_spectra, FilterBank, Phases};
use super::schedule::Op;
use super::{Backpropagator, NlKind};
use crate::error::{Error, Result};
use crate::fft;
use crate::signal::DualPolSignal;

struct Record {
    op_index: usize,
    phis: Vec<f64>,
    inputs: Vec<DualPolSignal>,
    phases: Vec<Phases>,
}

/// Inputs and phases of every executed nonlinear step of one run.
#[derive(Default)]
pub struct Tape {
    records: Vec<Record>,
}

impl Tape {
    pub(crate) fn push(&mut self, op_index: usize, phis: Vec<f64>, inputs: Vec<DualPolSignal>, phases: Vec<Phases>) {
        self.records.push(Record {
            op_index,
            phis,
            inputs,
            phases,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `dJ/dC_h[m]` for every `h` of the coefficient set, circular in `m`.
#[derive(Debug, Clone)]
pub struct TapGradient {
    n_ch: usize,
    values: Vec<Vec<f64>>,
}

impl TapGradient {
    pub fn get(&self, h: i64, m: i64) -> f64 {
        if h.unsigned_abs() as usize >= self.n_ch {
            return 0.0;
        }
        let v = &self.values[(h + self.n_ch as i64 - 1) as usize];
        v[m.rem_euclid(v.len() as i64) as usize]
    }
}

fn packed_spectra(a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut p: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft::forward(&mut p);
    fft::split_real_pair(&p)
}

impl Backpropagator {
    /// Gradient of `J` with respect to the taps, given the run's tape and
    /// `dJ/d(output)` per channel as `(x, y)` pairs.
    pub fn coefficient_gradient(
        &self,
        inputs: &[DualPolSignal],
        tape: &Tape,
        output_grads: &[(Vec<Complex64>, Vec<Complex64>)],
    ) -> Result<TapGradient> {
        self.check_inputs(inputs)?;
        let NlKind::Filtered(coeffs) = &self.nl else {
            return Err(Error::config("coefficient gradient needs a filtered nonlinear step"));
        };
        if output_grads.len() != inputs.len() {
            return Err(Error::LengthMismatch {
                expected: inputs.len(),
                actual: output_grads.len(),
            });
        }
        let n = inputs[0].len();
        if output_grads.iter().any(|(x, y)| x.len() != n || y.len() != n) {
            return Err(Error::config("output gradient length differs from the signal length"));
        }
        let bank = FilterBank::new(coeffs, n);
        let n_ch = coeffs.n_ch();
        let inv_p: Vec<f64> = inputs
            .iter()
            .map(|s| {
                let p = s.power();
                if p > 0.0 {
                    1.0 / p
                } else {
                    0.0
                }
            })
            .collect();
        let mut grads: Vec<(Vec<Complex64>, Vec<Complex64>)> = output_grads.to_vec();
        let mut acc = vec![vec![Complex64::new(0.0, 0.0); n]; 2 * n_ch - 1];
        let mut stage = super::linear::LinearStage::new(self.processing)?;
        let mut records = tape.records.iter().rev().peekable();
        for (op_index, op) in self.ops.iter().enumerate().rev() {
            match *op {
                Op::Linear(d) => {
                    for (i, (gx, gy)) in grads.iter_mut().enumerate() {
                        stage.apply_adjoint(i, &inputs[i], (gx, gy), d)?;
                    }
                }
                Op::Nonlinear(_) => {
                    let Some(rec) = records.next_if(|r| r.op_index == op_index) else {
                        continue;
                    };
                    for g in self.groups() {
                        self.nonlinear_adjoint(rec, g, &bank, &inv_p, &mut grads, &mut acc);
                    }
                }
            }
        }
        let values = acc
            .into_iter()
            .map(|mut a| {
                fft::inverse(&mut a);
                a.into_iter().map(|v| v.re).collect()
            })
            .collect();
        Ok(TapGradient { n_ch, values })
    }

    fn nonlinear_adjoint(
        &self,
        rec: &Record,
        group: std::ops::Range<usize>,
        bank: &FilterBank,
        inv_p: &[f64],
        grads: &mut [(Vec<Complex64>, Vec<Complex64>)],
        acc: &mut [Vec<Complex64>],
    ) {
        let n_ch = bank.n_ch() as i64;
        let members: Vec<usize> = group.collect();
        let neg_xi = self.neg_xi;
        // Phase sensitivities and intensity spectra per channel.
        let mut lam = Vec::with_capacity(members.len());
        let mut ints = Vec::with_capacity(members.len());
        for &c in &members {
            let u = &rec.inputs[c];
            let ph = &rec.phases[c];
            let (gx, gy) = &grads[c];
            let sens = |g: &[Complex64], u: &[Complex64], th: &[f64]| -> Vec<f64> {
                g.iter()
                    .zip(u)
                    .zip(th)
                    .map(|((g, u), t)| (g * (u * Complex64::from_polar(1.0, *t)).conj()).im)
                    .collect()
            };
            let lx = sens(gx, u.x(), ph.x());
            let ly = sens(gy, u.y(), ph.y());
            lam.push(packed_spectra(&lx, &ly));
            ints.push(intensity_spectra(u, inv_p[c]));
        }
        let j = Complex64::new(0.0, 1.0);
        let n = rec.inputs[members[0]].len();
        for (a, &l) in members.iter().enumerate() {
            // dJ/dIx_l and dJ/dIy_l, packed as one spectrum.
            let scale = neg_xi * rec.phis[l];
            let c0 = bank.spectrum(0);
            let (lxl, lyl) = &lam[a];
            let mut d: Vec<Complex64> = (0..n)
                .map(|k| c0[k].conj() * (lxl[k] + lyl[k]) * (1.0 + j))
                .collect();
            for (b, _) in members.iter().enumerate().filter(|(b, _)| *b != a) {
                let h = a as i64 - b as i64;
                let ch = bank.spectrum(h);
                let (lxi, lyi) = &lam[b];
                for k in 0..n {
                    d[k] += ch[k].conj() * ((lxi[k] * 2.0 + lyi[k]) + j * (lxi[k] + lyi[k] * 2.0));
                }
            }
            fft::inverse(&mut d);
            let u = &rec.inputs[l];
            let ph = &rec.phases[l];
            let (gx, gy) = &mut grads[l];
            let ip2 = 2.0 * inv_p[l];
            for k in 0..n {
                gx[k] = gx[k] * Complex64::from_polar(1.0, -ph.x()[k]) + u.x()[k] * (scale * d[k].re * ip2);
                gy[k] = gy[k] * Complex64::from_polar(1.0, -ph.y()[k]) + u.y()[k] * (scale * d[k].im * ip2);
            }
        }
        // Tap gradient: correlations of phase sensitivities with intensities.
        for (a, _) in members.iter().enumerate() {
            let (lxi, lyi) = &lam[a];
            for (b, &l) in members.iter().enumerate() {
                let h = b as i64 - a as i64;
                let target = &mut acc[(h + n_ch - 1) as usize];
                let (ix, iy) = &ints[b];
                let w = neg_xi * rec.phis[l];
                if h == 0 {
                    for k in 0..n {
                        target[k] += (lxi[k] + lyi[k]).conj() * (ix[k] + iy[k]) * w;
                    }
                } else {
                    for k in 0..n {
                        target[k] += (lxi[k].conj() * (ix[k] * 2.0 + iy[k])
                            + lyi[k].conj() * (ix[k] + iy[k] * 2.0))
                            * w;
                    }
                }
            }
        }
    }
}
