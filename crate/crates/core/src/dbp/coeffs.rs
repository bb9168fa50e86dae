//! Symmetric intensity-filter coefficients of the coupled-channel step.

use crate::error::{Error, Result};

/// Free parameters of the MIMO intensity filter.
///
/// `C_0[m]` is stored for `m = 0..=n_c0` and mirrored (`C_0[-m] = C_0[m]`);
/// `C_h[m]` for `h = 1..n_ch` is stored for `m = -n_c..=n_c`, and the
/// negative-`h` filters follow from `C_{-h}[-m] = C_h[m]`. Any value read
/// through [`CoefficientSet::get`] therefore satisfies the symmetry exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    n_ch: usize,
    n_c0: usize,
    n_c: usize,
    c0: Vec<f64>,
    cross: Vec<Vec<f64>>,
}

impl CoefficientSet {
    pub fn zeros(n_ch: usize, n_c0: usize, n_c: usize) -> Result<Self> {
        if n_ch == 0 {
            return Err(Error::config("coefficient set needs at least one channel"));
        }
        Ok(Self {
            n_ch,
            n_c0,
            n_c,
            c0: vec![0.0; n_c0 + 1],
            cross: vec![vec![0.0; 2 * n_c + 1]; n_ch - 1],
        })
    }

    /// `C_0` = unit impulse, cross terms zero: the plain split-step phase.
    pub fn impulse(n_ch: usize, n_c0: usize, n_c: usize) -> Result<Self> {
        let mut c = Self::zeros(n_ch, n_c0, n_c)?;
        c.c0[0] = 1.0;
        Ok(c)
    }

    pub fn n_ch(&self) -> usize {
        self.n_ch
    }

    pub fn n_c0(&self) -> usize {
        self.n_c0
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    /// Half-length of the tap window of `C_h`.
    pub fn half_length(&self, h: i64) -> usize {
        if h == 0 {
            self.n_c0
        } else {
            self.n_c
        }
    }

    /// Materialized `C_h[m]`; zero outside the tap window.
    pub fn get(&self, h: i64, m: i64) -> f64 {
        let nh = self.n_ch as i64;
        if h.abs() >= nh {
            return 0.0;
        }
        if h < 0 {
            return self.get(-h, -m);
        }
        let half = self.half_length(h) as i64;
        if m.abs() > half {
            return 0.0;
        }
        if h == 0 {
            self.c0[m.unsigned_abs() as usize]
        } else {
            self.cross[h as usize - 1][(m + half) as usize]
        }
    }

    /// Free parameters of `C_h`, `h >= 0`: `m = 0..=n_c0` for `h = 0`,
    /// `m = -n_c..=n_c` otherwise.
    pub fn params(&self, h: usize) -> &[f64] {
        if h == 0 {
            &self.c0
        } else {
            &self.cross[h - 1]
        }
    }

    pub fn params_mut(&mut self, h: usize) -> &mut [f64] {
        if h == 0 {
            &mut self.c0
        } else {
            &mut self.cross[h - 1]
        }
    }

    /// Tap index `m` of free parameter `j` of `C_h`.
    pub fn param_tap(&self, h: usize, j: usize) -> i64 {
        if h == 0 {
            j as i64
        } else {
            j as i64 - self.n_c as i64
        }
    }

    pub fn n_params(&self, h: usize) -> usize {
        self.params(h).len()
    }

    /// Materialized taps of `C_h` for `m = -half..=half`.
    pub fn taps(&self, h: i64) -> Vec<f64> {
        let half = self.half_length(h) as i64;
        (-half..=half).map(|m| self.get(h, m)).collect()
    }

    /// Maps a gradient with respect to materialized taps, `grad(h, m)` for
    /// every `h` in `-(n_ch-1)..n_ch`, onto the free parameters of `C_h`.
    pub fn free_gradient(&self, h: usize, grad: impl Fn(i64, i64) -> f64) -> Vec<f64> {
        let hh = h as i64;
        (0..self.n_params(h))
            .map(|j| {
                let m = self.param_tap(h, j);
                if h == 0 {
                    if m == 0 {
                        grad(0, 0)
                    } else {
                        grad(0, m) + grad(0, -m)
                    }
                } else {
                    grad(hh, m) + grad(-hh, -m)
                }
            })
            .collect()
    }

    /// Copy with a single-channel structure holding only `C_0`.
    pub fn self_only(&self) -> Self {
        Self {
            n_ch: 1,
            n_c0: self.n_c0,
            n_c: self.n_c,
            c0: self.c0.clone(),
            cross: Vec::new(),
        }
    }
}
