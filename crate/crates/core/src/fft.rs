//! Thin wrappers around `rustfft` with a per-thread plan cache.
//!
//! Forward transforms are unnormalized, inverse transforms carry the `1/N`
//! factor, so `inverse(forward(x)) == x`.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn forward(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

pub fn inverse(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Signed frequency (Hz) of FFT bin `k` on an `n`-point grid at `fs`.
/// Bins `k >= n/2` map to negative frequencies, so the grid is `[-fs/2, fs/2)`.
#[inline]
pub fn bin_frequency(k: usize, n: usize, fs: f64) -> f64 {
    signed_bin(k, n) as f64 * fs / n as f64
}

/// Signed bin index in `[-n/2, n/2)`.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Angular frequencies (rad/s) of every bin.
pub fn angular_frequencies(n: usize, fs: f64) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * bin_frequency(k, n, fs)).collect()
}

/// Spectra of two real sequences from one complex FFT of `a + j b`.
///
/// Returns `(A, B)` with `A = FFT(a)` and `B = FFT(b)`.
pub fn split_real_pair(packed: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = packed.len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let z = packed[k];
        let zc = packed[(n - k) % n].conj();
        a.push((z + zc) * 0.5);
        b.push(Complex64::new(0.0, -0.5) * (z - zc));
    }
    (a, b)
}
