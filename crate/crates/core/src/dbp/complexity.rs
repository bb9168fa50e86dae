//! Real multiplications per 4D symbol per channel of each method, for
//! overlap-and-save processing with FFT size `N` and overlap ratio `eta`.

use num_rational::Ratio;

use super::Method;
use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityQuery {
    pub method: Method,
    pub n_steps: i64,
    pub fft_size: i64,
    pub eta: Rational,
    /// Samples per symbol at the DBP rate.
    pub samples_per_symbol: Rational,
    /// Filter half-length entering the ESSFM count.
    pub n_c: i64,
    /// Channels in the superchannel of interest.
    pub n_ch: i64,
}

/// Evaluates the per-method cost:
///
/// ```text
/// GVD only   eta n (8 log2 N + 8)
/// SSFM/OSSFM N_s eta n (8 log2 N + 21)
/// ESSFM      N_s eta n (8 log2 N + 21 + N_c)
/// CC-ESSFM   N_s eta n (12 log2 N + 20 + 4 N_ch)
/// ```
///
/// Full-field variants use the single-channel count of the aggregate field
/// at its own oversampling, shared among the `N_ch` channels it carries.
pub fn complexity(q: &ComplexityQuery) -> Result<Rational> {
    if q.fft_size <= 0 || !(q.fft_size as u64).is_power_of_two() {
        return Err(Error::config("FFT size must be a power of two"));
    }
    if q.n_steps < 1 || q.n_ch < 1 || q.n_c < 0 {
        return Err(Error::config("steps and channel count must be positive"));
    }
    if q.eta <= Rational::from_integer(1) || q.samples_per_symbol <= Rational::from_integer(0) {
        return Err(Error::config("eta must exceed 1 and samples per symbol must be positive"));
    }
    let log2n = i64::from(q.fft_size.trailing_zeros());
    let per_block = q.eta * q.samples_per_symbol;
    let ns = Rational::from_integer(q.n_steps);
    let int = Rational::from_integer;
    let count = match q.method {
        Method::GvdOnly => per_block * int(8 * log2n + 8),
        Method::Ssfm | Method::Ossfm => ns * per_block * int(8 * log2n + 21),
        Method::Essfm => ns * per_block * int(8 * log2n + 21 + q.n_c),
        Method::CcEssfm => ns * per_block * int(12 * log2n + 20 + 4 * q.n_ch),
        Method::FfSsfm | Method::FfOssfm => ns * per_block * int(8 * log2n + 21) / int(q.n_ch),
        Method::FfEssfm => ns * per_block * int(8 * log2n + 21 + q.n_c) / int(q.n_ch),
    };
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(method: Method) -> ComplexityQuery {
        ComplexityQuery {
            method,
            n_steps: 15,
            fft_size: 4096,
            eta: Rational::new(4, 3),
            samples_per_symbol: Rational::new(5, 4),
            n_c: 32,
            n_ch: 4,
        }
    }

    #[test]
    fn worked_cases() {
        // Hand evaluation: 15 * (4/3) * (5/4) = 25, log2 4096 = 12.
        assert_eq!(complexity(&query(Method::Ssfm)).unwrap(), Rational::from_integer(25 * 117));
        assert_eq!(complexity(&query(Method::Ssfm)).unwrap(), Rational::from_integer(2925));
        assert_eq!(complexity(&query(Method::Essfm)).unwrap(), Rational::from_integer(3725));
        assert_eq!(complexity(&query(Method::CcEssfm)).unwrap(), Rational::from_integer(4500));
        assert_eq!(complexity(&query(Method::Ossfm)).unwrap(), Rational::from_integer(2925));
        let gvd = complexity(&query(Method::GvdOnly)).unwrap();
        assert_eq!(gvd, Rational::new(5 * 104, 3));
    }

    #[test]
    fn per_step_ratios() {
        let s = complexity(&query(Method::Ssfm)).unwrap();
        let e = complexity(&query(Method::Essfm)).unwrap() / s;
        let c = complexity(&query(Method::CcEssfm)).unwrap() / s;
        assert_eq!(e, Rational::new(149, 117));
        assert_eq!(c, Rational::new(180, 117));
        let ef = *e.numer() as f64 / *e.denom() as f64;
        let cf = *c.numer() as f64 / *c.denom() as f64;
        assert!((ef - 1.3).abs() < 0.05 && (cf - 1.5).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut q = query(Method::Ssfm);
        q.fft_size = 3000;
        assert!(complexity(&q).is_err());
        let mut q = query(Method::Ssfm);
        q.eta = Rational::from_integer(1);
        assert!(complexity(&q).is_err());
    }
}
