//! Float helpers for the `no_std` build.

use alloc::vec::Vec;

pub use core::f64::consts::{LN_10, LN_2, PI, TAU};

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sincos(x: f64) -> (f64, f64) {
    libm::sincos(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    powf(10.0, db / 10.0)
}

#[inline]
pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * log10(ratio)
}

/// Median of an unsorted slice; averages the middle pair for even lengths.
/// Returns `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Upper tail P(X >= m) of a Poisson(mean) variable.
pub fn poisson_sf(m: u64, mean: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let ln_pmf = |i: u64| -mean + i as f64 * ln(mean) - libm::lgamma(i as f64 + 1.0);
    if (m as f64) > mean {
        // Upper tail, summed upward from m until terms stop contributing.
        let mut tail = 0.0;
        let mut i = m;
        loop {
            let t = exp(ln_pmf(i));
            tail += t;
            if t <= tail * 1e-17 || (i as f64 > mean && t == 0.0) {
                break;
            }
            i += 1;
        }
        tail
    } else {
        let cdf: f64 = (0..m).map(|i| exp(ln_pmf(i))).sum();
        (1.0 - cdf).max(0.0)
    }
}

/// Smallest `m` with P(Poisson(mean) >= m) <= `prob`.
pub fn poisson_quantile_upper(mean: f64, prob: f64) -> u64 {
    let mut m = 0u64;
    while poisson_sf(m, mean) > prob {
        m += 1;
    }
    m
}

/// Normalized sinc, sin(πx)/(πx).
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        sin(PI * x) / (PI * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn poisson_tail_matches_direct_sum() {
        // P(X >= 3) for mean 1.5 = 1 - e^-1.5 (1 + 1.5 + 1.125)
        let direct = 1.0 - exp(-1.5) * (1.0 + 1.5 + 1.125);
        assert!((poisson_sf(3, 1.5) - direct).abs() < 1e-15);
        assert_eq!(poisson_sf(0, 2.0), 1.0);
        // Deep tail stays positive and tiny.
        let deep = poisson_sf(30, 2.0);
        assert!(deep > 0.0 && deep < 1e-20);
    }

    #[test]
    fn poisson_quantile_is_minimal() {
        let m = poisson_quantile_upper(1.76, 1e-5);
        assert!(poisson_sf(m, 1.76) <= 1e-5);
        assert!(poisson_sf(m - 1, 1.76) > 1e-5);
    }
}
