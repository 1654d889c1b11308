//! Time-series channelizer, used to check the bin conventions the
//! simulator assumes.
//!
//! Spectra are unnormalized DFTs of real samples: a tone `A cos(2πf t + φ)`
//! centred on bin `k` gives `|X_k|² = N²A²/4` and `arg X_k = φ`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelizeError {
    #[error("{len} samples do not make one {bin_hz} Hz integration at {sample_rate} Hz (need {expected})")]
    LengthMismatch {
        len: usize,
        expected: usize,
        sample_rate: f64,
        bin_hz: f64,
    },
    #[error("sample rate and bin width must be positive and finite")]
    BadRate,
}

/// Samples in one integration: `sample_rate / bin_hz`, rounded.
pub fn integration_length(sample_rate: f64, bin_hz: f64) -> Result<usize, ChannelizeError> {
    if !(sample_rate.is_finite() && bin_hz.is_finite() && sample_rate > 0.0 && bin_hz > 0.0) {
        return Err(ChannelizeError::BadRate);
    }
    Ok((sample_rate / bin_hz).round() as usize)
}

/// Non-negative-frequency bins `0 ..= N/2` of a real series.
pub fn channelize(samples: &[f64], sample_rate: f64, bin_hz: f64) -> Result<Vec<Complex64>, ChannelizeError> {
    let expected = integration_length(sample_rate, bin_hz)?;
    if samples.len() != expected || expected == 0 {
        return Err(ChannelizeError::LengthMismatch {
            len: samples.len(),
            expected,
            sample_rate,
            bin_hz,
        });
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.truncate(expected / 2 + 1);
    Ok(buf)
}

/// `A cos(2πf t + φ)` sampled at `sample_rate`.
pub fn tone(n: usize, sample_rate: f64, freq_hz: f64, amplitude: f64, phase_rad: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amplitude * (std::f64::consts::TAU * freq_hz * i as f64 / sample_rate + phase_rad).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_checked() {
        assert!(matches!(
            channelize(&[0.0; 10], 100.0, 3.7),
            Err(ChannelizeError::LengthMismatch { expected: 27, .. })
        ));
        assert!(channelize(&[0.0; 10], 0.0, 3.7).is_err());
    }
}
