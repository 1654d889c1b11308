#![allow(dead_code)]

use pulsepair_core::first_level::{AssociatedMeasurements, PulseDetection, PulsePairCandidate};
use pulsepair_core::geometry::{self, InstrumentConfig, PhaseModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const PI: f64 = std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pulse(mjd: f64, freq_hz: f64, ew_phase: f64, cfg: &InstrumentConfig) -> PulseDetection {
    let bin = cfg.bin_of_freq(freq_hz);
    PulseDetection {
        mjd,
        window_index: 0,
        freq_hz,
        bin_index: bin,
        snr_db_east: 9.0,
        snr_db_west: 9.0,
        phase_east_rad: ew_phase,
        phase_west_rad: 0.0,
        segment_index: cfg.segment_of_bin(bin),
    }
}

pub fn candidate(id: u64, mjd: f64, beam_ra_hr: f64, f: [f64; 2], ew: [f64; 2], cfg: &InstrumentConfig) -> PulsePairCandidate {
    PulsePairCandidate {
        id,
        frame_index: id,
        beam_ra_hr,
        pulses: [pulse(mjd, f[0], ew[0], cfg), pulse(mjd, f[1], ew[1], cfg)],
        delta_f_hz: f[1] - f[0],
        assoc: AssociatedMeasurements {
            east_power_954: 258.0,
            west_power_954: 258.0,
            east_power_wide: 1.0,
            west_power_wide: 1.0,
            visibility_mag_db_rel: 0.0,
            log10_df_likelihood: -3.0,
            log10_snr_likelihood_pulse: [0.0, 0.0],
            log10_snr_likelihood_pair: 0.0,
            rfi_spectral_margin_segments: None,
            rf_low_freq_hz: f[0],
            mjd,
        },
    }
}

/// AWGN-like candidates: uniform beam RA, uniform phases, tones anywhere
/// in the lower RF range.
pub fn null_candidates(n: usize, first_id: u64, seed: u64, cfg: &InstrumentConfig) -> Vec<PulsePairCandidate> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let f1 = r.random_range(1398.0e6..1417.0e6);
            let f2 = f1 + r.random_range(1.0e3..7.0e6);
            let ew = [r.random_range(-PI..PI), r.random_range(-PI..PI)];
            let ra = r.random_range(0.0..24.0);
            candidate(first_id + i as u64, 60_500.0 + i as f64 * 1e-5, ra, [f1, f2], ew, cfg)
        })
        .collect()
}

/// Phase-coherent pairs from a source at `source_ra_hr`, seen with beam
/// centres spread over `±spread_bins` and Gaussian phase scatter `sigma`.
pub fn coherent_candidates(
    n: usize,
    first_id: u64,
    seed: u64,
    source_ra_hr: f64,
    spread_bins: f64,
    sigma: f64,
    cfg: &InstrumentConfig,
) -> Vec<PulsePairCandidate> {
    let model = PhaseModel::from_config(cfg);
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let f1 = r.random_range(1398.05e6..1399.25e6);
            let f = [f1, f1 + 1.6e6];
            let beam = geometry::wrap_ra(source_ra_hr + r.random_range(-spread_bins..spread_bins) * cfg.ra_bin_hr());
            let h = geometry::hour_angle_rad(beam, source_ra_hr);
            let ew = f.map(|nu| model.ew_phase(nu, h) + sigma * gauss(&mut r));
            candidate(first_id + i as u64, 60_501.0 + i as f64 * 1e-5, beam, f, ew, cfg)
        })
        .collect()
}

/// Pairs concentrated around one beam RA with random phases.
pub fn incoherent_candidates(n: usize, first_id: u64, seed: u64, ra_hr: f64, spread_bins: f64, cfg: &InstrumentConfig) -> Vec<PulsePairCandidate> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let f1 = r.random_range(1398.05e6..1399.25e6);
            let beam = geometry::wrap_ra(ra_hr + r.random_range(-spread_bins..spread_bins) * cfg.ra_bin_hr());
            let ew = [r.random_range(-PI..PI), r.random_range(-PI..PI)];
            candidate(first_id + i as u64, 60_502.0 + i as f64 * 1e-5, beam, [f1, f1 + 1.6e6], ew, cfg)
        })
        .collect()
}

pub fn gauss<R: Rng>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

/// Kolmogorov-Smirnov distance of `xs` from Exponential(mean).
pub fn ks_exponential(mut xs: Vec<f64>, mean: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-x / mean).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}
