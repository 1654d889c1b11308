//! Per-trigger detection and pulse-pair formation.
//!
//! A pulse is a 3.7 Hz bin whose SNR clears the threshold on both elements.
//! Pairs are simultaneous (same window, Δt = 0) pulses separated by Δf in
//! the configured range. Raw element phases are kept; phase residuals
//! against an RA hypothesis are a second-level concern.

use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{InstrumentConfig, PhaseModel};
use crate::math::{self, LN_10, LN_2, TAU};
use crate::sim::{PerElement, SpectralBin, TriggerFrame, WindowSpectra};
use crate::Complex;

/// Fewest bins a segment needs for a median floor.
pub const MIN_SEGMENT_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FirstLevelError {
    #[error("segment {segment} has {count} bins; at least {MIN_SEGMENT_BINS} needed for a noise floor")]
    TooFewBins { segment: u64, count: usize },
    #[error("window has no segment with enough bins to estimate a noise floor")]
    NoFloor,
    #[error("pulse SNR {snr_db:.3} dB is below the detection threshold")]
    BelowThreshold { snr_db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseDetection {
    pub mjd: f64,
    pub window_index: u32,
    pub freq_hz: f64,
    pub bin_index: u64,
    pub snr_db_east: f64,
    pub snr_db_west: f64,
    pub phase_east_rad: f64,
    pub phase_west_rad: f64,
    pub segment_index: u64,
}

impl PulseDetection {
    pub fn snr_linear(&self) -> PerElement<f64> {
        PerElement::new(
            math::db_to_linear(self.snr_db_east),
            math::db_to_linear(self.snr_db_west),
        )
    }

    /// Raw east-minus-west phase, unwrapped difference of the stored phases.
    pub fn raw_ew_phase(&self) -> f64 {
        self.phase_east_rad - self.phase_west_rad
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrLikelihood {
    pub pulse: [f64; 2],
    pub pair: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociatedMeasurements {
    /// Mean 954 Hz segment power over the two pulses' segments.
    pub east_power_954: f64,
    pub west_power_954: f64,
    pub east_power_wide: f64,
    pub west_power_wide: f64,
    pub visibility_mag_db_rel: f64,
    pub log10_df_likelihood: f64,
    pub log10_snr_likelihood_pulse: [f64; 2],
    pub log10_snr_likelihood_pair: f64,
    /// Segments to the nearest active RFI tag; `None` when no tag is active.
    pub rfi_spectral_margin_segments: Option<u64>,
    pub rf_low_freq_hz: f64,
    pub mjd: f64,
}

/// A Δt = 0 pulse pair; `pulses[0]` is the lower frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePairCandidate {
    /// Position in the merged, MJD-ordered candidate stream.
    pub id: u64,
    pub frame_index: u64,
    pub beam_ra_hr: f64,
    pub pulses: [PulseDetection; 2],
    pub delta_f_hz: f64,
    pub assoc: AssociatedMeasurements,
}

impl PulsePairCandidate {
    pub fn mjd(&self) -> f64 {
        self.pulses[0].mjd
    }

    pub fn window_index(&self) -> u32 {
        self.pulses[0].window_index
    }
}

/// Per-window visibility, kept for the high-visibility scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowVisibility {
    pub frame_index: u64,
    pub window_index: u32,
    pub mjd: f64,
    pub beam_ra_hr: f64,
    pub visibility: Complex,
}

impl WindowVisibility {
    pub fn magnitude_db_rel(&self) -> f64 {
        math::linear_to_db(self.visibility.norm())
    }
}

/// Everything first level extracts from one trigger.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameProducts {
    pub pulses: Vec<PulseDetection>,
    pub candidates: Vec<PulsePairCandidate>,
    pub visibilities: Vec<WindowVisibility>,
}

/// Median bin power per 954 Hz segment divided by ln 2, the mean of an
/// exponential with that median. `bins` must be ascending by bin index.
pub fn estimate_noise_floor(
    bins: &[(u64, f64)],
    config: &InstrumentConfig,
) -> Result<Vec<(u64, f64)>, FirstLevelError> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < bins.len() {
        let seg = config.segment_of_bin(bins[start].0);
        let mut end = start;
        while end < bins.len() && config.segment_of_bin(bins[end].0) == seg {
            end += 1;
        }
        let count = end - start;
        if count < MIN_SEGMENT_BINS {
            return Err(FirstLevelError::TooFewBins { segment: seg, count });
        }
        let powers: Vec<f64> = bins[start..end].iter().map(|b| b.1).collect();
        let med = math::median(&powers).expect("non-empty segment");
        out.push((seg, med / LN_2));
        start = end;
    }
    Ok(out)
}

/// Per-segment floors for a dense window. Short edge segments take the
/// floor of the nearest full segment.
fn dense_floors(window: &WindowSpectra, config: &InstrumentConfig) -> Result<Vec<(u64, PerElement<f64>)>, FirstLevelError> {
    let mut full = Vec::new();
    let mut short = Vec::new();
    let mut start = 0;
    let bins = &window.bins;
    while start < bins.len() {
        let seg = config.segment_of_bin(bins[start].bin);
        let mut end = start;
        while end < bins.len() && config.segment_of_bin(bins[end].bin) == seg {
            end += 1;
        }
        let slice = &bins[start..end];
        if slice.len() < MIN_SEGMENT_BINS {
            short.push(seg);
        } else {
            let east: Vec<(u64, f64)> = slice.iter().map(|b| (b.bin, b.east.norm_sqr())).collect();
            let west: Vec<(u64, f64)> = slice.iter().map(|b| (b.bin, b.west.norm_sqr())).collect();
            let fe = estimate_noise_floor(&east, config)?[0].1;
            let fw = estimate_noise_floor(&west, config)?[0].1;
            full.push((seg, PerElement::new(fe, fw)));
        }
        start = end;
    }
    if full.is_empty() {
        return Err(FirstLevelError::NoFloor);
    }
    for seg in short {
        let nearest = full
            .iter()
            .min_by_key(|(s, _)| s.abs_diff(seg))
            .expect("non-empty")
            .1;
        full.push((seg, nearest));
    }
    full.sort_by_key(|s| s.0);
    Ok(full)
}

/// Dual-element threshold detection for one window.
pub fn detect_window(
    window: &WindowSpectra,
    mjd: f64,
    config: &InstrumentConfig,
) -> Result<Vec<PulseDetection>, FirstLevelError> {
    let theta = config.snr_threshold_linear();
    let floors = match window.floor {
        Some(_) => Vec::new(),
        None => dense_floors(window, config)?,
    };
    let floor_of = |seg: u64| -> PerElement<f64> {
        match window.floor {
            Some(f) => f,
            None => {
                let i = floors.binary_search_by_key(&seg, |s| s.0).expect("floor for every segment");
                floors[i].1
            }
        }
    };
    let mut out = Vec::new();
    for b in &window.bins {
        let freq = config.bin_freq_hz(b.bin);
        if !config.in_rf_ranges(freq) {
            continue;
        }
        let seg = config.segment_of_bin(b.bin);
        let floor = floor_of(seg);
        let se = b.east.norm_sqr() / floor.east;
        let sw = b.west.norm_sqr() / floor.west;
        if se >= theta && sw >= theta {
            out.push(detection(b, seg, se, sw, freq, mjd, window.window_index));
        }
    }
    Ok(out)
}

fn detection(b: &SpectralBin, seg: u64, se: f64, sw: f64, freq: f64, mjd: f64, window_index: u32) -> PulseDetection {
    PulseDetection {
        mjd,
        window_index,
        freq_hz: freq,
        bin_index: b.bin,
        snr_db_east: math::linear_to_db(se),
        snr_db_west: math::linear_to_db(sw),
        phase_east_rad: b.east.arg(),
        phase_west_rad: b.west.arg(),
        segment_index: seg,
    }
}

/// All detections in a trigger, window by window.
pub fn detect_pulses(frame: &TriggerFrame, config: &InstrumentConfig) -> Result<Vec<PulseDetection>, FirstLevelError> {
    let mut out = Vec::new();
    for w in &frame.windows {
        out.extend(detect_window(w, frame.mjd, config)?);
    }
    Ok(out)
}

/// Index pairs `(i, j)`, `i` lower in frequency, of same-window pulses whose
/// spacing lies in `delta_f_range_hz`. Input must be ascending by frequency.
pub fn form_pairs(pulses: &[PulseDetection], config: &InstrumentConfig) -> Vec<(usize, usize)> {
    let (lo, hi) = config.delta_f_range_hz;
    let mut out = Vec::new();
    for i in 0..pulses.len() {
        for j in i + 1..pulses.len() {
            let df = pulses[j].freq_hz - pulses[i].freq_hz;
            if df > hi {
                break;
            }
            if df >= lo
                && pulses[i].window_index == pulses[j].window_index
                && config.in_rf_ranges(pulses[i].freq_hz)
                && config.in_rf_ranges(pulses[j].freq_hz)
            {
                out.push((i, j));
            }
        }
    }
    out
}

/// Composite log10 likelihoods of the pulse SNRs in excess of threshold.
///
/// Per pulse: `log10 P(X ≥ s_e) + log10 P(X ≥ s_w) − log10 P(X ≥ θ)²` for
/// unit-mean exponential `X`, i.e. `(2θ − s_e − s_w) / ln 10`.
pub fn snr_log_likelihoods(
    pulses: [&PulseDetection; 2],
    config: &InstrumentConfig,
) -> Result<SnrLikelihood, FirstLevelError> {
    let theta = config.snr_threshold_linear();
    let mut pulse = [0.0; 2];
    for (k, p) in pulses.iter().enumerate() {
        for db in [p.snr_db_east, p.snr_db_west] {
            // tolerate the dB round trip at the boundary
            if math::db_to_linear(db) < theta * (1.0 - 1e-12) {
                return Err(FirstLevelError::BelowThreshold { snr_db: db });
            }
        }
        let s = p.snr_linear();
        pulse[k] = (2.0 * theta - s.east - s.west) / LN_10;
    }
    Ok(SnrLikelihood {
        pulse,
        pair: pulse[0] + pulse[1],
    })
}

/// Whether a likelihood pair survives the configured thresholds.
pub fn snr_likelihood_kept(l: &SnrLikelihood, config: &InstrumentConfig) -> bool {
    l.pulse.iter().all(|&v| v >= config.log10_pulse_snr_like_threshold)
        && l.pair >= config.log10_pair_snr_like_threshold
}

/// AWGN single-pulse rate per Hz of spectrum: `e^{−2θ} / bin_hz`.
pub fn awgn_pulse_rate_per_hz(config: &InstrumentConfig) -> f64 {
    math::exp(-2.0 * config.snr_threshold_linear()) / config.fft_bin_hz
}

/// `log10(1 − e^{−2·rate·Δf})`; `−∞` for zero rate or zero spacing.
pub fn delta_f_log_likelihood(delta_f_hz: f64, pulse_rate_per_hz: f64) -> f64 {
    if !(delta_f_hz > 0.0 && pulse_rate_per_hz > 0.0) {
        return f64::NEG_INFINITY;
    }
    math::log10(-math::expm1(-2.0 * pulse_rate_per_hz * delta_f_hz))
}

/// FX cross-correlation `Σ X_e·conj(X_w)·e^{+i2πντ}` over the materialized
/// bins, plus the window's wideband term re-steered to `tau_int_s`.
///
/// The raw cross phase of a source is `2πν(τ_g − τ_INT)`, so steering with
/// the configured `τ_INT` leaves the geometric phase.
pub fn fx_visibility(window: &WindowSpectra, tau_int_s: f64, config: &InstrumentConfig) -> Complex {
    let narrow: Complex = window
        .bins
        .iter()
        .map(|b| {
            let nu = config.bin_freq_hz(b.bin);
            b.east * b.west.conj() * Complex::from_polar(1.0, TAU * nu * tau_int_s)
        })
        .sum();
    let dtau = tau_int_s - window.wideband_tau_s;
    let steer = Complex::from_polar(
        math::sinc(config.wideband_hz * dtau),
        TAU * config.ref_frequency_hz * dtau,
    );
    narrow + window.wideband_vis * steer
}

/// The same window with the two elements exchanged.
pub fn swap_elements(window: &WindowSpectra) -> WindowSpectra {
    WindowSpectra {
        window_index: window.window_index,
        bins: window
            .bins
            .iter()
            .map(|b| SpectralBin {
                bin: b.bin,
                east: b.west,
                west: b.east,
            })
            .collect(),
        floor: window.floor.map(|f| PerElement::new(f.west, f.east)),
        segment_power: window
            .segment_power
            .iter()
            .map(|(s, p)| (*s, PerElement::new(p.west, p.east)))
            .collect(),
        wideband_power: PerElement::new(window.wideband_power.west, window.wideband_power.east),
        wideband_vis: window.wideband_vis.conj(),
        wideband_tau_s: -window.wideband_tau_s,
    }
}

/// Fill the associated measurements for pulses `pair` of `window`.
pub fn measure_associated(
    pulses: [&PulseDetection; 2],
    window: &WindowSpectra,
    visibility: Complex,
    snr: &SnrLikelihood,
    config: &InstrumentConfig,
) -> AssociatedMeasurements {
    let mut seg = PerElement::new(0.0, 0.0);
    for p in pulses {
        let s = window.segment_power_of(p.segment_index).unwrap_or_default();
        seg.east += s.east / 2.0;
        seg.west += s.west / 2.0;
    }
    AssociatedMeasurements {
        east_power_954: seg.east,
        west_power_954: seg.west,
        east_power_wide: window.wideband_power.east,
        west_power_wide: window.wideband_power.west,
        visibility_mag_db_rel: math::linear_to_db(visibility.norm()),
        log10_df_likelihood: delta_f_log_likelihood(
            pulses[1].freq_hz - pulses[0].freq_hz,
            awgn_pulse_rate_per_hz(config),
        ),
        log10_snr_likelihood_pulse: snr.pulse,
        log10_snr_likelihood_pair: snr.pair,
        rfi_spectral_margin_segments: None,
        rf_low_freq_hz: pulses[0].freq_hz,
        mjd: pulses[0].mjd,
    }
}

/// Detect, pair, score and measure one trigger. Candidate ids are left at
/// zero for the caller's merge to assign.
pub fn process_frame(frame: &TriggerFrame, config: &InstrumentConfig) -> Result<FrameProducts, FirstLevelError> {
    let mut out = FrameProducts::default();
    for w in &frame.windows {
        let pulses = detect_window(w, frame.mjd, config)?;
        let vis = fx_visibility(w, config.tau_inst_s, config);
        out.visibilities.push(WindowVisibility {
            frame_index: frame.index,
            window_index: w.window_index,
            mjd: frame.mjd,
            beam_ra_hr: frame.beam_ra_hr,
            visibility: vis,
        });
        for (i, j) in form_pairs(&pulses, config) {
            let pair = [&pulses[i], &pulses[j]];
            let snr = snr_log_likelihoods(pair, config)?;
            if !snr_likelihood_kept(&snr, config) {
                continue;
            }
            out.candidates.push(PulsePairCandidate {
                id: 0,
                frame_index: frame.index,
                beam_ra_hr: frame.beam_ra_hr,
                pulses: [pulses[i], pulses[j]],
                delta_f_hz: pulses[j].freq_hz - pulses[i].freq_hz,
                assoc: measure_associated(pair, w, vis, &snr, config),
            });
        }
        out.pulses.extend(pulses);
    }
    Ok(out)
}

/// Expected phase step between two tones of a coherent pair.
pub fn pair_phase_step(delta_f_hz: f64, hour_angle_rad: f64, model: &PhaseModel) -> f64 {
    crate::geometry::wrap(TAU * delta_f_hz * (model.geometric_delay(hour_angle_rad) - model.tau_inst_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Materialize, Scenario, Simulator};

    fn pulse(freq: f64, db_e: f64, db_w: f64) -> PulseDetection {
        PulseDetection {
            mjd: 60_500.0,
            window_index: 0,
            freq_hz: freq,
            bin_index: 0,
            snr_db_east: db_e,
            snr_db_west: db_w,
            phase_east_rad: 0.0,
            phase_west_rad: 0.0,
            segment_index: 0,
        }
    }

    fn window_of(bins: Vec<SpectralBin>, floor: f64) -> WindowSpectra {
        WindowSpectra {
            window_index: 0,
            bins,
            floor: Some(PerElement::new(floor, floor)),
            segment_power: Vec::new(),
            wideband_power: PerElement::default(),
            wideband_vis: Complex::new(0.0, 0.0),
            wideband_tau_s: 0.0,
        }
    }

    fn bin_with_db(bin: u64, db_e: f64, db_w: f64) -> SpectralBin {
        SpectralBin {
            bin,
            east: Complex::new(math::sqrt(math::db_to_linear(db_e)), 0.0),
            west: Complex::new(math::sqrt(math::db_to_linear(db_w)), 0.0),
        }
    }

    #[test]
    fn dual_element_threshold() {
        let cfg = InstrumentConfig::default();
        let k = cfg.bin_of_freq(1400.0e6);
        let w = window_of(alloc::vec![bin_with_db(k, 8.6, 8.6), bin_with_db(k + 10, 9.0, 8.4)], 1.0);
        let d = detect_window(&w, 60_500.0, &cfg).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bin_index, k);
        assert!((d[0].snr_db_east - 8.6).abs() < 1e-9);
    }

    #[test]
    fn pairing_examples() {
        let cfg = InstrumentConfig::default();
        let two = [pulse(1400.0e6, 9.0, 9.0), pulse(1400.0e6 + 50.0, 9.0, 9.0)];
        assert_eq!(form_pairs(&two, &cfg), alloc::vec![(0, 1)]);
        let three = [
            pulse(1400.0e6, 9.0, 9.0),
            pulse(1401.0e6, 9.0, 9.0),
            pulse(1402.0e6, 9.0, 9.0),
        ];
        assert_eq!(form_pairs(&three, &cfg).len(), 3);
        let far = [pulse(1400.0e6, 9.0, 9.0), pulse(1408.0e6, 9.0, 9.0)];
        assert!(form_pairs(&far, &cfg).is_empty());
    }

    #[test]
    fn snr_likelihood_examples() {
        let cfg = InstrumentConfig::default();
        let at = pulse(1400.0e6, 8.5, 8.5);
        let l = snr_log_likelihoods([&at, &at], &cfg).unwrap();
        assert!(l.pulse[0].abs() < 1e-9 && l.pair.abs() < 1e-9);
        assert!(snr_likelihood_kept(&l, &cfg));

        let up = pulse(1400.0e6, 9.5, 9.5);
        let l = snr_log_likelihoods([&up, &at], &cfg).unwrap();
        // −2(10^0.95 − 10^0.85)/ln 10
        let oracle = -2.0 * (8.912_509_381 - 7.079_457_844) / 2.302_585_093;
        assert!((oracle - (-1.592_2f64)).abs() < 1e-3);
        assert!((l.pulse[0] - oracle).abs() < 1e-8, "{}", l.pulse[0]);
        assert!(snr_likelihood_kept(&l, &cfg));

        let extreme = SnrLikelihood {
            pulse: [-2.0, 0.0],
            pair: -2.0,
        };
        assert!(!snr_likelihood_kept(&extreme, &cfg));

        let low = pulse(1400.0e6, 8.4, 9.0);
        assert!(snr_log_likelihoods([&low, &at], &cfg).is_err());
    }

    #[test]
    fn delta_f_likelihood_examples() {
        let v = delta_f_log_likelihood(50.0, 1e-5);
        // log10(1 − e^{−1e−3}) = log10(9.995e−4)
        assert!((v - (-3.000_217)).abs() < 1e-5, "{v}");
        assert!(delta_f_log_likelihood(1e12, 1e-5).abs() < 1e-12);
        assert_eq!(delta_f_log_likelihood(0.0, 1e-5), f64::NEG_INFINITY);
        assert_eq!(delta_f_log_likelihood(50.0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn noise_floor_examples() {
        let cfg = InstrumentConfig::default();
        let k0 = cfg.bin_of_freq(1400.0e6 - 1400.0e6 % 954.0) + 1;
        let flat: Vec<(u64, f64)> = (0..100).map(|i| (k0 + i, 2.0)).collect();
        let f = estimate_noise_floor(&flat, &cfg).unwrap();
        assert_eq!(f.len(), 1);
        assert!((f[0].1 - 2.0 / LN_2).abs() < 1e-12);
        let few: Vec<(u64, f64)> = (0..10).map(|i| (k0 + i, 2.0)).collect();
        assert!(matches!(
            estimate_noise_floor(&few, &cfg),
            Err(FirstLevelError::TooFewBins { count: 10, .. })
        ));
    }

    #[test]
    fn visibility_autocorrelation_and_swap() {
        let cfg = InstrumentConfig::default();
        let k = cfg.bin_of_freq(1400.0e6);
        let bins: Vec<SpectralBin> = (0..5)
            .map(|i| SpectralBin {
                bin: k + i,
                east: Complex::new(1.0 + i as f64, -0.5),
                west: Complex::new(1.0 + i as f64, -0.5),
            })
            .collect();
        let total: f64 = bins.iter().map(|b| b.east.norm_sqr()).sum();
        let w = window_of(bins.clone(), 1.0);
        let v = fx_visibility(&w, 0.0, &cfg);
        assert!((v.re - total).abs() < 1e-9 && v.im.abs() < 1e-9);

        let mut w2 = window_of(
            bins.iter()
                .map(|b| SpectralBin {
                    bin: b.bin,
                    east: b.east,
                    west: b.east * Complex::new(0.3, 0.9),
                })
                .collect(),
            1.0,
        );
        w2.wideband_vis = Complex::new(3.0, -7.0);
        w2.wideband_tau_s = -82e-9;
        let tau = -60e-9;
        let a = fx_visibility(&w2, tau, &cfg);
        let b = fx_visibility(&swap_elements(&w2), -tau, &cfg);
        assert!((a - b.conj()).norm() < 1e-9 * a.norm());
    }

    #[test]
    fn dense_detection_uses_segment_floors() {
        let cfg = InstrumentConfig {
            rf_ranges_hz: alloc::vec![(1398.0e6, 1398.05e6)],
            ..InstrumentConfig::default()
        };
        let mut s = Scenario::null(cfg.clone(), alloc::vec![(60_500.0, 60_500.001)], 5);
        s.materialize = Materialize::Dense;
        let sim = Simulator::new(s).unwrap();
        let mut n = 0usize;
        let mut windows = 0usize;
        for f in sim.frames() {
            n += detect_pulses(&f, &cfg).unwrap().len();
            windows += f.windows.len();
        }
        let expected = sim.band_bin_count() as f64 * windows as f64 * math::exp(-2.0 * cfg.snr_threshold_linear());
        assert!((n as f64 - expected).abs() < 4.0 * math::sqrt(expected) + 2.0, "{n} vs {expected}");
    }
}
