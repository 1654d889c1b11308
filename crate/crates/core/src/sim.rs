//! Seeded synthesis of two-element drift-scan trigger frames.
//!
//! Spectra are sparse. In the default exceedance mode only bins whose noise
//! power clears a materialization threshold on both elements are drawn, plus
//! every bin touched by a source or RFI tone. The draw is exact for dual
//! element detection: for circular Gaussian noise the per-element power
//! `P/N` is Exp(1), so the number of bins above `θ_m` on both elements is
//! Binomial(N_band, e^{−2θ_m}) and, by memorylessness, each such power is
//! `θ_m + Exp(1)`. Dense mode materializes every band bin and is meant for
//! narrow verification bands.
//!
//! Each trigger draws from its own ChaCha8 stream `(seed, trigger index)`,
//! so frames can be produced in any order or in parallel.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, Normal, StandardNormal};
use thiserror::Error;

use crate::geometry::{
    self, ConfigError, GeometryError, InstrumentConfig, PhaseModel, RaTable, HOURS_PER_RADIAN,
};
use crate::math::{self, LN_2, PI, TAU};
use crate::Complex;

/// MJD quantum: 0.25 s.
pub const MJD_QUANTUM_S: f64 = 0.25;

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Largest band a dense-mode scenario may materialize per window.
pub const DENSE_BIN_LIMIT: u64 = 4_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("scenario has no MJD ranges")]
    EmptyRanges,
    #[error("MJD range {index} is empty, reversed, or overlaps its predecessor")]
    BadRange { index: usize },
    #[error("source {index}: {reason}")]
    BadSource { index: usize, reason: &'static str },
    #[error("rfi emitter {index}: {reason}")]
    BadRfi { index: usize, reason: &'static str },
    #[error("sun: {0}")]
    BadSun(&'static str),
    #[error("noise_power must be finite and positive")]
    BadNoisePower,
    #[error("materialization threshold must be finite and below the detection threshold")]
    BadMaterialization,
    #[error("dense mode over {0} bins exceeds the limit")]
    DenseTooLarge(u64),
    #[error("trigger index {index} out of range (run has {total})")]
    FrameIndex { index: u64, total: u64 },
}

/// Per-element value, east first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerElement<T> {
    pub east: T,
    pub west: T,
}

impl<T> PerElement<T> {
    pub fn new(east: T, west: T) -> Self {
        Self { east, west }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub ra_hr: f64,
    pub dec_deg: f64,
    pub tone_pairs: Vec<(f64, f64)>,
    pub snr_db_at_transit: f64,
    pub emission_probability_per_window: f64,
    /// `false` randomizes each pulse's east phase (extended or RFI-like emitter).
    pub phase_coherent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfiSpec {
    pub segment_center_hz: f64,
    pub bandwidth_hz: f64,
    /// Bursts per hour of observation; each window draws independently.
    pub burst_rate_per_hour: f64,
    pub burst_snr_db: f64,
    pub element_coupling: PerElement<f64>,
    /// Same carrier phase at both elements (plus a fixed offset) when set.
    pub correlated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SunSpec {
    pub ra_hr_by_mjd: RaTable,
    pub broadband_power_rise_db: f64,
    pub sidelobe_extent_hr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Materialize {
    /// Draw only bins above `threshold_db` on both elements.
    Exceedance { threshold_db: f64 },
    /// Draw every band bin.
    Dense,
}

impl Default for Materialize {
    fn default() -> Self {
        Materialize::Exceedance { threshold_db: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: InstrumentConfig,
    pub mjd_ranges: Vec<(f64, f64)>,
    pub seed: u64,
    pub sources: Vec<SourceSpec>,
    pub rfi: Vec<RfiSpec>,
    pub sun: Option<SunSpec>,
    pub noise_power: f64,
    pub materialize: Materialize,
}

impl Scenario {
    /// AWGN-only scenario over the given ranges.
    pub fn null(config: InstrumentConfig, mjd_ranges: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            config,
            mjd_ranges,
            seed,
            sources: Vec::new(),
            rfi: Vec::new(),
            sun: None,
            noise_power: 1.0,
            materialize: Materialize::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = &self.config;
        cfg.validate()?;
        if self.mjd_ranges.is_empty() {
            return Err(SimError::EmptyRanges);
        }
        let mut prev = f64::NEG_INFINITY;
        for (index, &(a, b)) in self.mjd_ranges.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b && a >= prev) {
                return Err(SimError::BadRange { index });
            }
            prev = b;
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(SimError::BadNoisePower);
        }
        match self.materialize {
            Materialize::Exceedance { threshold_db } => {
                if !(threshold_db.is_finite() && threshold_db <= cfg.snr_threshold_db) {
                    return Err(SimError::BadMaterialization);
                }
            }
            Materialize::Dense => {
                let n = cfg.band_bin_count();
                if n > DENSE_BIN_LIMIT {
                    return Err(SimError::DenseTooLarge(n));
                }
            }
        }
        let (dlo, dhi) = cfg.delta_f_range_hz;
        for (index, s) in self.sources.iter().enumerate() {
            let bad = |reason| SimError::BadSource { index, reason };
            if !(0.0..24.0).contains(&s.ra_hr) {
                return Err(bad("ra_hr outside [0, 24)"));
            }
            if !(s.dec_deg.is_finite() && s.dec_deg.abs() < 90.0) {
                return Err(bad("dec_deg outside (-90, 90)"));
            }
            if !s.snr_db_at_transit.is_finite() {
                return Err(bad("snr_db_at_transit must be finite"));
            }
            if !(0.0..=1.0).contains(&s.emission_probability_per_window) {
                return Err(bad("emission_probability_per_window outside [0, 1]"));
            }
            if s.tone_pairs.is_empty() {
                return Err(bad("tone_pairs is empty"));
            }
            for &(f1, f2) in &s.tone_pairs {
                if !(cfg.in_rf_ranges(f1) && cfg.in_rf_ranges(f2)) {
                    return Err(bad("tone outside rf_ranges"));
                }
                let df = (f2 - f1).abs();
                if !(df >= dlo && df <= dhi) {
                    return Err(bad("tone spacing outside delta_f_range"));
                }
            }
        }
        for (index, r) in self.rfi.iter().enumerate() {
            let bad = |reason| SimError::BadRfi { index, reason };
            if !(r.bandwidth_hz.is_finite() && r.bandwidth_hz >= cfg.fft_bin_hz) {
                return Err(bad("bandwidth_hz must be at least one FFT bin"));
            }
            if !(r.segment_center_hz.is_finite() && r.segment_center_hz > r.bandwidth_hz) {
                return Err(bad("segment_center_hz must be positive"));
            }
            if !(r.burst_rate_per_hour.is_finite() && r.burst_rate_per_hour >= 0.0) {
                return Err(bad("burst_rate_per_hour must be non-negative"));
            }
            if !r.burst_snr_db.is_finite() {
                return Err(bad("burst_snr_db must be finite"));
            }
            for c in [r.element_coupling.east, r.element_coupling.west] {
                if !(0.0..=1.0).contains(&c) {
                    return Err(bad("element_coupling outside [0, 1]"));
                }
            }
        }
        if let Some(sun) = &self.sun {
            if !(sun.broadband_power_rise_db.is_finite() && sun.broadband_power_rise_db >= 0.0) {
                return Err(SimError::BadSun("broadband_power_rise_db must be non-negative"));
            }
            if !(sun.sidelobe_extent_hr.is_finite() && sun.sidelobe_extent_hr > 0.0) {
                return Err(SimError::BadSun("sidelobe_extent_hr must be positive"));
            }
            let lo = self.mjd_ranges[0].0;
            let hi = self.mjd_ranges[self.mjd_ranges.len() - 1].1;
            if !sun.ra_hr_by_mjd.covers(lo, hi) {
                return Err(SimError::BadSun("ephemeris does not cover the run"));
            }
        }
        Ok(())
    }
}

/// One trigger's pointing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyPointing {
    pub index: u64,
    pub mjd: f64,
    pub beam_ra_hr: f64,
    pub dec_deg: f64,
}

/// One materialized FFT bin on both elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBin {
    pub bin: u64,
    pub east: Complex,
    pub west: Complex,
}

/// Both elements' spectra for one 0.27 s window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpectra {
    pub window_index: u32,
    /// Ascending by `bin`.
    pub bins: Vec<SpectralBin>,
    /// Known band noise floor; `None` means estimate it from `bins`.
    pub floor: Option<PerElement<f64>>,
    /// 954 Hz segment powers for segments holding a materialized bin, ascending.
    pub segment_power: Vec<(u64, PerElement<f64>)>,
    /// Wideband (continuum) power per element.
    pub wideband_power: PerElement<f64>,
    /// Wideband cross-correlation, already compensated at `wideband_tau_s`.
    pub wideband_vis: Complex,
    pub wideband_tau_s: f64,
}

impl WindowSpectra {
    pub fn segment_power_of(&self, segment: u64) -> Option<PerElement<f64>> {
        self.segment_power
            .binary_search_by_key(&segment, |s| s.0)
            .ok()
            .map(|i| self.segment_power[i].1)
    }
}

/// One 3.0 s digitizer trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerFrame {
    pub index: u64,
    pub mjd: f64,
    pub beam_ra_hr: f64,
    pub windows: Vec<WindowSpectra>,
}

/// Gaussian power beam.
pub fn beam_gain(offset_deg: f64, fwhm_deg: f64) -> f64 {
    let x = offset_deg / fwhm_deg;
    math::exp(-4.0 * LN_2 * x * x)
}

/// Quantize an MJD to 0.25 s.
pub fn quantize_mjd(mjd: f64) -> f64 {
    let q = MJD_QUANTUM_S / SECONDS_PER_DAY;
    math::round(mjd / q) * q
}

/// Fraction of wall time spent integrating.
pub fn duty_cycle(config: &InstrumentConfig) -> f64 {
    config.windows_per_trigger as f64 * config.integration_s / config.trigger_period_s
}

struct PreparedSource {
    phase: PhaseModel,
    ra_hr: f64,
    dec_deg: f64,
    tone_bins: Vec<(u64, u64)>,
    snr_linear: f64,
    p_emit: f64,
    coherent: bool,
}

struct PreparedRfi {
    first_bin: u64,
    n_bins: u64,
    p_burst: f64,
    power: PerElement<f64>,
    correlated: bool,
    offset_rad: f64,
}

/// Frame generator for one scenario.
pub struct Simulator {
    scenario: Scenario,
    band: Vec<(u64, u64)>,
    band_start: Vec<u64>,
    n_band: u64,
    range_first_frame: Vec<u64>,
    total_frames: u64,
    sources: Vec<PreparedSource>,
    rfi: Vec<PreparedRfi>,
    n_wide: f64,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let cfg = &scenario.config;
        let band = cfg.band_bin_ranges();
        let mut band_start = Vec::with_capacity(band.len());
        let mut n_band = 0;
        for &(a, b) in &band {
            band_start.push(n_band);
            n_band += b - a + 1;
        }
        let mut range_first_frame = Vec::with_capacity(scenario.mjd_ranges.len());
        let mut total_frames = 0u64;
        for &(a, b) in &scenario.mjd_ranges {
            range_first_frame.push(total_frames);
            total_frames += math::floor((b - a) * SECONDS_PER_DAY / cfg.trigger_period_s + 1e-9) as u64;
        }
        let windows_per_hour = 3600.0 / cfg.trigger_period_s * cfg.windows_per_trigger as f64;
        let sources = scenario
            .sources
            .iter()
            .map(|s| PreparedSource {
                phase: PhaseModel::new(cfg.baseline_m(), s.dec_deg, cfg.tau_inst_s),
                ra_hr: s.ra_hr,
                dec_deg: s.dec_deg,
                tone_bins: s
                    .tone_pairs
                    .iter()
                    .map(|&(f1, f2)| (cfg.bin_of_freq(f1), cfg.bin_of_freq(f2)))
                    .collect(),
                snr_linear: math::db_to_linear(s.snr_db_at_transit),
                p_emit: s.emission_probability_per_window,
                coherent: s.phase_coherent,
            })
            .collect();
        let rfi = scenario
            .rfi
            .iter()
            .map(|r| {
                let n_bins = (math::round(r.bandwidth_hz / cfg.fft_bin_hz) as u64).max(1);
                let center = cfg.bin_of_freq(r.segment_center_hz);
                let snr = math::db_to_linear(r.burst_snr_db) * scenario.noise_power;
                PreparedRfi {
                    first_bin: center - n_bins / 2,
                    n_bins,
                    p_burst: (r.burst_rate_per_hour / windows_per_hour).min(1.0),
                    power: PerElement::new(snr * r.element_coupling.east, snr * r.element_coupling.west),
                    correlated: r.correlated,
                    // fixed arrival offset, derived from the carrier so it is stable per emitter
                    offset_rad: geometry::wrap(TAU * r.segment_center_hz * 1e-9),
                }
            })
            .collect();
        let n_wide = cfg.wideband_hz / cfg.fft_bin_hz;
        Ok(Self {
            scenario,
            band,
            band_start,
            n_band,
            range_first_frame,
            total_frames,
            sources,
            rfi,
            n_wide,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &InstrumentConfig {
        &self.scenario.config
    }

    pub fn frame_count(&self) -> u64 {
        self.total_frames
    }

    pub fn band_bin_count(&self) -> u64 {
        self.n_band
    }

    /// Pointing of trigger `index`, without synthesizing spectra.
    pub fn pointing(&self, index: u64) -> Result<SkyPointing, SimError> {
        if index >= self.total_frames {
            return Err(SimError::FrameIndex {
                index,
                total: self.total_frames,
            });
        }
        let r = self.range_first_frame.partition_point(|&f| f <= index) - 1;
        let offset = index - self.range_first_frame[r];
        let cfg = &self.scenario.config;
        let start = self.scenario.mjd_ranges[r].0;
        let mjd = quantize_mjd(start + offset as f64 * cfg.trigger_period_s / SECONDS_PER_DAY);
        Ok(SkyPointing {
            index,
            mjd,
            beam_ra_hr: geometry::beam_ra_at(mjd, &cfg.lst_reference),
            dec_deg: cfg.dec_deg,
        })
    }

    pub fn pointings(&self) -> impl Iterator<Item = SkyPointing> + '_ {
        (0..self.total_frames).map(move |i| self.pointing(i).expect("index in range"))
    }

    /// All frames in trigger order.
    pub fn frames(&self) -> impl Iterator<Item = TriggerFrame> + '_ {
        (0..self.total_frames).map(move |i| self.frame(i).expect("index in range"))
    }

    /// Synthesize trigger `index`; independent of every other trigger.
    pub fn frame(&self, index: u64) -> Result<TriggerFrame, SimError> {
        let p = self.pointing(index)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
        rng.set_stream(index);
        let windows = (0..self.scenario.config.windows_per_trigger)
            .map(|w| self.synthesize_window(p.mjd, p.beam_ra_hr, w, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TriggerFrame {
            index,
            mjd: p.mjd,
            beam_ra_hr: p.beam_ra_hr,
            windows,
        })
    }

    /// Broadband rise factor and Sun hour angle at a pointing, if the Sun is in the sidelobes.
    pub fn sun_state(&self, mjd: f64, beam_ra_hr: f64) -> Result<Option<(f64, f64)>, SimError> {
        let Some(sun) = &self.scenario.sun else {
            return Ok(None);
        };
        let sun_ra = sun.ra_hr_by_mjd.ra_at(mjd)?;
        if geometry::ra_distance_hr(beam_ra_hr, sun_ra) <= sun.sidelobe_extent_hr {
            Ok(Some((
                math::db_to_linear(sun.broadband_power_rise_db),
                geometry::hour_angle_rad(beam_ra_hr, sun_ra),
            )))
        } else {
            Ok(None)
        }
    }

    fn band_bin(&self, flat: u64) -> u64 {
        let r = self.band_start.partition_point(|&s| s <= flat) - 1;
        self.band[r].0 + (flat - self.band_start[r])
    }

    /// Draw both elements' spectra for one window.
    pub fn synthesize_window<R: Rng + ?Sized>(
        &self,
        mjd: f64,
        beam_ra_hr: f64,
        window_index: u32,
        rng: &mut R,
    ) -> Result<WindowSpectra, SimError> {
        let cfg = &self.scenario.config;
        let noise = self.scenario.noise_power;
        let sun = self.sun_state(mjd, beam_ra_hr)?;
        let rise = sun.map_or(1.0, |s| s.0);
        let floor = noise * rise;

        // (bin, priority, east, west); higher priority wins a shared bin
        let mut drawn: Vec<(u64, u8, Complex, Complex)> = Vec::new();
        let dense = matches!(self.scenario.materialize, Materialize::Dense);
        match self.scenario.materialize {
            Materialize::Exceedance { threshold_db } => {
                let theta_m = math::db_to_linear(threshold_db);
                let p_both = math::exp(-2.0 * theta_m);
                let count = Binomial::new(self.n_band, p_both)
                    .expect("valid binomial")
                    .sample(rng);
                drawn.reserve(count as usize + 8);
                for _ in 0..count {
                    let bin = self.band_bin(rng.random_range(0..self.n_band));
                    let pe: f64 = Exp1.sample(rng);
                    let pw: f64 = Exp1.sample(rng);
                    let e = polar(floor * (theta_m + pe), uniform_phase(rng));
                    let w = polar(floor * (theta_m + pw), uniform_phase(rng));
                    drawn.push((bin, 0, e, w));
                }
            }
            Materialize::Dense => {
                drawn.reserve(self.n_band as usize);
                for &(a, b) in &self.band {
                    for bin in a..=b {
                        let e = complex_gaussian(floor, rng);
                        let w = complex_gaussian(floor, rng);
                        drawn.push((bin, 0, e, w));
                    }
                }
            }
        }

        // Extra above-floor power per touched bin, for segment sums in exceedance mode.
        let mut excess: Vec<(u64, PerElement<f64>)> = Vec::new();

        for src in &self.sources {
            if !rng.random_bool(src.p_emit) {
                continue;
            }
            let pair = rng.random_range(0..src.tone_bins.len());
            let h = geometry::hour_angle_rad(beam_ra_hr, src.ra_hr);
            let ra_off_deg = h * HOURS_PER_RADIAN * 15.0 * math::cos(cfg.dec_deg.to_radians());
            let dec_off = src.dec_deg - cfg.dec_deg;
            let offset = math::sqrt(ra_off_deg * ra_off_deg + dec_off * dec_off);
            let s = src.snr_linear * beam_gain(offset, cfg.element_fwhm_deg) * noise;
            let (b1, b2) = src.tone_bins[pair];
            for bin in [b1, b2] {
                let carrier = uniform_phase(rng);
                let ew = if src.coherent {
                    src.phase.ew_phase(cfg.bin_freq_hz(bin), h)
                } else {
                    uniform_phase(rng)
                };
                let e = polar(s, carrier + ew) + complex_gaussian(floor, rng);
                let w = polar(s, carrier) + complex_gaussian(floor, rng);
                drawn.push((bin, 1, e, w));
                excess.push((bin, PerElement::new(s, s)));
            }
        }

        for r in &self.rfi {
            if !rng.random_bool(r.p_burst) {
                continue;
            }
            for bin in r.first_bin..r.first_bin + r.n_bins {
                let carrier = uniform_phase(rng);
                let west_phase = if r.correlated {
                    carrier - r.offset_rad
                } else {
                    uniform_phase(rng)
                };
                let e = polar(r.power.east, carrier) + complex_gaussian(floor, rng);
                let w = polar(r.power.west, west_phase) + complex_gaussian(floor, rng);
                drawn.push((bin, 2, e, w));
                excess.push((bin, r.power));
            }
        }

        drawn.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        drawn.dedup_by_key(|d| d.0);
        let bins: Vec<SpectralBin> = drawn
            .into_iter()
            .map(|(bin, _, east, west)| SpectralBin { bin, east, west })
            .collect();

        let mut segment_power: Vec<(u64, PerElement<f64>)> = Vec::new();
        if dense {
            for b in &bins {
                let seg = cfg.segment_of_bin(b.bin);
                match segment_power.last_mut() {
                    Some((s, p)) if *s == seg => {
                        p.east += b.east.norm_sqr();
                        p.west += b.west.norm_sqr();
                    }
                    _ => segment_power.push((seg, PerElement::new(b.east.norm_sqr(), b.west.norm_sqr()))),
                }
            }
        } else {
            let mut segs: Vec<u64> = bins.iter().map(|b| cfg.segment_of_bin(b.bin)).collect();
            segs.dedup();
            for seg in segs {
                let n = cfg.bins_in_segment(seg).max(1) as f64;
                let gamma = Gamma::new(n, floor).expect("valid gamma");
                let mut p = PerElement::new(gamma.sample(rng), gamma.sample(rng));
                for (bin, x) in &excess {
                    if cfg.segment_of_bin(*bin) == seg {
                        p.east += x.east;
                        p.west += x.west;
                    }
                }
                segment_power.push((seg, p));
            }
        }

        let mean_wide = self.n_wide * floor;
        let sd_wide = math::sqrt(self.n_wide) * floor;
        let wide = Normal::new(mean_wide, sd_wide).expect("valid normal");
        let wideband_power = PerElement::new(wide.sample(rng).max(0.0), wide.sample(rng).max(0.0));
        let mut wideband_vis = complex_gaussian(self.n_wide * floor * floor, rng);
        if let Some((_, h_sun)) = sun {
            let excess_power = noise * (rise - 1.0);
            let tau_g = PhaseModel::from_config(cfg).geometric_delay(h_sun);
            wideband_vis += Complex::from_polar(
                self.n_wide * excess_power,
                TAU * cfg.ref_frequency_hz * tau_g,
            );
        }

        Ok(WindowSpectra {
            window_index,
            bins,
            floor: if dense {
                None
            } else {
                Some(PerElement::new(floor, floor))
            },
            segment_power,
            wideband_power,
            wideband_vis,
            wideband_tau_s: cfg.tau_inst_s,
        })
    }
}

/// Convenience: validate and build a simulator, failing on empty ranges.
pub fn generate_run(scenario: &Scenario) -> Result<Simulator, SimError> {
    Simulator::new(scenario.clone())
}

fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    PI - TAU * rng.random::<f64>()
}

/// Complex number with the given power and phase.
fn polar(power: f64, phase: f64) -> Complex {
    Complex::from_polar(math::sqrt(power), phase)
}

/// Circular complex Gaussian with mean power `power`.
fn complex_gaussian<R: Rng + ?Sized>(power: f64, rng: &mut R) -> Complex {
    let sd = math::sqrt(power / 2.0);
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(sd * re, sd * im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn narrow_config(lo: f64, hi: f64) -> InstrumentConfig {
        InstrumentConfig {
            rf_ranges_hz: alloc::vec![(lo, hi)],
            ..InstrumentConfig::default()
        }
    }

    #[test]
    fn beam_gain_examples() {
        assert_eq!(beam_gain(0.0, 5.3), 1.0);
        assert!((beam_gain(2.65, 5.3) - 0.5).abs() < 1e-12);
        assert!((beam_gain(5.3, 5.3) - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn one_day_frame_count() {
        let s = Scenario::null(InstrumentConfig::default(), alloc::vec![(60_500.0, 60_501.0)], 1);
        let sim = Simulator::new(s).unwrap();
        assert_eq!(sim.frame_count(), 28_800);
        let p0 = sim.pointing(0).unwrap();
        let p1 = sim.pointing(1).unwrap();
        assert!(((p1.mjd - p0.mjd) * 86_400.0 - 3.0).abs() < 1e-4);
        assert!(sim.pointing(28_800).is_err());
    }

    #[test]
    fn empty_ranges_rejected() {
        let s = Scenario::null(InstrumentConfig::default(), Vec::new(), 1);
        assert_eq!(Simulator::new(s).err(), Some(SimError::EmptyRanges));
    }

    #[test]
    fn mjd_is_quantized() {
        let s = Scenario::null(InstrumentConfig::default(), alloc::vec![(60_500.123_456_7, 60_500.2)], 1);
        let sim = Simulator::new(s).unwrap();
        for p in sim.pointings().take(50) {
            let secs = p.mjd * 86_400.0 / 0.25;
            assert!((secs - math::round(secs)).abs() < 1e-3);
        }
    }

    #[test]
    fn frames_are_deterministic_and_order_free() {
        let s = Scenario::null(InstrumentConfig::default(), alloc::vec![(60_500.0, 60_500.01)], 7);
        let sim = Simulator::new(s).unwrap();
        let a: Vec<_> = sim.frames().collect();
        let b = sim.frame(5).unwrap();
        assert_eq!(a[5], b);
        let sim2 = Simulator::new(sim.scenario().clone()).unwrap();
        assert_eq!(a, sim2.frames().collect::<Vec<_>>());
    }

    #[test]
    fn dense_awgn_power_is_exponential() {
        let mut s = Scenario::null(narrow_config(1398.0e6, 1398.4e6), alloc::vec![(60_500.0, 60_500.0001)], 3);
        s.materialize = Materialize::Dense;
        let sim = Simulator::new(s).unwrap();
        let f = sim.frame(0).unwrap();
        let mut p: Vec<f64> = f.windows[0].bins.iter().map(|b| b.east.norm_sqr()).collect();
        assert!(p.len() > 100_000);
        p.sort_by(f64::total_cmp);
        let n = p.len() as f64;
        let ks = p
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - math::exp(-x);
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn tone_power_scales_with_snr() {
        let cfg = narrow_config(1398.0e6, 1402.0e6);
        let mut s = Scenario::null(cfg.clone(), alloc::vec![(60_500.0, 60_500.05)], 11);
        let ra = geometry::beam_ra_at(60_500.0, &cfg.lst_reference);
        s.sources.push(SourceSpec {
            ra_hr: ra,
            dec_deg: cfg.dec_deg,
            tone_pairs: alloc::vec![(1399.0e6, 1400.0e6)],
            snr_db_at_transit: 20.0,
            emission_probability_per_window: 1.0,
            phase_coherent: true,
        });
        let sim = Simulator::new(s).unwrap();
        let bin = cfg.bin_of_freq(1399.0e6);
        let mut acc = 0.0;
        let mut n = 0.0;
        for i in 0..40 {
            let f = sim.frame(i).unwrap();
            for w in &f.windows {
                let b = w.bins.iter().find(|b| b.bin == bin).unwrap();
                acc += b.west.norm_sqr();
                n += 1.0;
            }
        }
        // gain ~1 within a few seconds of transit; mean power = S + N
        let mean = acc / n;
        assert!((mean - 101.0).abs() < 12.0, "{mean}");
    }
}
