//! Angles, delays and right-ascension binning for an east-west baseline.
//!
//! Sign conventions, fixed for the whole crate:
//!
//! - Hour angle `H = LST - RA`, positive west of the meridian.
//! - The geometric delay `τ_g = (B/c)·cos(δ)·sin(H)` is the extra path to
//!   the east element; it is positive once a source has crossed the meridian.
//! - The raw east-minus-west phase of a point source at frequency `ν` is
//!   `2πν(τ_g − τ_INT)`, where `τ_INT` is the instrument delay setting
//!   (−82 ns by default). Phase residuals `Δ_EWφ` subtract this expectation.

use alloc::vec::Vec;

use thiserror::Error;

use crate::math::{self, PI, TAU};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ratio of a mean solar day to a sidereal day.
pub const SIDEREAL_RATE: f64 = 1.002_737_909_4;

/// Hours of RA per radian.
pub const HOURS_PER_RADIAN: f64 = 12.0 / PI;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("declination {0}° is singular for an east-west baseline")]
    SingularDeclination(f64),
    #[error("right ascension {0} hr outside [0, 24)")]
    RaOutOfRange(f64),
    #[error("ephemeris table rows must be finite with strictly ascending MJD")]
    BadEphemeris,
    #[error("ephemeris table does not cover MJD {0}")]
    EphemerisGap(f64),
}

/// A config key that failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid value for `{key}`: {reason}")]
pub struct ConfigError {
    pub key: &'static str,
    pub reason: &'static str,
}

impl ConfigError {
    fn new(key: &'static str, reason: &'static str) -> Self {
        Self { key, reason }
    }
}

/// Calibration pair tying MJD to local sidereal time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstReference {
    pub mjd0: f64,
    pub lst0_hr: f64,
}

impl Default for LstReference {
    fn default() -> Self {
        Self {
            mjd0: 60_498.730,
            lst0_hr: 0.0,
        }
    }
}

/// Every instrument dial from the measurement-settings blocks.
///
/// Frequencies are in Hz throughout; `rf_ranges_hz` lists closed
/// `[low, high]` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentConfig {
    pub baseline_wavelengths: f64,
    pub ref_frequency_hz: f64,
    pub dec_deg: f64,
    pub element_fwhm_deg: f64,
    pub tau_inst_s: f64,
    pub ra_bins_per_day: u32,
    pub fft_bin_hz: f64,
    pub integration_s: f64,
    pub trigger_period_s: f64,
    pub windows_per_trigger: u32,
    pub rf_ranges_hz: Vec<(f64, f64)>,
    pub delta_f_range_hz: (f64, f64),
    pub snr_threshold_db: f64,
    pub ew_phase_filter_rad: f64,
    pub ddf_phase_filter_rad: f64,
    pub rfi_margin_segments: u32,
    pub rfi_segment_hz: f64,
    pub log10_pulse_snr_like_threshold: f64,
    pub log10_pair_snr_like_threshold: f64,
    pub baseline_azimuth_deg: f64,
    /// Bandwidth of the FX correlator / continuum measurement.
    pub wideband_hz: f64,
    pub lst_reference: LstReference,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        Self {
            baseline_wavelengths: 33.0,
            ref_frequency_hz: 1.425e9,
            dec_deg: -4.3,
            element_fwhm_deg: 5.3,
            tau_inst_s: -82.0e-9,
            ra_bins_per_day: 3200,
            fft_bin_hz: 3.7,
            integration_s: 0.27,
            trigger_period_s: 3.0,
            windows_per_trigger: 2,
            rf_ranges_hz: alloc::vec![(1398.0e6, 1424.0e6), (1426.0e6, 1451.0e6)],
            delta_f_range_hz: (1.0, 7.0e6),
            snr_threshold_db: 8.5,
            ew_phase_filter_rad: 0.10,
            ddf_phase_filter_rad: 0.80,
            rfi_margin_segments: 500,
            rfi_segment_hz: 954.0,
            log10_pulse_snr_like_threshold: -1.60,
            log10_pair_snr_like_threshold: -2.70,
            baseline_azimuth_deg: 180.0,
            wideband_hz: 50.0e6,
            lst_reference: LstReference::default(),
        }
    }
}

impl InstrumentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64, key: &'static str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(key, "must be finite and positive"))
            }
        };
        positive(self.baseline_wavelengths, "baseline_wavelengths")?;
        positive(self.ref_frequency_hz, "ref_frequency_hz")?;
        positive(self.element_fwhm_deg, "element_fwhm_deg")?;
        positive(self.fft_bin_hz, "fft_bin_hz")?;
        positive(self.integration_s, "integration_s")?;
        positive(self.trigger_period_s, "trigger_period_s")?;
        positive(self.ew_phase_filter_rad, "ew_phase_filter_rad")?;
        positive(self.ddf_phase_filter_rad, "ddf_phase_filter_rad")?;
        positive(self.rfi_segment_hz, "rfi_segment_hz")?;
        positive(self.wideband_hz, "wideband_hz")?;
        if !(self.dec_deg.is_finite() && self.dec_deg.abs() < 90.0) {
            return Err(ConfigError::new("dec_deg", "must lie strictly inside (-90, 90)"));
        }
        if !self.tau_inst_s.is_finite() {
            return Err(ConfigError::new("tau_inst_s", "must be finite"));
        }
        if self.ra_bins_per_day == 0 {
            return Err(ConfigError::new("ra_bins_per_day", "must be at least 1"));
        }
        if (self.integration_s * self.fft_bin_hz - 1.0).abs() > 0.01 {
            return Err(ConfigError::new(
                "integration_s",
                "integration_s × fft_bin_hz must equal 1 within 1%",
            ));
        }
        if self.windows_per_trigger == 0
            || self.windows_per_trigger as f64 * self.integration_s > self.trigger_period_s
        {
            return Err(ConfigError::new(
                "windows_per_trigger",
                "windows must fit inside one trigger period",
            ));
        }
        if self.rf_ranges_hz.is_empty() {
            return Err(ConfigError::new("rf_ranges_hz", "at least one range required"));
        }
        let mut prev_high = f64::NEG_INFINITY;
        for &(lo, hi) in &self.rf_ranges_hz {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(ConfigError::new("rf_ranges_hz", "each range needs 0 < low < high"));
            }
            if lo <= prev_high {
                return Err(ConfigError::new("rf_ranges_hz", "ranges must be disjoint and ascending"));
            }
            prev_high = hi;
        }
        let (dlo, dhi) = self.delta_f_range_hz;
        if !(dlo.is_finite() && dhi.is_finite() && dlo > 0.0 && dlo <= dhi) {
            return Err(ConfigError::new("delta_f_range_hz", "needs 0 < low <= high"));
        }
        if self.rfi_segment_hz < self.fft_bin_hz {
            return Err(ConfigError::new("rfi_segment_hz", "must span at least one FFT bin"));
        }
        for (v, key) in [
            (self.snr_threshold_db, "snr_threshold_db"),
            (self.log10_pulse_snr_like_threshold, "log10_pulse_snr_like_threshold"),
            (self.log10_pair_snr_like_threshold, "log10_pair_snr_like_threshold"),
            (self.baseline_azimuth_deg, "baseline_azimuth_deg"),
            (self.lst_reference.mjd0, "lst_reference.mjd0"),
            (self.lst_reference.lst0_hr, "lst_reference.lst0_hr"),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::new(key, "must be finite"));
            }
        }
        Ok(())
    }

    /// RA bin width in hours.
    pub fn ra_bin_hr(&self) -> f64 {
        24.0 / self.ra_bins_per_day as f64
    }

    /// Physical baseline length in metres.
    pub fn baseline_m(&self) -> f64 {
        self.baseline_wavelengths * SPEED_OF_LIGHT / self.ref_frequency_hz
    }

    /// SNR threshold as a linear power ratio.
    pub fn snr_threshold_linear(&self) -> f64 {
        math::db_to_linear(self.snr_threshold_db)
    }

    pub fn bin_freq_hz(&self, bin: u64) -> f64 {
        bin as f64 * self.fft_bin_hz
    }

    pub fn bin_of_freq(&self, freq_hz: f64) -> u64 {
        math::round(freq_hz / self.fft_bin_hz) as u64
    }

    pub fn segment_of_freq(&self, freq_hz: f64) -> u64 {
        math::floor(freq_hz / self.rfi_segment_hz) as u64
    }

    pub fn segment_of_bin(&self, bin: u64) -> u64 {
        self.segment_of_freq(self.bin_freq_hz(bin))
    }

    /// Inclusive FFT-bin ranges whose centre frequencies lie in `rf_ranges_hz`.
    pub fn band_bin_ranges(&self) -> Vec<(u64, u64)> {
        self.rf_ranges_hz
            .iter()
            .map(|&(lo, hi)| {
                let first = math::ceil(lo / self.fft_bin_hz) as u64;
                let last = math::floor(hi / self.fft_bin_hz) as u64;
                (first, last)
            })
            .filter(|(a, b)| a <= b)
            .collect()
    }

    /// Number of FFT bins inside `rf_ranges_hz`.
    pub fn band_bin_count(&self) -> u64 {
        self.band_bin_ranges().iter().map(|(a, b)| b - a + 1).sum()
    }

    /// Number of FFT bins whose centre falls in 954 Hz segment `segment`.
    pub fn bins_in_segment(&self, segment: u64) -> u64 {
        let lo = segment as f64 * self.rfi_segment_hz;
        let hi = lo + self.rfi_segment_hz;
        let first = math::ceil(lo / self.fft_bin_hz) as u64;
        // half-open on the upper edge
        let mut last_excl = math::ceil(hi / self.fft_bin_hz) as u64;
        if last_excl < first {
            last_excl = first;
        }
        last_excl - first
    }

    pub fn in_rf_ranges(&self, freq_hz: f64) -> bool {
        self.rf_ranges_hz
            .iter()
            .any(|&(lo, hi)| freq_hz >= lo && freq_hz <= hi)
    }

    /// Duration of one measurement window, seconds of MJD.
    pub fn window_days(&self) -> f64 {
        self.integration_s / 86_400.0
    }
}

/// Wrap an angle into (−π, π].
pub fn wrap_phase(angle_rad: f64) -> Result<f64, GeometryError> {
    if !angle_rad.is_finite() {
        return Err(GeometryError::NonFinite("angle_rad"));
    }
    Ok(wrap(angle_rad))
}

/// Infallible wrap for values already known to be finite.
#[inline]
pub(crate) fn wrap(angle_rad: f64) -> f64 {
    let mut r = angle_rad - TAU * math::floor((angle_rad + PI) / TAU);
    // r is in [−π, π); move the closed end to +π
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// Geometric delay of the east element relative to the west element.
///
/// Valid for drift-scan geometry, `|H| < π/2`.
pub fn geometric_delay(hour_angle_rad: f64, dec_deg: f64, baseline_m: f64) -> Result<f64, GeometryError> {
    if !hour_angle_rad.is_finite() {
        return Err(GeometryError::NonFinite("hour_angle_rad"));
    }
    if !dec_deg.is_finite() {
        return Err(GeometryError::NonFinite("dec_deg"));
    }
    if !baseline_m.is_finite() {
        return Err(GeometryError::NonFinite("baseline_m"));
    }
    Ok(baseline_m / SPEED_OF_LIGHT * math::cos(dec_deg.to_radians()) * math::sin(hour_angle_rad))
}

/// RA interval producing one wavelength of differential path delay.
pub fn fringe_period_ra_hr(baseline_wavelengths: f64, dec_deg: f64) -> Result<f64, GeometryError> {
    if !(baseline_wavelengths.is_finite() && dec_deg.is_finite()) {
        return Err(GeometryError::NonFinite("fringe period inputs"));
    }
    if baseline_wavelengths <= 0.0 {
        return Err(GeometryError::NonPositive("baseline_wavelengths"));
    }
    let cos_dec = math::cos(dec_deg.to_radians());
    if dec_deg.abs() >= 90.0 || cos_dec.abs() < 1e-12 {
        return Err(GeometryError::SingularDeclination(dec_deg));
    }
    Ok(HOURS_PER_RADIAN / (baseline_wavelengths * cos_dec))
}

/// Alias offset quantized to whole RA bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasOffset {
    pub bins: u32,
    /// Unrounded fringe period / bin width.
    pub ratio: f64,
}

/// Quantize the fringe period to an integer bin offset (ceiling, with a
/// small tolerance so exact multiples are not pushed up by rounding).
pub fn alias_offset_bins(fringe_period_hr: f64, ra_bin_hr: f64) -> Result<AliasOffset, GeometryError> {
    if !(fringe_period_hr.is_finite() && ra_bin_hr.is_finite()) {
        return Err(GeometryError::NonFinite("alias inputs"));
    }
    if fringe_period_hr <= 0.0 {
        return Err(GeometryError::NonPositive("fringe_period_hr"));
    }
    if ra_bin_hr <= 0.0 {
        return Err(GeometryError::NonPositive("ra_bin_hr"));
    }
    let ratio = fringe_period_hr / ra_bin_hr;
    let bins = math::ceil(ratio - 1e-9).max(1.0) as u32;
    Ok(AliasOffset { bins, ratio })
}

/// Alias offset for a config's baseline, declination and bin width.
pub fn config_alias_offset(config: &InstrumentConfig) -> Result<AliasOffset, GeometryError> {
    let period = fringe_period_ra_hr(config.baseline_wavelengths, config.dec_deg)?;
    alias_offset_bins(period, config.ra_bin_hr())
}

/// RA bin index `floor(ra / Δ)`.
pub fn ra_bin_of(ra_hr: f64, config: &InstrumentConfig) -> Result<u32, GeometryError> {
    if !ra_hr.is_finite() {
        return Err(GeometryError::NonFinite("ra_hr"));
    }
    if !(0.0..24.0).contains(&ra_hr) {
        return Err(GeometryError::RaOutOfRange(ra_hr));
    }
    let k = math::floor(ra_hr / config.ra_bin_hr()) as u32;
    Ok(k.min(config.ra_bins_per_day - 1))
}

/// Centre RA of bin `k`.
pub fn bin_center(k: u32, config: &InstrumentConfig) -> f64 {
    (k as f64 + 0.5) * config.ra_bin_hr()
}

/// Wrap an RA (or RA difference) into [0, 24).
pub fn wrap_ra(ra_hr: f64) -> f64 {
    let r = ra_hr - 24.0 * math::floor(ra_hr / 24.0);
    if r >= 24.0 {
        0.0
    } else {
        r
    }
}

/// Signed RA difference `a − b` wrapped into [−12, 12).
pub fn ra_difference_hr(a: f64, b: f64) -> f64 {
    wrap_ra(a - b + 12.0) - 12.0
}

/// Circular RA separation in hours, in [0, 12].
pub fn ra_distance_hr(a: f64, b: f64) -> f64 {
    ra_difference_hr(a, b).abs()
}

/// Hour angle, radians, of a source at `source_ra_hr` when the meridian
/// beam points at `beam_ra_hr`.
pub fn hour_angle_rad(beam_ra_hr: f64, source_ra_hr: f64) -> f64 {
    ra_difference_hr(beam_ra_hr, source_ra_hr) / HOURS_PER_RADIAN
}

/// Beam (meridian) RA at `mjd`: `(lst0 + (mjd − mjd0)·24·1.0027379094) mod 24`.
pub fn beam_ra_at(mjd: f64, lst_ref: &LstReference) -> f64 {
    wrap_ra(lst_ref.lst0_hr + (mjd - lst_ref.mjd0) * 24.0 * SIDEREAL_RATE)
}

/// Piecewise-linear RA track, e.g. a Sun ephemeris, keyed by MJD.
///
/// Interpolation follows the short way round the 24 h circle.
#[derive(Debug, Clone, PartialEq)]
pub struct RaTable {
    rows: Vec<(f64, f64)>,
}

impl RaTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        if rows.is_empty() {
            return Err(GeometryError::BadEphemeris);
        }
        for (i, &(mjd, ra)) in rows.iter().enumerate() {
            if !(mjd.is_finite() && ra.is_finite()) {
                return Err(GeometryError::BadEphemeris);
            }
            if !(0.0..24.0).contains(&ra) {
                return Err(GeometryError::RaOutOfRange(ra));
            }
            if i > 0 && mjd <= rows[i - 1].0 {
                return Err(GeometryError::BadEphemeris);
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    pub fn first_mjd(&self) -> f64 {
        self.rows[0].0
    }

    pub fn last_mjd(&self) -> f64 {
        self.rows[self.rows.len() - 1].0
    }

    pub fn covers(&self, mjd_lo: f64, mjd_hi: f64) -> bool {
        mjd_lo >= self.first_mjd() && mjd_hi <= self.last_mjd()
    }

    pub fn ra_at(&self, mjd: f64) -> Result<f64, GeometryError> {
        if !(mjd >= self.first_mjd() && mjd <= self.last_mjd()) {
            return Err(GeometryError::EphemerisGap(mjd));
        }
        let i = self.rows.partition_point(|r| r.0 <= mjd);
        if i == self.rows.len() {
            return Ok(self.rows[i - 1].1);
        }
        let (m0, r0) = self.rows[i - 1];
        let (m1, r1) = self.rows[i];
        let t = (mjd - m0) / (m1 - m0);
        Ok(wrap_ra(r0 + t * ra_difference_hr(r1, r0)))
    }
}

/// Precomputed east-west phase model for one instrument delay setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseModel {
    delay_scale_s: f64,
    pub tau_inst_s: f64,
}

impl PhaseModel {
    pub fn from_config(config: &InstrumentConfig) -> Self {
        Self::new(config.baseline_m(), config.dec_deg, config.tau_inst_s)
    }

    pub fn new(baseline_m: f64, dec_deg: f64, tau_inst_s: f64) -> Self {
        Self {
            delay_scale_s: baseline_m / SPEED_OF_LIGHT * math::cos(dec_deg.to_radians()),
            tau_inst_s,
        }
    }

    pub fn with_tau(self, tau_inst_s: f64) -> Self {
        Self { tau_inst_s, ..self }
    }

    /// Geometric delay τ_g at hour angle `h`.
    #[inline]
    pub fn geometric_delay(&self, hour_angle_rad: f64) -> f64 {
        self.delay_scale_s * math::sin(hour_angle_rad)
    }

    /// Expected raw east-minus-west phase, wrapped to (−π, π].
    #[inline]
    pub fn ew_phase(&self, freq_hz: f64, hour_angle_rad: f64) -> f64 {
        wrap(TAU * freq_hz * (self.geometric_delay(hour_angle_rad) - self.tau_inst_s))
    }
}

/// `wrap_phase(2π·ν·(τ_g(H) − τ_INT))` using the config's instrument delay.
pub fn expected_ew_phase(freq_hz: f64, hour_angle_rad: f64, config: &InstrumentConfig) -> f64 {
    PhaseModel::from_config(config).ew_phase(freq_hz, hour_angle_rad)
}
